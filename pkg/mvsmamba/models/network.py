"""
Feature Backbone
Four-scale FPN encoder/decoder with the DM-module on the coarse encoder features and
the SDM-module in front of selected decoder outputs
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from mvsmamba.config.constants import (
    CHANNELS,
    CONV_KERNEL,
    D_STATE,
    ERROR_MESSAGES,
    EXPAND,
    NUM_SCALES,
    RESOLUTION_MULTIPLE,
)
from mvsmamba.models.dynscan import DMModule, ScanStrategy, SDMModule
from mvsmamba.models.layers import Conv2d, LayerNorm, Module
from mvsmamba.numeric import ops
from mvsmamba.numeric.conv import upsample_nearest
from mvsmamba.numeric.tensor import Tensor, as_tensor
from mvsmamba.utils.exceptions import ArgumentError

logger = logging.getLogger(__name__)


@dataclass
class PyramidFeatures:
    """Per-scale feature maps; index 0 is the coarsest (H/8), index 3 full resolution"""
    scales: List[Tensor]

    def __getitem__(self, s: int) -> Tensor:
        return self.scales[s]

    def __len__(self) -> int:
        return len(self.scales)

    def shapes(self) -> List[tuple]:
        return [t.shape for t in self.scales]


def check_resolution(height: int, width: int) -> None:
    if height % RESOLUTION_MULTIPLE or width % RESOLUTION_MULTIPLE or height <= 0 or width <= 0:
        raise ArgumentError(
            ERROR_MESSAGES['BAD_RESOLUTION'],
            details={"height": height, "width": width, "multiple": RESOLUTION_MULTIPLE}
        )


class ConvNormReLU(Module):
    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, stride: int = 1):
        self.conv = Conv2d(rng, in_channels, out_channels, kernel_size=3, stride=stride)
        self.norm = LayerNorm(out_channels, axis=0)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))


class FPNEncoder(Module):
    """Two convolutions per scale, stride-2 between scales; emits coarse-to-fine"""

    def __init__(self, rng: np.random.Generator, channels: Sequence[int] = CHANNELS, in_channels: int = 3):
        fine_to_coarse = list(reversed(channels))
        self.stages = []
        prev = in_channels
        for i, width in enumerate(fine_to_coarse):
            stride = 1 if i == 0 else 2
            self.stages.append(ConvNormReLU(rng, prev, width, stride=stride))
            self.stages.append(ConvNormReLU(rng, width, width))
            prev = width

    def forward(self, image: Tensor) -> PyramidFeatures:
        image = as_tensor(image)
        check_resolution(image.shape[-2], image.shape[-1])
        feats = []
        x = image
        for i in range(0, len(self.stages), 2):
            x = self.stages[i + 1](self.stages[i](x))
            feats.append(x)
        return PyramidFeatures(list(reversed(feats)))


class FPNDecoder(Module):
    """
    Top-down pathway with lateral 1x1 connections

    inner_0 = lateral_0(enc_0)
    inner_s = lateral_s(enc_s) + up2(reduce_s(inner_{s-1}))
    out_s   = output_s(SDM(inner_s)) where SDM is present, else output_s(inner_s)
    """

    def __init__(self, rng: np.random.Generator, channels: Sequence[int] = CHANNELS):
        self.lateral = [Conv2d(rng, c, c, kernel_size=1) for c in channels]
        self.reduce = [Conv2d(rng, channels[s - 1], channels[s], kernel_size=1)
                       for s in range(1, len(channels))]
        self.output = [Conv2d(rng, c, c, kernel_size=3) for c in channels]

    def forward(self, enc: PyramidFeatures, sdm: Optional[Dict[int, SDMModule]] = None) -> PyramidFeatures:
        sdm = sdm or {}
        outs = []
        inner = None
        for s in range(len(enc)):
            lateral = self.lateral[s](enc[s])
            inner = lateral if inner is None else lateral + upsample_nearest(self.reduce[s - 1](inner), 2)
            head_in = sdm[s](inner) if s in sdm else inner
            outs.append(self.output[s](head_in))
        return PyramidFeatures(outs)


class FeatureNet(Module):
    """Shared-weight multi-view feature extractor"""

    def __init__(self, rng: np.random.Generator, channels: Sequence[int] = CHANNELS,
                 dm_scales: Sequence[int] = (0,), sdm_scales: Sequence[int] = (1,),
                 use_dm: bool = True, use_sdm: bool = True, use_mlp: bool = True,
                 share_scan_weights: bool = False, d_state: int = D_STATE, expand: int = EXPAND,
                 conv_kernel: int = CONV_KERNEL, mlp_ratio: int = 2,
                 strategy: Optional[ScanStrategy] = None, zoh_input: bool = False):
        if len(channels) != NUM_SCALES:
            raise ArgumentError("Channel schedule must list one width per scale",
                                details={"channels": list(channels)})
        for s in list(dm_scales) + list(sdm_scales):
            if not 0 <= s < NUM_SCALES:
                raise ArgumentError("Scale index out of range", details={"scale": s})

        self.channels = tuple(channels)
        self.strategy = strategy or ScanStrategy()
        self.encoder = FPNEncoder(rng, channels)
        self.decoder = FPNDecoder(rng, channels)

        block_kwargs = dict(strategy=self.strategy, d_state=d_state, expand=expand,
                            conv_kernel=conv_kernel, mlp_ratio=mlp_ratio, use_mlp=use_mlp,
                            share_weights=share_scan_weights, zoh_input=zoh_input)
        self.dm_scales = tuple(sorted(dm_scales)) if use_dm else ()
        self.sdm_scales = tuple(sorted(sdm_scales)) if use_sdm else ()
        self.dm = [DMModule(rng, channels[s], **block_kwargs) for s in self.dm_scales]
        self.sdm = [SDMModule(rng, channels[s], **block_kwargs) for s in self.sdm_scales]

    def encode(self, images: Sequence[Tensor]) -> List[PyramidFeatures]:
        return [self.encoder(img) for img in images]

    def decode(self, encoded: Sequence[PyramidFeatures]) -> List[PyramidFeatures]:
        """
        Enhance encoder features with DM (reference vs. every source), then decode each view

        Raises:
            ArgumentError: With fewer than two views
        """
        if len(encoded) < 2:
            raise ArgumentError(ERROR_MESSAGES['NO_SOURCES'], details={"views": len(encoded)})

        encoded = [PyramidFeatures(list(p.scales)) for p in encoded]
        for s, module in zip(self.dm_scales, self.dm):
            ref_enh, srcs_enh = module(encoded[0][s], [p[s] for p in encoded[1:]])
            encoded[0].scales[s] = ref_enh
            for view, feat in zip(encoded[1:], srcs_enh):
                view.scales[s] = feat

        sdm = dict(zip(self.sdm_scales, self.sdm))
        return [self.decoder(p, sdm) for p in encoded]

    def forward(self, images: Sequence[Tensor]) -> List[PyramidFeatures]:
        return self.decode(self.encode(images))

    def identity_(self) -> None:
        for module in self.dm + self.sdm:
            module.identity_()

    def component_parameters(self) -> Dict[str, int]:
        return {
            'fpn': self.encoder.num_parameters() + self.decoder.num_parameters(),
            'dm': sum(m.num_parameters() for m in self.dm),
            'sdm': sum(m.num_parameters() for m in self.sdm),
        }


def fpn_encode(image: Tensor, net: FeatureNet) -> PyramidFeatures:
    return net.encoder(image)


def fpn_decode(encoded: Sequence[PyramidFeatures], net: FeatureNet) -> List[PyramidFeatures]:
    return net.decode(encoded)
