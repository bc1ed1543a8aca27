"""
Cascade Depth Estimation
Inverse-depth hypotheses, homography warping, group-wise correlation, view-weighted
fusion, 3D U-Net regularisation, winner-take-all depth and the per-scale losses
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from mvsmamba.config.constants import (
    ERROR_MESSAGES,
    FUSION_EPS,
    GROUPS,
    INTERVAL_SCALES,
    LOG_CLAMP,
    NUM_HYPOTHESES,
    NUM_SCALES,
)
from mvsmamba.models.layers import Conv3d, LayerNorm, Module
from mvsmamba.models.network import FeatureNet, PyramidFeatures
from mvsmamba.numeric import ops
from mvsmamba.numeric.conv import upsample_nearest
from mvsmamba.numeric.sampling import bilinear_sample
from mvsmamba.numeric.tensor import Tensor, as_tensor, no_tape
from mvsmamba.utils.exceptions import ArgumentError

logger = logging.getLogger(__name__)

# Projections this close to an integer pixel are snapped onto it
SNAP_TOLERANCE = 1e-9

# Relative margin above 1/D under which a probability column counts as uniform
FLAT_TOLERANCE = 1e-6


@dataclass
class CameraView:
    """One calibrated view: world-to-camera pose, pixel intrinsics and depth range"""
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    depth_range: Tuple[float, float]
    image: Optional[np.ndarray] = None
    gt_depth: Optional[np.ndarray] = None

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)

    def validate(self) -> None:
        d_min, d_max = self.depth_range
        if not 0 < d_min < d_max:
            raise ArgumentError("Depth range must satisfy 0 < d_min < d_max",
                                details={"depth_range": [d_min, d_max]})
        if self.K.shape != (3, 3) or np.any(np.tril(self.K, -1) != 0) or self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ArgumentError(ERROR_MESSAGES['SINGULAR_INTRINSICS'], details={"K": self.K.tolist()})

    def scaled(self, factor: float) -> 'CameraView':
        """Intrinsics for a feature map resized by factor (pixel (i, j) sits at x=j, y=i)"""
        K = self.K.copy()
        K[:2] *= factor
        return CameraView(K, self.R, self.t, self.depth_range, None, None)

    @property
    def extrinsic(self) -> np.ndarray:
        E = np.eye(4)
        E[:3, :3] = self.R
        E[:3, 3] = self.t
        return E


def scale_factor(scale: int) -> float:
    return 0.5 ** (NUM_SCALES - 1 - scale)


def base_step(depth_range: Tuple[float, float], base_count: int = NUM_HYPOTHESES[0]) -> float:
    d_min, d_max = depth_range
    return (1.0 / d_min - 1.0 / d_max) / (base_count - 1)


def full_range(depth_range: Tuple[float, float], num_hypotheses: int) -> np.ndarray:
    """Samples uniform in inverse depth with both range ends included"""
    d_min, d_max = depth_range
    depths = 1.0 / np.linspace(1.0 / d_min, 1.0 / d_max, num_hypotheses)
    depths[0], depths[-1] = d_min, d_max
    return depths


def depth_hypotheses(scale: int, prev_depth: Optional[np.ndarray], depth_range: Tuple[float, float],
                     num_hypotheses: int, interval_scale: float = 1.0,
                     shape: Optional[Tuple[int, int]] = None,
                     base_count: int = NUM_HYPOTHESES[0],
                     flat: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Depth hypotheses for one cascade stage

    Scale 0 samples uniformly in inverse depth over the whole range ([D] or
    [D, H, W] when shape is given). Finer scales place D bin-centred samples in the
    inverse-depth window of width D * interval_scale * base_step around the previous
    prediction, intersected with the range, giving [D, H, W] strictly increasing depths.
    Pixels marked in flat (the previous stage had no preferred bin) sample the whole
    range again.

    Raises:
        ArgumentError: If a finer scale is requested without a previous depth
    """
    d_min, d_max = depth_range
    inv_near, inv_far = 1.0 / d_min, 1.0 / d_max

    if scale == 0:
        depths = full_range(depth_range, num_hypotheses)
        if shape is not None:
            depths = np.broadcast_to(depths[:, None, None], (num_hypotheses,) + tuple(shape)).copy()
        return depths

    if prev_depth is None:
        raise ArgumentError(ERROR_MESSAGES['MISSING_PREV_DEPTH'], details={"scale": scale})

    width = interval_scale * base_step(depth_range, base_count)
    centre = np.clip(1.0 / np.asarray(prev_depth, dtype=np.float64), inv_far, inv_near)
    half = 0.5 * num_hypotheses * width
    hi = np.minimum(centre + half, inv_near)
    lo = np.maximum(centre - half, inv_far)
    bins = (np.arange(num_hypotheses) + 0.5)[:, None, None] / num_hypotheses
    depths = 1.0 / (hi[None] - bins * (hi - lo)[None])
    if flat is not None and np.any(flat):
        depths = np.where(flat[None], full_range(depth_range, num_hypotheses)[:, None, None], depths)
    return depths


def is_flat(confidence: np.ndarray, num_hypotheses: int) -> np.ndarray:
    """Pixels whose winning probability is indistinguishable from uniform"""
    return confidence <= (1.0 + FLAT_TOLERANCE) / num_hypotheses


def upsample_depth(depth: np.ndarray) -> np.ndarray:
    """Bilinear x2 upsampling; fine pixel (i, j) reads coarse (i/2, j/2)"""
    height, width = depth.shape
    ii, jj = np.meshgrid(np.arange(2 * height) / 2.0, np.arange(2 * width) / 2.0, indexing='ij')
    ii = np.minimum(ii, height - 1)
    jj = np.minimum(jj, width - 1)
    with no_tape():
        out, _ = bilinear_sample(Tensor(depth[None]), np.stack([ii, jj]))
    return out.data[0]


def downsample_depth(depth: np.ndarray, factor: int) -> np.ndarray:
    """Nearest ground-truth resampling onto a coarser pixel grid"""
    return np.ascontiguousarray(depth[::factor, ::factor])


def warp_coordinates(ref_cam: CameraView, src_cam: CameraView, hyps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Project every reference pixel at every hypothesis depth into the source image

    Returns:
        (coords [2, D, H, W] as (y, x), in_front [D, H, W])

    Raises:
        ArgumentError: If the reference intrinsics are singular
    """
    if abs(np.linalg.det(ref_cam.K)) < 1e-12:
        raise ArgumentError(ERROR_MESSAGES['SINGULAR_INTRINSICS'], details={"K": ref_cam.K.tolist()})

    num, height, width = hyps.shape
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing='ij')
    pix = np.stack([xs.reshape(-1), ys.reshape(-1), np.ones(height * width)])
    rays = np.linalg.solve(ref_cam.K, pix)

    R_rel = src_cam.R @ ref_cam.R.T
    t_rel = src_cam.t - R_rel @ ref_cam.t
    rot_rays = src_cam.K @ R_rel @ rays
    trans = src_cam.K @ t_rel

    proj = rot_rays[:, None, :] * hyps.reshape(num, -1)[None] + trans[:, None, None]
    z = proj[2]
    in_front = z > 0
    safe_z = np.where(in_front, z, 1.0)
    x = np.where(in_front, proj[0] / safe_z, np.nan)
    y = np.where(in_front, proj[1] / safe_z, np.nan)

    coords = np.stack([y, x]).reshape(2, num, height, width)
    nearest = np.round(coords)
    coords = np.where(np.abs(coords - nearest) < SNAP_TOLERANCE, nearest, coords)
    return coords, in_front.reshape(num, height, width)


def homography_warp(src_feat: Tensor, ref_cam: CameraView, src_cam: CameraView,
                    hyps: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """
    Warp source features onto the reference pixel grid for every depth hypothesis

    Cameras must already be scaled to the feature resolution.

    Returns:
        (warped [C, D, H, W], valid mask [D, H, W])
    """
    coords, in_front = warp_coordinates(ref_cam, src_cam, hyps)
    warped, valid = bilinear_sample(src_feat, coords)
    return warped, valid & in_front


def group_correlation(ref_feat: Tensor, warped: Tensor, groups: int) -> Tensor:
    """
    Channel-grouped mean inner product: (G/C) * sum over each group of ref_c * warped_c

    Raises:
        ArgumentError: If the channel count is not divisible by the group count
    """
    ref_feat, warped = as_tensor(ref_feat), as_tensor(warped)
    channels = ref_feat.shape[0]
    if groups < 1 or channels % groups:
        raise ArgumentError(
            ERROR_MESSAGES['SHAPE_MISMATCH'],
            details={"channels": channels, "groups": groups}
        )
    _, num, height, width = warped.shape
    prod = warped * ops.reshape(ref_feat, (channels, 1, height, width))
    grouped = ops.reshape(prod, (groups, channels // groups, num, height, width))
    return ops.sum(grouped, axis=1) * (groups / channels)


class ViewWeightHead(Module):
    """Pixel-wise view weight: 1x1x1 conv over groups, max over depth, sigmoid"""

    def __init__(self, rng: np.random.Generator, groups: int):
        self.conv = Conv3d(rng, groups, 1, kernel_size=1)

    def forward(self, similarity: Tensor) -> Tensor:
        logits = self.conv(similarity)
        return ops.sigmoid(ops.max(logits, axis=1, keepdims=True))


def view_weight_fusion(similarities: Sequence[Tensor], head: Optional[ViewWeightHead] = None,
                       weights: Optional[Sequence] = None) -> Tensor:
    """
    Fuse per-source similarity volumes [G, D, H, W] with sum-normalised pixel weights

    Either a weight head or explicit weights ([1, 1, H, W] each) must be given.
    A single source is returned unchanged, its weight cancels.
    """
    if len(similarities) == 0:
        raise ArgumentError(ERROR_MESSAGES['NO_SOURCES'])
    if len(similarities) == 1:
        return similarities[0]
    if weights is None:
        weights = [head(sim) for sim in similarities]

    numer = None
    denom = None
    for sim, w in zip(similarities, weights):
        term = sim * w
        numer = term if numer is None else numer + term
        denom = w if denom is None else denom + w
    return numer / ops.clamp_min(denom, FUSION_EPS)


class ConvNormReLU3d(Module):
    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, stride: int = 1):
        self.conv = Conv3d(rng, in_channels, out_channels, kernel_size=3, stride=stride)
        self.norm = LayerNorm(out_channels, axis=0)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))


def _crop_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    if tuple(x.shape[1:]) == tuple(shape[1:]):
        return x
    return ops.getitem(x, (slice(None),) + tuple(slice(0, n) for n in shape[1:]))


class CostRegNet(Module):
    """
    Two-level 3D U-Net from G similarity channels to one logit channel

    The final layer starts at zero so the initial probability volume is uniform.
    """

    def __init__(self, rng: np.random.Generator, in_channels: int, base_channels: int = 8):
        b = base_channels
        self.conv0 = ConvNormReLU3d(rng, in_channels, b)
        self.down1 = ConvNormReLU3d(rng, b, 2 * b, stride=2)
        self.conv1 = ConvNormReLU3d(rng, 2 * b, 2 * b)
        self.down2 = ConvNormReLU3d(rng, 2 * b, 4 * b, stride=2)
        self.conv2 = ConvNormReLU3d(rng, 4 * b, 4 * b)
        self.up1 = ConvNormReLU3d(rng, 4 * b, 2 * b)
        self.up0 = ConvNormReLU3d(rng, 2 * b, b)
        self.prob = Conv3d(rng, b, 1, kernel_size=3)
        self.prob.zero_()

    def forward(self, volume: Tensor) -> Tensor:
        c0 = self.conv0(volume)
        c1 = self.conv1(self.down1(c0))
        c2 = self.conv2(self.down2(c1))
        u1 = _crop_to(self.up1(upsample_nearest(c2, 2)), c1.shape) + c1
        u0 = _crop_to(self.up0(upsample_nearest(u1, 2)), c0.shape) + c0
        return self.prob(u0)


def regularize(fused: Tensor, net: CostRegNet) -> Tensor:
    """
    Regularise a fused volume [G, D, H, W] into a probability volume [D, H, W]

    Raises:
        ArgumentError: With fewer than two hypotheses
    """
    fused = as_tensor(fused)
    if fused.ndim != 4 or fused.shape[1] < 2:
        raise ArgumentError("Cost volume needs at least two depth hypotheses",
                            details={"shape": list(fused.shape)})
    logits = net(fused)
    return ops.softmax(ops.reshape(logits, logits.shape[1:]), axis=0)


def wta_depth(prob, hyps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Winner-take-all depth and its probability; ties go to the lowest bin"""
    p = prob.data if isinstance(prob, Tensor) else np.asarray(prob)
    hyps = np.broadcast_to(hyps if hyps.ndim == 3 else hyps[:, None, None], p.shape)
    idx = np.argmax(p, axis=0)
    depth = np.take_along_axis(hyps, idx[None], axis=0)[0]
    confidence = np.take_along_axis(p, idx[None], axis=0)[0]
    return depth, confidence


@dataclass
class LossResult:
    value: Tensor
    valid_pixels: int
    degenerate: bool = False


def loss_mask(gt_depth: np.ndarray, hyps: np.ndarray, visible: Optional[np.ndarray] = None) -> np.ndarray:
    """GT valid, inside the per-pixel hypothesis span and seen by a source"""
    with np.errstate(invalid='ignore'):
        mask = np.isfinite(gt_depth) & (gt_depth > 0)
        mask &= (gt_depth >= hyps.min(axis=0)) & (gt_depth <= hyps.max(axis=0))
    if visible is not None:
        mask &= visible
    return mask


def _zero_loss(prob: Tensor, kind: str) -> LossResult:
    logger.warning(f"{kind} loss has no valid pixels; defined as 0")
    return LossResult(Tensor(np.zeros((), dtype=prob.dtype)), 0, degenerate=True)


def ce_loss(prob: Tensor, gt_depth: np.ndarray, hyps: np.ndarray,
            valid_mask: Optional[np.ndarray] = None) -> LossResult:
    """Mean negative log-probability of the hypothesis nearest to the ground truth"""
    prob = as_tensor(prob)
    hyps = np.broadcast_to(hyps if hyps.ndim == 3 else hyps[:, None, None], prob.shape)
    mask = loss_mask(gt_depth, hyps, valid_mask)
    count = int(mask.sum())
    if count == 0:
        return _zero_loss(prob, 'CE')

    gt_safe = np.where(mask, gt_depth, 0.0)
    target = np.argmin(np.abs(hyps - gt_safe[None]), axis=0)
    ii, jj = np.nonzero(mask)
    picked = ops.getitem(prob, (target[ii, jj], ii, jj))
    nll = ops.neg(ops.log(ops.clamp_min(picked, LOG_CLAMP)))
    return LossResult(ops.mean(nll), count)


def l1_loss(prob: Tensor, gt_depth: np.ndarray, hyps: np.ndarray,
            valid_mask: Optional[np.ndarray] = None) -> LossResult:
    """Masked L1 between the expectation depth sum_d p_d * h_d and the ground truth"""
    prob = as_tensor(prob)
    hyps = np.broadcast_to(hyps if hyps.ndim == 3 else hyps[:, None, None], prob.shape)
    mask = loss_mask(gt_depth, hyps, valid_mask)
    count = int(mask.sum())
    if count == 0:
        return _zero_loss(prob, 'L1')

    expected = ops.sum(prob * Tensor(np.ascontiguousarray(hyps)), axis=0)
    ii, jj = np.nonzero(mask)
    diff = ops.getitem(expected, (ii, jj)) - Tensor(gt_depth[ii, jj].astype(prob.dtype))
    return LossResult(ops.mean(ops.absolute(diff)), count)


LOSSES = {'ce': ce_loss, 'l1': l1_loss}


@dataclass
class CascadeState:
    depths: List[np.ndarray] = field(default_factory=list)
    confidences: List[np.ndarray] = field(default_factory=list)
    probabilities: List[Tensor] = field(default_factory=list)
    hypotheses: List[np.ndarray] = field(default_factory=list)
    visibility: List[np.ndarray] = field(default_factory=list)
    features: Optional[List[PyramidFeatures]] = None


class MVSMambaModel(Module):
    """Feature backbone plus one fusion head and one cost regulariser per cascade stage"""

    def __init__(self, rng: np.random.Generator, features: FeatureNet,
                 num_hypotheses: Sequence[int] = NUM_HYPOTHESES,
                 interval_scales: Sequence[float] = INTERVAL_SCALES,
                 groups: Sequence[int] = GROUPS, reg_channels: int = 8):
        self.features = features
        self.num_hypotheses = tuple(num_hypotheses)
        self.interval_scales = tuple(interval_scales)
        self.groups = tuple(groups)
        self.fusion = [ViewWeightHead(rng, g) for g in self.groups]
        self.regularizers = [CostRegNet(rng, g, reg_channels) for g in self.groups]

    @classmethod
    def from_config(cls, cfg, rng: Optional[np.random.Generator] = None) -> 'MVSMambaModel':
        from mvsmamba.models.dynscan import ScanStrategy

        rng = rng if rng is not None else np.random.default_rng(cfg.train.seed)
        m = cfg.model
        strategy = ScanStrategy(centering=cfg.scan.centering, dynamic=cfg.scan.dynamic,
                                zigzag=cfg.scan.zigzag)
        net = FeatureNet(rng, channels=m.channels, dm_scales=m.dm_scales, sdm_scales=m.sdm_scales,
                         use_dm=m.use_dm, use_sdm=m.use_sdm, use_mlp=m.use_mlp,
                         share_scan_weights=m.share_scan_weights, d_state=m.d_state,
                         expand=m.expand, conv_kernel=m.conv_kernel, mlp_ratio=m.mlp_ratio,
                         strategy=strategy, zoh_input=cfg.ssm.zoh_input)
        return cls(rng, net, cfg.cascade.num_hypotheses, cfg.cascade.interval_scales,
                   cfg.cascade.groups, m.reg_channels)

    def forward(self, views: Sequence[CameraView], features=None, num_scales: int = NUM_SCALES) -> CascadeState:
        return cascade_forward(views, self, features=features, num_scales=num_scales)

    def component_parameters(self):
        counts = self.features.component_parameters()
        counts['fusion'] = sum(h.num_parameters() for h in self.fusion)
        counts['regularizer'] = sum(r.num_parameters() for r in self.regularizers)
        return counts


def cascade_forward(views: Sequence[CameraView], model: MVSMambaModel,
                    features: Optional[Sequence[PyramidFeatures]] = None,
                    num_scales: int = NUM_SCALES) -> CascadeState:
    """
    Coarse-to-fine depth for views[0] against all other views

    Args:
        views: Reference first, then sources; images [3, H, W]
        model: Network weights
        features: Optional per-view decoder features to use instead of the backbone
        num_scales: Stop after this many stages

    Raises:
        ArgumentError: With fewer than two views
    """
    if len(views) < 2:
        raise ArgumentError(ERROR_MESSAGES['NO_SOURCES'], details={"views": len(views)})
    for view in views:
        view.validate()

    if features is None:
        features = model.features([Tensor(v.image) for v in views])

    state = CascadeState(features=list(features))
    ref = views[0]
    prev_depth = prev_flat = None
    for s in range(num_scales):
        ref_feat = features[0][s]
        height, width = ref_feat.shape[-2:]
        factor = scale_factor(s)
        ref_cam = ref.scaled(factor)

        hyps = depth_hypotheses(s, prev_depth, ref.depth_range, model.num_hypotheses[s],
                                model.interval_scales[s], shape=(height, width),
                                base_count=model.num_hypotheses[0], flat=prev_flat)

        similarities = []
        seen = np.zeros((height, width), dtype=bool)
        for view, feats in zip(views[1:], features[1:]):
            warped, valid = homography_warp(feats[s], ref_cam, view.scaled(factor), hyps)
            similarities.append(group_correlation(ref_feat, warped, model.groups[s]))
            seen |= valid.any(axis=0)

        fused = view_weight_fusion(similarities, model.fusion[s])
        prob = regularize(fused, model.regularizers[s])
        depth, confidence = wta_depth(prob, hyps)

        state.depths.append(depth)
        state.confidences.append(confidence)
        state.probabilities.append(prob)
        state.hypotheses.append(hyps)
        state.visibility.append(seen)
        logger.debug(f"scale {s}: D={hyps.shape[0]}, extent {height}x{width}, "
                     f"depth [{depth.min():.3f}, {depth.max():.3f}]")

        if s + 1 < num_scales:
            prev_depth = upsample_depth(depth)
            prev_flat = is_flat(confidence, hyps.shape[0]).repeat(2, axis=0).repeat(2, axis=1)
    return state


def cascade_loss(state: CascadeState, gt_depth: np.ndarray, kind: str = 'ce') -> Tuple[Tensor, List[LossResult]]:
    """
    Unweighted sum of the per-scale losses

    Raises:
        ArgumentError: If ground truth is missing or the loss kind is unknown
    """
    if gt_depth is None:
        raise ArgumentError(ERROR_MESSAGES['MISSING_GT'])
    if kind not in LOSSES:
        raise ArgumentError(f"Unknown loss kind: {kind}", details={"allowed": sorted(LOSSES)})

    full_height = gt_depth.shape[0]
    results = []
    total = None
    for prob, hyps, seen in zip(state.probabilities, state.hypotheses, state.visibility):
        factor = full_height // prob.shape[1]
        result = LOSSES[kind](prob, downsample_depth(gt_depth, factor), hyps, seen)
        results.append(result)
        total = result.value if total is None else total + result.value
    return total, results
