"""
Debug Service Layer
Scan visit-order images and PCA renderings of decoder features
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from mvsmamba.config.constants import ARRANGEMENT_KINDS, DIRECTIONS
from mvsmamba.models.dynscan import ScanStrategy, scan_layout, visit_order
from mvsmamba.models.network import PyramidFeatures
from mvsmamba.numeric import no_tape
from mvsmamba.numeric.tensor import Tensor
from mvsmamba.services.image_service import ImageService
from mvsmamba.services.inference_service import InferenceService
from mvsmamba.services.scene_service import SceneService
from mvsmamba.utils.exceptions import ArgumentError

logger = logging.getLogger(__name__)


@dataclass
class PCABasis:
    mean: np.ndarray
    components: np.ndarray
    rank: int

    def project(self, feat: np.ndarray) -> np.ndarray:
        """[C, H, W] -> [k, H, W] coordinates in the basis"""
        channels, height, width = feat.shape
        X = feat.reshape(channels, -1).T - self.mean
        return (X @ self.components.T).T.reshape(-1, height, width)

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        k, height, width = coords.shape
        X = coords.reshape(k, -1).T @ self.components + self.mean
        return X.T.reshape(-1, height, width)


def fit_pca(feat: np.ndarray, n_components: int = 3, tol: float = 1e-10) -> PCABasis:
    """
    Principal axes of a [C, H, W] feature's channel vectors

    Components beyond the numerical rank are zero rows, so a rank-deficient
    feature still yields n_components outputs.
    """
    channels = feat.shape[0]
    X = feat.reshape(channels, -1).T
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    rank = int((s > tol * s[0]).sum()) if s.size and s[0] > 0 else 0
    keep = min(rank, n_components)
    components = np.zeros((n_components, channels))
    components[:keep] = vt[:keep]
    return PCABasis(mean, components, rank)


def to_rgb(coords: np.ndarray) -> np.ndarray:
    """Per-channel min-max normalisation to [0, 1]; flat channels map to 0"""
    lo = coords.min(axis=(1, 2), keepdims=True)
    hi = coords.max(axis=(1, 2), keepdims=True)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return (coords - lo) / span


class DebugService:
    """Service for visual inspection dumps"""

    @staticmethod
    def scan_order_image(height: int, width: int, direction_index: int, source_index: int = 1,
                         strategy: Optional[ScanStrategy] = None) -> np.ndarray:
        """
        Visit order of one directional scan over its arrangement as a grey image

        Sequence index i is drawn as 1 + 254 * i / (L - 1); positions of other
        parity classes stay black.
        """
        strategy = strategy or ScanStrategy()
        kind = ARRANGEMENT_KINDS[direction_index - 1]
        shape = (height, 2 * width) if kind in ('HR', 'HL') else (2 * height, width)
        layout = scan_layout(shape, DIRECTIONS[direction_index - 1],
                             strategy.start(direction_index, source_index), zigzag=strategy.zigzag)
        order = visit_order(layout, shape)
        gray = np.zeros(shape, dtype=np.uint8)
        visited = order >= 0
        denom = max(len(layout) - 1, 1)
        gray[visited] = (1 + np.round(254.0 * order[visited] / denom)).astype(np.uint8)
        return gray

    @staticmethod
    def dump_scan(height: int, width: int, out_dir: str, source_index: int = 1,
                  strategy: Optional[ScanStrategy] = None) -> List[str]:
        """
        Raises:
            ArgumentError: On odd extents
        """
        if height % 2 or width % 2 or height < 2 or width < 2:
            raise ArgumentError("Scan dumps need even extents", details={"height": height, "width": width})
        paths = []
        for d in range(1, 5):
            image = DebugService.scan_order_image(height, width, d, source_index, strategy)
            name = f"scan_{ARRANGEMENT_KINDS[d - 1]}_{DIRECTIONS[d - 1]}_k{source_index}.pgm"
            paths.append(ImageService.write_pgm(os.path.join(out_dir, name), image))
        logger.info(f"Scan orders written to {out_dir}")
        return paths

    @staticmethod
    def feature_images(features: Sequence[PyramidFeatures], scale: int) -> List[np.ndarray]:
        """One PCA basis fitted on the reference, applied to every view"""
        maps = [np.asarray(f[scale].data) for f in features]
        basis = fit_pca(maps[0])
        return [to_rgb(basis.project(m)) for m in maps]

    @staticmethod
    def dump_features(checkpoint: str, scene_dir: str, scale: int, out_dir: str,
                      ref_view: int = 0, num_views: Optional[int] = None) -> List[str]:
        model, cfg = InferenceService.restore(checkpoint)
        if not 0 <= scale < len(model.num_hypotheses):
            raise ArgumentError("Scale index out of range", details={"scale": scale})
        bundle = SceneService.load(scene_dir, dtype=np.dtype(cfg.numeric.dtype))
        views = bundle.select(ref_view, num_views or cfg.train.views)
        with no_tape():
            features = model.features([Tensor(v.image) for v in views])

        paths = []
        for i, image in enumerate(DebugService.feature_images(features, scale)):
            name = f"features_s{scale}_view{i}.ppm"
            paths.append(ImageService.write_ppm(os.path.join(out_dir, name), image))
        logger.info(f"Feature renderings written to {out_dir}")
        return paths
