"""
Inference Service Layer
Restores a checkpoint and writes finest-scale depth and confidence maps
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from mvsmamba.config.run_config import RunConfig
from mvsmamba.models.mvs import CascadeState, MVSMambaModel, cascade_forward
from mvsmamba.numeric import no_tape, set_default_dtype
from mvsmamba.services.checkpoint_service import CheckpointService
from mvsmamba.services.image_service import ImageService
from mvsmamba.services.scene_service import SceneBundle, SceneService

logger = logging.getLogger(__name__)


@dataclass
class InferenceResult:
    depth_path: str
    confidence_path: str
    depth: np.ndarray
    confidence: np.ndarray


class InferenceService:
    """Service for checkpoint restore and depth prediction"""

    @staticmethod
    def restore(checkpoint: str) -> Tuple[MVSMambaModel, RunConfig]:
        state, cfg = CheckpointService.load(checkpoint)
        set_default_dtype(cfg.numeric.dtype)
        model = MVSMambaModel.from_config(cfg, np.random.default_rng(cfg.train.seed))
        model.load_state_dict(state)
        return model, cfg

    @staticmethod
    def predict(model: MVSMambaModel, bundle: SceneBundle, ref_view: int, num_views: int) -> CascadeState:
        with no_tape():
            return cascade_forward(bundle.select(ref_view, num_views), model)

    @staticmethod
    def infer(checkpoint: str, scene_dir: str, ref_view: int, out_dir: str,
              num_views: Optional[int] = None) -> InferenceResult:
        """
        Predict the reference depth map and write it with its confidence as PFM

        Raises:
            ArgumentError: If the scene extents differ from the trained configuration
        """
        model, cfg = InferenceService.restore(checkpoint)
        bundle = SceneService.load(scene_dir, dtype=np.dtype(cfg.numeric.dtype))
        SceneService.require_extents(bundle, cfg.scene)

        state = InferenceService.predict(model, bundle, ref_view, num_views or cfg.train.views)
        depth, confidence = state.depths[-1], state.confidences[-1]

        depth_path = os.path.join(out_dir, f"depth_{ref_view:08d}.pfm")
        confidence_path = os.path.join(out_dir, f"confidence_{ref_view:08d}.pfm")
        ImageService.write_pfm(depth_path, depth)
        ImageService.write_pfm(confidence_path, confidence)
        logger.info(f"Depth written: {depth_path} (range [{depth.min():.3f}, {depth.max():.3f}])")
        return InferenceResult(depth_path, confidence_path, depth, confidence)
