"""
Training Service Layer
Optimises the cascade loss on a scene and writes the checkpoint and metrics log
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from mvsmamba.config.run_config import RunConfig
from mvsmamba.models.mvs import MVSMambaModel, cascade_forward, cascade_loss, downsample_depth
from mvsmamba.numeric import Adam, Tape, backward, set_default_dtype
from mvsmamba.services.checkpoint_service import CheckpointService
from mvsmamba.services.scene_service import SceneBundle, SceneService
from mvsmamba.utils.file_io import write_csv

logger = logging.getLogger(__name__)


def scale_mae(depth: np.ndarray, gt_depth: np.ndarray) -> float:
    """Mean absolute error over valid ground-truth pixels at the prediction's resolution"""
    gt = downsample_depth(gt_depth, gt_depth.shape[0] // depth.shape[0])
    valid = np.isfinite(gt) & (gt > 0)
    if not valid.any():
        return float('nan')
    return float(np.abs(depth[valid] - gt[valid]).mean())


@dataclass
class TrainResult:
    checkpoint: str
    log_path: str
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    final_mae: Optional[float] = None
    history: List[dict] = field(default_factory=list)


class TrainingService:
    """Service for model optimisation"""

    @staticmethod
    def build_model(cfg: RunConfig) -> MVSMambaModel:
        set_default_dtype(cfg.numeric.dtype)
        model = MVSMambaModel.from_config(cfg, np.random.default_rng(cfg.train.seed))
        counts = model.component_parameters()
        logger.info(f"Model parameters: {sum(counts.values())} total, by component {counts}")
        return model

    @staticmethod
    def train(cfg: RunConfig, bundle: Optional[SceneBundle] = None,
              model: Optional[MVSMambaModel] = None) -> TrainResult:
        """
        Train on a scene with Adam and a step learning-rate schedule

        Args:
            cfg: Effective run configuration
            bundle: Scene to fit (loaded from cfg.io.scene_dir when omitted)
            model: Optional pre-built model

        Returns:
            TrainResult with the checkpoint path and loss history

        Raises:
            ArgumentError: If a reference view has no ground-truth depth or the scene
                extents differ from scene.height/scene.width
        """
        if model is None:
            model = TrainingService.build_model(cfg)
        if bundle is None:
            bundle = SceneService.load(cfg.io.scene_dir, dtype=np.dtype(cfg.numeric.dtype))
        SceneService.require_extents(bundle, cfg.scene)

        batches = [bundle.select(ref, cfg.train.views) for ref in cfg.train.ref_views]
        for views in batches:
            SceneService.require_ground_truth(views)

        t = cfg.train
        optimizer = Adam(model.parameters(), lr=t.lr, milestones=t.lr_milestones, gamma=t.lr_gamma)
        history = []
        result = TrainResult(checkpoint=cfg.io.checkpoint_path,
                             log_path=os.path.join(cfg.io.out_dir, 'train_log.csv'))

        logger.info(f"Training for {t.iters} iterations on {len(batches)} reference view(s), "
                    f"lr {t.lr}, loss {cfg.loss.kind}")
        start = time.time()
        for it in range(t.iters):
            views = batches[it % len(batches)]
            lr = optimizer.lr
            optimizer.zero_grad()
            with Tape() as tape:
                state = cascade_forward(views, model)
                loss, parts = cascade_loss(state, views[0].gt_depth, cfg.loss.kind)
            backward(tape, loss)
            optimizer.step()

            maes = [scale_mae(d, views[0].gt_depth) for d in state.depths]
            record = {'iter': it, 'lr': lr, 'loss': loss.item()}
            record.update({f"loss_s{s}": p.value.item() for s, p in enumerate(parts)})
            record.update({f"mae_s{s}": m for s, m in enumerate(maes)})
            history.append(record)

            if it == 0:
                result.initial_loss = record['loss']
            if it % t.log_every == 0 or it == t.iters - 1:
                logger.info(f"iter {it:5d}  loss {record['loss']:.5f}  finest MAE {maes[-1]:.4f}  "
                            f"lr {lr:.2e}  ({time.time() - start:.1f}s)")

        if history:
            result.final_loss = history[-1]['loss']
            result.final_mae = history[-1][f"mae_s{len(model.num_hypotheses) - 1}"]
            header = list(history[0].keys())
            write_csv(result.log_path, header, [[r[k] for k in header] for r in history])

        CheckpointService.save(result.checkpoint, model.state_dict(), cfg)
        result.history = history
        logger.info(f"Training finished in {time.time() - start:.1f}s")
        return result
