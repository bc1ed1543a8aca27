"""
Evaluation Service Layer
Depth-map metrics against ground truth
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from mvsmamba.config.constants import ERROR_MESSAGES, EVAL_THRESHOLDS
from mvsmamba.services.image_service import ImageService
from mvsmamba.utils.exceptions import ArgumentError
from mvsmamba.utils.file_io import atomic_write_text, write_csv

logger = logging.getLogger(__name__)


@dataclass
class DepthMetrics:
    mae: float
    rmse: float
    valid_pixels: int
    precision: Dict[float, float] = field(default_factory=dict)

    def rows(self):
        rows = [('mae', self.mae), ('rmse', self.rmse), ('valid_pixels', self.valid_pixels)]
        rows += [(f"prec@{tau:g}", pct) for tau, pct in self.precision.items()]
        return rows

    def to_text(self) -> str:
        lines = [f"MAE      {self.mae:.6f}", f"RMSE     {self.rmse:.6f}", f"pixels   {self.valid_pixels}"]
        lines += [f"Prec@{tau:g}   {pct:.2f}%" for tau, pct in self.precision.items()]
        return '\n'.join(lines) + '\n'


class EvaluationService:
    """Service for depth evaluation"""

    @staticmethod
    def evaluate(pred: np.ndarray, gt: np.ndarray,
                 thresholds: Sequence[float] = EVAL_THRESHOLDS) -> DepthMetrics:
        """
        MAE, RMSE and the percentage of pixels with |pred - gt| below each threshold

        Only pixels with finite, positive ground truth count.

        Raises:
            ArgumentError: If the maps have different extents
        """
        pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
        if pred.shape != gt.shape:
            raise ArgumentError(ERROR_MESSAGES['EXTENT_MISMATCH'],
                                details={"pred": list(pred.shape), "gt": list(gt.shape)})
        valid = np.isfinite(gt) & (gt > 0)
        count = int(valid.sum())
        if count == 0:
            logger.warning("No valid ground-truth pixels to evaluate")
            return DepthMetrics(float('nan'), float('nan'), 0, {float(t): float('nan') for t in thresholds})

        err = np.abs(pred[valid] - gt[valid])
        precision = {float(t): 100.0 * float((err < t).mean()) for t in thresholds}
        return DepthMetrics(float(err.mean()), float(np.sqrt((err ** 2).mean())), count, precision)

    @staticmethod
    def evaluate_files(pred_path: str, gt_path: str, thresholds: Sequence[float], out_dir: str) -> DepthMetrics:
        metrics = EvaluationService.evaluate(
            ImageService.read_pfm(pred_path), ImageService.read_pfm(gt_path), thresholds
        )
        atomic_write_text(os.path.join(out_dir, 'metrics.txt'), metrics.to_text())
        write_csv(os.path.join(out_dir, 'metrics.csv'), ['metric', 'value'], metrics.rows())
        logger.info(f"Evaluation: MAE {metrics.mae:.4f}, RMSE {metrics.rmse:.4f}, "
                    f"precision {metrics.precision}")
        return metrics
