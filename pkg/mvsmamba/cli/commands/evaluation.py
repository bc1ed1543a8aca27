"""
Evaluation Commands
"""

import logging
from typing import Optional

import click

from mvsmamba.cli.context import RunContext, pass_run
from mvsmamba.services import EvaluationService
from mvsmamba.utils.exceptions import ArgumentError

logger = logging.getLogger(__name__)


def _parse_thresholds(text: str):
    try:
        values = tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise ArgumentError("Thresholds must be comma-separated numbers", details={"thresholds": text})
    if not values or any(v <= 0 for v in values):
        raise ArgumentError("Thresholds must be positive", details={"thresholds": text})
    return values


@click.command('eval')
@click.option('--pred', 'pred_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--gt', 'gt_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--thresholds', default=None, help='Comma-separated, e.g. 1,2,4 (default: eval.thresholds)')
@pass_run
def evaluate(run: RunContext, pred_path: str, gt_path: str, thresholds: Optional[str]):
    """MAE, RMSE and Prec@tau of a predicted depth PFM against ground truth"""
    cfg = run.start('eval')
    taus = _parse_thresholds(thresholds) if thresholds else cfg.eval.thresholds
    metrics = EvaluationService.evaluate_files(pred_path, gt_path, taus, cfg.io.out_dir)
    logger.info("="*60)
    click.echo(metrics.to_text(), nl=False)
