"""
Training Commands
"""

import logging
from dataclasses import replace
from typing import Optional

import click

from mvsmamba.cli.context import RunContext, pass_run
from mvsmamba.services import TrainingService

logger = logging.getLogger(__name__)


@click.command('train')
@click.option('--scene', 'scene_dir', type=click.Path(exists=True, file_okay=False), default=None,
              help='Scene directory (default: io.scene_dir)')
@pass_run
def train(run: RunContext, scene_dir: Optional[str]):
    """Fit the cascade on a scene and write the checkpoint and train_log.csv"""
    cfg = run.start('train')
    if scene_dir:
        cfg = replace(cfg, io=replace(cfg.io, scene_dir=scene_dir))
    run.echo_config(cfg.io.out_dir)

    result = TrainingService.train(cfg)

    if result.final_loss is not None:
        logger.info(f"Loss {result.initial_loss:.5f} -> {result.final_loss:.5f}, "
                    f"finest MAE {result.final_mae:.4f}")
    logger.info(f"Checkpoint: {result.checkpoint}")
    logger.info("="*60)
    click.echo(result.checkpoint)
