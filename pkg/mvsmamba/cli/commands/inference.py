"""
Inference Commands
"""

import logging
from typing import Optional

import click

from mvsmamba.cli.context import RunContext, pass_run
from mvsmamba.services import InferenceService

logger = logging.getLogger(__name__)


@click.command('infer')
@click.option('--checkpoint', type=click.Path(dir_okay=False), default=None,
              help='Checkpoint file (default: io.checkpoint or <out>/model.ckpt)')
@click.option('--scene', 'scene_dir', type=click.Path(exists=True, file_okay=False), default=None)
@click.option('--ref-view', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--num-views', type=click.IntRange(min=2), default=None,
              help='Views per prediction (default: train.views of the checkpoint)')
@pass_run
def infer(run: RunContext, checkpoint: Optional[str], scene_dir: Optional[str], ref_view: int,
          num_views: Optional[int]):
    """
    Predict the reference depth map

    Writes depth_<ref>.pfm and confidence_<ref>.pfm to the output directory.
    """
    cfg = run.start('infer')
    result = InferenceService.infer(
        checkpoint=checkpoint or cfg.io.checkpoint_path,
        scene_dir=scene_dir or cfg.io.scene_dir,
        ref_view=ref_view,
        out_dir=cfg.io.out_dir,
        num_views=num_views,
    )
    logger.info("="*60)
    click.echo(result.depth_path)
    click.echo(result.confidence_path)
