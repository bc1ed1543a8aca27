"""
Scene Commands
Synthetic scene generation
"""

import logging
from typing import Optional

import click

from mvsmamba.cli.context import RunContext, pass_run
from mvsmamba.services import SceneService

logger = logging.getLogger(__name__)


@click.command('gen-synthetic')
@click.option('--scene', 'scene_dir', type=click.Path(file_okay=False), default=None,
              help='Output scene directory (default: io.scene_dir)')
@pass_run
def gen_synthetic(run: RunContext, scene_dir: Optional[str]):
    """Ray-cast a procedural scene and write images, cameras, depths and pairs"""
    cfg = run.start('gen-synthetic')
    root = scene_dir or cfg.io.scene_dir
    bundle = SceneService.generate(cfg.scene, cfg.train.seed, root)
    run.echo_config(root)
    logger.info(f"Generated {len(bundle.views)} views at {bundle.height}x{bundle.width}")
    logger.info("="*60)
    click.echo(root)
