"""
Debug Commands
Scan-order and feature dumps for visual inspection
"""

import logging
from dataclasses import replace
from typing import Optional

import click

from mvsmamba.cli.context import RunContext, pass_run
from mvsmamba.models.dynscan import ScanStrategy
from mvsmamba.services import DebugService

logger = logging.getLogger(__name__)


@click.command('dump-scan')
@click.option('--height', type=click.IntRange(min=2), default=4, show_default=True)
@click.option('--width', type=click.IntRange(min=2), default=4, show_default=True)
@click.option('--source-index', type=click.IntRange(min=1), default=1, show_default=True)
@click.option('--zigzag/--no-zigzag', default=None, help='Override scan.zigzag')
@pass_run
def dump_scan(run: RunContext, height: int, width: int, source_index: int, zigzag: Optional[bool]):
    """Write the visit order of each directional scan as a PGM"""
    cfg = run.start('dump-scan')
    scan = cfg.scan if zigzag is None else replace(cfg.scan, zigzag=zigzag)
    strategy = ScanStrategy(centering=scan.centering, dynamic=scan.dynamic, zigzag=scan.zigzag)
    for path in DebugService.dump_scan(height, width, cfg.io.out_dir, source_index, strategy):
        click.echo(path)


@click.command('dump-features')
@click.option('--checkpoint', type=click.Path(dir_okay=False), default=None)
@click.option('--scene', 'scene_dir', type=click.Path(exists=True, file_okay=False), default=None)
@click.option('--scale', type=click.IntRange(min=0), default=3, show_default=True)
@click.option('--ref-view', type=click.IntRange(min=0), default=0, show_default=True)
@pass_run
def dump_features(run: RunContext, checkpoint: Optional[str], scene_dir: Optional[str], scale: int,
                  ref_view: int):
    """PCA-to-RGB renderings of decoder features, one PPM per view"""
    cfg = run.start('dump-features')
    paths = DebugService.dump_features(checkpoint or cfg.io.checkpoint_path, scene_dir or cfg.io.scene_dir,
                                       scale, cfg.io.out_dir, ref_view=ref_view)
    for path in paths:
        click.echo(path)
