"""
CLI Module
Root command group and its global options
"""

from typing import Optional

import click

from mvsmamba.cli.commands import COMMANDS
from mvsmamba.cli.context import RunContext
from mvsmamba.cli.middlewares.error_handler import ErrorHandlingGroup
from mvsmamba.config.run_config import load_run_config


def build_group() -> click.Group:
    """Fresh root group with every command registered"""

    @click.group(cls=ErrorHandlingGroup, context_settings={'help_option_names': ['-h', '--help']})
    @click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                  help='key=value run config file')
    @click.option('--seed', type=click.IntRange(min=0, max=2**64 - 1), default=None, help='Override train.seed')
    @click.option('--out', type=click.Path(file_okay=False), default=None, help='Override io.out_dir')
    @click.pass_context
    def cli(ctx: click.Context, config_path: Optional[str], seed: Optional[int], out: Optional[str]):
        """Multi-view stereo depth estimation with dynamic Mamba scanning"""
        cfg = load_run_config(config_path).with_overrides(seed=seed, out=out)
        ctx.obj = RunContext(cfg, config_path)

    for command in COMMANDS:
        cli.add_command(command)
    return cli
