"""
Command Context
Run configuration shared by every command of one invocation
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

import click

from mvsmamba.config.run_config import RunConfig
from mvsmamba.utils.file_io import atomic_write_text

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    cfg: RunConfig
    config_path: Optional[str] = None

    def start(self, title: str) -> RunConfig:
        """Log the command banner, the effective config and the seed"""
        logger.info("="*60)
        logger.info(title.upper())
        logger.info("="*60)
        logger.info(f"Config file: {self.config_path or '(defaults)'}")
        logger.info(f"Seed: {self.cfg.train.seed}")
        for line in self.cfg.to_text().splitlines():
            logger.info(f"  {line}")
        return self.cfg

    def echo_config(self, out_dir: str) -> str:
        """Write the effective config next to a command's outputs"""
        return atomic_write_text(os.path.join(out_dir, 'run_config.txt'), self.cfg.to_text())


pass_run = click.make_pass_decorator(RunContext)
