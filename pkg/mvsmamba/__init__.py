"""
MVSMamba
Command-line factory and logging initialization
"""

import logging
import os
from datetime import datetime

from mvsmamba.config.settings import Config


def create_cli(config=None):
    """
    Command-line factory

    Args:
        config: Configuration class (uses Config if not provided)

    Returns:
        Configured click command group
    """
    from mvsmamba.cli import build_group

    if config is None:
        config = Config

    setup_logging(config)
    cli = build_group()

    logger = logging.getLogger(__name__)
    logger.debug(f"CLI created (environment: {config.ENV}, threads: {config.NUM_THREADS})")
    return cli


def setup_logging(config):
    """
    Configure application logging

    Args:
        config: Configuration object
    """
    handlers = [logging.StreamHandler()]
    log_filename = None
    if config.LOG_TO_FILE:
        os.makedirs(config.LOG_DIR, exist_ok=True)
        log_filename = os.path.join(
            config.LOG_DIR,
            f"mvsmamba_{datetime.now().strftime('%Y%m%d')}.log"
        )
        handlers.insert(0, logging.FileHandler(log_filename))

    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s',
        handlers=handlers,
        force=True
    )

    # Pillow's plugin loader is chatty at DEBUG
    logging.getLogger('PIL').setLevel(logging.INFO)

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging configured: {log_filename or 'console only'} (level {config.LOG_LEVEL})")
