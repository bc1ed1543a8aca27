"""
Application Configuration
Process-level settings read from the environment
"""

import logging
import os
from dotenv import load_dotenv

from mvsmamba.utils.exceptions import ConfigurationError

# Load environment variables
load_dotenv()


class Config:
    """Base configuration"""

    ENV = os.getenv('MVSMAMBA_ENV', 'production')
    TESTING = False

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_DIR = os.getenv('LOG_DIR', 'logs')
    LOG_TO_FILE = True

    # Threads used for per-view rendering
    NUM_THREADS = int(os.getenv('MVSMAMBA_THREADS', 1))

    @classmethod
    def validate(cls):
        """Validate configuration"""
        if cls.NUM_THREADS < 1:
            raise ConfigurationError(
                "MVSMAMBA_THREADS must be a positive integer",
                details={"MVSMAMBA_THREADS": cls.NUM_THREADS}
            )

        if not isinstance(logging.getLevelName(cls.LOG_LEVEL.upper()), int):
            raise ConfigurationError(
                "Unknown log level",
                details={"LOG_LEVEL": cls.LOG_LEVEL}
            )

        return True


class DevelopmentConfig(Config):
    """Development configuration"""
    ENV = 'development'
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    ENV = 'production'


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    ENV = 'testing'
    LOG_LEVEL = 'WARNING'
    LOG_TO_FILE = False


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}


def get_config():
    """Get configuration based on environment"""
    env = os.getenv('MVSMAMBA_ENV', 'production')
    return config.get(env, config['default'])
