"""
Error Handling Middleware
Centralized error handling for all CLI commands
"""

import logging

import click

from mvsmamba.utils.exceptions import (
    ArgumentError,
    ConfigurationError,
    FileFormatError,
    InvariantViolationError,
    MVSMambaError,
    OracleError,
)

logger = logging.getLogger(__name__)


def handle_error(error: Exception) -> int:
    """
    Log an error at the level its type calls for

    Args:
        error: Exception raised by a command

    Returns:
        Process exit code
    """
    if isinstance(error, ArgumentError):
        logger.warning(f"Argument error: {error.message} {error.details}")
    elif isinstance(error, ConfigurationError):
        logger.error(f"Configuration error: {error.message} {error.details}")
    elif isinstance(error, FileFormatError):
        logger.error(f"File format error: {error.message} {error.details}")
    elif isinstance(error, InvariantViolationError):
        logger.error(f"Invariant violation: {error.message} {error.details}")
    elif isinstance(error, OracleError):
        logger.error(f"Oracle error: {error.message} {error.details}")
    elif isinstance(error, MVSMambaError):
        logger.error(f"Error: {error.message} {error.details}")
    else:
        logger.critical(f"Unexpected error: {error}", exc_info=True)
        click.echo(f"Error: an unexpected error occurred: {error}", err=True)
        return 1

    click.echo(f"Error: {error.message}", err=True)
    return error.exit_code


class ErrorHandlingGroup(click.Group):
    """Command group that turns package errors into logged exit codes"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except Exception as e:
            ctx.exit(handle_error(e))

