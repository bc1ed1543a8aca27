"""
Selfcheck Commands
"""

import logging

import click

from mvsmamba.cli.context import RunContext, pass_run
from mvsmamba.services import SelfcheckService

logger = logging.getLogger(__name__)


@click.command('selfcheck')
@click.pass_context
@pass_run
def selfcheck(run: RunContext, ctx: click.Context):
    """Run the invariant suite; exits 3 if any check fails"""
    cfg = run.start('selfcheck')
    report = SelfcheckService.run(cfg)
    click.echo(report.to_text(), nl=False)
    logger.info(f"Selfcheck {'passed' if report.passed else 'FAILED'}")
    logger.info("="*60)
    ctx.exit(report.exit_code)
