"""
prenetctl - progressive deraining command-line interface

Main CLI entry point using Click framework.
Results go to stdout; progress and diagnostics go to stderr.
"""

import sys

import click

from prenetctl import __version__
from prenetctl.commands.audit import params
from prenetctl.commands.inference import derain, evaluate
from prenetctl.commands.settings import config_group
from prenetctl.commands.synth import synth
from prenetctl.commands.train import train
from prenetctl.config import PrenetConfig
from prenetctl.errors import EXIT_OK, EXIT_USAGE, PrenetError
from prenetctl.logging_config import get_logger, setup_logging

logger = get_logger('cli')


class PrenetGroup(click.Group):
    """Click group that maps failures onto prenetctl exit codes"""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        if not standalone_mode:
            return super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.UsageError as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(e.exit_code)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        except PrenetError as e:
            logger.debug("Command failed", exc_info=True)
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


@click.group(cls=PrenetGroup)
@click.option('--config', '-c', type=click.Path(dir_okay=False), help='Path to config file')
@click.option('--verbose', '-v', is_flag=True, help='Verbose output')
@click.version_option(__version__, prog_name='prenetctl')
@click.pass_context
def cli(ctx, config, verbose):
    """Progressive image deraining (PRN / PReNet)

    Train progressive recurrent deraining networks, derain images stage by
    stage, evaluate PSNR/SSIM, audit parameter counts and generate synthetic
    rainy/clean pairs.
    """
    ctx.ensure_object(dict)
    settings = PrenetConfig(config)
    setup_logging(settings.config, verbose=verbose)
    ctx.obj['config'] = settings
    ctx.obj['verbose'] = verbose


cli.add_command(train)
cli.add_command(derain)
cli.add_command(evaluate)
cli.add_command(params)
cli.add_command(synth)
cli.add_command(config_group)


def main():
    cli(prog_name='prenetctl')


if __name__ == '__main__':
    main()
