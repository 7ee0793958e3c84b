"""
Configuration commands

`config init` writes a template JSON file for --config; `config show` prints
the effective settings (defaults, file, then PRENET_* overrides) and their
validation checks.
"""

from pathlib import Path

import click

from prenetctl.commands import get_config
from prenetctl.config import create_config_template
from prenetctl.errors import EXIT_USAGE, PrenetIOError, UsageFailure
from prenetctl.logging_config import get_logger

logger = get_logger('commands.settings')


@click.group('config')
def config_group():
    """Create and inspect prenetctl configuration files"""
    pass


@config_group.command('init')
@click.argument('path', type=click.Path(dir_okay=False))
@click.option('--force', is_flag=True, help='Overwrite an existing file')
def init(path, force):
    """Write a configuration template to PATH

    Examples:
      prenetctl config init ~/.prenetctl/config.json
      prenetctl -c ~/.prenetctl/config.json config show
    """
    target = Path(path).expanduser()
    if target.exists() and not force:
        raise UsageFailure(f"{target} already exists (use --force to overwrite)")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        create_config_template(str(target))
    except OSError as e:
        raise PrenetIOError(f"Cannot write {target}: {e}") from e
    click.echo(str(target))


@config_group.command('show')
@click.option('--save', 'save_path', type=click.Path(dir_okay=False),
              help='Also write the effective settings to this file')
@click.pass_context
def show(ctx, save_path):
    """Print the effective settings and their validation checks"""
    settings = get_config(ctx)
    click.echo(str(settings))

    checks = settings.validate()
    for name, ok in checks.items():
        click.echo(f"{name}\t{'ok' if ok else 'FAILED'}")

    if save_path:
        try:
            settings.save_to_file(str(Path(save_path).expanduser()))
        except OSError as e:
            raise PrenetIOError(f"Cannot write {save_path}: {e}") from e

    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        logger.warning(f"Failed checks: {', '.join(failed)}")
        ctx.exit(EXIT_USAGE)
