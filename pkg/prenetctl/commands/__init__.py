"""
prenetctl commands module

Individual command implementations for the CLI.
"""

import click

from prenetctl.config import PrenetConfig
from prenetctl.core.network import PRESETS


def get_config(ctx: click.Context) -> PrenetConfig:
    """Config loaded by the group callback, or the defaults when run standalone"""
    obj = ctx.find_root().obj or {}
    return obj.get('config') or PrenetConfig()


def arch_option(default: str = 'prenet'):
    return click.option('--arch', type=click.Choice(sorted(PRESETS)), default=default, show_default=True,
                        help='Architecture preset')


def seed_option():
    return click.option('--seed', type=int, default=None,
                        help='Random seed (defaults to the configured default_seed)')
