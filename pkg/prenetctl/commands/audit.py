"""
Parameter auditing

Prints the per-block parameter breakdown of an architecture preset. The
number of stages is accepted to show that it does not change the count.
"""

import click

from prenetctl.commands import arch_option
from prenetctl.core.network import count_parameters, parameter_breakdown, preset_config


@click.command()
@arch_option()
@click.option('--channels', type=click.IntRange(min=1), default=32, show_default=True, help='Feature channels')
@click.option('--stages', type=click.IntRange(min=1), default=6, show_default=True, help='Number of stages T')
@click.option('--resblocks', type=click.IntRange(min=1), default=5, show_default=True,
              help='ResBlocks (or unfoldings of the shared ResBlock)')
def params(arch, channels, stages, resblocks):
    """Print the parameter count of an architecture

    Examples:
      prenetctl params --arch prenet
      prenetctl params --arch prn-r --stages 2
    """
    config = preset_config(arch, channels=channels, stages=stages, resblock_count=resblocks)
    click.echo(f"arch\t{arch}")
    for block, count in parameter_breakdown(config):
        click.echo(f"{block}\t{count}")
    click.echo(f"total\t{count_parameters(config)}")
