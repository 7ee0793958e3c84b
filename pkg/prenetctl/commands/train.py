"""
Training command

Every default mirrors the published training protocol: PReNet with T=6,
neg-SSIM loss, 100x100 patches in batches of 18, 100 epochs, ADAM at 1e-3
decayed by 0.2 at epochs 30, 50 and 80.
"""

import click
from click.core import ParameterSource

from prenetctl.commands import arch_option, get_config, seed_option
from prenetctl.core.datapipe import NAMING_MODES, scan_dataset
from prenetctl.core.network import preset_config
from prenetctl.core.objectives import LossSpec
from prenetctl.core.trainer import TrainConfig, train as run_training
from prenetctl.errors import UsageFailure
from prenetctl.logging_config import get_logger

logger = get_logger('commands.train')

LOSS_CHOICES = {'mse': 'mse', 'neg-ssim': 'neg_ssim', 'rec-neg-ssim': 'rec_neg_ssim'}
DEFAULTS = TrainConfig()


def _int_list(text: str):
    try:
        return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str):
    try:
        return tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


@click.command()
@click.option('--data', type=click.Path(), default='./data', show_default=True,
              help='Training dataset root (rain/ and norain/)')
@click.option('--val', 'val_data', type=click.Path(exists=True, file_okay=False),
              help='Validation dataset root; enables per-epoch PSNR/SSIM')
@click.option('--out', '-o', 'out_dir', type=click.Path(file_okay=False), default='./run', show_default=True,
              help='Directory for checkpoints and metrics.tsv')
@arch_option()
@click.option('--stages', type=click.IntRange(min=1), default=6, show_default=True, help='Number of stages T')
@click.option('--channels', type=click.IntRange(min=1), default=32, show_default=True, help='Feature channels')
@click.option('--resblocks', type=click.IntRange(min=1), default=5, show_default=True, help='ResBlocks per stage')
@click.option('--loss', type=click.Choice(sorted(LOSS_CHOICES)), default='neg-ssim', show_default=True,
              help='Training objective')
@click.option('--lambdas', help='Comma-separated stage weights for rec-neg-ssim (default 0.5,...,0.5,1.5)')
@click.option('--patch', type=click.IntRange(min=1), default=DEFAULTS.patch_size, show_default=True,
              help='Patch size')
@click.option('--batch', type=click.IntRange(min=1), default=DEFAULTS.batch_size, show_default=True,
              help='Batch size')
@click.option('--epochs', type=click.IntRange(min=0), default=DEFAULTS.epochs, show_default=True,
              help='Number of epochs')
@click.option('--lr', type=float, default=DEFAULTS.lr_initial, show_default=True, help='Initial learning rate')
@click.option('--milestones', default=','.join(map(str, DEFAULTS.lr_milestones)), show_default=True,
              help='Epochs at which the learning rate decays')
@click.option('--decay', type=float, default=DEFAULTS.lr_decay, show_default=True,
              help='Learning-rate decay factor')
@click.option('--checkpoint-every', type=click.IntRange(min=0), default=DEFAULTS.checkpoint_every,
              show_default=True, help='Checkpoint period in epochs (0 disables periodic checkpoints)')
@click.option('--iterations-per-epoch', type=click.IntRange(min=1),
              help='Override ceil(pairs / batch) iterations per epoch')
@click.option('--prefetch/--no-prefetch', default=None, help='Sample the next batch in a background worker')
@click.option('--naming', type=click.Choice(NAMING_MODES), default=None,
              help='Pair naming scheme (default from config: filename)')
@click.option('--lenient', is_flag=True, help='Skip invalid pairs instead of failing')
@click.option('--resume', type=click.Path(exists=True, dir_okay=False), help='Resume from a checkpoint')
@seed_option()
@click.pass_context
def train(ctx, data, val_data, out_dir, arch, stages, channels, resblocks, loss, lambdas, patch, batch, epochs, lr,
          milestones, decay, checkpoint_every, iterations_per_epoch, prefetch, naming, lenient, resume, seed):
    """Train a progressive deraining network

    Examples:
      prenetctl train --data ./data --epochs 100
      prenetctl train --arch prn --loss rec-neg-ssim --stages 4 --patch 64 --batch 4
    """
    config = get_config(ctx)
    seed = config.get('default_seed', 0) if seed is None else seed
    prefetch = config.get('prefetch', False) if prefetch is None else prefetch
    naming = naming or config.get('dataset_naming', 'filename')
    strict = config.get('strict_dataset', True) and not lenient

    milestone_list = _int_list(milestones)
    if ctx.get_parameter_source('milestones') == ParameterSource.DEFAULT:
        # Schedules shorter than the default keep only the milestones they reach
        milestone_list = tuple(m for m in milestone_list if m < epochs)
    lambda_list = _float_list(lambdas) if lambdas else None
    kind = LOSS_CHOICES[loss]
    if lambda_list is not None and kind != 'rec_neg_ssim':
        raise UsageFailure("--lambdas only applies to --loss rec-neg-ssim")

    net_config = preset_config(arch, channels=channels, stages=stages, resblock_count=resblocks)
    loss_spec = LossSpec.for_stages(kind, stages, lambda_list)
    train_config = TrainConfig(patch_size=patch, batch_size=batch, epochs=epochs, lr_initial=lr,
                               lr_milestones=milestone_list, lr_decay=decay, seed=seed,
                               checkpoint_every=checkpoint_every, iterations_per_epoch=iterations_per_epoch,
                               prefetch=prefetch, strict=strict).validate()

    click.echo(f"{net_config.family} training: arch={arch} T={stages} channels={channels} loss={loss}", err=True)
    click.echo(f"  patch={patch} batch={batch} epochs={epochs} lr={lr:g} "
               f"milestones={','.join(map(str, milestone_list)) or 'none'} decay={decay:g} seed={seed}", err=True)

    dataset = scan_dataset(data, strict=strict, naming=naming)
    if not len(dataset):
        raise UsageFailure(f"No training pairs in {data}")
    validation = scan_dataset(val_data, strict=strict, naming=naming) if val_data else None

    result = run_training(net_config, train_config, loss_spec, dataset, out_dir,
                          validation=validation, resume_from=resume)
    click.echo(str(result.final_checkpoint))
