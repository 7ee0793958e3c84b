"""
Synthetic rain dataset generation
"""

from pathlib import Path

import click

from prenetctl.commands import get_config, seed_option
from prenetctl.core.datapipe import IMAGE_SUFFIXES, RainParams, write_synthetic_dataset
from prenetctl.errors import UsageFailure
from prenetctl.logging_config import get_logger

logger = get_logger('commands.synth')

DEFAULT_RAIN = RainParams()


@click.command()
@click.option('--out', '-o', 'out_dir', type=click.Path(file_okay=False), required=True,
              help='Dataset root to create (rain/, norain/, manifest.tsv)')
@click.option('--count', type=click.IntRange(min=1), default=16, show_default=True, help='Number of pairs')
@click.option('--height', type=click.IntRange(min=1), default=100, show_default=True,
              help='Image height for generated backgrounds')
@click.option('--width', type=click.IntRange(min=1), default=100, show_default=True,
              help='Image width for generated backgrounds')
@click.option('--clean-dir', type=click.Path(exists=True, file_okay=False),
              help='Use the PNGs in this directory as clean backgrounds (cycled)')
@click.option('--streaks', type=click.IntRange(min=0), default=DEFAULT_RAIN.streak_count, show_default=True,
              help='Streaks per image')
@click.option('--angle-range', type=(float, float), default=DEFAULT_RAIN.angle_range, show_default=True,
              help='Streak angle range in degrees from vertical')
@click.option('--length-range', type=(float, float), default=DEFAULT_RAIN.length_range, show_default=True,
              help='Streak length range in pixels')
@click.option('--width-range', 'stroke_range', type=(float, float), default=DEFAULT_RAIN.width_range,
              show_default=True, help='Streak width range in pixels')
@click.option('--intensity-range', type=(float, float), default=DEFAULT_RAIN.intensity_range,
              show_default=True, help='Streak intensity range, within (0, 0.8]')
@click.option('--blur', type=float, default=DEFAULT_RAIN.blur_sigma, show_default=True,
              help='Gaussian blur sigma applied to the rain layer')
@seed_option()
@click.pass_context
def synth(ctx, out_dir, count, height, width, clean_dir, streaks, angle_range, length_range, stroke_range,
          intensity_range, blur, seed):
    """Generate rainy/clean pairs with additive synthetic streaks

    Image k uses rain seed SEED+k, so the same flags always produce the same
    dataset.

    Examples:
      prenetctl synth --out ./data --count 16 --height 80 --width 80
      prenetctl synth --out ./clean-pairs --streaks 0
    """
    config = get_config(ctx)
    seed = config.get('default_seed', 0) if seed is None else seed
    rain = RainParams(streak_count=streaks, angle_range=tuple(angle_range), length_range=tuple(length_range),
                      width_range=tuple(stroke_range), intensity_range=tuple(intensity_range),
                      blur_sigma=blur, seed=seed).validate()

    clean_images = None
    if clean_dir:
        clean_images = sorted((p for p in Path(clean_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
                              key=lambda p: p.name.encode('utf-8'))
        if not clean_images:
            raise UsageFailure(f"No PNG images in {clean_dir}")

    logger.info(f"Synthesizing {count} pair(s) into {out_dir}")
    dataset = write_synthetic_dataset(out_dir, count, height, width, rain, clean_images=clean_images)
    click.echo(f"Wrote {len(dataset)} pairs to {out_dir}")
