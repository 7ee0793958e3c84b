"""
Inference commands: stage-wise deraining and PSNR/SSIM evaluation
"""

import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

import click

from prenetctl.commands import get_config
from prenetctl.core.checkpoint import load_checkpoint
from prenetctl.core.datapipe import IMAGE_SUFFIXES, NAMING_MODES, load_image, save_image, scan_dataset
from prenetctl.core.network import NetworkConfig, ParameterSet, forward
from prenetctl.core.objectives import evaluate_pair, evaluate_stages, mean_metric
from prenetctl.core.tensor import no_grad
from prenetctl.errors import PrenetError, UsageFailure
from prenetctl.logging_config import get_logger, log_context

logger = get_logger('commands.inference')


def format_metric(value: float) -> str:
    return 'inf' if math.isinf(value) else f"{value:.6f}"


def derain_file(params: ParameterSet, config: NetworkConfig, source: Path, target: Path,
                stop_at_stage: Optional[int] = None, dump_dir: Optional[Path] = None) -> Path:
    """Derain one image; optionally write every stage estimate as stage_<t>.png"""
    rainy = load_image(source)
    with no_grad():
        trace = forward(params, config, rainy, stop_at_stage=stop_at_stage)
    save_image(trace.final, target)
    if dump_dir is not None:
        for t, estimate in enumerate(trace.estimates, start=1):
            save_image(estimate, dump_dir / f"stage_{t}.png")
    return target


def _derain_directory(params, config, source: Path, target: Path, stop_at_stage, dump_dir,
                      workers: int) -> List[Tuple[Path, Optional[PrenetError]]]:
    images = sorted((p for p in source.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
                    key=lambda p: p.name.encode('utf-8'))
    if not images:
        raise UsageFailure(f"No PNG images in {source}")

    def run(image: Path) -> Tuple[Path, Optional[PrenetError]]:
        try:
            # Failures are logged with the image name on the way out
            with log_context(logger, image=image.name) as log:
                stage_dir = dump_dir / image.stem if dump_dir is not None else None
                written = derain_file(params, config, image, target / image.name, stop_at_stage, stage_dir)
                log.debug(f"Wrote {written}")
                return written, None
        except PrenetError as e:
            return image, e

    if workers <= 1:
        return [run(image) for image in images]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='prenetctl-derain') as pool:
        return list(pool.map(run, images))


@click.command()
@click.option('--model', '-m', type=click.Path(), required=True, help='PRNC checkpoint')
@click.option('--input', '-i', 'input_path', type=click.Path(), required=True, help='Rainy image or directory')
@click.option('--output', '-o', 'output_path', type=click.Path(), required=True,
              help='Output image (or directory when --input is a directory)')
@click.option('--stop-at-stage', type=int, help='Stop after stage t (1..T) instead of running all T stages')
@click.option('--dump-stages', type=click.Path(file_okay=False), help='Write every stage estimate into this directory')
@click.option('--workers', type=click.IntRange(min=1), help='Concurrent images for directory input '
              '(default from config: num_workers)')
@click.pass_context
def derain(ctx, model, input_path, output_path, stop_at_stage, dump_stages, workers):
    """Derain an image (or a directory of images) stage by stage

    Examples:
      prenetctl derain -m run/final.prnc -i rainy.png -o clean.png
      prenetctl derain -m run/final.prnc -i rainy.png -o x3.png --stop-at-stage 3 --dump-stages stages/
    """
    params, net_config = load_checkpoint(model)
    if stop_at_stage is not None and not 1 <= stop_at_stage <= net_config.stages:
        raise UsageFailure(f"--stop-at-stage must lie in [1, {net_config.stages}] for this checkpoint, "
                           f"got {stop_at_stage}")
    source, target = Path(input_path), Path(output_path)
    dump_dir = Path(dump_stages) if dump_stages else None

    if not source.is_dir():
        click.echo(str(derain_file(params, net_config, source, target, stop_at_stage, dump_dir)))
        return

    workers = workers or int(get_config(ctx).get('num_workers', 1))
    logger.info(f"Deraining {source} with {workers} worker(s)")
    results = _derain_directory(params, net_config, source, target, stop_at_stage, dump_dir, workers)
    failures = [(path, error) for path, error in results if error is not None]
    for path, error in results:
        if error is None:
            click.echo(str(path))
    if failures:
        click.echo(f"{len(failures)}/{len(results)} image(s) failed; first: {failures[0][0]}: {failures[0][1]}",
                   err=True)
        ctx.exit(failures[0][1].exit_code)


@click.command('eval')
@click.option('--model', '-m', type=click.Path(), required=True, help='PRNC checkpoint')
@click.option('--data', type=click.Path(), required=True, help='Dataset root (rain/ and norain/)')
@click.option('--per-stage', is_flag=True, help='Also print mean PSNR/SSIM of every stage')
@click.option('--naming', type=click.Choice(NAMING_MODES), default=None,
              help='Pair naming scheme (default from config: filename)')
@click.option('--lenient', is_flag=True, help='Skip invalid pairs instead of failing')
@click.pass_context
def evaluate(ctx, model, data, per_stage, naming, lenient):
    """Print per-image and mean PSNR/SSIM as tab-separated rows

    PSNR is computed over RGB with peak 1.0; identical images report inf.

    Examples:
      prenetctl eval -m run/final.prnc --data ./test
      prenetctl eval -m run/final.prnc --data ./test --per-stage
    """
    config = get_config(ctx)
    params, net_config = load_checkpoint(model)
    dataset = scan_dataset(data, strict=config.get('strict_dataset', True) and not lenient,
                           naming=naming or config.get('dataset_naming', 'filename'))
    if not len(dataset):
        raise UsageFailure(f"No image pairs in {data}")

    results = []
    for pair in dataset:
        metrics = evaluate_pair(params, net_config, pair.name, load_image(pair.rainy), load_image(pair.clean),
                                per_stage=per_stage)
        logger.debug(f"PSNR {metrics.psnr:.3f} SSIM {metrics.ssim:.4f}", extra={'image': pair.name})
        results.append(metrics)

    click.echo("image\tpsnr\tssim")
    for metrics in results:
        click.echo(f"{metrics.name}\t{format_metric(metrics.psnr)}\t{format_metric(metrics.ssim)}")
    click.echo(f"mean\t{format_metric(mean_metric([m.psnr for m in results]))}\t"
               f"{format_metric(mean_metric([m.ssim for m in results]))}")
    if per_stage:
        for stage in evaluate_stages(results):
            click.echo(f"stage_{stage.stage}\t{format_metric(stage.psnr)}\t{format_metric(stage.ssim)}")
