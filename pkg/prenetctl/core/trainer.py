"""
ADAM training of a progressive network

One epoch is ceil(len(dataset) / batch_size) random patch batches unless
iterations_per_epoch overrides it. The learning rate is constant within an
epoch and multiplied by lr_decay at every milestone. The metrics log
(metrics.tsv in the output directory) gets one tab-separated line per
iteration, `epoch iter loss lr`, and one per validated epoch,
`epoch iter mean_loss lr val_psnr val_ssim`.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from prenetctl.core.checkpoint import TrainerSnapshot, read_checkpoint, save_checkpoint
from prenetctl.core.datapipe import PairedDataset
from prenetctl.core.monitor import TrainingMonitor
from prenetctl.core.network import NetworkConfig, ParameterSet, build, forward
from prenetctl.core.objectives import LossSpec, compute_loss, evaluate_pair, mean_metric
from prenetctl.core.tensor import Tensor, backward, get_default_dtype
from prenetctl.errors import ConfigError, DatasetValidationError, NumericalError
from prenetctl.logging_config import get_logger, log_context, log_training_metrics

logger = get_logger('trainer')

ArrayPair = Tuple[np.ndarray, np.ndarray]
DatasetLike = Union[PairedDataset, Sequence[ArrayPair]]

METRICS_FILE = 'metrics.tsv'
STEP_METRICS_FILE = 'iterations.jsonl'
INIT_CHECKPOINT = 'init.prnc'
FINAL_CHECKPOINT = 'final.prnc'

# Separates the patch-sampling stream from the weight-initialization stream
DATA_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    patch_size: int = 100
    batch_size: int = 18
    epochs: int = 100
    lr_initial: float = 1e-3
    lr_milestones: Tuple[int, ...] = (30, 50, 80)
    lr_decay: float = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 10
    iterations_per_epoch: Optional[int] = None
    prefetch: bool = False
    strict: bool = True

    def validate(self) -> "TrainConfig":
        for name in ('patch_size', 'batch_size'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.epochs, bool) or not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative integer, got {self.epochs!r}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.iterations_per_epoch is not None and self.iterations_per_epoch <= 0:
            raise ConfigError(f"iterations_per_epoch must be positive, got {self.iterations_per_epoch}")
        milestones = list(self.lr_milestones)
        if any(b <= a for a, b in zip(milestones, milestones[1:])):
            raise ConfigError(f"lr_milestones must be strictly increasing, got {milestones}")
        if milestones and (milestones[0] < 0 or milestones[-1] >= self.epochs):
            raise ConfigError(f"lr_milestones must lie in [0, epochs={self.epochs}), got {milestones}")
        if not (self.lr_initial > 0 and self.lr_decay > 0 and self.adam_eps > 0):
            raise ConfigError("Learning rate, decay and epsilon must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError(f"ADAM betas must lie in [0, 1), got {(self.adam_beta1, self.adam_beta2)}")
        return self

    def to_dict(self) -> Dict[str, object]:
        values = asdict(self)
        values['lr_milestones'] = list(self.lr_milestones)
        return values


def lr_at(epoch: int, config: TrainConfig) -> float:
    """lr_initial * lr_decay ** (number of milestones <= epoch)"""
    passed = sum(1 for milestone in config.lr_milestones if milestone <= epoch)
    return config.lr_initial * config.lr_decay ** passed


# ADAM

@dataclass
class AdamState:
    """First and second moments per parameter plus the step counter"""
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def fresh(cls, params: ParameterSet) -> "AdamState":
        return cls(m={name: np.zeros(t.shape, dtype=t.dtype) for name, t in params.items()},
                   v={name: np.zeros(t.shape, dtype=t.dtype) for name, t in params.items()},
                   step=0)


def adam_step(params: ParameterSet, grads: Dict[str, Optional[np.ndarray]], state: AdamState, lr: float,
              betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> Tuple[ParameterSet, AdamState]:
    """
    One bias-corrected ADAM update. Inputs are left untouched; every gradient
    is checked before anything is updated.
    """
    for name in params:
        grad = grads.get(name)
        if grad is None:
            raise NumericalError(f"No gradient for parameter {name}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"Non-finite gradient in parameter {name} at step {state.step + 1}")

    beta1, beta2 = betas
    step = state.step + 1
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step
    values, m, v = {}, {}, {}
    for name, tensor in params.items():
        dtype = tensor.dtype
        grad = grads[name].astype(dtype, copy=False)
        m[name] = (beta1 * state.m[name].astype(dtype, copy=False) + (1.0 - beta1) * grad).astype(dtype)
        v[name] = (beta2 * state.v[name].astype(dtype, copy=False) + (1.0 - beta2) * grad * grad).astype(dtype)
        m_hat = m[name] / correction1
        v_hat = v[name] / correction2
        values[name] = (tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(dtype)
    return params.replace_values(values, requires_grad=True), AdamState(m=m, v=v, step=step)


# Patch sampling

def _as_pairs(dataset: DatasetLike) -> List[ArrayPair]:
    if isinstance(dataset, PairedDataset):
        return dataset.load_arrays()
    return [(np.asarray(rainy), np.asarray(clean)) for rainy, clean in dataset]


def _eligible_indices(pairs: Sequence[ArrayPair], patch_size: int, strict: bool) -> List[int]:
    eligible, small = [], []
    for index, (rainy, clean) in enumerate(pairs):
        if rainy.shape != clean.shape:
            raise DatasetValidationError(f"Pair {index}: rainy {rainy.shape} and clean {clean.shape} differ",
                                         [str(index)])
        if min(rainy.shape[-2:]) < patch_size:
            small.append(index)
        else:
            eligible.append(index)
    if small:
        problems = [f"pair {i} is smaller than {patch_size}x{patch_size}" for i in small]
        if strict:
            raise DatasetValidationError("; ".join(problems), problems)
        logger.warning(f"Skipping {len(small)} pair(s) smaller than the {patch_size}px patch")
    if not eligible:
        raise DatasetValidationError(f"No pair is large enough for a {patch_size}px patch")
    return eligible


def sample_patch_batch(dataset: Sequence[ArrayPair], patch_size: int, batch_size: int,
                       rng: np.random.Generator, strict: bool = True, dtype=None,
                       eligible: Optional[Sequence[int]] = None) -> Tuple[Tensor, Tensor]:
    """
    Aligned random crops: the same window is cut from each rainy image and
    its ground truth. Per item the draws are (pair, top, left), in that order.

    Pass eligible (indices of pairs at least patch_size on each side) to skip
    re-checking the dataset on every call.
    """
    if eligible is None:
        eligible = _eligible_indices(dataset, patch_size, strict)
    dtype = np.dtype(dtype) if dtype is not None else get_default_dtype()
    rainy_batch = np.empty((batch_size, 3, patch_size, patch_size), dtype=dtype)
    clean_batch = np.empty_like(rainy_batch)
    for k in range(batch_size):
        rainy, clean = dataset[eligible[int(rng.integers(len(eligible)))]]
        height, width = rainy.shape[-2:]
        top = int(rng.integers(height - patch_size + 1))
        left = int(rng.integers(width - patch_size + 1))
        window = (slice(None), slice(top, top + patch_size), slice(left, left + patch_size))
        rainy_batch[k] = rainy[window]
        clean_batch[k] = clean[window]
    return Tensor(rainy_batch, dtype=dtype), Tensor(clean_batch, dtype=dtype)


class BatchStream:
    """
    Produce one epoch of batches. With prefetch a single worker samples the
    next batch while the current step runs; the generator is only ever used
    by one task at a time, so the batch sequence is the same either way.
    """

    def __init__(self, pairs: Sequence[ArrayPair], config: TrainConfig, rng: np.random.Generator,
                 eligible: Optional[Sequence[int]] = None):
        self.pairs = pairs
        self.config = config
        self.rng = rng
        if eligible is None:
            eligible = _eligible_indices(pairs, config.patch_size, config.strict)
        self.eligible = list(eligible)
        # Worker threads do not inherit the caller's thread-local precision
        self.dtype = get_default_dtype()

    def _sample(self) -> Tuple[Tensor, Tensor]:
        return sample_patch_batch(self.pairs, self.config.patch_size, self.config.batch_size,
                                  self.rng, self.config.strict, self.dtype, self.eligible)

    def epoch(self, iterations: int):
        if not self.config.prefetch:
            for _ in range(iterations):
                yield self._sample()
            return
        with ThreadPoolExecutor(max_workers=1, thread_name_prefix='prenetctl-prefetch') as pool:
            pending = pool.submit(self._sample) if iterations else None
            for i in range(iterations):
                batch = pending.result()
                pending = pool.submit(self._sample) if i + 1 < iterations else None
                yield batch


# Training loop

@dataclass
class TrainResult:
    final_checkpoint: Path
    metrics_log: Path
    losses: List[float] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)
    iterations: int = 0
    summary: Dict = field(default_factory=dict)


def iterations_per_epoch(dataset_size: int, config: TrainConfig) -> int:
    if config.iterations_per_epoch is not None:
        return config.iterations_per_epoch
    return math.ceil(dataset_size / config.batch_size)


def _snapshot(state: AdamState, next_epoch: int, iteration: int, rng: np.random.Generator) -> TrainerSnapshot:
    return TrainerSnapshot(step=state.step, next_epoch=next_epoch, iteration=iteration,
                           m=state.m, v=state.v, rng_state=rng.bit_generator.state)


def _validate(params: ParameterSet, config: NetworkConfig, pairs: Sequence[ArrayPair]) -> Tuple[float, float]:
    dtype = get_default_dtype()
    results = [evaluate_pair(params, config, str(i), Tensor(rainy[np.newaxis], dtype=dtype),
                             Tensor(clean[np.newaxis], dtype=dtype))
               for i, (rainy, clean) in enumerate(pairs)]
    return mean_metric([r.psnr for r in results]), mean_metric([r.ssim for r in results])


def _resume(path: Path, net_config: NetworkConfig):
    checkpoint = read_checkpoint(path)
    if checkpoint.config != net_config:
        raise ConfigError(f"{path} was trained with a different network configuration")
    if checkpoint.trainer is None:
        raise ConfigError(f"{path} has no trainer section to resume from")
    dtype = get_default_dtype()
    params = checkpoint.params.replace_values(
        {name: t.data.astype(dtype) for name, t in checkpoint.params.items()}, requires_grad=True)
    snapshot = checkpoint.trainer
    state = AdamState(m={n: a.astype(dtype) for n, a in snapshot.m.items()},
                      v={n: a.astype(dtype) for n, a in snapshot.v.items()},
                      step=snapshot.step)
    return params, state, snapshot


def train(net_config: NetworkConfig, train_config: TrainConfig, loss_spec: LossSpec, dataset: DatasetLike,
          out_dir: Union[str, Path], validation: Optional[DatasetLike] = None,
          resume_from: Optional[Union[str, Path]] = None) -> TrainResult:
    """
    Train from scratch (writing init.prnc first) or resume from a checkpoint
    with a trainer section, and write final.prnc at the end. Non-finite
    losses or gradients abort with NumericalError naming the last good
    checkpoint.
    """
    net_config.validate()
    train_config.validate()
    loss_spec.validate(net_config.stages)
    pairs = _as_pairs(dataset)
    if not pairs:
        raise DatasetValidationError("Training set is empty")
    eligible = _eligible_indices(pairs, train_config.patch_size, train_config.strict)
    val_pairs = _as_pairs(validation) if validation is not None else []

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / METRICS_FILE
    monitor = TrainingMonitor(out_dir / STEP_METRICS_FILE)
    rng = np.random.default_rng([train_config.seed, DATA_STREAM])
    checkpoints: List[Path] = []

    if resume_from is not None:
        params, state, snapshot = _resume(Path(resume_from), net_config)
        if snapshot.rng_state:
            rng.bit_generator.state = snapshot.rng_state
        start_epoch, iteration = snapshot.next_epoch, snapshot.iteration
        last_good = Path(resume_from)
        logger.info(f"Resuming from {resume_from} at epoch {start_epoch} (step {state.step})")
    else:
        params = build(net_config, train_config.seed)
        state = AdamState.fresh(params)
        start_epoch, iteration = 0, 0
        last_good = save_checkpoint(params, net_config, out_dir / INIT_CHECKPOINT, _snapshot(state, 0, 0, rng))
        checkpoints.append(last_good)

    per_epoch = iterations_per_epoch(len(pairs), train_config)
    stream = BatchStream(pairs, train_config, rng, eligible)
    betas = (train_config.adam_beta1, train_config.adam_beta2)
    losses: List[float] = []
    logger.info(f"Training {net_config.family} ({params.total:,} parameters) on {len(pairs)} pair(s), "
                f"{per_epoch} iteration(s) per epoch, epochs {start_epoch}..{train_config.epochs}")

    with open(metrics_path, 'a', encoding='utf-8') as log:
        for epoch in range(start_epoch, train_config.epochs):
            with log_context(logger, epoch=epoch) as epoch_log:
                lr = lr_at(epoch, train_config)
                epoch_losses = []
                for rainy, clean in stream.epoch(per_epoch):
                    iteration += 1
                    with monitor.track_iteration(epoch, iteration, lr) as tracker:
                        trace = forward(params, net_config, rainy)
                        loss = compute_loss(loss_spec, trace, clean)
                        value = loss.item()
                        if not math.isfinite(value):
                            raise NumericalError(f"Non-finite loss at epoch {epoch}, iteration {iteration}",
                                                 last_good_checkpoint=last_good)
                        backward(loss)
                        try:
                            params, state = adam_step(params, params.grads(), state, lr,
                                                      betas=betas, eps=train_config.adam_eps)
                        except NumericalError as e:
                            raise NumericalError(str(e), last_good_checkpoint=last_good) from e
                        tracker.loss = value
                    losses.append(value)
                    epoch_losses.append(value)
                    log.write(f"{epoch}\t{iteration}\t{value:.8g}\t{lr:.8g}\n")
                    log_training_metrics({'epoch': epoch, 'iteration': iteration, 'loss': value, 'lr': lr})

                if val_pairs:
                    val_psnr, val_ssim = _validate(params, net_config, val_pairs)
                    mean_loss = sum(epoch_losses) / len(epoch_losses) if epoch_losses else float('nan')
                    log.write(f"{epoch}\t{iteration}\t{mean_loss:.8g}\t{lr:.8g}\t{val_psnr:.6f}\t{val_ssim:.6f}\n")
                    epoch_log.info(f"Epoch {epoch + 1}/{train_config.epochs}: validation PSNR {val_psnr:.3f} dB, "
                                   f"SSIM {val_ssim:.4f}", extra={'lr': lr})
                else:
                    epoch_log.info(f"Epoch {epoch + 1}/{train_config.epochs} done",
                                   extra={'loss': epoch_losses[-1], 'lr': lr})
                log.flush()

                every = train_config.checkpoint_every
                if every and (epoch + 1) % every == 0 and epoch + 1 < train_config.epochs:
                    path = out_dir / f"checkpoint_epoch{epoch + 1:03d}.prnc"
                    last_good = save_checkpoint(params, net_config, path, _snapshot(state, epoch + 1, iteration, rng))
                    checkpoints.append(last_good)

    next_epoch = max(train_config.epochs, start_epoch)
    final = save_checkpoint(params, net_config, out_dir / FINAL_CHECKPOINT,
                            _snapshot(state, next_epoch, iteration, rng))
    checkpoints.append(final)
    summary = monitor.get_summary_stats()
    if not summary.get('no_data'):
        logger.info(f"Finished {summary['iterations']} iteration(s), "
                    f"{summary['avg_iteration_seconds']:.2f}s each, peak RSS {summary['peak_rss_mb']:.0f} MB")
    return TrainResult(final_checkpoint=final, metrics_log=metrics_path, losses=losses,
                       checkpoints=checkpoints, iterations=iteration, summary=summary)
