"""
Training objectives and evaluation metrics

Losses: MSE on the final stage, negative SSIM on the final stage, and
recursive negative SSIM summed over every stage with weights lambda_t.
Metrics: PSNR (RGB jointly, peak 1.0) and SSIM.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from prenetctl.core import functional as F
from prenetctl.core.network import NetworkConfig, ParameterSet, StageTrace, forward
from prenetctl.core.tensor import Tensor, no_grad
from prenetctl.errors import ConfigError, ContractError, ShapeError

LOSS_KINDS = ('mse', 'neg_ssim', 'rec_neg_ssim')

# Stage weights for recursive supervision: 0.5 on intermediate stages, 1.5 on the last
INTERMEDIATE_LAMBDA = 0.5
FINAL_LAMBDA = 1.5


def default_lambdas(stages: int) -> Tuple[float, ...]:
    return (INTERMEDIATE_LAMBDA,) * (stages - 1) + (FINAL_LAMBDA,)


@dataclass(frozen=True)
class LossSpec:
    kind: str = 'neg_ssim'
    lambdas: Optional[Tuple[float, ...]] = None

    @classmethod
    def for_stages(cls, kind: str, stages: int, lambdas: Optional[Sequence[float]] = None) -> "LossSpec":
        """LossSpec with the default stage weights filled in for rec_neg_ssim"""
        if kind == 'rec_neg_ssim' and lambdas is None:
            lambdas = default_lambdas(stages)
        spec = cls(kind=kind, lambdas=tuple(float(v) for v in lambdas) if lambdas is not None else None)
        return spec.validate(stages)

    def validate(self, stages: int) -> "LossSpec":
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"Loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.kind == 'rec_neg_ssim':
            if self.lambdas is None or len(self.lambdas) != stages:
                got = 'none' if self.lambdas is None else len(self.lambdas)
                raise ConfigError(f"rec_neg_ssim needs {stages} stage weights, got {got}")
            if any(not v > 0 for v in self.lambdas):
                raise ConfigError(f"Stage weights must be positive, got {self.lambdas}")
        elif self.lambdas is not None:
            raise ConfigError(f"Stage weights only apply to rec_neg_ssim, not {self.kind}")
        return self


@dataclass(frozen=True)
class SsimSettings:
    """Gaussian-window SSIM constants"""
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    def window_1d(self) -> np.ndarray:
        """Normalized 1-D Gaussian; its outer product is the 2-D window"""
        radius = self.window_size // 2
        offsets = np.arange(-radius, radius + 1, dtype=np.float64)
        weights = np.exp(-(offsets ** 2) / (2.0 * self.sigma ** 2))
        return weights / weights.sum()

    def window_2d(self) -> np.ndarray:
        w = self.window_1d()
        return np.outer(w, w)


DEFAULT_SSIM = SsimSettings()


def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def mse_loss(xT: Tensor, xgt: Tensor) -> Tensor:
    """Mean (not sum) of squared differences"""
    _check_pair(xT, xgt, "mse_loss")
    return F.mean(F.square(F.sub(xT, xgt)))


def ssim(a: Tensor, b: Tensor, settings: SsimSettings = DEFAULT_SSIM) -> Tensor:
    """Mean local SSIM index over all pixels and channels; symmetric in (a, b)"""
    _check_pair(a, b, "ssim")
    window = settings.window_1d()
    mu_a = F.normalized_filter(a, window)
    mu_b = F.normalized_filter(b, window)
    mu_ab = F.mul(mu_a, mu_b)
    mu_aa = F.mul(mu_a, mu_a)
    mu_bb = F.mul(mu_b, mu_b)
    var_a = F.sub(F.normalized_filter(F.mul(a, a), window), mu_aa)
    var_b = F.sub(F.normalized_filter(F.mul(b, b), window), mu_bb)
    cov = F.sub(F.normalized_filter(F.mul(a, b), window), mu_ab)

    numerator = F.mul(F.add_scalar(F.scale(mu_ab, 2.0), settings.c1),
                      F.add_scalar(F.scale(cov, 2.0), settings.c2))
    denominator = F.mul(F.add_scalar(F.add(mu_aa, mu_bb), settings.c1),
                        F.add_scalar(F.add(var_a, var_b), settings.c2))
    return F.mean(F.div(numerator, denominator))


def neg_ssim_loss(xT: Tensor, xgt: Tensor, settings: SsimSettings = DEFAULT_SSIM) -> Tensor:
    return F.scale(ssim(xT, xgt, settings), -1.0)


def rec_neg_ssim_loss(trace: Union[StageTrace, Sequence[Tensor]], xgt: Tensor, lambdas: Sequence[float],
                      settings: SsimSettings = DEFAULT_SSIM) -> Tensor:
    """-sum_t lambda_t * SSIM(x^t, xgt)"""
    estimates = list(trace.estimates if isinstance(trace, StageTrace) else trace)
    if len(estimates) != len(lambdas):
        raise ContractError(f"rec_neg_ssim_loss: {len(lambdas)} weights for {len(estimates)} stages")
    if not estimates:
        raise ContractError("rec_neg_ssim_loss needs at least one stage")
    weighted = None
    for estimate, weight in zip(estimates, lambdas):
        term = F.scale(ssim(estimate, xgt, settings), float(weight))
        weighted = term if weighted is None else F.add(weighted, term)
    return F.scale(weighted, -1.0)


def compute_loss(spec: LossSpec, trace: StageTrace, xgt: Tensor) -> Tensor:
    """Dispatch on LossSpec.kind"""
    if spec.kind == 'mse':
        return mse_loss(trace.final, xgt)
    if spec.kind == 'neg_ssim':
        return neg_ssim_loss(trace.final, xgt)
    if spec.kind == 'rec_neg_ssim':
        return rec_neg_ssim_loss(trace, xgt, spec.lambdas)
    raise ConfigError(f"Unknown loss kind {spec.kind!r}")


# Evaluation metrics

def _as_array(value: Union[Tensor, np.ndarray]) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def psnr(a: Union[Tensor, np.ndarray], b: Union[Tensor, np.ndarray]) -> float:
    """10*log10(1/mse) in dB over all RGB values; +inf when the images are identical"""
    a_arr, b_arr = _as_array(a), _as_array(b)
    if a_arr.shape != b_arr.shape:
        raise ShapeError(f"psnr: shape mismatch {a_arr.shape} vs {b_arr.shape}")
    diff = a_arr.astype(np.float64) - b_arr.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim_value(a: Union[Tensor, np.ndarray], b: Union[Tensor, np.ndarray],
               settings: SsimSettings = DEFAULT_SSIM) -> float:
    """SSIM as a float, evaluated in 64-bit without building a graph"""
    with no_grad():
        a64 = Tensor(_as_array(a), dtype=np.float64)
        b64 = Tensor(_as_array(b), dtype=np.float64)
        return ssim(a64, b64, settings).item()


@dataclass
class StageMetrics:
    """Mean PSNR/SSIM of one stage over an evaluation set"""
    stage: int
    psnr: float
    ssim: float


@dataclass
class ImageMetrics:
    name: str
    psnr: float
    ssim: float
    stage_psnr: List[float] = field(default_factory=list)
    stage_ssim: List[float] = field(default_factory=list)


def mean_metric(values: Sequence[float]) -> float:
    """Arithmetic mean; any +inf entry makes the mean +inf"""
    if not values:
        raise ContractError("Cannot average an empty metric list")
    if any(math.isinf(v) for v in values):
        return math.inf
    return float(sum(values) / len(values))


def evaluate_pair(params: ParameterSet, config: NetworkConfig, name: str, rainy: Tensor, clean: Tensor,
                  per_stage: bool = False) -> ImageMetrics:
    """Derain one image and score it against its ground truth (optionally at every stage)"""
    with no_grad():
        trace = forward(params, config, rainy)
    metrics = ImageMetrics(name=name, psnr=psnr(trace.final, clean), ssim=ssim_value(trace.final, clean))
    if per_stage:
        metrics.stage_psnr = [psnr(x, clean) for x in trace.estimates]
        metrics.stage_ssim = [ssim_value(x, clean) for x in trace.estimates]
    return metrics


def evaluate_stages(results: Sequence[ImageMetrics]) -> List[StageMetrics]:
    """Mean PSNR/SSIM per stage over images evaluated with per_stage=True"""
    if not results:
        raise ContractError("No evaluated images")
    stages = len(results[0].stage_psnr)
    return [
        StageMetrics(stage=t + 1,
                     psnr=mean_metric([r.stage_psnr[t] for r in results]),
                     ssim=mean_metric([r.stage_ssim[t] for r in results]))
        for t in range(stages)
    ]
