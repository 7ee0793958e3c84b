"""
Progressive deraining networks (PRN / PReNet and their recursive variants)

One stage applies f_in (3x3 conv + ReLU) to the current estimate, optionally
concatenated with the rainy input, then an optional convolutional LSTM/GRU,
then f_res (ResBlocks), then f_out (3x3 conv). Every stage reuses the same
parameters, so the parameter count does not depend on the number of stages.
"""

from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from prenetctl.core import functional as F
from prenetctl.core.tensor import Tensor, get_default_dtype
from prenetctl.errors import ConfigError, ContractError, ShapeError
from prenetctl.logging_config import get_logger

logger = get_logger('network')

RECURRENT_CELLS = ('none', 'lstm', 'gru')
RESBLOCK_MODES = ('distinct_5', 'recursive_1x5')
INPUT_MODES = ('concat_y', 'x_only')
OUTPUT_MODES = ('residual', 'direct')

LSTM_GATES = ('i', 'f', 'g', 'o')
GRU_GATES = ('z', 'r', 'n')

IMAGE_CHANNELS = 3


@dataclass(frozen=True)
class NetworkConfig:
    """Full ablation space of the progressive network family"""
    recurrent_cell: str = 'lstm'
    resblock_mode: str = 'distinct_5'
    stages: int = 6
    input_mode: str = 'concat_y'
    output_mode: str = 'residual'
    channels: int = 32
    resblock_count: int = 5

    def validate(self) -> "NetworkConfig":
        if self.recurrent_cell not in RECURRENT_CELLS:
            raise ConfigError(f"recurrent_cell must be one of {RECURRENT_CELLS}, got {self.recurrent_cell!r}")
        if self.resblock_mode not in RESBLOCK_MODES:
            raise ConfigError(f"resblock_mode must be one of {RESBLOCK_MODES}, got {self.resblock_mode!r}")
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"input_mode must be one of {INPUT_MODES}, got {self.input_mode!r}")
        if self.output_mode not in OUTPUT_MODES:
            raise ConfigError(f"output_mode must be one of {OUTPUT_MODES}, got {self.output_mode!r}")
        for name in ('stages', 'channels', 'resblock_count'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        return self

    @property
    def is_recurrent(self) -> bool:
        return self.recurrent_cell != 'none'

    @property
    def family(self) -> str:
        return 'PReNet' if self.is_recurrent else 'PRN'

    @property
    def input_channels(self) -> int:
        return 2 * IMAGE_CHANNELS if self.input_mode == 'concat_y' else IMAGE_CHANNELS

    @property
    def stored_resblocks(self) -> int:
        return 1 if self.resblock_mode == 'recursive_1x5' else self.resblock_count

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "NetworkConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"Unknown network config field(s): {sorted(unknown)}")
        kwargs = {}
        for name, raw in values.items():
            kwargs[name] = int(raw) if name in ('stages', 'channels', 'resblock_count') else str(raw)
        return cls(**kwargs).validate()


PRESETS: Dict[str, Dict[str, str]] = {
    'prn': dict(recurrent_cell='none', resblock_mode='distinct_5'),
    'prenet': dict(recurrent_cell='lstm', resblock_mode='distinct_5'),
    'prn-r': dict(recurrent_cell='none', resblock_mode='recursive_1x5'),
    'prenet-r': dict(recurrent_cell='lstm', resblock_mode='recursive_1x5'),
    'prenet-gru': dict(recurrent_cell='gru', resblock_mode='distinct_5', output_mode='direct'),
    'prenet-lstm': dict(recurrent_cell='lstm', resblock_mode='distinct_5', output_mode='direct'),
    'prenet-x': dict(recurrent_cell='lstm', resblock_mode='distinct_5', input_mode='x_only',
                     output_mode='direct'),
}


def preset_config(name: str, channels: int = 32, stages: int = 6, resblock_count: int = 5) -> NetworkConfig:
    """NetworkConfig for a named architecture preset"""
    if name not in PRESETS:
        raise ConfigError(f"Unknown architecture {name!r}; choose from {sorted(PRESETS)}")
    return NetworkConfig(channels=channels, stages=stages, resblock_count=resblock_count,
                         **PRESETS[name]).validate()


# Parameter layout

def _conv_entries(prefix: str, c_out: int, c_in: int, bias: bool = True) -> List[Tuple[str, Tuple[int, ...]]]:
    entries = [(f'{prefix}.w', (c_out, c_in, 3, 3))]
    if bias:
        entries.append((f'{prefix}.b', (c_out,)))
    return entries


def parameter_layout(config: NetworkConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Canonical (name, shape) order of every parameter tensor"""
    config.validate()
    c = config.channels
    layout = _conv_entries('f_in', c, config.input_channels)
    for k in range(config.stored_resblocks):
        layout += _conv_entries(f'res[{k}].conv1', c, c)
        layout += _conv_entries(f'res[{k}].conv2', c, c)
    if config.is_recurrent:
        gates = LSTM_GATES if config.recurrent_cell == 'lstm' else GRU_GATES
        cell = config.recurrent_cell
        for gate in gates:
            layout += _conv_entries(f'{cell}.{gate}.x', c, c)
            layout += _conv_entries(f'{cell}.{gate}.h', c, c, bias=False)
    layout += _conv_entries('f_out', IMAGE_CHANNELS, c)
    return layout


def count_parameters(config: NetworkConfig) -> int:
    """Closed-form scalar count; independent of the number of stages"""
    return sum(int(np.prod(shape)) for _, shape in parameter_layout(config))


def parameter_breakdown(config: NetworkConfig) -> List[Tuple[str, int]]:
    """Parameter counts grouped by block: f_in, f_res, recurrent (if any), f_out"""
    groups: Dict[str, int] = {'f_in': 0, 'f_res': 0}
    if config.is_recurrent:
        groups['recurrent'] = 0
    groups['f_out'] = 0
    for name, shape in parameter_layout(config):
        head = name.split('.')[0]
        if head.startswith('res['):
            key = 'f_res'
        elif head in ('lstm', 'gru'):
            key = 'recurrent'
        else:
            key = head
        groups[key] += int(np.prod(shape))
    return list(groups.items())


class ParameterSet(Mapping):
    """Canonically ordered, named convolution weights and biases of one network"""

    def __init__(self, entries: Sequence[Tuple[str, Tensor]]):
        self._entries: Dict[str, Tensor] = {}
        for name, tensor in entries:
            if name in self._entries:
                raise ContractError(f"Duplicate parameter name: {name}")
            self._entries[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def total(self) -> int:
        return sum(t.size for t in self._entries.values())

    def zero_grad(self) -> None:
        for tensor in self._entries.values():
            tensor.zero_grad()

    def grads(self) -> Dict[str, Optional[np.ndarray]]:
        return {name: t.grad for name, t in self._entries.items()}

    def flatten(self, dtype=np.float32) -> np.ndarray:
        """All values concatenated in canonical order"""
        if not self._entries:
            return np.zeros(0, dtype=dtype)
        return np.concatenate([t.data.reshape(-1).astype(dtype) for t in self._entries.values()])

    def replace_values(self, values: Dict[str, np.ndarray], requires_grad: bool = True) -> "ParameterSet":
        """New ParameterSet with the same names and new leaf values"""
        return ParameterSet([
            (name, Tensor(values[name], requires_grad=requires_grad, dtype=values[name].dtype))
            for name in self._entries
        ])

    @classmethod
    def from_blob(cls, config: NetworkConfig, blob: np.ndarray, requires_grad: bool = False) -> "ParameterSet":
        layout = parameter_layout(config)
        expected = sum(int(np.prod(shape)) for _, shape in layout)
        if blob.size != expected:
            raise ShapeError(f"Parameter blob has {blob.size} values, config needs {expected}")
        entries, offset = [], 0
        for name, shape in layout:
            size = int(np.prod(shape))
            entries.append((name, Tensor(blob[offset:offset + size].reshape(shape),
                                         requires_grad=requires_grad, dtype=blob.dtype)))
            offset += size
        return cls(entries)

    def __repr__(self) -> str:
        return f"ParameterSet({len(self)} tensors, {self.total:,} values)"


def build(config: NetworkConfig, seed: int, requires_grad: bool = True) -> ParameterSet:
    """
    Allocate parameters in canonical order.

    Weights are uniform in [-sqrt(1/(ci*9)), sqrt(1/(ci*9))], biases are zero;
    draws happen in canonical order from one seeded generator.
    """
    layout = parameter_layout(config)
    rng = np.random.default_rng(seed)
    dtype = get_default_dtype()
    entries = []
    for name, shape in layout:
        if name.endswith('.w'):
            bound = np.sqrt(1.0 / (shape[1] * 9))
            values = rng.uniform(-bound, bound, size=shape)
        else:
            values = np.zeros(shape)
        entries.append((name, Tensor(values, requires_grad=requires_grad, dtype=dtype)))
    params = ParameterSet(entries)
    logger.debug(f"Built {config.family} with {params.total:,} parameters (seed={seed})")
    return params


# Recurrent cells

@dataclass
class RecurrentState:
    """Hidden state h and cell state c (c stays unused by the GRU)"""
    h: Tensor
    c: Optional[Tensor] = None

    @classmethod
    def zeros(cls, batch: int, channels: int, height: int, width: int, dtype=None) -> "RecurrentState":
        shape = (batch, channels, height, width)
        return cls(h=Tensor.zeros(shape, dtype=dtype), c=Tensor.zeros(shape, dtype=dtype))


def _check_state(state: RecurrentState, x: Tensor) -> None:
    if state.h.shape != x.shape:
        raise ShapeError(f"Recurrent state {state.h.shape} does not match input {x.shape}")


def _gate_stack(params: ParameterSet, cell: str, gates: Sequence[str], part: str) -> Tensor:
    return F.concat([params[f'{cell}.{g}.{part}'] for g in gates], axis=0)


def lstm_cell(params: ParameterSet, state: RecurrentState, x: Tensor) -> RecurrentState:
    """
    Convolutional LSTM without peepholes.

    i, f, o = sigmoid(Wx*x + b + Wh*h); g = tanh(Wx*x + b + Wh*h)
    c' = f*c + i*g;  h' = o*tanh(c')
    The four gates are evaluated as one stacked convolution per operand.
    """
    _check_state(state, x)
    c = x.shape[1]
    pre = F.add(
        F.conv2d(x, _gate_stack(params, 'lstm', LSTM_GATES, 'x.w'), _gate_stack(params, 'lstm', LSTM_GATES, 'x.b')),
        F.conv2d(state.h, _gate_stack(params, 'lstm', LSTM_GATES, 'h.w')),
    )
    i = F.sigmoid(F.slice_channels(pre, 0, c))
    f = F.sigmoid(F.slice_channels(pre, c, 2 * c))
    g = F.tanh(F.slice_channels(pre, 2 * c, 3 * c))
    o = F.sigmoid(F.slice_channels(pre, 3 * c, 4 * c))
    cell = F.add(F.mul(f, state.c), F.mul(i, g))
    hidden = F.mul(o, F.tanh(cell))
    return RecurrentState(h=hidden, c=cell)


def gru_cell(params: ParameterSet, state: RecurrentState, x: Tensor) -> RecurrentState:
    """
    Convolutional GRU with the reset gate applied before the hidden conv.

    z, r = sigmoid(Wx*x + b + Wh*h); n = tanh(Wx_n*x + b_n + Wh_n*(r*h))
    h' = n + z*(h - n)
    """
    _check_state(state, x)
    c = x.shape[1]
    x_part = F.conv2d(x, _gate_stack(params, 'gru', GRU_GATES, 'x.w'), _gate_stack(params, 'gru', GRU_GATES, 'x.b'))
    h_part = F.conv2d(state.h, _gate_stack(params, 'gru', GRU_GATES[:2], 'h.w'))
    z = F.sigmoid(F.add(F.slice_channels(x_part, 0, c), F.slice_channels(h_part, 0, c)))
    r = F.sigmoid(F.add(F.slice_channels(x_part, c, 2 * c), F.slice_channels(h_part, c, 2 * c)))
    candidate = F.tanh(F.add(F.slice_channels(x_part, 2 * c, 3 * c),
                             F.conv2d(F.mul(r, state.h), params['gru.n.h.w'])))
    hidden = F.add(candidate, F.mul(z, F.sub(state.h, candidate)))
    return RecurrentState(h=hidden, c=state.c)


CELLS = {'lstm': lstm_cell, 'gru': gru_cell}


# Residual trunk

def resblock(params: ParameterSet, index: int, x: Tensor) -> Tensor:
    """relu(relu(conv2(relu(conv1(x)))) + x)"""
    p = f'res[{index}]'
    out = F.relu(F.conv2d(x, params[f'{p}.conv1.w'], params[f'{p}.conv1.b']))
    out = F.relu(F.conv2d(out, params[f'{p}.conv2.w'], params[f'{p}.conv2.b']))
    return F.relu(F.add(out, x))


def f_res(params: ParameterSet, config: NetworkConfig, x: Tensor) -> Tensor:
    """resblock_count ResBlocks: distinct blocks, or one block unfolded"""
    for k in range(config.resblock_count):
        x = resblock(params, 0 if config.resblock_mode == 'recursive_1x5' else k, x)
    return x


# Stage recursion

@dataclass
class StageTrace:
    """Per-stage clean-image estimates x^1..x^t of one forward pass"""
    estimates: List[Tensor] = field(default_factory=list)
    residuals: Optional[List[Tensor]] = None

    def __len__(self) -> int:
        return len(self.estimates)

    def __getitem__(self, index: int) -> Tensor:
        return self.estimates[index]

    @property
    def final(self) -> Tensor:
        return self.estimates[-1]


def stage_step(params: ParameterSet, config: NetworkConfig, y: Tensor, x_prev: Tensor,
               state: Optional[RecurrentState]) -> Tuple[Tensor, Tensor, Optional[RecurrentState]]:
    """One stage: returns (x^t, head output r^t, s^t)"""
    inp = F.concat_channels(x_prev, y) if config.input_mode == 'concat_y' else x_prev
    feat = F.relu(F.conv2d(inp, params['f_in.w'], params['f_in.b']))
    if config.is_recurrent:
        state = CELLS[config.recurrent_cell](params, state, feat)
        feat = state.h
    feat = f_res(params, config, feat)
    head = F.conv2d(feat, params['f_out.w'], params['f_out.b'])
    x = F.add(y, head) if config.output_mode == 'residual' else head
    return x, head, state


def forward(params: ParameterSet, config: NetworkConfig, y: Tensor,
            stop_at_stage: Optional[int] = None) -> StageTrace:
    """
    Run the progressive recursion from x^0 = y and s^0 = 0.

    With stop_at_stage=t the trace holds x^1..x^t, identical to the first t
    entries of a full run.
    """
    config.validate()
    if y.ndim != 4 or y.shape[1] != IMAGE_CHANNELS:
        raise ShapeError(f"Input must be (n, 3, h, w), got {y.shape}")
    stages = config.stages if stop_at_stage is None else stop_at_stage
    if isinstance(stages, bool) or not isinstance(stages, int) or not 1 <= stages <= config.stages:
        raise ContractError(f"stop_at_stage must be in [1, {config.stages}], got {stop_at_stage!r}")

    n, _, h, w = y.shape
    state = RecurrentState.zeros(n, config.channels, h, w, dtype=y.dtype) if config.is_recurrent else None
    trace = StageTrace(residuals=[] if config.output_mode == 'residual' else None)
    x = y
    for _ in range(stages):
        x, head, state = stage_step(params, config, y, x, state)
        trace.estimates.append(x)
        if trace.residuals is not None:
            trace.residuals.append(head)
    return trace
