"""
Tensor core - dense tensors with reverse-mode differentiation

A Tensor wraps a read-only numpy array. Operators are Function subclasses
(see functional.py); applying one to tensors that require gradients links the
output to its creator. backward() orders every operation reachable from a
scalar output into a ComputationTape and walks it in reverse.

Numeric precision defaults to float32. precision('float64') switches newly
created tensors to 64-bit, which is what the finite-difference checks use.
"""

import threading
from contextlib import contextmanager
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from prenetctl.errors import ContractError, NumericalError
from prenetctl.logging_config import get_logger

logger = get_logger('tensor')

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]

_state = threading.local()
_default_dtype = np.dtype(np.float32)


def get_default_dtype() -> np.dtype:
    """Dtype used for tensors created without an explicit dtype"""
    return getattr(_state, 'dtype', _default_dtype)


def set_default_dtype(dtype) -> None:
    """Set the default dtype for the current thread (float32 or float64)"""
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"Unsupported tensor dtype: {dtype}")
    _state.dtype = dtype


@contextmanager
def precision(dtype):
    """Temporarily switch the default tensor dtype"""
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield np.dtype(dtype)
    finally:
        _state.dtype = previous


def is_grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad():
    """Disable graph construction, e.g. for inference and evaluation"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class Function:
    """
    Base class for differentiable operations.

    forward() receives the input arrays and returns the output array.
    backward() receives dL/d(output) and returns one gradient per input
    (None where an input needs no gradient).
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__}.backward")

    @property
    def name(self) -> str:
        return type(self).__name__

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*inputs)
        out = func.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor._wrap(out, creator=func if requires_grad else None,
                            requires_grad=requires_grad)


class Tensor:
    """Dense numeric array, usually (n, c, h, w), with an optional gradient"""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        dtype = np.dtype(dtype) if dtype is not None else get_default_dtype()
        self.data = _readonly(np.array(data, dtype=dtype, copy=True))
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, creator: Optional[Function] = None,
              requires_grad: bool = False) -> "Tensor":
        data = np.asarray(data)
        if not data.flags.c_contiguous:
            data = data.copy()
        tensor = cls.__new__(cls)
        tensor.data = _readonly(data)
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.creator = creator
        return tensor

    # Construction helpers

    @classmethod
    def zeros(cls, shape: Tuple[int, ...], requires_grad: bool = False, dtype=None) -> "Tensor":
        dtype = dtype or get_default_dtype()
        return cls._wrap(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    @classmethod
    def ones(cls, shape: Tuple[int, ...], requires_grad: bool = False, dtype=None) -> "Tensor":
        dtype = dtype or get_default_dtype()
        return cls._wrap(np.ones(shape, dtype=dtype), requires_grad=requires_grad)

    # Introspection

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        """Writable copy of the values"""
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None) -> bool:
        return backward(self, grad)

    # Operators (elementwise, matching shapes only)

    def __add__(self, other):
        from prenetctl.core import functional as F
        return F.add(self, other) if isinstance(other, Tensor) else F.add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from prenetctl.core import functional as F
        return F.sub(self, other) if isinstance(other, Tensor) else F.add_scalar(self, -other)

    def __rsub__(self, other):
        from prenetctl.core import functional as F
        return F.add_scalar(F.scale(self, -1.0), other)

    def __mul__(self, other):
        from prenetctl.core import functional as F
        return F.mul(self, other) if isinstance(other, Tensor) else F.scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from prenetctl.core import functional as F
        return F.div(self, other) if isinstance(other, Tensor) else F.scale(self, 1.0 / other)

    def __neg__(self):
        from prenetctl.core import functional as F
        return F.scale(self, -1.0)

    def __repr__(self) -> str:
        grad_note = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad_note})"


def check_finite(tensor: Tensor, name: str = "tensor") -> Tensor:
    """Raise NumericalError if tensor holds NaN or Inf"""
    if not tensor.is_finite():
        bad = int((~np.isfinite(tensor.data)).sum())
        raise NumericalError(f"{name} has {bad} non-finite value(s)")
    return tensor


class ComputationTape:
    """
    Ordered record of the operations that produced an output.

    nodes lists every non-leaf tensor reachable from the output in
    topological order (inputs precede the operation consuming them).
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: List[Tensor] = self._topological_order(output)

    @staticmethod
    def _topological_order(output: Tensor) -> List[Tensor]:
        order: List[Tensor] = []
        visited = set()
        # Iterative DFS; inputs are visited in argument order
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if node.creator is None:
                continue
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node.creator.inputs):
                if parent.creator is not None and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def __len__(self) -> int:
        return len(self.nodes)

    def operations(self) -> List[str]:
        return [node.creator.name for node in self.nodes]

    def run_backward(self, seed: np.ndarray) -> None:
        """Propagate seed = dL/d(output) to every requires_grad leaf"""
        pending: Dict[int, np.ndarray] = {id(self.output): seed}
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            input_grads = node.creator.backward(grad)
            for parent, parent_grad in zip(node.creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = np.asarray(parent_grad, dtype=parent.dtype).reshape(parent.shape)
                if parent.creator is None:
                    parent.grad = parent_grad.copy() if parent.grad is None else parent.grad + parent_grad
                elif id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + parent_grad
                else:
                    pending[id(parent)] = parent_grad


def backward(output: Tensor, grad: Optional[np.ndarray] = None) -> bool:
    """
    Populate .grad on every requires_grad leaf reachable from a scalar output.

    Leaf gradients accumulate across calls; clear them with zero_grad() or
    build a fresh graph per forward pass. Returns False (and logs a warning)
    when the output is not attached to any recorded operation.
    """
    if output.size != 1:
        raise ContractError(f"backward() needs a scalar output, got shape {output.shape}")

    seed = np.ones(output.shape, dtype=output.dtype) if grad is None else np.asarray(grad, dtype=output.dtype)

    if output.creator is None:
        if output.requires_grad:
            output.grad = seed.copy() if output.grad is None else output.grad + seed
            return True
        logger.warning("backward() called on a tensor detached from any tape; nothing to do")
        return False

    ComputationTape(output).run_backward(seed)
    return True
