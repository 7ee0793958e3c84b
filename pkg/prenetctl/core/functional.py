"""
Differentiable operators over Tensor

conv2d is an im2col convolution restricted to 3x3 kernels with zero padding 1.
The column index is laid out input channel, kernel row, kernel column, and the
contraction is one np.matmul per batch item. Its summation order is whatever
the linked BLAS uses: results are bitwise repeatable for one numpy/BLAS
build and thread count, not across builds. The column buffer is rebuilt in
backward instead of being kept alive between passes.

No broadcasting: binary operators require identical shapes.
"""

from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, special

from prenetctl.core.tensor import Function, Tensor
from prenetctl.errors import ContractError, ShapeError, UnsupportedKernelError

KERNEL = 3


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# Convolution

def _im2col(padded: np.ndarray, height: int, width: int) -> np.ndarray:
    """(n, ci, h+2, w+2) -> (n, ci*9, h*w) with ci-major, then dy, then dx"""
    n, ci = padded.shape[:2]
    cols = np.empty((n, ci, KERNEL, KERNEL, height, width), dtype=padded.dtype)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            cols[:, :, dy, dx] = padded[:, :, dy:dy + height, dx:dx + width]
    return cols.reshape(n, ci * KERNEL * KERNEL, height * width)


def _col2im(cols: np.ndarray, n: int, ci: int, height: int, width: int) -> np.ndarray:
    """Adjoint of _im2col followed by cropping the padding"""
    cols = cols.reshape(n, ci, KERNEL, KERNEL, height, width)
    padded = np.zeros((n, ci, height + 2, width + 2), dtype=cols.dtype)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            padded[:, :, dy:dy + height, dx:dx + width] += cols[:, :, dy, dx]
    return padded[:, :, 1:-1, 1:-1]


class Conv2d(Function):

    def forward(self, x, weight, bias=None):
        n, ci, h, w = x.shape
        co = weight.shape[0]
        self.geometry = (n, ci, h, w, co)
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        cols = _im2col(padded, h, w)
        out = np.matmul(weight.reshape(co, ci * KERNEL * KERNEL), cols)
        if bias is not None:
            out += bias.reshape(1, co, 1)
        return out.reshape(n, co, h, w)

    def backward(self, grad):
        x, weight = self.inputs[0].data, self.inputs[1].data
        n, ci, h, w, co = self.geometry
        g = grad.reshape(n, co, h * w)
        w2d = weight.reshape(co, ci * KERNEL * KERNEL)

        grad_x = grad_w = grad_b = None
        if self.inputs[1].requires_grad:
            cols = _im2col(np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1))), h, w)
            grad_w = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if len(self.inputs) > 2 and self.inputs[2].requires_grad:
            grad_b = g.sum(axis=(0, 2))
        if self.inputs[0].requires_grad:
            grad_x = _col2im(np.matmul(w2d.T, g), n, ci, h, w)
        return grad_x, grad_w, grad_b


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: int = 1) -> Tensor:
    """3x3 convolution (cross-correlation) with zero padding 1, spatial size preserved"""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    if weight.shape[2:] != (KERNEL, KERNEL):
        raise UnsupportedKernelError(f"conv2d supports 3x3 kernels only, got {weight.shape[2:]}")
    if padding != 1:
        raise ContractError(f"conv2d supports padding=1 only, got {padding}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weight expects {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {weight.shape[0]} output channels")
    if bias is None:
        return Conv2d.apply(x, weight)
    return Conv2d.apply(x, weight, bias)


# Elementwise activations

class Relu(Function):

    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):

    def forward(self, x):
        self.out = special.expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


class Tanh(Function):

    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1 - self.out * self.out),)


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the gradient at exactly 0 is 0"""
    return Relu.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


# Channel plumbing

class Concat(Function):

    def forward(self, *arrays, axis=1):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class SliceChannels(Function):

    def forward(self, x, start=0, stop=None):
        self.start, self.stop = start, stop
        return x[:, start:stop]

    def backward(self, grad):
        full = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        full[:, self.start:self.stop] = grad
        return (full,)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate tensors whose shapes agree everywhere except on axis"""
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    reference = tensors[0]
    for other in tensors[1:]:
        if other.ndim != reference.ndim or any(
                a != b for d, (a, b) in enumerate(zip(reference.shape, other.shape)) if d != axis):
            raise ShapeError(f"concat along axis {axis}: incompatible shapes {reference.shape} and {other.shape}")
    return Concat.apply(*tensors, axis=axis)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """(n, ca, h, w) + (n, cb, h, w) -> (n, ca+cb, h, w); a occupies the leading channels"""
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError(f"concat_channels expects 4-D tensors, got {a.shape} and {b.shape}")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"concat_channels: batch/spatial mismatch {a.shape} vs {b.shape}")
    return Concat.apply(a, b, axis=1)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Channels [start, stop) of a 4-D tensor"""
    if x.ndim != 4 or not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_channels [{start}, {stop}) out of range for shape {x.shape}")
    return SliceChannels.apply(x, start=start, stop=stop)


# Arithmetic

class Add(Function):

    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):

    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):

    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.inputs
        return grad * b.data, grad * a.data


class Div(Function):

    def forward(self, a, b):
        return a / b

    def backward(self, grad):
        a, b = self.inputs
        grad_a = grad / b.data
        return grad_a, -grad_a * a.data / b.data


class Scale(Function):

    def forward(self, x, factor=1.0):
        self.factor = factor
        return x * x.dtype.type(factor)

    def backward(self, grad):
        return (grad * grad.dtype.type(self.factor),)


class AddScalar(Function):

    def forward(self, x, value=0.0):
        return x + x.dtype.type(value)

    def backward(self, grad):
        return (grad,)


class Mean(Function):

    def forward(self, x):
        return np.asarray(x.mean(), dtype=x.dtype)

    def backward(self, grad):
        shape = self.inputs[0].shape
        count = max(int(np.prod(shape)), 1)
        return (np.full(shape, grad / count, dtype=grad.dtype),)


class Sum(Function):

    def forward(self, x):
        return np.asarray(x.sum(), dtype=x.dtype)

    def backward(self, grad):
        return (np.full(self.inputs[0].shape, grad, dtype=grad.dtype),)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    return Mul.apply(a, b)


def div(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "div")
    return Div.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


def add_scalar(x: Tensor, value: float) -> Tensor:
    return AddScalar.apply(x, value=float(value))


def square(x: Tensor) -> Tensor:
    return Mul.apply(x, x)


def mean(x: Tensor) -> Tensor:
    """Mean over every element; returns a rank-0 tensor"""
    return Mean.apply(x)


def total(x: Tensor) -> Tensor:
    """Sum over every element; returns a rank-0 tensor"""
    return Sum.apply(x)


# Fixed spatial filtering (SSIM statistics)

class NormalizedFilter(Function):
    """
    Separable same-size filtering with zero padding, divided by the in-bounds
    window mass so that constant inputs map to themselves at the borders.
    For a symmetric window the operator is self-adjoint up to the mass map.
    """

    def forward(self, x, window=None):
        self.window = window.astype(x.dtype)
        h, w = x.shape[-2:]
        self.mass = self._filter(np.ones((h, w), dtype=x.dtype))
        return self._filter(x) / self.mass

    def _filter(self, array):
        out = ndimage.correlate1d(array, self.window, axis=-2, mode='constant', cval=0.0)
        return ndimage.correlate1d(out, self.window, axis=-1, mode='constant', cval=0.0)

    def backward(self, grad):
        return (self._filter(grad / self.mass),)


def normalized_filter(x: Tensor, window: np.ndarray) -> Tensor:
    """Filter the last two axes of x with the symmetric 1-D window (odd length)"""
    window = np.asarray(window)
    if window.ndim != 1 or window.size % 2 != 1 or not np.allclose(window, window[::-1]):
        raise ContractError("normalized_filter needs a symmetric odd-length 1-D window")
    if x.ndim != 4:
        raise ShapeError(f"normalized_filter expects a 4-D tensor, got {x.shape}")
    return NormalizedFilter.apply(x, window=window)
