#!/usr/bin/env python3
"""
Test suite for the tensor core: convolution, activations, channel plumbing,
reductions and reverse-mode differentiation
"""

import numpy as np
import pytest

from prenetctl.core import functional as F
from prenetctl.core.objectives import mse_loss, neg_ssim_loss, ssim
from prenetctl.core.tensor import (ComputationTape, Tensor, backward, check_finite, get_default_dtype,
                                   is_grad_enabled, no_grad, precision, set_default_dtype)
from prenetctl.errors import ContractError, NumericalError, ShapeError, UnsupportedKernelError
from tests.conftest import FD_STEP, numerical_gradient


def _conv(x, w, b=None):
    return F.conv2d(Tensor(x), Tensor(w), Tensor(b) if b is not None else None).data


@pytest.mark.unit
class TestConv2d:
    """conv2d forward semantics and shape contracts"""

    def test_all_ones_kernel_counts_padded_window(self):
        out = _conv(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
        np.testing.assert_array_equal(out[0, 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])

    def test_delta_kernel_is_identity(self, rng):
        x = rng.uniform(size=(2, 1, 5, 4))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        np.testing.assert_array_equal(_conv(x, w, np.zeros(1)), x.astype(np.float32))

    def test_zero_kernel_yields_bias(self, rng):
        out = _conv(rng.uniform(size=(1, 2, 4, 4)), np.zeros((3, 2, 3, 3)), np.array([0.5, -1.0, 2.0]))
        for o, b in enumerate([0.5, -1.0, 2.0]):
            assert np.all(out[0, o] == np.float32(b))

    def test_matches_direct_summation(self, rng, float64):
        x = rng.standard_normal((1, 2, 4, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros((1, 3, 4, 5))
        for o in range(3):
            for y in range(4):
                for xx in range(5):
                    expected[0, o, y, xx] = b[o] + np.sum(w[o] * padded[0, :, y:y + 3, xx:xx + 3])
        np.testing.assert_allclose(_conv(x, w, b), expected, rtol=1e-12, atol=1e-12)

    def test_linear_in_input(self, rng, float64):
        x = rng.standard_normal((1, 2, 5, 4))
        z = rng.standard_normal((1, 2, 5, 4))
        w = rng.standard_normal((3, 2, 3, 3))
        a, b = 1.7, -0.4
        np.testing.assert_allclose(_conv(a * x + b * z, w), a * _conv(x, w) + b * _conv(z, w),
                                   rtol=1e-12, atol=1e-12)

    def test_spatial_size_preserved(self):
        out = _conv(np.zeros((2, 3, 7, 9)), np.zeros((5, 3, 3, 3)))
        assert out.shape == (2, 5, 7, 9)

    def test_channel_mismatch_is_shape_error(self):
        with pytest.raises(ShapeError):
            _conv(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))

    def test_non_3x3_kernel_rejected(self):
        with pytest.raises(UnsupportedKernelError):
            _conv(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 5, 5)))

    def test_bias_length_checked(self):
        with pytest.raises(ShapeError):
            _conv(np.zeros((1, 1, 4, 4)), np.zeros((2, 1, 3, 3)), np.zeros(3))

    def test_only_padding_one_supported(self):
        with pytest.raises(ContractError):
            F.conv2d(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 3, 3))), padding=0)


@pytest.mark.unit
class TestElementwise:

    def test_relu(self):
        np.testing.assert_array_equal(F.relu(Tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])

    def test_relu_gradient_zero_at_zero(self):
        x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
        backward(F.total(F.relu(x)))
        np.testing.assert_array_equal(x.grad, [0, 0, 1])

    def test_sigmoid_and_tanh_at_zero(self):
        assert F.sigmoid(Tensor([0.0])).item() == 0.5
        assert F.tanh(Tensor([0.0])).item() == 0.0

    def test_binary_ops_require_equal_shapes(self):
        with pytest.raises(ShapeError):
            F.add(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 3))))

    def test_operator_overloads(self):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
        np.testing.assert_array_equal((a + b).data, [4, 7])
        np.testing.assert_array_equal((b - a).data, [2, 3])
        np.testing.assert_array_equal((a * 2).data, [2, 4])
        np.testing.assert_array_equal((1 - a).data, [0, -1])
        np.testing.assert_array_equal((-a).data, [-1, -2])

    def test_mean_is_rank_zero(self):
        out = F.mean(Tensor(np.arange(6.0).reshape(1, 1, 2, 3)))
        assert out.shape == ()
        assert out.item() == pytest.approx(2.5)

    def test_mean_gradient_is_one_over_n(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 3, 4)), requires_grad=True)
        backward(F.mean(x))
        np.testing.assert_allclose(x.grad, np.full((1, 2, 3, 4), 1.0 / 24), rtol=1e-6)


@pytest.mark.unit
class TestConcat:

    def test_channels_stack_in_order(self, rng):
        a = Tensor(rng.uniform(size=(1, 3, 4, 4)))
        b = Tensor(rng.uniform(size=(1, 3, 4, 4)))
        out = F.concat_channels(a, b)
        assert out.shape == (1, 6, 4, 4)
        np.testing.assert_array_equal(out.data[:, 0], a.data[:, 0])
        np.testing.assert_array_equal(out.data[:, 3:], b.data)

    def test_concat_then_slice_round_trip(self, rng):
        a = Tensor(rng.uniform(size=(2, 2, 3, 3)))
        b = Tensor(rng.uniform(size=(2, 5, 3, 3)))
        out = F.concat_channels(a, b)
        np.testing.assert_array_equal(F.slice_channels(out, 0, 2).data, a.data)
        np.testing.assert_array_equal(F.slice_channels(out, 2, 7).data, b.data)

    def test_gradient_of_sum_routes_ones(self):
        a = Tensor(np.zeros((1, 1, 2, 2)), requires_grad=True)
        b = Tensor(np.zeros((1, 2, 2, 2)), requires_grad=True)
        backward(F.total(F.concat_channels(a, b)))
        np.testing.assert_array_equal(a.grad, np.ones(a.shape))
        np.testing.assert_array_equal(b.grad, np.ones(b.shape))

    def test_spatial_mismatch_is_shape_error(self):
        with pytest.raises(ShapeError):
            F.concat_channels(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 2))))


@pytest.mark.gradcheck
class TestGradients:
    """Central finite differences at rtol 1e-4 in 64-bit mode"""

    def test_conv2d(self, rng, gradcheck, float64):
        arrays = [rng.standard_normal((1, 2, 5, 6)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)]
        gradcheck(lambda x, w, b: F.total(F.square(F.conv2d(x, w, b))), arrays)

    def test_activations(self, rng, gradcheck, float64):
        x = rng.standard_normal((1, 4, 6, 6))
        gradcheck(lambda t: F.total(F.mul(F.relu(t), F.sigmoid(t))), [x])
        gradcheck(lambda t: F.total(F.square(F.tanh(t))), [x])

    def test_arithmetic(self, rng, gradcheck, float64):
        a = rng.standard_normal((1, 2, 3, 3))
        b = rng.uniform(0.5, 1.5, size=(1, 2, 3, 3))
        gradcheck(lambda p, q: F.mean(F.div(F.add(F.mul(p, q), F.scale(p, 3.0)), F.add_scalar(q, 0.25))), [a, b])
        gradcheck(lambda p, q: F.total(F.square(F.sub(p, q))), [a, b])

    def test_concat_and_slice(self, rng, gradcheck, float64):
        a, b = rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 3, 3, 3))
        weights = rng.standard_normal((1, 5, 3, 3))

        def loss(p, q):
            joined = F.concat_channels(p, q)
            return F.total(F.mul(F.concat_channels(F.slice_channels(joined, 3, 5), F.slice_channels(joined, 0, 3)),
                                 Tensor(weights)))

        gradcheck(loss, [a, b])

    def test_normalized_filter(self, rng, gradcheck, float64):
        window = np.array([0.25, 0.5, 0.25])
        x = rng.standard_normal((1, 2, 5, 6))
        gradcheck(lambda t: F.total(F.square(F.normalized_filter(t, window))), [x])

    def test_losses(self, rng, gradcheck, float64):
        x = rng.uniform(0.1, 0.9, size=(1, 3, 6, 6))
        gt = rng.uniform(0.1, 0.9, size=(1, 3, 6, 6))
        gradcheck(lambda a, b: mse_loss(a, b), [x, gt])
        gradcheck(lambda a, b: neg_ssim_loss(a, b), [x, gt])
        gradcheck(lambda a, b: ssim(a, b), [x, gt])

    def test_central_difference_step(self, float64):
        # At x=0 the derivative of sum(x**3) is 0; central differences give eps**2
        grad = numerical_gradient(lambda t: F.total(F.mul(F.mul(t, t), t)), [np.zeros((1, 1, 1, 2))], 0)
        assert FD_STEP == 1e-5
        np.testing.assert_allclose(grad, 1e-10, rtol=1e-9)


@pytest.mark.unit
class TestBackward:

    def test_shared_tensor_accumulates(self, float64):
        x = Tensor([3.0], requires_grad=True)
        backward(F.total(F.mul(x, x)))
        assert x.grad[0] == pytest.approx(6.0)

    def test_non_scalar_output_rejected(self):
        with pytest.raises(ContractError):
            backward(Tensor(np.zeros(3), requires_grad=True))

    def test_detached_output_returns_false(self):
        assert backward(Tensor([1.0])) is False

    def test_leaf_with_grad_gets_seed(self):
        x = Tensor(2.0, requires_grad=True)
        assert backward(x) is True
        assert x.grad == 1.0

    def test_no_grad_builds_no_tape(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with no_grad():
            assert not is_grad_enabled()
            y = F.total(F.mul(x, x))
        assert is_grad_enabled()
        assert y.creator is None and not y.requires_grad

    def test_tape_is_topological(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        h = F.relu(x)
        out = F.total(F.add(h, F.scale(h, 2.0)))
        tape = ComputationTape(out)
        positions = {id(node): i for i, node in enumerate(tape.nodes)}
        for node in tape.nodes:
            for parent in node.creator.inputs:
                if parent.creator is not None:
                    assert positions[id(parent)] < positions[id(node)]
        assert len(tape) == 4
        assert tape.operations()[-1] == 'Sum'

    def test_data_is_read_only(self):
        t = Tensor([1.0])
        with pytest.raises(ValueError):
            t.data[0] = 2.0

    def test_repeated_pass_is_bitwise_identical(self, rng):
        x = rng.uniform(size=(2, 2, 6, 6))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        target = rng.uniform(size=(2, 3, 6, 6))

        def run():
            leaves = [Tensor(a, requires_grad=True) for a in (x, w, b)]
            out = F.sigmoid(F.relu(F.conv2d(*leaves)))
            loss = neg_ssim_loss(out, Tensor(target))
            backward(loss)
            return [out.data, loss.data] + [leaf.grad for leaf in leaves]

        for first, second in zip(run(), run()):
            np.testing.assert_array_equal(first, second)


@pytest.mark.unit
class TestPrecisionAndFiniteness:

    def test_default_is_float32(self):
        assert get_default_dtype() == np.float32
        assert Tensor([1.0]).dtype == np.float32

    def test_precision_context(self):
        with precision(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert get_default_dtype() == np.float32

    def test_unsupported_dtype(self):
        with pytest.raises(ContractError):
            set_default_dtype(np.int32)

    def test_check_finite(self):
        assert check_finite(Tensor([1.0, 2.0])).is_finite()
        with pytest.raises(NumericalError):
            check_finite(Tensor([1.0, np.nan]), "loss")
