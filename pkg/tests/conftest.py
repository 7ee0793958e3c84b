"""
Pytest configuration and shared fixtures for the prenetctl test suite
"""

import json
import os
import shutil
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from prenetctl.core.datapipe import RainParams, write_synthetic_dataset
from prenetctl.core.network import NetworkConfig, build
from prenetctl.core.tensor import Tensor, backward, no_grad, precision

PRENET_ENV_VARS = ('PRENET_LOG_LEVEL', 'PRENET_LOG_DIR', 'PRENET_NUM_WORKERS',
                   'PRENET_PREFETCH', 'PRENET_DEFAULT_SEED')


@pytest.fixture
def temp_dir():
    """Create a temporary directory for individual tests"""
    temp_dir = Path(tempfile.mkdtemp(prefix="prenet_test_"))
    yield temp_dir
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def clean_env():
    """Run with every PRENET_* variable unset"""
    environ = {k: v for k, v in os.environ.items() if k not in PRENET_ENV_VARS}
    with patch.dict(os.environ, environ, clear=True):
        yield


@pytest.fixture
def config_file(temp_dir):
    """Create a temporary config file"""
    path = temp_dir / "prenet_config.json"
    with open(path, 'w') as f:
        json.dump({"log_level": "warning", "num_workers": 3, "custom_setting": "test_value"}, f)
    return path


@pytest.fixture
def float64():
    """Run the test body with 64-bit tensors by default"""
    with precision(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(20180801)


@pytest.fixture
def tiny_config():
    """Small PReNet: 4 channels, 2 ResBlocks, 3 stages"""
    return NetworkConfig(channels=4, resblock_count=2, stages=3)


@pytest.fixture
def tiny_params(tiny_config):
    return build(tiny_config, seed=3)


@pytest.fixture
def rain_params():
    return RainParams(streak_count=10, length_range=(4.0, 10.0), seed=11)


@pytest.fixture
def synthetic_dataset(temp_dir, rain_params):
    """Three 24x24 synthetic pairs on disk"""
    return write_synthetic_dataset(temp_dir / "data", count=3, height=24, width=24, params=rain_params)


def zero_residual_params(config, seed=0):
    """Parameters whose f_out is all zeros, so residual models output y exactly"""
    params = build(config, seed=seed, requires_grad=False)
    values = {name: t.data.copy() for name, t in params.items()}
    values['f_out.w'][...] = 0.0
    values['f_out.b'][...] = 0.0
    return params.replace_values(values, requires_grad=False)


# Central-difference step for every gradient check
FD_STEP = 1e-5


def numerical_gradient(loss_fn, arrays, index, eps=FD_STEP):
    """Central differences of loss_fn(*tensors) with respect to arrays[index]"""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    for idx in np.ndindex(target.shape):
        original = target[idx]
        values = []
        for delta in (eps, -eps):
            target[idx] = original + delta
            with no_grad():
                values.append(loss_fn(*[Tensor(a, dtype=np.float64) for a in base]).item())
        target[idx] = original
        grad[idx] = (values[0] - values[1]) / (2 * eps)
    return grad


def assert_gradients_match(loss_fn, arrays, rtol=1e-4, atol=1e-7, eps=FD_STEP):
    """Compare backward() against central differences for every input"""
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    loss = loss_fn(*tensors)
    assert backward(loss)
    for i, tensor in enumerate(tensors):
        expected = numerical_gradient(loss_fn, arrays, i, eps=eps)
        np.testing.assert_allclose(tensor.grad, expected, rtol=rtol, atol=atol,
                                   err_msg=f"gradient mismatch for input {i}")


@pytest.fixture
def gradcheck():
    return assert_gradients_match


@pytest.fixture
def zero_residual():
    return zero_residual_params
