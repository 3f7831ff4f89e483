import numpy as np
import pytest

from picoconv.compress import (
    DEFAULT_BDP_THRESHOLDS,
    DEFAULT_NZP_THRESHOLDS,
    QuantSpec,
    bias_driven_prune,
    cluster_weights,
    near_zero_prune,
    quantize,
)
from picoconv.fxp import calibrate_formats
from picoconv.ir import BatchNorm1d, Conv1d, GAP, Linear, NetworkConfig, ReLU, preset
from picoconv.synth import gen_params, gen_signal

MODEL_SEED = 0x5A1E
CALIBRATION_SEEDS = range(10_000, 10_004)


@pytest.fixture(scope="session")
def salenet():
    return preset("salenet")


@pytest.fixture(scope="session")
def salenet_params(salenet):
    return gen_params(MODEL_SEED, salenet)


@pytest.fixture(scope="session")
def pruned(salenet_params):
    p, _ = near_zero_prune(salenet_params, DEFAULT_NZP_THRESHOLDS)
    p, _ = bias_driven_prune(p, DEFAULT_BDP_THRESHOLDS)
    return p


@pytest.fixture(scope="session")
def qmodel(pruned):
    """Clustered, quantized and calibrated salenet model."""
    q = quantize(pruned, cluster_weights(pruned, 7, seed=0), QuantSpec())
    signals = [gen_signal(s) for s in CALIBRATION_SEEDS]
    return q.with_activation_formats(calibrate_formats(q, signals))


def tiny_net(length: int = 40) -> NetworkConfig:
    """Two grouped conv blocks + GAP + linear, small enough for exhaustive checks."""
    return NetworkConfig((
        Conv1d(5, 8, 16, pad_left=8, pad_right=7), BatchNorm1d(8), ReLU(8),
        Conv1d(8, 16, 16, stride=2, pad_left=8, pad_right=8, groups=2), BatchNorm1d(16), ReLU(16),
        GAP(16), Linear(16, 2),
    ), 5, length, name="tiny")


@pytest.fixture
def tiny():
    return tiny_net()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.format_line(n, *mod.RESULTS[n]))
