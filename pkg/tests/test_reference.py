import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picoconv.ir import Conv1d, NetworkConfig, ShapeError
from picoconv.reference import (
    ModelParams,
    batchnorm_forward,
    conv1d_forward,
    forward,
    gap_forward,
    group_bounds,
    linear_forward,
    relu,
)
from picoconv.synth import gen_params, gen_signal


def naive_conv(x, layer, w, bias):
    """Direct triple loop over output channel, time and tap."""
    cin, tin = x.shape
    xp = np.zeros((cin, tin + layer.pad_left + layer.pad_right))
    xp[:, layer.pad_left:layer.pad_left + tin] = x
    tout = (xp.shape[1] - layer.kernel_size) // layer.stride + 1
    out = np.zeros((layer.out_channels, tout))
    for c in range(layer.out_channels):
        lo, hi = group_bounds(c, layer.in_channels, layer.out_channels, layer.groups)
        for t in range(tout):
            acc = bias[c]
            for ci in range(lo, hi + 1):
                for j in range(layer.kernel_size):
                    acc += w[c, ci - lo, j] * xp[ci, t * layer.stride + j]
            out[c, t] = acc
    return out


@settings(max_examples=25, deadline=None)
@given(g=st.sampled_from([1, 2, 4]), k=st.integers(1, 6), stride=st.integers(1, 3),
       pl=st.integers(0, 4), pr=st.integers(0, 4), seed=st.integers(0, 2**31 - 1))
def test_conv_matches_naive_loop(g, k, stride, pl, pr, seed):
    rng = np.random.default_rng(seed)
    layer = Conv1d(4, 8, k, stride, pl, pr, g)
    x = rng.normal(size=(4, 12))
    w = rng.normal(size=(8, 4 // g, k))
    b = rng.normal(size=8)
    np.testing.assert_allclose(conv1d_forward(x, layer, w, b), naive_conv(x, layer, w, b), atol=1e-12)


def test_group_bounds():
    assert group_bounds(0, 64, 64, 8) == (0, 7)
    assert group_bounds(63, 64, 128, 16) == (28, 31)
    with pytest.raises(ValueError):
        group_bounds(64, 64, 64, 8)
    with pytest.raises(ValueError):
        group_bounds(0, 6, 8, 4)


def test_batchnorm_relu_gap_linear():
    x = np.array([[1.0, -1.0, 3.0]])
    out = batchnorm_forward(x, np.array([2.0]), np.array([0.5]), np.array([1.0]), np.array([4.0 - 1e-5]))
    np.testing.assert_allclose(out, [[0.5, -1.5, 2.5]])
    assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    np.testing.assert_allclose(gap_forward(np.array([[1.0, 2.0, 6.0]])), [[3.0]])
    np.testing.assert_allclose(linear_forward(np.array([[1.0], [2.0]]), np.eye(2), np.array([1.0, 0.0])),
                               [[2.0], [2.0]])


def test_forward_shapes_and_determinism(tiny):
    params = gen_params(3, tiny)
    x = gen_signal(4, 5, tiny.input_length)
    logits, acts = forward(tiny, params, x)
    assert logits.shape == (2,)
    assert [a.shape for a in acts] == list(tiny.shapes[1:])
    again, _ = forward(tiny, params, x)
    assert np.array_equal(logits, again)


def test_forward_rejects_bad_signal(tiny):
    params = gen_params(0, tiny)
    with pytest.raises(ShapeError):
        forward(tiny, params, np.zeros((4, tiny.input_length)))
    bad = np.zeros((5, tiny.input_length))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        forward(tiny, params, bad)


def test_params_validation(tiny):
    params = gen_params(0, tiny)
    with pytest.raises(ShapeError):
        params.replace({"0.weight": np.zeros((8, 5, 15))})
    with pytest.raises(ValueError):
        params.replace({"1.var": -np.ones(8)})
    with pytest.raises(ValueError):
        params.replace({"0.bias": np.full(8, np.inf)})
    with pytest.raises(KeyError):
        ModelParams(tiny, {k: v for k, v in params.tensors.items() if k != "7.bias"})
    # masked-out weights must be zero
    mask = np.ones((8, 5, 16), bool)
    mask[0, 0, 0] = False
    with pytest.raises(ValueError):
        params.replace(masks={0: mask})
    with pytest.raises(ValueError):
        params["0.weight"][0, 0, 0] = 1.0  # read-only


def test_single_conv_network():
    net = NetworkConfig((Conv1d(1, 1, 1),), 1, 3)
    params = ModelParams(net, {"0.weight": [[[2.0]]], "0.bias": [1.0]})
    logits, _ = forward(net, params, np.array([[1.0, 2.0, 3.0]]))
    assert np.array_equal(logits, [3.0, 5.0, 7.0])
