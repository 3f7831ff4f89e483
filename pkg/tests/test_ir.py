import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picoconv.io import format_config, parse_config
from picoconv.ir import (
    GAP,
    BatchNorm1d,
    Conv1d,
    Linear,
    NetworkConfig,
    ReLU,
    ShapeError,
    blocks,
    conv_param_fraction,
    count_ops,
    count_params,
    dense_baseline,
    output_shape,
    param_shapes,
    preset,
)


def test_salenet_lengths(salenet):
    lengths = [s[1] for s in salenet.shapes]
    # outputs of conv 1..4, GAP and the linear head
    assert [lengths[i] for i in (1, 4, 7, 10, 13, 14)] == [1254, 1254, 1254, 628, 1, 1]
    assert salenet.shapes[-1] == (2, 1)


def test_preset_param_counts():
    expected = {"baseline": 428_994, "baseline_gap": 268_482, "baseline_group": 191_426, "salenet": 30_914}
    for name, n in expected.items():
        assert count_params(preset(name)).total == n


def test_count_params_matches_tensor_enumeration():
    for name in ("salenet", "baseline_gap"):
        net = preset(name)
        brute = sum(int(np.prod(d)) for _, n, d in param_shapes(net) if n not in ("mean", "var"))
        assert count_params(net).total == brute


def test_single_conv_counts_two():
    net = NetworkConfig((Conv1d(1, 1, 1),), 1, 4)
    assert count_params(net).total == 2


def test_relu_ops():
    net = NetworkConfig((Conv1d(64, 64, 1), ReLU(64)), 64, 1254)
    assert count_ops(net).per_layer[1] == 80_256


@given(g=st.sampled_from([1, 2, 4, 8, 16]), k=st.integers(1, 9))
def test_group_divides_weight_term(g, k):
    dense = Conv1d(16, 32, k)
    grouped = Conv1d(16, 32, k, groups=g)
    net_d = NetworkConfig((dense,), 16, 20)
    net_g = NetworkConfig((grouped,), 16, 20)
    wd = count_params(net_d).total - 32
    wg = count_params(net_g).total - 32
    assert wd == wg * g


def test_conv_fraction_edges(salenet):
    assert conv_param_fraction(NetworkConfig((Conv1d(2, 2, 3),), 2, 10)) == (1.0, 1.0)
    assert conv_param_fraction(NetworkConfig((Linear(10, 2),), 10, 1)) == (0.0, 0.0)
    p, o = conv_param_fraction(salenet)
    assert abs(p - 0.9711) <= 0.02 and abs(o - 0.9782) <= 0.02


def test_dense_baseline_is_baseline_preset(salenet):
    assert dense_baseline(salenet).layers == preset("baseline").layers


def test_shape_errors():
    with pytest.raises(ShapeError):
        NetworkConfig((Conv1d(3, 4, 3),), 5, 10)
    with pytest.raises(ShapeError):
        NetworkConfig((Conv1d(5, 4, 16),), 5, 8)
    with pytest.raises(ShapeError):
        NetworkConfig((GAP(4), Linear(5, 2)), 4, 10)
    with pytest.raises(ValueError):
        Conv1d(6, 4, 3, groups=4)
    with pytest.raises(ValueError):
        Conv1d(4, 4, 0)


def test_output_shape_formula():
    layer = Conv1d(4, 8, 5, stride=2, pad_left=1, pad_right=2)
    assert output_shape(layer, (4, 20)) == (8, (20 + 3 - 5) // 2 + 1)


def test_blocks_fuse(salenet):
    bl = blocks(salenet)
    assert [(b.main, b.bn, b.relu) for b in bl[:4]] == [(0, 1, 2), (3, 4, 5), (6, 7, 8), (9, 10, 11)]
    assert bl[4].main == 12 and bl[5].main == 13 and bl[5].bn is None
    with pytest.raises(ShapeError):
        blocks(NetworkConfig((ReLU(5),), 5, 10))


def test_ir_is_immutable(salenet):
    with pytest.raises(Exception):
        salenet.layers[0].groups = 2
    with pytest.raises(Exception):
        salenet.name = "x"


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(["salenet", "baseline", "baseline_gap", "baseline_group"]))
def test_config_round_trip(name):
    net = preset(name)
    again = parse_config(format_config(net))
    assert again == net and again.shapes == net.shapes
