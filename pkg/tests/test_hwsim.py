import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picoconv import hwsim
from picoconv.ir import Conv1d, Linear, NetworkConfig, count_ops
from picoconv.reference import conv1d_forward


def test_salenet_cycles(salenet):
    entries = hwsim.schedule(salenet)
    assert [e.cycles for e in entries] == [5016, 5016, 5016, 5024, 1]
    rows = hwsim.cycle_report(salenet, entries)["layers"]
    assert rows[1]["reference_cycles"] == 5076 and rows[1]["delta"] == 60 and "note" in rows[1]
    assert all("note" not in r for k, r in enumerate(rows) if k != 1)


@given(c=st.integers(1, 64), t=st.integers(1, 300))
def test_cycles_formula(c, t):
    net = NetworkConfig((Conv1d(c, c, 1),), c, t)
    (entry,) = hwsim.schedule(net)
    assert entry.cycles == -(-c * t // 16)
    cyc = entry.cycle_of()
    assert cyc.shape == (c, t) and cyc.max() == entry.cycles - 1
    assert np.all(np.bincount(cyc.ravel()) <= 16)


def test_fan_in_over_lanes_is_unschedulable():
    with pytest.raises(hwsim.UnschedulableError):
        hwsim.schedule(NetworkConfig((Conv1d(16, 8, 9),), 16, 20))
    with pytest.raises(hwsim.UnschedulableError):
        hwsim.schedule(NetworkConfig((Linear(200, 2),), 200, 1))


def test_memory_plan_and_check(salenet):
    entries = hwsim.schedule(salenet)
    plan = hwsim.default_plan(salenet)
    assert plan.regions["fmap"] == 1_284_096 > 2**20
    assert plan.used_bits <= plan.budget_bits
    safe = hwsim.memory_check(salenet, plan, entries, slack=16)
    assert safe.safe and not safe.hazards and safe.shared_region_bits == 1_284_096
    assert safe.min_slack == {3: 8, 6: 8}
    bad = hwsim.memory_check(salenet, plan, entries, slack=0)
    assert not bad.safe
    assert {h["layer"] for h in bad.hazards} == {3, 6}
    assert all(h["extra_slack_needed"] == 8 for h in bad.hazards)


def test_causal_padding_needs_more_slack():
    layer = Conv1d(16, 16, 16, pad_left=15, pad_right=0, groups=2)
    net = NetworkConfig((layer,), 16, 64)
    (entry,) = hwsim.schedule(net)
    assert hwsim.min_safe_slack(layer, net.in_shape(0), entry) == 15


def test_memory_check_missing_binding(salenet):
    entries = hwsim.schedule(salenet)
    plan = hwsim.default_plan(salenet)
    broken = hwsim.MemoryPlan(plan.regions, {k: v for k, v in plan.bindings.items() if k != 3})
    with pytest.raises(ValueError):
        hwsim.memory_check(salenet, broken, entries)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), g=st.sampled_from([1, 2, 4]), pl=st.integers(0, 7),
       t=st.integers(17, 40))
def test_replay_agrees_with_hazard_verdict(seed, g, pl, t):
    """In-place replay reproduces the out-of-place conv exactly whenever the
    checker reports no hazard, and corrupts it when a hazard is reported."""
    rng = np.random.default_rng(seed)
    layer = Conv1d(8, 8, 8, pad_left=pl, pad_right=7 - pl, groups=g)
    net = NetworkConfig((layer,), 8, t)
    (entry,) = hwsim.schedule(net)
    x = rng.normal(size=(8, t))
    w = rng.normal(size=(8, 8 // g, 8))
    b = rng.normal(size=8)
    want = conv1d_forward(x, layer, w, b)
    need = hwsim.min_safe_slack(layer, net.in_shape(0), entry)
    for slack in sorted({0, max(need - 1, 0), need, need + 3}):
        hazard = hwsim.layer_hazards(layer, net.in_shape(0), entry, slack).any()
        got = hwsim.replay_inplace(layer, x, w, b, entry, slack)
        if hazard:
            assert not np.allclose(got, want)
        else:
            np.testing.assert_allclose(got, want, atol=1e-12)


def test_performance_arithmetic(salenet):
    entries = hwsim.schedule(salenet)
    ops = count_ops(salenet).total
    perf = hwsim.performance_model(entries, ops, 0.11)
    assert abs(perf.throughput_gops - 0.90) <= 0.045
    assert perf.latency_seconds == pytest.approx(perf.pe_seconds + perf.load_seconds)
    assert perf.pe_seconds == pytest.approx(20073 / 10e6)
    assert hwsim.efficiency(0.90, 0.11) == pytest.approx(8.18, abs=0.02)
    wpt = hwsim.calibrate_loader(entries, ops, 0.90)
    assert abs(wpt - hwsim.DEFAULT_LOAD_WORDS_PER_TICK) < 0.01
    over = hwsim.performance_model(entries, ops, 0.11, overlap=True)
    assert over.latency_seconds == pytest.approx(max(over.pe_seconds, over.load_seconds))


def test_performance_errors(salenet):
    entries = hwsim.schedule(salenet)
    with pytest.raises(ValueError):
        hwsim.efficiency(0.9, 0.0)
    with pytest.raises(ValueError):
        hwsim.performance_model(entries, 1000, 0.11, words_per_tick=0)
    with pytest.raises(ValueError):
        hwsim.calibrate_loader(entries, 1000, target_gops=1000.0)


def test_simulate_report(salenet):
    rep = hwsim.simulate(salenet)
    assert set(rep) == {"cycles", "memory", "performance"}
    assert rep["memory"]["safe"] and rep["cycles"]["total_cycles"] == 20073
