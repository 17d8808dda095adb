import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gasket_sandpile import engine
from gasket_sandpile.constructions import assemble_identity
from gasket_sandpile.engine import (
    SandpileConfig,
    SandpileError,
    group_add,
    group_order,
    identity,
    is_recurrent,
    max_config,
    random_recurrent,
    stabilize,
    topple,
    zero_config,
)
from gasket_sandpile.gasket import GasketGraph, SinkSpec, build_gasket


def config(level, heights, sink="normal"):
    return SandpileConfig(build_gasket(level, sink), np.asarray(heights))


def laplacian_holds(before, after, odo):
    lap = engine.laplacian(before.graph)
    return np.array_equal(before.heights - lap @ odo, after.heights)


def test_max_config_heights():
    assert max_config(build_gasket(1)).heights.tolist() == [3] * 6
    assert set(max_config(build_gasket(2)).heights.tolist()) == {3}
    g = build_gasket(1, "top")
    h = max_config(g).heights
    assert h[g.index[(0, 0)]] == 1 and h[g.index[(2, 0)]] == 1
    assert h[g.index[(1, 0)]] == 3 and h[g.index[(0, 1)]] == 3 and h[g.index[(1, 1)]] == 3


def test_topple_corner_sends_two_to_sink():
    g = build_gasket(1)
    u1 = g.index[(0, 0)]
    h = np.zeros(6, dtype=np.int64)
    h[u1] = 4
    out = topple(SandpileConfig(g, h), u1)
    assert out.heights[u1] == 0
    assert out.heights[g.index[(1, 0)]] == 1 and out.heights[g.index[(0, 1)]] == 1
    assert out.total == 2


def test_topple_inner_vertex():
    g = build_gasket(1)
    v = g.index[(1, 1)]
    h = np.zeros(6, dtype=np.int64)
    h[v] = 5
    out = topple(SandpileConfig(g, h), v)
    assert out.heights[v] == 1
    assert sorted(out.heights.tolist()) == [0, 1, 1, 1, 1, 1]


def test_illegal_topple():
    with pytest.raises(SandpileError):
        topple(max_config(build_gasket(1)), 0)


def test_rejects_negative_and_misshaped_heights():
    with pytest.raises(SandpileError):
        config(1, [0, 0, -1, 0, 0, 0])
    with pytest.raises(SandpileError):
        config(1, [0, 0, 0])


def test_stable_input_unchanged():
    c = max_config(build_gasket(3))
    out, odo = stabilize(c)
    assert out == c
    assert not odo.any()


def test_all_fours_on_level_one():
    c = config(1, [4] * 6)
    out, odo = stabilize(c, check=True)
    assert out.is_stable()
    assert (odo >= 1).all()
    assert laplacian_holds(c, out, odo)


@pytest.mark.parametrize("order", ["fifo", "lifo", "random", "parallel"])
def test_two_max_on_level_three_is_order_independent(order):
    g = build_gasket(3)
    c = SandpileConfig(g, 2 * (g.degree - 1))
    fast, odo_fast = stabilize(c)
    ref, odo_ref = stabilize(c, order=order, seed=7)
    assert ref == fast
    assert np.array_equal(odo_ref, odo_fast)


def test_unknown_order():
    with pytest.raises(SandpileError):
        stabilize(max_config(build_gasket(1)), order="dfs")


@settings(max_examples=30, deadline=None)
@given(
    level=st.integers(0, 3),
    sink=st.sampled_from(["normal", "top", "top_right"]),
    seed=st.integers(0, 2**32 - 1),
    scale=st.integers(1, 40),
)
def test_fast_matches_reference_and_laplacian(level, sink, seed, scale):
    if sink == "top_right" and level == 0:
        return
    g = build_gasket(level, sink)
    h = np.random.default_rng(seed).integers(0, scale, size=g.n_vertices)
    c = SandpileConfig(g, h)
    fast, odo = stabilize(c)
    ref, odo_ref = stabilize(c, order="fifo")
    assert fast == ref and np.array_equal(odo, odo_ref)
    assert laplacian_holds(c, fast, odo)


@settings(max_examples=40, deadline=None)
@given(
    level=st.integers(1, 6),
    sink=st.sampled_from(["normal", "top", "top_right"]),
    seed=st.integers(0, 2**32 - 1),
    excess=st.sampled_from([1, 3, 10, 200]),
)
def test_recurrent_shortcut_matches_exact_path(level, sink, seed, excess):
    g = build_gasket(level, sink)
    h = g.degree - 1 + np.random.default_rng(seed).integers(0, excess, size=g.n_vertices)
    c = SandpileConfig(g, h)
    short, odo = stabilize(c, recurrent=True)
    exact, odo_exact = stabilize(c, recurrent=False)
    assert short == exact and np.array_equal(odo, odo_exact)


def test_recurrent_shortcut_uses_hint():
    g = build_gasket(5)
    ident, r = identity(g), random_recurrent(g, 4)
    h = (ident + r).heights.copy()
    odo = engine._relax_recurrent(g, h, hints=[r.heights])
    assert odo is not None and np.array_equal(h, r.heights)
    assert laplacian_holds(ident + r, r, odo)


def test_recurrent_shortcut_falls_back_when_every_guess_fails(monkeypatch):
    g = build_gasket(3)
    c = max_config(g) + max_config(g)
    expected = stabilize(c, order="fifo")
    monkeypatch.setattr(engine, "_certified_attempt", lambda *args: ("low", None))
    h = c.heights.copy()
    assert engine._relax_recurrent(g, h) is None
    assert np.array_equal(h, c.heights)
    result, odo = stabilize(c)
    assert result == expected[0] and np.array_equal(odo, expected[1])


def test_add_zero_is_identity_map():
    g = build_gasket(3)
    a = random_recurrent(g, 1)
    assert group_add(a, zero_config(g)) == a


def _stable_random(g, rng):
    return SandpileConfig(g, rng.integers(0, g.degree))


def test_commutative_on_level_three():
    g = build_gasket(3)
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b = _stable_random(g, rng), _stable_random(g, rng)
        assert group_add(a, b) == group_add(b, a)


def test_associative_on_level_three():
    g = build_gasket(3)
    rng = np.random.default_rng(12)
    for _ in range(20):
        a, b, c = (_stable_random(g, rng) for _ in range(3))
        assert group_add(group_add(a, b), c) == group_add(a, group_add(b, c))


def test_graph_mismatch():
    with pytest.raises(SandpileError):
        group_add(max_config(build_gasket(2)), max_config(build_gasket(3)))
    with pytest.raises(SandpileError):
        group_add(max_config(build_gasket(2)), max_config(build_gasket(2, "top")))


@pytest.mark.parametrize("n", range(0, 5))
def test_max_config_is_recurrent(n):
    assert is_recurrent(max_config(build_gasket(n))).recurrent


def test_zero_config_is_not_recurrent():
    report = is_recurrent(zero_config(build_gasket(1)))
    assert not report.recurrent


def test_burn_needs_stable_input():
    with pytest.raises(SandpileError):
        is_recurrent(config(1, [4] * 6))


def test_identity_level_two_is_recurrent_and_matches_assembly():
    ident = identity(build_gasket(2))
    assert is_recurrent(ident).recurrent
    assert np.array_equal(ident.heights, assemble_identity(2).values)


def test_identity_is_idempotent():
    ident = identity(build_gasket(3))
    assert group_add(ident, ident) == ident


def _stable_configs_level_one():
    g = build_gasket(1)
    for h in itertools.product(range(4), repeat=6):
        yield SandpileConfig(g, np.array(h))


def test_level_one_identity_is_unique_neutral_recurrent():
    g = build_gasket(1)
    ident = identity(g)
    eta = max_config(g)
    assert group_add(ident, eta) == eta
    neutral = [c for c in _stable_configs_level_one() if is_recurrent(c).recurrent and group_add(c, eta) == eta]
    assert neutral == [ident]


def test_random_recurrent_zero_noise_is_max():
    g = build_gasket(2)
    assert stabilize(max_config(g))[0] == max_config(g)


@pytest.mark.parametrize("seed", range(10))
def test_random_recurrent_passes_burning(seed):
    assert is_recurrent(random_recurrent(build_gasket(2), seed)).recurrent


def test_random_recurrent_deterministic():
    g = build_gasket(2)
    assert random_recurrent(g, 42) == random_recurrent(g, 42)


def test_group_order_level_zero():
    # triangle with two sink edges per corner: L = [[4,-1,-1],[-1,4,-1],[-1,-1,4]]
    assert group_order(build_gasket(0)) == 50
    assert round(np.linalg.det(engine.laplacian(build_gasket(0)).toarray())) == 50


@pytest.mark.parametrize("k", [1, 2, 5])
def test_group_order_single_vertex(k):
    g = GasketGraph(
        0,
        SinkSpec.NORMAL,
        np.array([[0, 0]]),
        np.zeros((0, 3), dtype=np.int64),
        np.array([[0, k]]),
        (),
    )
    assert group_order(g) == k


def test_group_order_counts_recurrent_on_level_one():
    count = sum(is_recurrent(c).recurrent for c in _stable_configs_level_one())
    assert group_order(build_gasket(1)) == count


@pytest.mark.parametrize("sink", ["top", "top_right"])
def test_alternate_sink_identities_are_neutral(sink):
    g = build_gasket(3, sink)
    ident = identity(g, samples=5)
    for seed in range(5):
        r = random_recurrent(g, 100 + seed)
        assert group_add(ident, r) == r
