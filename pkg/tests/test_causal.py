import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st_

from cauchytime.causal import (CausalityViolation, build_causal_graph, causal_future, check_antisymmetry,
                               check_causal, check_diamond_bounds, check_push_up, chronological,
                               diamond, inextendible_chains, interior_dead_ends, pack, push_up_oracle, related,
                               time_separation, time_separation_from, time_separation_oracle, unpack,
                               with_extra_edges, write_edge_list)
from cauchytime.spacetime import ModelSpec, build_model


@given(st_.lists(st_.booleans(), min_size=1, max_size=200))
def test_pack_roundtrip(bits):
    m = np.array(bits)[None, :]
    assert np.array_equal(unpack(pack(m), m.shape[1]), m)


def test_small_graph_against_oracles():
    st = build_model(ModelSpec("Minkowski2d", (9, 9)))
    g = build_causal_graph(st, 2)
    assert check_causal(g)
    assert check_push_up(g) == []
    assert push_up_oracle(g) == 0
    assert check_antisymmetry(g).size == 0
    for p, q in [(g.node(0, 4), g.node(8, 4)), (g.node(1, 2), g.node(7, 5)), (g.node(0, 0), g.node(8, 8))]:
        assert time_separation(g, p, q) == pytest.approx(time_separation_oracle(g, p, q), abs=1e-12)


def test_closure_matches_dense_reachability(mink21):
    st, g = mink21
    n = g.n
    A = np.zeros((n, n), dtype=bool)
    A[g.src, g.dst] = True
    R = A | np.eye(n, dtype=bool)
    while True:
        R2 = R | ((R.astype(np.uint8) @ R.astype(np.uint8)) > 0)
        if np.array_equal(R2, R):
            break
        R = R2
    assert np.array_equal(unpack(g.jplus, n), R)
    assert np.array_equal(unpack(g.jminus, n), R.T)


def test_closure_is_idempotent(mink21):
    _, g = mink21
    J = unpack(g.jplus, g.n)
    again = ((J.astype(np.uint8) @ J.astype(np.uint8)) > 0)
    assert np.array_equal(again, J)


def test_planted_back_edge_is_a_cycle(mink21):
    _, g = mink21
    p, q = g.node(2, 10), g.node(6, 10)
    bad = with_extra_edges(g, [q], [p])
    assert not check_causal(bad)
    with pytest.raises(CausalityViolation):
        bad.level
    with pytest.raises(ValueError):
        build_causal_graph(build_model(ModelSpec("Minkowski2d", (5, 5))), 0)


def test_relations(mink21):
    _, g = mink21
    p = g.node(0, 10)
    assert related(g, p, g.node(5, 14))
    assert not related(g, p, g.node(2, 14))
    assert related(g, p, g.node(4, 14)) and not chronological(g, p, g.node(4, 14))
    assert chronological(g, p, g.node(5, 12))
    d = diamond(g, p, g.node(4, 10))
    assert d.size == 13


@pytest.mark.parametrize("family, kw", [
    ("Minkowski2d", {}),
    ("DiamondMinkowski", {}),
    ("CylinderProduct", {"circumference": 3.0}),
    ("ConformalWarp", {"warp": "1 + 0.3*sin(3*x)**2 + 0.2*t**2"}),
    ("CarvedMinkowski", {}),
])
def test_axioms_on_families(family, kw):
    st = build_model(ModelSpec(family, (31, 30), **kw))
    g = build_causal_graph(st, 2)
    assert check_push_up(g) == []
    assert check_antisymmetry(g).size == 0
    assert check_diamond_bounds(g) == 0


def test_time_separation_examples():
    st = build_model(ModelSpec("Minkowski2d", (5, 5), (0, 2), (-1, 1)))
    g = build_causal_graph(st, 2)
    p = g.node(0, 2)
    assert time_separation(g, p, g.node(4, 4)) == pytest.approx(math.sqrt(3))
    assert time_separation(g, g.node(4, 4), p) == 0.0
    g1 = build_causal_graph(st, 1)
    v = time_separation(g1, p, g1.node(4, 2))
    assert 2 - 1e-12 <= v + 1e-12 and v <= 2 + 1e-12


@given(st_.integers(1, 20), st_.integers(-10, 10))
def test_time_separation_bounded_by_interval(di, dj):
    st = build_model(ModelSpec("Minkowski2d", (21, 21), (0, 4), (-2, 2)))
    g = _graph_cache(st)
    tau = g.to_grid(time_separation_from(g, g.node(0, 10)))[di, 10 + dj]
    I2 = (di * st.h_t) ** 2 - (dj * st.h_x) ** 2
    if I2 < 0:
        assert not np.isfinite(tau)
    else:
        assert tau <= math.sqrt(I2) + 1e-12


_CACHE = {}


def _graph_cache(st):
    if "g" not in _CACHE:
        _CACHE["g"] = build_causal_graph(st, 2)
    return _CACHE["g"]


def test_chain_reverse_triangle(mink41):
    _, g = mink41
    chain = inextendible_chains(g, [g.node(20, 20)])[0].nodes
    w = {(int(a), int(b)): float(c) for a, b, c in zip(g.src, g.dst, g.weight)}
    for a in range(0, len(chain) - 5, 5):
        length = sum(w[(chain[k], chain[k + 1])] for k in range(a, a + 5))
        assert length <= time_separation(g, chain[a], chain[a + 5]) + 1e-12


def test_chains_reach_the_boundary():
    st = build_model(ModelSpec("CylinderProduct", (21, 12), circumference=3.0))
    g = build_causal_graph(st, 2)
    c = inextendible_chains(g, [g.node(10, 0)])[0]
    assert (c.start_kind, c.end_kind) == ("time-boundary", "time-boundary")
    assert interior_dead_ends(g) == []
    carved = build_model(ModelSpec("CarvedMinkowski", (41, 41)))
    gc = build_causal_graph(carved, 2)
    assert interior_dead_ends(gc) == []


def test_future_is_inside_light_cone(mink21):
    st, g = mink21
    p = g.node(3, 10)
    t, x = g.coords(causal_future(g, p))
    assert np.all(np.abs(x - st.x[10]) <= t - st.t[3] + 1e-12)


def test_edge_list(tmp_path, mink21):
    _, g = mink21
    path = tmp_path / "edges.txt"
    write_edge_list(g, path)
    lines = path.read_text().splitlines()
    assert len(lines) == g.n_edges
    kinds = {ln.split()[2] for ln in lines}
    assert kinds <= {"timelike", "causal"}
