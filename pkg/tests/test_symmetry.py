from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st_
from hypothesis.extra.numpy import arrays

from cauchytime import fields
from cauchytime.geroch import geroch_time, verify_time_function, volume_measure
from cauchytime.spacetime import ModelSpec, build_group, build_model, surface_between
from cauchytime.symmetry import (InvarianceError, average_field, average_measure, check_invariant,
                                 check_orbit_acausal, cone_equivariance, invariance_deviation,
                                 invariant_temporal)


@pytest.fixture(scope="module")
def refl():
    from cauchytime.causal import build_causal_graph

    st = build_model(ModelSpec("Minkowski2d", (21, 21)))
    return st, build_causal_graph(st, 2), build_group(st, reflection=True)


def test_reflection_averages_odd_fields_to_zero(refl):
    st, _, ga = refl
    f = np.sin(fields.coordinate_space(st))
    assert np.max(np.abs(average_field(f, ga))) < 1e-15


@given(arrays(float, (31, 40), elements=st_.floats(-1e3, 1e3)))
def test_average_is_exactly_invariant(f):
    ga = _GROUP["ga"]
    assert invariance_deviation(average_field(f, ga), ga) == 0.0


@given(arrays(float, (31, 40), elements=st_.floats(-10, 10)))
def test_average_is_idempotent(f):
    ga = _GROUP["ga"]
    a = average_field(f, ga)
    assert np.allclose(average_field(a, ga), a, rtol=0, atol=1e-12)


_GROUP = {"ga": build_group(build_model(ModelSpec("CylinderProduct", (31, 40), (-1.5, 1.5), circumference=8.0)),
                            rotation=4)}


def test_averaged_measure_gives_invariant_geroch(cyl):
    st, g, ga = cyl
    mu = average_measure(volume_measure(g), ga, g)
    t = geroch_time(g, mu)
    assert invariance_deviation(t, ga) <= 1e-12
    assert verify_time_function(t, g) == 0


def test_orbits_are_acausal_on_symmetric_models(cyl, refl, warp_cyl):
    for st, g, ga in (cyl, refl, warp_cyl):
        assert check_orbit_acausal(g, ga) == []
        assert cone_equivariance(g, ga) == []


def test_planted_time_translation_breaks_every_orbit(mink21):
    st, g = mink21
    i, j = np.divmod(np.arange(st.n), st.nx)
    shift = ((i + 1) % st.nt) * st.nx + j
    fake = SimpleNamespace(perms=[np.arange(st.n), shift], names=["id", "tshift"])
    bad = check_orbit_acausal(g, fake)
    assert len(bad) == g.n
    assert {b[1] for b in bad} == set(range(g.n))


def test_steep_needs_isometries(warp_cyl):
    st, g, ga = warp_cyl
    with pytest.raises(InvarianceError, match="isometr"):
        invariant_temporal(g, ga, [(surface_between(st, 0.0), 0.0)], surface_between(st, -0.8),
                           surface_between(st, 0.8), steep=True)


def test_time_orientation_reversing_group_rejected():
    from cauchytime.causal import build_causal_graph

    st = build_model(ModelSpec("CylinderProduct", (21, 8), (-1, 1), circumference=4.0))
    ga = build_group(st, time_reflection=True)
    with pytest.raises(InvarianceError):
        invariant_temporal(build_causal_graph(st, 2), ga, [])


def test_levels_must_increase(cyl):
    st, g, ga = cyl
    with pytest.raises(InvarianceError):
        invariant_temporal(g, ga, [(surface_between(st, 0.0), 1.0), (surface_between(st, 0.5), 0.0)],
                           surface_between(st, -1.0), surface_between(st, 1.0))


def test_non_invariant_surface_rejected(cyl):
    from cauchytime.spacetime import make_surface

    st, g, ga = cyl
    S = make_surface(st, 0.2 * np.sin(2 * np.pi * st.x / 8))
    with pytest.raises(InvarianceError):
        invariant_temporal(g, ga, [(S, 0.0)], surface_between(st, -1.0), surface_between(st, 1.0))


def test_invariant_m0_steep(cyl_tall):
    st, g, ga = cyl_tall
    res = invariant_temporal(g, ga, [], steep=True)
    assert res.passed
    assert res.checks["invariance_deviation"] <= 1e-9
    assert res.checks["violations"] == 0


def test_invariant_m1_flat_cylinder(cyl_tall):
    st, g, ga = cyl_tall
    Sm, Sp = surface_between(st, -1.0), surface_between(st, 1.0)
    res = invariant_temporal(g, ga, [(surface_between(st, 0.0), 0.0)], Sm, Sp, -1.0, 1.0)
    assert res.passed
    assert res.checks["invariance_deviation"] <= 1e-9
    assert res.checks["level_1_ok"]
    again = check_invariant(g, ga, res, [(surface_between(st, 0.0), 0.0)], Sm, Sp, -1.0, 1.0, False, 0.01)
    assert again["passed"]


def test_group_table_is_associative(cyl):
    _, _, ga = cyl
    t = ga.table
    m = ga.order
    for a in range(m):
        for b in range(m):
            for c in range(m):
                assert t[t[a, b], c] == t[a, t[b, c]]


def test_isometric_averaging_keeps_volume(cyl):
    from cauchytime.symmetry import average_grid_weights

    st, _, ga = cyl
    assert np.max(np.abs(average_grid_weights(st.volume, ga) - st.volume)) <= 1e-12


def test_averaging_keeps_the_margin(cyl):
    from cauchytime.steep import tol_h

    st, _, ga = cyl
    T = fields.coordinate_time(st)
    t3 = 2 * T + 0.4 * np.sin(2 * np.pi * fields.coordinate_space(st) / 8) * np.cos(T)
    inner = fields.interior_mask(st)
    avg = average_field(t3, ga)
    m_avg = fields.steepness_margin(avg, st)[inner].min()
    m_each = min(fields.steepness_margin(ga.apply(e, t3.reshape(-1)).reshape(st.shape), st)[inner].min()
                 for e in range(ga.order))
    assert m_avg >= m_each - tol_h(st)
