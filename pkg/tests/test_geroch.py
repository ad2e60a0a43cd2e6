import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st_
from hypothesis.extra.numpy import arrays

from cauchytime.causal import build_causal_graph
from cauchytime.geroch import (InvariantFailure, LevelRangeError, VolumeMeasure, chain_limit_comparison,
                               foliation_export, geroch_cauchy, geroch_pm, geroch_time, level_band,
                               verify_cauchy, verify_time_function, violating_edges, volume_measure)
from cauchytime.spacetime import ModelSpec, build_model


def test_minkowski_geroch_is_a_cauchy_time_function(mink41):
    st, g = mink41
    tm, tp = geroch_pm(g, volume_measure(g))
    t = geroch_cauchy(tm, tp)
    assert verify_time_function(tm, g) == 0
    assert verify_time_function(tp, g) == 0
    assert verify_time_function(t, g) == 0
    assert violating_edges(t, g).shape == (0, 2)
    assert verify_cauchy(t, g, threshold=3.0).passed


def test_reversed_field_violates_everywhere(mink21):
    _, g = mink21
    t = geroch_time(g)
    assert verify_time_function(-t, g) == g.n_edges


def test_center_of_small_diamond(diamond41):
    st, g = diamond41
    tm, tp = geroch_pm(g, volume_measure(g))
    assert tm[20, 20] == pytest.approx(0.25, rel=0.1)
    assert geroch_time(g)[20, 20] == pytest.approx(0.0, abs=1e-12)


def test_damped_measure_keeps_time_function(mink21):
    _, g = mink21
    mu = volume_measure(g, damping_scale=0.3)
    assert mu.total == pytest.approx(1.0)
    assert verify_time_function(geroch_time(g, mu), g) == 0


def test_measure_must_be_positive():
    with pytest.raises(ValueError):
        VolumeMeasure(np.array([1.0, 0.0]))


def test_cauchy_combination_needs_signs():
    with pytest.raises(InvariantFailure):
        geroch_cauchy(np.array([0.5, 0.0]), np.array([-0.5, -0.5]))


@given(arrays(float, 441, elements=st_.floats(1e-3, 1e3)))
def test_any_positive_measure_gives_time_functions(w):
    g = _small()
    tm, tp = geroch_pm(g, VolumeMeasure(w))
    assert verify_time_function(tm, g) == 0
    assert verify_time_function(tp, g) == 0


_G = {}


def _small():
    if not _G:
        _G["g"] = build_causal_graph(build_model(ModelSpec("Minkowski2d", (21, 21))), 2)
    return _G["g"]


def test_level_band_is_an_antichain(mink41):
    st, g = mink41
    t = geroch_time(g)
    band = level_band(t, g, 0.3)
    assert band.size >= st.nx // 2
    inset = np.zeros(g.n, dtype=bool)
    inset[band] = True
    for k in band:
        fut = g.mask_to_nodes(g.jplus[k])
        assert not np.any(inset[fut[fut != k]])


def test_foliation_export(mink41):
    st, g = mink41
    t = geroch_time(g)
    fol = foliation_export(t, st, [-1.0, 0.0, 1.0], g, n_steps=50)
    assert fol.acausal_violations == []
    u = fol.surfaces[1].u
    assert np.nanmax(np.abs(u[5:-5])) < 3 * st.h_t
    assert len(fol.flow_lines) > 0
    with pytest.raises(LevelRangeError):
        foliation_export(t, st, [100.0])


def test_carved_chains_have_different_limits():
    st = build_model(ModelSpec("CarvedMinkowski", (61, 61)))
    g = build_causal_graph(st, 2)
    rep = chain_limit_comparison(g, volume_measure(g), -0.1, -0.6)
    assert rep.past_gap > 0.05
