"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line; the lines are repeated
in the pytest terminal summary.  Run directly with ``python tests/test_acceptance.py``.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from cauchytime import fields, lorlin
from cauchytime.causal import (build_causal_graph, check_causal, check_diamond_bounds, check_push_up,
                               time_separation_from)
from cauchytime.cli import main as cli_main
from cauchytime.config import load_config
from cauchytime.geroch import (chain_limit_comparison, geroch_cauchy, geroch_pm, verify_cauchy,
                               verify_time_function, volume_measure)
from cauchytime.spacetime import ModelSpec, build_group, build_model, surface_between
from cauchytime.steep import adapted_temporal, level_set_distance, steep_temporal, surface_values, tol_h
from cauchytime.symmetry import InvarianceError, check_orbit_acausal, invariant_temporal

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RESULTS = {}

pytestmark = pytest.mark.slow

FOUR = [
    ("Minkowski2d", {}),
    ("DiamondMinkowski", {}),
    ("CylinderProduct", {"circumference": 2.0}),
    ("ConformalWarp", {"warp": "1 + 0.3*sin(2*x)**2 + 0.2*t**2"}),
]


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def models():
    t0 = time.perf_counter()
    out = {}
    for fam, kw in FOUR:
        st = build_model(ModelSpec(fam, (101, 101), **kw))
        g = build_causal_graph(st, 2, check=False)
        out[fam] = (st, g, check_causal(g), len(check_push_up(g)), check_diamond_bounds(g))
    return out, time.perf_counter() - t0


def test_criterion_01_causality_axioms(models):
    out, elapsed = models
    cycles = sum(not r[2] for r in out.values())
    push = sum(r[3] for r in out.values())
    box = sum(r[4] for r in out.values())
    ok = cycles == 0 and push == 0 and box == 0 and elapsed < 30
    verdict(1, ok, f"4 models at 101x101 r=2: cyclic models {cycles}, push-up violations {push}, "
                   f"diamond-bound violations {box}, {elapsed:.1f}s (< 30s)")


def _past_cone_area_oracle():
    from scipy.integrate import dblquad

    # past cone of the center inside |t| + |x| <= 1, over the diamond area
    past, _ = dblquad(lambda t, x: 1.0, -0.5, 0.5, lambda x: -1 + abs(x), lambda x: -abs(x))
    total, _ = dblquad(lambda t, x: 1.0, -1, 1, lambda x: -1 + abs(x), lambda x: 1 - abs(x))
    return past / total


def test_criterion_02_geroch(models):
    out, _ = models
    carved = build_model(ModelSpec("CarvedMinkowski", (101, 101)))
    graphs = {k: v[1] for k, v in out.items()}
    graphs["CarvedMinkowski"] = build_causal_graph(carved, 2)
    bad = {}
    for fam, g in graphs.items():
        tm, tp = geroch_pm(g, volume_measure(g))
        t = geroch_cauchy(tm, tp)
        bad[fam] = (verify_time_function(tm, g), verify_time_function(tp, g), verify_time_function(t, g))
        g.release()
    st_d, g_d = out["DiamondMinkowski"][0], graphs["DiamondMinkowski"]
    tm, tp = geroch_pm(g_d, volume_measure(g_d))
    center = float(geroch_cauchy(tm, tp)[50, 50])
    st2 = build_model(ModelSpec("DiamondMinkowski", (201, 201)))
    g2 = build_causal_graph(st2, 2)
    tm2, _ = geroch_pm(g2, volume_measure(g2))
    oracle = _past_cone_area_oracle()
    rel = abs(tm2[100, 100] - oracle) / oracle
    nviol = sum(sum(v) for v in bad.values())
    ok = nviol == 0 and abs(center) <= 1e-12 and rel <= 0.02
    verdict(2, ok, f"violating edges (t-, t+, t) over 5 models {nviol}; diamond center t = {center:.2e}; "
                   f"past-cone measure {tm2[100, 100]:.5f} vs oracle {oracle:.5f} (rel {rel:.4f} <= 0.02)")


def test_criterion_03_counterexample():
    carved = build_model(ModelSpec("CarvedMinkowski", (101, 101)))
    gc = build_causal_graph(carved, 2)
    rep = chain_limit_comparison(gc, volume_measure(gc), -0.1, -0.6)
    full = build_model(ModelSpec("Minkowski2d", (101, 101)))
    gf = build_causal_graph(full, 2)
    tm, tp = geroch_pm(gf, volume_measure(gf))
    t = geroch_cauchy(tm, tp)
    # the largest level every boundary row of the chart reaches
    threshold = 0.9 * min(-np.nanmax(t[0]), np.nanmin(t[-1]))
    cr = verify_cauchy(t, gf, threshold)
    ok = rep.past_gap > 0.05 and cr.passed and threshold > 3
    verdict(3, ok, f"carved chain limits {rep.past_limits[0]:.4f} vs {rep.past_limits[1]:.4f} "
                   f"(gap {rep.past_gap:.4f} > 0.05 of total); uncarved t verify_cauchy at threshold "
                   f"{threshold:.3f}: {cr.n_chains - len(cr.failures)}/{cr.n_chains} chains")


def test_criterion_04_steep():
    cfg = load_config(CONFIGS / "minkowski.toml")
    st = build_model(cfg.model)
    assert st.shape == (121, 121) and st.t[0] == -3 and st.t[-1] == 3
    t0 = time.perf_counter()
    g = build_causal_graph(st, 2)
    tm, tp = geroch_pm(g, volume_measure(g))
    t_ref = geroch_cauchy(tm, tp)
    res = steep_temporal(g, t_ref, check=False)
    from cauchytime.steep import check_steep

    c = check_steep(g, res.field, t_ref, tol_h(st))
    elapsed = time.perf_counter() - t0
    ok = c["margin_ok"] and c["violations"] == 0 and c["band_bound"] and elapsed < 120
    verdict(4, ok, f"Minkowski [-3,3]^2 121x121: min margin {c['min_margin']:.3f} >= 1 - {tol_h(st):.3f}, "
                   f"violations {c['violations']}, band bound {c['band_bound']}, {elapsed:.1f}s (< 120s)")


def test_criterion_05_adapted():
    cfg = load_config(CONFIGS / "minkowski.toml")
    st = build_model(cfg.model)
    g = build_causal_graph(st, 2)
    S = cfg.surface(st, cfg.levels[0][0])
    Sm, Sp = cfg.surface(st, cfg.surface_minus), cfg.surface(st, cfg.surface_plus)
    res = adapted_temporal(g, S, Sm, Sp, check=False)
    zero = float(np.max(np.abs(surface_values(res, st, S))))
    haus = level_set_distance(res.field, st, S)
    d = np.nan_to_num(res.delta)
    plus_band = st.included & (d >= res.collar)
    minus_band = st.included & (d <= -res.collar)
    plateau = bool(np.all(res.theta[plus_band] == 1.0) and np.all(res.theta[minus_band] == -1.0))
    ok = zero <= 1e-6 and haus < 2 * st.h_t and plateau and plus_band.any() and minus_band.any()
    verdict(5, ok, f"S: t = 0.2 sin x; max |t3| on S {zero:.2e} (<= 1e-6); zero-set Hausdorff {haus:.2e} "
                   f"(< {2 * st.h_t:.3f}); theta exactly +-1 beyond the collar: {plateau}")


def test_criterion_06_invariance():
    cfg = load_config(CONFIGS / "cyl_z4.toml")
    st = build_model(cfg.model)
    g = build_causal_graph(st, 2)
    ga = build_group(st, rotation=cfg.rotation)
    S1 = cfg.surface(st, cfg.levels[0][0])
    Sm, Sp = cfg.surface(st, cfg.surface_minus), cfg.surface(st, cfg.surface_plus)
    res = invariant_temporal(g, ga, [(S1, cfg.levels[0][1])], Sm, Sp, cfg.f_minus, cfg.f_plus, steep=True)
    c = res.checks
    dev = max(float(np.nanmax(np.abs(res.field.reshape(-1)[ga.perms[e]] - res.field.reshape(-1))))
              for e in range(ga.order))
    cyl_ok = dev <= 1e-9 and c["min_margin"] >= 1 - tol_h(st) and c["level_1_ok"] and c["passed"]

    wcfg = load_config(CONFIGS / "warp.toml")
    wst = build_model(wcfg.model)
    wg = build_causal_graph(wst, 2)
    wga = build_group(wst, rotation=wcfg.rotation)
    wl = [(wcfg.surface(wst, u), v) for u, v in wcfg.levels]
    wm, wp = wcfg.surface(wst, wcfg.surface_minus), wcfg.surface(wst, wcfg.surface_plus)
    wres = invariant_temporal(wg, wga, wl, wm, wp, wcfg.f_minus, wcfg.f_plus, steep=False)
    warp_ok = wres.checks["invariance_ok"] and wres.checks["temporal_ok"] and wres.passed
    try:
        invariant_temporal(wg, wga, wl, wm, wp, wcfg.f_minus, wcfg.f_plus, steep=True)
        rejected = "not rejected"
    except InvarianceError as exc:
        rejected = str(exc)
    rej_ok = "group of isometries" in rejected
    verdict(6, cyl_ok and warp_ok and rej_ok,
            f"cylinder Z4 m=1: max |T(gx) - T(x)| {dev:.1e}, margin {c['min_margin']:.3f}, "
            f"S1 recovered {c['level_1_ok']}; warped Z4 (conformal): invariant {wres.checks['invariance_ok']}, "
            f"temporal {wres.checks['temporal_ok']}; steep request -> {rejected!r}")


def test_criterion_07_orbit_acausality():
    counts = {}
    for name in ("cyl_z4.toml", "warp.toml"):
        cfg = load_config(CONFIGS / name)
        st = build_model(cfg.model)
        g = build_causal_graph(st, 2)
        ga = build_group(st, cfg.rotation, cfg.reflection, cfg.time_reflection)
        counts[name] = len(check_orbit_acausal(g, ga))
    for fam, kw in (("Minkowski2d", {}), ("DiamondMinkowski", {})):
        st = build_model(ModelSpec(fam, (61, 61), **kw))
        g = build_causal_graph(st, 2)
        counts[f"{fam}+reflection"] = len(check_orbit_acausal(g, build_group(st, reflection=True)))
    verdict(7, sum(counts.values()) == 0, f"orbit violations per symmetric model {counts}")


def test_criterion_08_lorentzian_algebra():
    rng = np.random.default_rng(20240901)
    metrics = [lorlin.minkowski(2), lorlin.minkowski(4)]
    for dim in (2, 3, 5):
        A = rng.normal(size=(dim, dim)) + 3 * np.eye(dim)
        metrics.append(A.T @ lorlin.minkowski(dim) @ A)
    totals = dict(cauchy_schwarz=0, triangle=0, triangle_equality_rank=0, energy=0)
    n = 0
    for B in metrics:
        V = lorlin.sample_causal(B, 100_000, rng)
        W = lorlin.sample_causal(B, 100_000, rng)
        # linearly dependent pairs exercise the equality case
        W[:1000] = V[:1000] * rng.uniform(0.1, 5.0, size=(1000, 1))
        c = lorlin.inequality_counterexamples(B, V, W, tol=1e-9)
        n += c.n
        for k in totals:
            totals[k] += getattr(c, k)
    verdict(8, sum(totals.values()) == 0, f"{len(metrics)} metrics x 1e5 pairs: counterexamples {totals}")


def test_criterion_09_time_separation():
    st = build_model(ModelSpec("Minkowski2d", (41, 41), (0, 4), (-2, 2)))
    h = st.h_t
    graphs = {r: build_causal_graph(st, r) for r in (1, 2, 3)}
    taus = {r: g.to_grid(time_separation_from(g, g.node(0, 20))) for r, g in graphs.items()}
    on = [(k * a, k * b) for a, b in ((1, 0), (2, 1), (2, -1), (1, 1)) for k in (1, 3, 7, 10) if k * a <= 40]
    on_err = max(abs(taus[2][di, 20 + dj] - math.sqrt(max((di * h) ** 2 - (dj * h) ** 2, 0.0)))
                 for di, dj in on)
    off = [(5, 2), (7, 3), (10, 3), (9, 4), (13, 5), (30, 11), (17, -6)]
    below = True
    monotone = True
    for di, dj in off:
        interval = math.sqrt((di * h) ** 2 - (dj * h) ** 2)
        deficit = [interval - taus[r][di, 20 + dj] for r in (1, 2, 3)]
        below &= all(d >= -1e-12 for d in deficit)
        monotone &= deficit[0] > deficit[1] > deficit[2]
    ok = on_err <= 1e-9 and below and monotone
    verdict(9, ok, f"on-stencil max |tau - interval| {on_err:.1e} (<= 1e-9); off-stencil tau <= interval "
                   f"{below}; deficit strictly shrinking r=1,2,3 {monotone}")


def test_criterion_10_determinism(tmp_path):
    cfg = str(CONFIGS / "cyl_z4.toml")
    codes = [cli_main(["invariant", "--config", cfg, "--steep", "--threads", str(k), "--out", str(tmp_path / f"t{k}")])
             for k in (1, 8)]
    same = all((tmp_path / "t1" / f).read_bytes() == (tmp_path / "t8" / f).read_bytes()
               for f in ("report.txt", "summary.json", "trace.txt", "invariant.csv"))
    verdict(10, same and codes == [0, 0], f"invariant --threads 1 vs 8: exit codes {codes}, "
                                           f"report/summary/trace/csv byte-identical {same}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
