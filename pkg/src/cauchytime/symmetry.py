"""Group averaging with orbit acausality checks, and the invariant temporal
pipeline that adapts an averaged function to prescribed level surfaces."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fields
from .causal import CausalGraph, unpack
from .geroch import VolumeMeasure, geroch_time, verify_time_function
from .spacetime import GroupAction, SurfaceGraph, surface_invariant
from .steep import (
    PreconditionError,
    SteepParams,
    SynthesisFailure,
    adapted_temporal,
    level_set_distance,
    ramp_down,
    ramp_up,
    side_reference,
    signed_distance,
    steep_bounded,
    steep_temporal,
    surface_nodes,
    tol_h,
)

log = logging.getLogger(__name__)

INVARIANCE_TOL = 1e-9


class InvarianceError(ValueError):
    """Pipeline input rejected: non-invariant data or an unsupported request."""


def average_measure(mu: VolumeMeasure, ga: GroupAction, graph: CausalGraph) -> VolumeMeasure:
    """Uniform average of the pulled-back node weights over the group."""
    w = graph.to_grid(mu.weights, fill=0.0).reshape(-1)
    return VolumeMeasure(_orbit_mean(w, ga)[graph.nodes])


def _orbit_mean(flat, ga: GroupAction):
    """Mean over the group of the pulled-back values.  Each node's orbit
    values are summed in sorted order, so every point of an orbit gets the
    bitwise-identical result regardless of the field's magnitude."""
    vals = np.sort(np.stack([flat[ga.perms[e]] for e in range(ga.order)]), axis=0)
    acc = np.zeros_like(flat)
    for row in vals:
        acc += row
    return acc / ga.order


def average_grid_weights(weights, ga: GroupAction):
    w = np.asarray(weights, dtype=float)
    return _orbit_mean(w.reshape(-1), ga).reshape(w.shape)


def average_field(f, ga: GroupAction):
    """(1/|G|) sum_g f o g."""
    f = np.asarray(f, dtype=float)
    return _orbit_mean(f.reshape(-1), ga).reshape(f.shape)


def invariance_deviation(f, ga: GroupAction, mask=None):
    flat = np.asarray(f, dtype=float).reshape(-1)
    keep = np.isfinite(flat) if mask is None else np.asarray(mask).reshape(-1)
    dev = 0.0
    for e in range(ga.order):
        d = np.abs(flat[ga.perms[e]] - flat)[keep]
        if d.size:
            dev = max(dev, float(np.nanmax(d)))
    return dev


def _node_perm(graph: CausalGraph, perm):
    """Grid permutation restricted to graph nodes, in node indices."""
    img = graph.grid_to_node[np.asarray(perm)[graph.nodes]]
    if np.any(img < 0):
        raise InvarianceError("group element maps a graph node outside the graph")
    return img


def _has_bit(bits, rows, cols):
    word = bits[rows, cols >> 6]
    return ((word >> (cols & 63).astype(np.uint64)) & np.uint64(1)).astype(bool)


def check_orbit_acausal(graph: CausalGraph, ga) -> list:
    """Pairs (element name, node, image) with the image causally related to
    the node.  ``ga`` needs ``perms`` and ``names``; fixed points are skipped."""
    out = []
    nodes = np.arange(graph.n)
    ident = np.arange(graph.st.n)
    for e in range(len(ga.perms)):
        if np.array_equal(ga.perms[e], ident):
            continue
        img = graph.grid_to_node[np.asarray(ga.perms[e])[graph.nodes]]
        ok = img >= 0
        moved = ok & (img != nodes)
        p = nodes[moved]
        q = img[moved]
        hit = _has_bit(graph.jplus, p, q) | _has_bit(graph.jminus, p, q)
        out += [(ga.names[e], int(a), int(b)) for a, b in zip(p[hit], q[hit])]
    return out


def cone_equivariance(graph: CausalGraph, ga: GroupAction, which=("jplus", "jminus", "iplus", "iminus")):
    """Elements e (by name) and relation names where g(J(p)) != J(g(p))."""
    bad = []
    for name in which:
        rel = unpack(getattr(graph, name), graph.n)
        for e in range(ga.order):
            pi = _node_perm(graph, ga.perms[e])
            if not np.array_equal(rel[np.ix_(pi, pi)], rel):
                bad.append((ga.names[e], name))
    return bad


def _orbit_max(f, ga: GroupAction, st):
    """Per-column maximum of surface data over the group orbit of the column."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return f
    cols = np.arange(st.nx)
    return np.max([f[ga.perms[e][cols] % st.nx] for e in range(ga.order)], axis=0)


@dataclass
class InvariantResult:
    field: np.ndarray
    checks: dict
    trace: list = field(default_factory=list)
    t_minus_ref: np.ndarray | None = None
    t_plus_ref: np.ndarray | None = None

    @property
    def passed(self):
        return bool(self.checks.get("passed", False))


def _glue(graph, A, a_n, a_next, S_next, t3):
    """phi(A) + psi(B): A keeps its lower levels, B takes over above S_next so
    that the sum equals a_next there.  B = b0 + kappa t3 + rho(t3) where rho
    vanishes for t3 <= 0 and has slope 1 from t3 = 1 on, so the tiny scale
    kappa forced by the size of t3 below S_n does not flatten T above."""
    st = graph.st
    on_next = np.array([np.interp(S_next.u[j], st.t, np.nan_to_num(A[:, j])) for j in range(st.nx)])
    r = min(float(np.min(on_next - a_n)), a_next - a_n)
    if r <= 0:
        raise SynthesisFailure("the glued function does not exceed the previous level on the next surface",
                               "gluing")
    P = a_n + r / 2
    b = a_next - P
    b0 = 1.5 * b
    inc = st.included
    below = inc & (np.nan_to_num(A, nan=np.inf) <= a_n)
    upper = inc & (np.nan_to_num(A, nan=-np.inf) >= a_n + r) & (t3 < 0)
    hi_t3 = float(np.max(t3[below])) if below.any() else -np.inf
    if hi_t3 >= 0:
        raise SynthesisFailure("adapted function is not negative below the previous surface", "gluing")
    k_lo = b0 / -hi_t3
    k_hi = b0 / -float(np.min(t3[upper])) if upper.any() else np.inf
    if not k_lo < k_hi:
        raise SynthesisFailure(f"no admissible gluing scale: need {k_lo:.4g} <= kappa < {k_hi:.4g}", "gluing")
    kappa = max(k_lo * 1.05, 1.0) if np.isinf(k_hi) else np.sqrt(k_lo * k_hi)
    kappa = max(kappa, 1.0) if max(kappa, 1.0) < k_hi else kappa
    B = kappa * t3 + b0 + ramp_up(t3)
    phi = a_n + r * ramp_down((A - a_n) / r)
    psi = b * ramp_up(B / b)
    info = dict(r=r, plateau=P, b=b, b0=b0, kappa=float(kappa), kappa_range=(k_lo, k_hi))
    return np.where(inc, phi + psi, np.nan), info


def invariant_temporal(graph: CausalGraph, ga: GroupAction, surfaces, S_minus: SurfaceGraph | None = None,
                       S_plus: SurfaceGraph | None = None, f_minus=-1.0, f_plus=1.0, t_minus_ref=None,
                       t_plus_ref=None, steep=False, params: SteepParams | None = None,
                       tolerance_scale=1.0, check=True) -> InvariantResult:
    """G-invariant Cauchy temporal function T with T = a_i on S_i.

    ``surfaces`` is a list of (SurfaceGraph, level) with increasing levels.
    m = 0 averages a steep function (lifted above f on S+/S- when those are
    given); m >= 1 adapts to S_1 with invariant Geroch reference times on
    both sides of S_1 and averages; further surfaces are glued on one at a
    time.  Steepness is produced and checked only for m <= 1 with an
    isometric group.
    """
    st = graph.st
    m = len(surfaces)
    trace = []
    if not ga.preserves_time_orientation:
        raise InvarianceError("group does not preserve the time orientation")
    if steep and not ga.is_isometric:
        raise InvarianceError("a steep invariant function needs a group of isometries; "
                              "this group is only conformal")
    if steep and m > 1:
        raise InvarianceError("steepness is available for at most one prescribed surface")
    levels = [float(a) for _, a in surfaces]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvarianceError("levels must be strictly increasing")
    chain = ([S_minus] if S_minus is not None else []) + [s for s, _ in surfaces] + \
            ([S_plus] if S_plus is not None else [])
    for lo, hi in zip(chain, chain[1:]):
        if not np.all(hi.u > lo.u):
            raise InvarianceError("surfaces must be ordered S- < S_1 < ... < S_m < S+ in every column")
    for i, (S, _) in enumerate(surfaces):
        dev = surface_invariant(S, st, ga)
        if dev > INVARIANCE_TOL:
            raise InvarianceError(f"surface S_{i + 1} is not invariant under the group (deviation {dev:.3e})")
    for name, S in (("S-", S_minus), ("S+", S_plus)):
        if S is not None and m >= 1 and surface_invariant(S, st, ga) > INVARIANCE_TOL:
            raise InvarianceError(f"surface {name} is not invariant under the group")
    if m >= 1 and (S_minus is None or S_plus is None):
        raise InvarianceError("prescribed surfaces need bracketing surfaces S- and S+")

    tol = tol_h(st, tolerance_scale)
    w = average_grid_weights(st.volume, ga)
    trace.append(f"group of order {ga.order}, isometric={ga.is_isometric}, m={m}, steep={steep}")
    fp = _orbit_max(f_plus, ga, st)
    fm = -_orbit_max(-np.asarray(f_minus, dtype=float), ga, st)

    if m == 0:
        mu = average_measure(VolumeMeasure(w.reshape(-1)[graph.nodes]), ga, graph)
        t_ref = geroch_time(graph, mu)
        tp_ref = tm_ref = t_ref
        res = steep_temporal(graph, t_ref, params, tolerance_scale)
        trace += res.trace
        T0 = res.field
        if S_plus is not None or S_minus is not None:
            b = steep_bounded(graph, S_plus, fp, t_ref, S_minus, fm, t1=T0, params=params,
                              tolerance_scale=tolerance_scale)
            up = b.plus if b.plus is not None else T0
            dn = b.minus if b.minus is not None else T0
            T0 = up + dn - T0
            trace.append("lifted above the surface data: " + ", ".join(f"{k}={v}" for k, v in b.checks.items()))
        T = average_field(T0, ga)
    else:
        S1, a1 = surfaces[0]
        if t_plus_ref is None:
            t_plus_ref, _ = side_reference(graph, S1, +1, w)
        if t_minus_ref is None:
            tr_, _ = side_reference(graph, S1, -1, w)
            t_minus_ref = tr_
        tp_ref, tm_ref = t_plus_ref, t_minus_ref
        trace.append(f"invariant reference times: deviation +{invariance_deviation(tp_ref, ga):.2e} "
                     f"-{invariance_deviation(tm_ref, ga):.2e}")
        nxt = surfaces[1][0] if m > 1 else S_plus
        res = adapted_temporal(graph, S1, S_minus, nxt, fm - a1, fp - a1 if m == 1 else 1.0,
                               tm_ref - 2 * a1, tp_ref - 2 * a1, weights=w, params=params,
                               tolerance_scale=tolerance_scale)
        trace += res.trace
        T = average_field(res.field, ga) + a1
        for n in range(1, m):
            S_next, a_next = surfaces[n]
            S_prev = surfaces[n - 1][0]
            outer = surfaces[n + 1][0] if n + 1 < m else S_plus
            f_out = fp - a_next + 0.5 if n + 1 == m else 1.0
            sub_ref = np.where(signed_distance(st, S_next) > 0, tp_ref, np.nan) - 2 * a_next + 1.0
            r3 = adapted_temporal(graph, S_next, S_prev, outer, -1.0, f_out, None, sub_ref, weights=w,
                                  params=params, tolerance_scale=tolerance_scale)
            t3 = average_field(r3.field, ga)
            T, info = _glue(graph, T, levels[n - 1], a_next, S_next, t3)
            trace.append(f"glued S_{n + 1} at level {a_next}: " +
                         ", ".join(f"{k}={v}" for k, v in info.items()))
    T = np.where(st.included, T, np.nan)
    out = InvariantResult(T, {}, trace, tm_ref, tp_ref)
    if check:
        out.checks = check_invariant(graph, ga, out, surfaces, S_minus, S_plus, f_minus, f_plus, steep, tol)
        trace.append("post-checks: " + ", ".join(f"{k}={v}" for k, v in out.checks.items()))
    return out


def check_invariant(graph, ga, res: InvariantResult, surfaces, S_minus, S_plus, f_minus, f_plus, steep, tol):
    st = graph.st
    T = res.field
    checks = {}
    dev = invariance_deviation(T, ga, st.included)
    checks["invariance_deviation"] = dev
    checks["invariance_ok"] = dev <= INVARIANCE_TOL
    viol = verify_time_function(T, graph)
    checks["violations"] = viol
    checks["monotone_ok"] = viol == 0
    interior = fields.interior_mask(st)
    margin = fields.steepness_margin(T, st)
    checks["min_margin"] = float(np.nanmin(margin[interior]))
    checks["temporal_ok"] = bool(np.all(fields.past_timelike(st, T)[interior]))
    if steep:
        checks["steep_ok"] = checks["min_margin"] >= 1 - tol
    for i, (S, a) in enumerate(surfaces):
        d = level_set_distance(T, st, S, a)
        checks[f"level_{i + 1}_hausdorff"] = d
        checks[f"level_{i + 1}_ok"] = d < 2 * st.h_t
        on_row = np.isclose(S.u, st.t[np.clip(np.searchsorted(st.t, S.u), 0, st.nt - 1)], atol=1e-12)
        if np.all(on_row):
            k = surface_nodes(st, S)
            checks[f"level_{i + 1}_node_error"] = float(np.max(np.abs(T.reshape(-1)[k] - a)))
    from .steep import SynthesisContext, _node_values

    ctx = SynthesisContext(graph, np.zeros(st.shape))
    for sign, S, f, ref in ((+1, S_plus, f_plus, res.t_plus_ref), (-1, S_minus, f_minus, res.t_minus_ref)):
        if S is None:
            continue
        tag = "plus" if sign > 0 else "minus"
        k = surface_nodes(st, S)
        fv = _node_values(st, f, k)
        checks[f"surface_{tag}_ok"] = bool(np.all(sign * T.reshape(-1)[k] > sign * fv))
        if ref is not None:
            rel = ctx._union(graph.iplus if sign > 0 else graph.iminus, k)
            ref = np.asarray(ref, dtype=float).reshape(st.shape)
            sel = rel & np.isfinite(ref)
            checks[f"growth_{tag}_ok"] = bool(np.all(sign * T[sel] > sign * ref[sel] / 2 - 2))
    checks["passed"] = all(v for k, v in checks.items() if k.endswith("_ok"))
    return checks
