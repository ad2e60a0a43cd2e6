"""Volume time functions t+- = -+mu(J+-(x)), their logarithmic Cauchy
combination, and discrete verification of time-function properties."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fields
from .causal import CausalGraph, inextendible_chains
from .spacetime import SampledSpacetime, SurfaceGraph


class InvariantFailure(RuntimeError):
    pass


class LevelRangeError(ValueError):
    pass


@dataclass
class VolumeMeasure:
    """Positive node weights over graph nodes, normalised to total 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("volume measure weights must be positive")
        self.weights = w / w.sum()

    @property
    def total(self):
        return float(self.weights.sum())


def volume_measure(graph: CausalGraph, damping_scale: float | None = None) -> VolumeMeasure:
    """Grid volume on included nodes, optionally damped by sech^2(t / scale)."""
    w = graph.st.volume.reshape(-1)[graph.nodes].copy()
    if damping_scale:
        t, _ = graph.coords(np.arange(graph.n))
        w *= 1.0 / np.cosh(t / damping_scale) ** 2
    return VolumeMeasure(w)


def geroch_pm(graph: CausalGraph, mu: VolumeMeasure):
    """(t_minus, t_plus) as grid fields: t_minus = mu(J-), t_plus = -mu(J+)."""
    w = mu.weights
    t_minus = graph.measure_of(graph.jminus, w)
    t_plus = -graph.measure_of(graph.jplus, w)
    return graph.to_grid(t_minus), graph.to_grid(t_plus)


def geroch_cauchy(t_minus, t_plus):
    """ln(-t_minus / t_plus)."""
    tm = np.asarray(t_minus, dtype=float)
    tp = np.asarray(t_plus, dtype=float)
    ok = np.isnan(tm) | ((tm > 0) & (tp < 0))
    if not np.all(ok):
        raise InvariantFailure("Geroch functions violate t_plus < 0 < t_minus")
    with np.errstate(invalid="ignore"):
        return np.log(-tm / tp)


def geroch_time(graph: CausalGraph, mu: VolumeMeasure | None = None):
    mu = volume_measure(graph) if mu is None else mu
    tm, tp = geroch_pm(graph, mu)
    return geroch_cauchy(tm, tp)


def verify_time_function(field_values, graph: CausalGraph) -> int:
    """Number of causal edges p -> q with f(q) <= f(p)."""
    f = graph.from_grid(field_values)
    return int(np.sum(f[graph.dst] <= f[graph.src]))


def violating_edges(field_values, graph: CausalGraph):
    f = graph.from_grid(field_values)
    bad = f[graph.dst] <= f[graph.src]
    return np.stack([graph.src[bad], graph.dst[bad]], axis=1)


@dataclass
class CauchyReport:
    threshold: float
    chain_min: np.ndarray
    chain_max: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures

    @property
    def n_chains(self):
        return self.chain_min.size


def verify_cauchy(field_values, graph: CausalGraph, threshold: float, seeds=None) -> CauchyReport:
    """Along every maximal chain through the seeds, the field must reach both
    +threshold and -threshold.  Default seeds: every node of the middle row."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    st = graph.st
    if seeds is None:
        mid = st.nt // 2
        seeds = [graph.grid_to_node[st.index(mid, j)] for j in range(st.nx)]
        seeds = [s for s in seeds if s >= 0]
    chains = inextendible_chains(graph, seeds)
    f = graph.from_grid(field_values)
    cmin = np.array([f[c.nodes].min() for c in chains])
    cmax = np.array([f[c.nodes].max() for c in chains])
    fails = [i for i in range(len(chains)) if cmax[i] < threshold or cmin[i] > -threshold]
    return CauchyReport(threshold, cmin, cmax, fails)


def vertical_chain(graph: CausalGraph, x, t_start=None):
    """Chain up the grid column nearest x, from t_start (default chart floor)
    until the next node is excluded or the chart ends."""
    st = graph.st
    j = st.unindex(st.nearest(st.t[0] if t_start is None else t_start, x))[1]
    i0 = 0 if t_start is None else st.unindex(st.nearest(t_start, x))[0]
    nodes = []
    for i in range(i0, st.nt):
        k = graph.grid_to_node[st.index(i, j)]
        if k < 0:
            break
        nodes.append(int(k))
    return nodes


@dataclass
class ChainLimitReport:
    """Limits of the Geroch functions along future chains trapped by a carved
    region: past measures (t_minus) and future measures (t_plus) at the ends."""

    columns: tuple
    past_limits: tuple
    future_limits: tuple

    @property
    def past_gap(self):
        return abs(self.past_limits[1] - self.past_limits[0])


def chain_limit_comparison(graph: CausalGraph, mu: VolumeMeasure, x_a: float, x_b: float):
    """Compare sup of the past measure along two vertical chains ending at the
    carved boundary.  Different limits mean no single reparametrisation of the
    volume function can be future Cauchy."""
    tm, tp = geroch_pm(graph, mu)
    ca = vertical_chain(graph, x_a)
    cb = vertical_chain(graph, x_b)
    fm = graph.from_grid(tm)
    fp = graph.from_grid(tp)
    return ChainLimitReport(
        columns=(x_a, x_b),
        past_limits=(float(fm[ca].max()), float(fm[cb].max())),
        future_limits=(float(fp[ca].max()), float(fp[cb].max())),
    )


def steepness_margin(field_values, st: SampledSpacetime):
    return fields.steepness_margin(field_values, st)


# ---------------------------------------------------------------- foliation


@dataclass
class Foliation:
    levels: list
    surfaces: list          # SurfaceGraph per level (NaN where the column misses the level)
    flow_lines: list        # (label_x, array of (t, x) points)
    acausal_violations: list


def level_crossings(field_values, st: SampledSpacetime, level):
    """Per column: interpolated t of the first upward crossing of ``level``,
    and the node index just above it (-1 if none)."""
    f = np.asarray(field_values).reshape(st.shape)
    u = np.full(st.nx, np.nan)
    above = np.full(st.nx, -1)
    for j in range(st.nx):
        col = f[:, j]
        for i in range(st.nt - 1):
            a, b = col[i], col[i + 1]
            if np.isnan(a) or np.isnan(b):
                continue
            if a < level <= b:
                s = (level - a) / (b - a)
                u[j] = st.t[i] + s * st.h_t
                above[j] = st.index(i + 1, j)
                break
            if i == 0 and a == level:
                u[j] = st.t[0]
                above[j] = st.index(0, j)
                break
    return u, above


def level_band(field_values, graph: CausalGraph, level):
    """Minimal nodes of the future set {f >= level}: nodes at or above the
    level none of whose causal predecessors are.  For a time function this
    band is a discrete antichain."""
    f = graph.from_grid(field_values)
    up = f >= level
    has_pred_up = np.zeros(graph.n, dtype=bool)
    np.logical_or.at(has_pred_up, graph.dst, up[graph.src])
    return np.flatnonzero(up & ~has_pred_up)


def foliation_export(field_values, st: SampledSpacetime, levels, graph: CausalGraph | None = None,
                     n_steps=200):
    f = np.asarray(field_values, dtype=float)
    lo, hi = np.nanmin(f), np.nanmax(f)
    surfaces = []
    for c in levels:
        if not lo <= c <= hi:
            raise LevelRangeError(f"level {c} outside the field range [{lo:.6g}, {hi:.6g}]")
        u, _ = level_crossings(f, st, c)
        surfaces.append(SurfaceGraph(u, st.x.copy(), st.periodic, st.circumference))
    violations = []
    if graph is not None:
        for li, c in enumerate(levels):
            band = level_band(f, graph, c)
            inset = np.zeros(graph.n, dtype=bool)
            inset[band] = True
            for k in band:
                hits = graph.mask_to_nodes(graph.jplus[k])
                violations += [(li, int(k), int(q)) for q in hits[inset[hits]] if q != k]
    lines = []
    if levels:
        u0 = surfaces[0].u
        for j in range(st.nx):
            if np.isnan(u0[j]):
                continue
            lines.append((float(st.x[j]), _flow_line(st, u0[j], st.x[j], n_steps)))
    return Foliation(list(levels), surfaces, lines, violations)


def _flow_line(st: SampledSpacetime, t0, x0, n_steps):
    """Integral curve of the Euclidean-normalised orientation field, both ways
    from (t0, x0), clipped to the chart."""
    from scipy.interpolate import RegularGridInterpolator

    X = st.orientation
    norm = np.linalg.norm(X, axis=-1, keepdims=True)
    Y = X / norm
    xs = st.x
    if st.periodic:
        xs = np.concatenate([st.x, [st.x[0] + st.circumference]])
        Y = np.concatenate([Y, Y[:, :1]], axis=1)
    interp = RegularGridInterpolator((st.t, xs), Y, bounds_error=False, fill_value=None)
    span = st.t[-1] - st.t[0]
    ds = span / n_steps

    def rhs(p):
        q = p.copy()
        if st.periodic:
            q[1] = q[1] % st.circumference
        return interp(q[None, :])[0]

    def run(sign):
        pts = [np.array([t0, x0])]
        p = pts[0].copy()
        for _ in range(n_steps):
            k1 = rhs(p)
            k2 = rhs(p + 0.5 * sign * ds * k1)
            k3 = rhs(p + 0.5 * sign * ds * k2)
            k4 = rhs(p + sign * ds * k3)
            p = p + sign * ds * (k1 + 2 * k2 + 2 * k3 + k4) / 6
            if not st.t[0] <= p[0] <= st.t[-1]:
                break
            if not st.periodic and not st.x[0] <= p[1] <= st.x[-1]:
                break
            pts.append(p.copy())
        return pts

    back = run(-1.0)[::-1]
    fwd = run(1.0)[1:]
    return np.array(back + fwd)
