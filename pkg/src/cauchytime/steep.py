"""Steep temporal functions built from cone bumps.

The construction works band by band in a reference Cauchy time T.  For an
integer a, S_a is the discrete level surface of T (minimal nodes of
{T >= a}) and the band between S_{a-1} and S_a hosts the apexes of a fat
cone covering of S_a.  Each covering pair (p', p) carries a steep forward
cone function: a sum of cone bumps with apexes in J+(p'), steep on the part
of J+(p) below S_{a+1} and cut off smoothly before S_{a+2}.  Summing the
cone functions of one band, with constants escalated against the previous
band, gives the band field h_a; the sum over bands is steep everywhere.

Bumps are ``exp(-l^2 / tau^2)`` in the future of their apex, where tau is
the time separation and ``l`` a length tied to the grid spacing; written
in chart units the plain ``exp(-1 / tau^2)`` is far below double precision
at grid-scale separations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fields
from .causal import CausalGraph, build_causal_graph, time_separation_from, unpack
from .geroch import level_band, verify_time_function
from .spacetime import ConfigurationError, SampledSpacetime, SurfaceGraph, light_slope, time_reversed

log = logging.getLogger(__name__)

CONSTANT_CAP = 1e6
CONSTANT_GRID = 0.5
TOL_H_CONSTANT = 0.1  # tol_h = C * (h_t + h_x), from scripts/calibrate_tolerance.py


class SynthesisFailure(RuntimeError):
    """A constructed field failed one of its checks; ``prop`` names the
    property, ``node`` a failing grid index, ``trace`` the synthesis log."""

    def __init__(self, message, prop=None, node=None, trace=()):
        super().__init__(message)
        self.prop = prop
        self.node = node
        self.trace = list(trace)


class RefinementNeeded(SynthesisFailure):
    """The grid is too coarse for the requested construction."""


class PreconditionError(ValueError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


def tol_h(st: SampledSpacetime, scale=1.0):
    return scale * TOL_H_CONSTANT * (abs(st.h_t) + abs(st.h_x))


@dataclass
class SteepParams:
    bump_length: float = 2.0        # bump length in units of h_t
    band_rows: int = 4              # sub-band width is below half of this
    max_depth_rows: int = 8         # deepest covering apex below the surface
    separation: str = "interval"    # "interval" (closed form) or "graph" (longest path)
    cap: float = CONSTANT_CAP
    grid: float = CONSTANT_GRID


# ---------------------------------------------------------------- gradients


def _grad(st, f):
    return fields.gradient(st, np.nan_to_num(np.asarray(f, dtype=float).reshape(st.shape)))


def _pair(ginv, u, v):
    return np.einsum("...a,...ab,...b->...", u, ginv, v)


def pick_constant(st: SampledSpacetime, f, tau, K, grid=CONSTANT_GRID, cap=CONSTANT_CAP):
    """Smallest c >= 1 on the ``grid`` lattice with g(d(f + c tau), d(f + c tau)) < -1
    on every node of K (boolean grid mask or flat grid indices).

    Per node the condition is a quadratic C c^2 + 2 B c + (A + 1) < 0 with
    C = g(dtau, dtau) < 0; it holds exactly for c above the larger root.
    """
    K = _as_mask(st, K)
    if not K.any():
        return 1.0
    ginv = fields.inverse_metric(st)[K]
    dtau = _grad(st, tau)[K]
    df = _grad(st, f)[K] if f is not None else np.zeros_like(dtau)
    A = _pair(ginv, df, df)
    B = _pair(ginv, df, dtau)
    C = _pair(ginv, dtau, dtau)
    bad = ~(C < 0)
    if bad.any():
        node = int(np.flatnonzero(K.reshape(-1))[np.argmax(bad)])
        raise PreconditionError(f"gradient of tau is not timelike at grid node {st.unindex(node)}", node)
    D = B * B - C * (A + 1.0)
    root = np.where(D > 0, (B + np.sqrt(np.maximum(D, 0.0))) / -C, -np.inf)
    r = float(root.max())
    c = max(1.0, (math.floor(r / grid) + 1) * grid) if np.isfinite(r) else 1.0
    # roundoff guard: the quadratic must really be below -1 at c
    while np.any(A + 2 * B * c + C * c * c >= -1.0):
        c += grid
        if c > cap:
            break
    if c > cap:
        raise SynthesisFailure(f"constant {c:.3g} exceeds the escalation cap {cap:g}", "constant")
    return c


def _as_mask(st, K):
    K = np.asarray(K)
    if K.dtype == bool:
        return K.reshape(st.shape)
    m = np.zeros(st.n, dtype=bool)
    m[K.astype(np.int64)] = True
    return m.reshape(st.shape)


# ---------------------------------------------------------------- context


class SynthesisContext:
    """Shared state for one chart: reference time, closures as grid masks,
    level surfaces and bump fields (cached by apex)."""

    def __init__(self, graph: CausalGraph, t_ref, params: SteepParams | None = None):
        self.graph = graph
        self.st = graph.st
        self.params = params or SteepParams()
        # band membership must not depend on roundoff in the last bits
        self.T = np.round(np.asarray(t_ref, dtype=float).reshape(self.st.shape), 10)
        self.Tn = graph.from_grid(self.T)
        self.ginv = fields.inverse_metric(self.st)
        self.interior = fields.interior_mask(self.st)
        self.trace: list[str] = []
        self._bumps: dict = {}
        self._bands: dict = {}

    # node <-> grid
    def grid_mask(self, node_mask):
        out = np.zeros(self.st.n, dtype=bool)
        out[self.graph.nodes] = node_mask
        return out.reshape(self.st.shape)

    def node_of(self, k):
        return int(self.graph.grid_to_node[k])

    def future(self, k):
        g = self.graph
        return self.grid_mask(unpack(g.jplus[self.node_of(k)], g.n))

    def chrono_future(self, k):
        g = self.graph
        return self.grid_mask(unpack(g.iplus[self.node_of(k)], g.n))

    def chrono(self, p, q):
        g = self.graph
        b = self.node_of(q)
        return bool((g.iplus[self.node_of(p)][b // 64] >> np.uint64(b % 64)) & np.uint64(1))

    def surface(self, level):
        """Grid indices of the discrete level surface S_level (empty beyond the chart)."""
        if level not in self._bands:
            nodes = level_band(self.T, self.graph, level)
            self._bands[level] = self.graph.nodes[nodes]
        return self._bands[level]

    def _union(self, bits, grid_nodes):
        g = self.graph
        if len(grid_nodes) == 0:
            return np.zeros(self.st.shape, dtype=bool)
        rows = bits[g.grid_to_node[grid_nodes]]
        return self.grid_mask(unpack(np.bitwise_or.reduce(rows, axis=0), g.n))

    def future_of_surface(self, level):
        s = self.surface(level)
        if len(s) == 0:
            # surface below the chart: everything is to its future
            return self.st.included.copy() if level <= np.nanmin(self.T) else np.zeros(self.st.shape, bool)
        return self._union(self.graph.jplus, s)

    def past_of_surface(self, level):
        s = self.surface(level)
        if len(s) == 0:
            return self.st.included.copy() if level > np.nanmax(self.T) else np.zeros(self.st.shape, bool)
        return self._union(self.graph.jminus, s)

    # fields
    def bump(self, k):
        """Cone bump exp(-l^2 / tau^2) with apex at grid node k."""
        if k not in self._bumps:
            st = self.st
            if self.params.separation == "graph":
                tau = self.graph.to_grid(time_separation_from(self.graph, self.node_of(k)), fill=-np.inf)
                chrono = self.chrono_future(k)
                tau2 = np.where(chrono & np.isfinite(tau), tau, 0.0) ** 2
            else:
                tau2 = np.maximum(st.flat_interval_sq(k), 0.0)
                tau2 = np.where(st.included, tau2, 0.0)
            ell = self.params.bump_length * st.h_t
            with np.errstate(divide="ignore", over="ignore"):
                j = np.where(tau2 > 0, np.exp(-(ell * ell) / np.where(tau2 > 0, tau2, 1.0)), 0.0)
            self._bumps[k] = j
        return self._bumps[k]

    def grad(self, f):
        return _grad(self.st, f)

    def margin(self, f):
        d = self.grad(f)
        return -_pair(self.ginv, d, d)

    def past_timelike(self, f):
        d = self.grad(f)
        m = -_pair(self.ginv, d, d)
        rate = np.einsum("...a,...a->...", d, self.st.orientation)
        return (m > 0) & (rate > 0)

    def active(self, f):
        """Nodes where f or its finite-difference gradient is nonzero."""
        d = self.grad(f)
        return self.st.included & ((f != 0) | np.any(d != 0, axis=-1))

    def cutoff(self, a):
        """1 on J-(S_{a+1}), 0 from S_{a+2} on, quintic smoothstep in T between."""
        # the plateau reaches one node past J-(S_{a+1}) so that difference
        # stencils centred below the surface see mu = 1
        near = _dilate(self.past_of_surface(a + 1), self.st.periodic) & self.st.included
        lo = float(np.max(self.T[near]))
        up = self.surface(a + 2)
        hi = float(np.min(self.T.reshape(-1)[up])) if len(up) else np.inf
        if not hi > lo:
            return None
        if not np.isfinite(hi):
            return np.ones(self.st.shape)
        mu = 1.0 - fields.smoothstep((self.T - lo) / (hi - lo))
        return np.where(self.st.included, mu, 0.0)

    def log(self, msg):
        self.trace.append(msg)
        log.debug(msg)


def _dilate(mask, periodic):
    out = mask.copy()
    out[1:] |= mask[:-1]
    out[:-1] |= mask[1:]
    if periodic:
        out |= np.roll(mask, 1, axis=1) | np.roll(mask, -1, axis=1)
    else:
        out[:, 1:] |= mask[:, :-1]
        out[:, :-1] |= mask[:, 1:]
    return out


# ---------------------------------------------------------------- coverings


@dataclass
class FatConeCovering:
    pairs: list                     # [(p_inner, p)] grid indices
    surface: np.ndarray             # grid indices of the covered surface nodes
    multiplicity: np.ndarray        # per surface node: # of i with node in I+(p_i)
    multiplicity_inner: np.ndarray  # same for I+(p'_i)

    @property
    def valid(self):
        return bool(np.all(self.multiplicity >= 1) and np.all(self.multiplicity_inner >= 1))

    def __len__(self):
        return len(self.pairs)


def surface_nodes(st: SampledSpacetime, S: SurfaceGraph):
    """Per column, the first included node at or above the surface."""
    out = []
    for j in range(st.nx):
        u = S.u[j]
        if np.isnan(u):
            continue
        i = int(np.ceil((u - st.t[0]) / st.h_t - 1e-9))
        while i < st.nt and not st.included[i, j]:
            i += 1
        if 0 <= i < st.nt:
            out.append(st.index(i, j))
    return np.array(out, dtype=np.int64)


def _certificate(ctx, pairs, surf):
    g = ctx.graph
    cols = g.grid_to_node[surf]
    mult = np.zeros(len(surf), dtype=np.int64)
    mult_in = np.zeros(len(surf), dtype=np.int64)
    for pin, p in pairs:
        fut = unpack(g.iplus[ctx.node_of(p)], g.n)
        fut_in = unpack(g.iplus[ctx.node_of(pin)], g.n)
        mult += fut[cols]
        mult_in += fut_in[cols]
    return mult, mult_in


def _greedy_cover(ctx, surf, allowed, depths):
    """Left-to-right sweep: for the first uncovered surface node place p at
    the deepest admissible depth, shifted right as far as the footprint allows,
    and p' one row below p."""
    st = ctx.st
    g = ctx.graph
    order = sorted(surf.tolist(), key=lambda k: (k % st.nx, k // st.nx))
    covered = set()
    pairs = []
    surf_nodes = g.grid_to_node[np.array(order)]
    for s in order:
        if s in covered:
            continue
        i_s, j_s = st.unindex(s)
        choice = None
        for d in depths:
            for shift in range(d - 1, -d, -1):
                j = j_s + shift
                if st.periodic:
                    j %= st.nx
                elif not 0 <= j < st.nx:
                    continue
                ip, ipp = i_s - d, i_s - d - 1
                if ipp < 0:
                    continue
                p, pin = st.index(ip, j), st.index(ipp, j)
                if not (allowed[ip, j] and allowed[ipp, j]):
                    continue
                if ctx.node_of(p) < 0 or ctx.node_of(pin) < 0:
                    continue
                if ctx.chrono(p, s) and ctx.chrono(pin, p):
                    choice = (pin, p)
                    break
            if choice:
                break
        if choice is None:
            raise ConfigurationError(
                f"cannot place a covering apex below surface node {st.unindex(s)} inside the chart band")
        pairs.append(choice)
        fut = unpack(g.iplus[ctx.node_of(choice[1])], g.n)
        covered.update(int(order[i]) for i in np.flatnonzero(fut[surf_nodes]))
        covered.add(s)
    return pairs


def fat_cone_covering(graph: CausalGraph, S, depth: float, ctx: SynthesisContext | None = None):
    """Cover the surface by chronological futures of apexes placed ``depth``
    below it (rounded to rows); inner apexes one row lower."""
    ctx = ctx or SynthesisContext(graph, fields.coordinate_time(graph.st))
    st = graph.st
    surf = surface_nodes(st, S) if isinstance(S, SurfaceGraph) else np.asarray(S, dtype=np.int64)
    d = max(1, int(round(depth / st.h_t)))
    pairs = _greedy_cover(ctx, surf, st.included, [d])
    mult, mult_in = _certificate(ctx, pairs, surf)
    cov = FatConeCovering(pairs, surf, mult, mult_in)
    if not cov.valid:
        raise ConfigurationError("fat cone covering certificate failed")
    return cov


def band_covering(ctx: SynthesisContext, a):
    """Fat cone covering of S_a with both apexes in the band between S_{a-1} and S_a."""
    surf = ctx.surface(a)
    if len(surf) == 0:
        raise ConfigurationError(f"level {a} has no surface nodes in the chart")
    allowed = ctx.future_of_surface(a - 1) & ctx.past_of_surface(a)
    depths = list(range(ctx.params.max_depth_rows, 0, -1))
    pairs = _greedy_cover(ctx, surf, allowed, depths)
    mult, mult_in = _certificate(ctx, pairs, surf)
    cov = FatConeCovering(pairs, surf, mult, mult_in)
    if not cov.valid:
        raise ConfigurationError(f"covering of S_{a} failed its certificate")
    return cov


# ---------------------------------------------------------------- cone functions


@dataclass
class ConeFunction:
    field: np.ndarray
    a: int
    p_inner: int
    p: int
    apexes: list
    constants: list
    checks: dict = field(default_factory=dict)


def _fail(ctx, prop, mask, what):
    node = int(np.flatnonzero(mask.reshape(-1))[0])
    msg = f"{what}: property '{prop}' fails at grid node {ctx.st.unindex(node)}"
    ctx.log("FAIL " + msg)
    raise SynthesisFailure(msg, prop, node, ctx.trace)


def steep_cone_function(ctx: SynthesisContext, a, p_inner, p, terminal=False) -> ConeFunction:
    """Steep forward cone function for the pair p' << p at level a.

    Sub-bands of one row are swept upward from p; whenever the running sum
    fails to be steep on J+(p) or past timelike in the current sub-band,
    bumps with apexes just below the failing nodes (inside J+(p')) are added
    with a constant from :func:`pick_constant`.  Outside the final band the
    sum is multiplied by the cutoff between S_{a+1} and S_{a+2}.
    """
    st, T, prm = ctx.st, ctx.T, ctx.params
    if not ctx.chrono(p_inner, p):
        raise PreconditionError(f"inner apex {st.unindex(p_inner)} is not chronologically before {st.unindex(p)}")
    Jp = ctx.future(p)
    Jpp = ctx.future(p_inner)
    if terminal:
        below = st.included.copy()
        mu = np.ones(st.shape)
    else:
        below = ctx.past_of_surface(a + 1)
        mu = ctx.cutoff(a)
        if mu is None:
            raise SynthesisFailure(f"no room for the cutoff above S_{a + 1}", "support", None, ctx.trace)
    target = Jp & below & ctx.interior
    check_zone = below & ctx.interior

    ip, jp = st.unindex(p)
    col = T[:, jp]
    step = max(1, prm.band_rows // 2 - 1)
    levels = [col[i] for i in range(ip, st.nt, step) if np.isfinite(col[i])]
    tmax = float(np.nanmax(np.where(target, T, -np.inf)))
    levels = [lv for lv in levels if lv <= tmax] + [np.inf]

    h = np.zeros(st.shape)
    apexes, constants = [], []
    for k in range(1, len(levels)):
        lo, hi = levels[k - 1] if k > 1 else -np.inf, levels[k]
        band = (T >= lo) & (T < hi)
        need_steep = target & band
        if k == 1:
            tau = ctx.bump(p_inner)
            c = pick_constant(st, None, tau, need_steep, prm.grid, prm.cap)
            h = c * tau
            apexes.append([p_inner])
            constants.append(c)
            continue
        m = ctx.margin(h)
        bad = need_steep & ~(m > 1.0)
        bad |= check_zone & band & ctx.active(h) & ~ctx.past_timelike(h)
        if not bad.any():
            continue
        new = _sub_apexes(ctx, bad, Jpp)
        tau = sum(ctx.bump(x) for x in new)
        c = pick_constant(st, h, tau, bad, prm.grid, prm.cap)
        h = h + c * tau
        apexes.append(new)
        constants.append(c)

    h = mu * h
    # value floor on the next surface
    s_next = ctx.surface(a + 1)
    if len(s_next):
        on = np.zeros(st.n, dtype=bool)
        on[s_next] = True
        on = on.reshape(st.shape) & Jp
        if on.any():
            vmin = float(h[on].min())
            if vmin <= 0:
                _fail(ctx, "surface value", on & (h <= 0), f"cone function ({a}, {st.unindex(p)})")
            if vmin <= 1.0:
                s = 1.05 / vmin
                if s > prm.cap:
                    raise SynthesisFailure("surface scaling exceeds the escalation cap", "surface value",
                                           None, ctx.trace)
                h = s * h
                constants.append(s)
    cf = ConeFunction(h, a, p_inner, p, apexes, constants)
    cf.checks = check_cone_function(ctx, cf, terminal)
    return cf


def _sub_apexes(ctx, bad, Jpp):
    """Greedy apexes below failing nodes: same column, as deep as possible
    while staying in J+(p')."""
    st, T = ctx.st, ctx.T
    g = ctx.graph
    chosen = []
    covered = np.zeros(st.shape, dtype=bool)
    for q in np.flatnonzero(bad.reshape(-1)):
        if covered.reshape(-1)[q]:
            continue
        iq, jq = st.unindex(q)
        pick = None
        for d in range(ctx.params.max_depth_rows, 0, -1):
            i = iq - d
            if i < 0:
                continue
            x = st.index(i, jq)
            if Jpp[i, jq] and ctx.node_of(x) >= 0 and ctx.chrono(x, q):
                pick = x
                break
        if pick is None:
            _fail(ctx, "steep on J(p, S)", bad & ~covered, "sub-band induction found no apex")
        chosen.append(pick)
        covered |= ctx.chrono_future(pick)
    return chosen


def check_cone_function(ctx: SynthesisContext, cf: ConeFunction, terminal=False):
    """The four defining properties, re-verified on the grid."""
    st = ctx.st
    h = cf.field
    what = f"cone function (a={cf.a}, p={st.unindex(cf.p)})"
    Jp = ctx.future(cf.p)
    support = st.included & (h != 0)
    allowed = ctx.future(cf.p_inner)
    if not terminal:
        # on a truncated chart S_{a+2} may leave through a side edge, so the
        # condition is vanishing on its future rather than lying in its past
        allowed = allowed & ~ctx.future_of_surface(cf.a + 2)
    if np.any(support & ~allowed):
        _fail(ctx, "support", support & ~allowed, what)
    s_next = ctx.surface(cf.a + 1)
    on = np.zeros(st.n, dtype=bool)
    on[s_next] = True
    on = on.reshape(st.shape) & Jp
    if np.any(on & ~(h > 1.0)):
        _fail(ctx, "surface value", on & ~(h > 1.0), what)
    below = st.included if terminal else ctx.past_of_surface(cf.a + 1)
    zone = below & ctx.interior & ctx.active(h)
    pt = ctx.past_timelike(h)
    if np.any(zone & ~pt):
        _fail(ctx, "past timelike", zone & ~pt, what)
    m = ctx.margin(h)
    tgt = Jp & below & ctx.interior
    if np.any(tgt & ~(m > 1.0)):
        _fail(ctx, "steep on J(p, S)", tgt & ~(m > 1.0), what)
    return {
        "support": True, "surface_value": True, "past_timelike": True,
        "min_margin": float(m[tgt].min()) if tgt.any() else np.inf,
    }


# ---------------------------------------------------------------- bands


@dataclass
class BandField:
    field: np.ndarray
    a: int
    covering: FatConeCovering
    constants: list
    terminal: bool
    min_margin: float


def globalize(ctx: SynthesisContext, a, covering: FatConeCovering, base=None,
              terminal=False, floor=None) -> BandField:
    """h_a = (|a|+1) sum_i c_i h_{a,i}.  With a base field (the previous band)
    each c_i is raised until base + (|a|+1) c_i h_{a,i} is steep on J+(p_i)
    between S_a and S_{a+1}."""
    st = ctx.st
    prm = ctx.params
    weight = abs(a) + 1
    comps = [steep_cone_function(ctx, a, pin, p, terminal) for pin, p in covering.pairs]
    between = ctx.future_of_surface(a) & (st.included if terminal else ctx.past_of_surface(a + 1))
    between &= ctx.interior
    cs = []
    for (pin, p), cf in zip(covering.pairs, comps):
        if base is None:
            cs.append(1.0)
            continue
        K = ctx.future(p) & between
        # the escalation is bounded relative to the size of the base it must
        # dominate; band sizes grow geometrically with the band index
        cap = prm.cap * max(1.0, float(np.max(np.abs(base[K])))) if K.any() else prm.cap
        c = pick_constant(st, base, weight * cf.field, K, prm.grid, cap)
        cs.append(max(c, _edge_constant(ctx, base, weight * cf.field, K, prm.grid, cap)))
    h = weight * sum(c * cf.field for c, cf in zip(cs, comps))
    floor = weight if floor is None else max(floor, weight)
    s_next = ctx.surface(a + 1)
    if len(s_next):
        vmin = float(h.reshape(-1)[s_next].min())
        if vmin <= floor:
            s = 1.01 * floor / vmin
            if s > prm.cap:
                raise SynthesisFailure("band scaling exceeds the escalation cap", "surface value", None,
                                       ctx.trace)
            h = s * h
            cs = [s * c for c in cs]
    total = h if base is None else base + h
    m = ctx.margin(total)
    if np.any(between & ~(m > 1.0)):
        _fail(ctx, "joint band steepness", between & ~(m > 1.0), f"band {a}")
    check_band(ctx, a, h, floor, terminal)
    mm = float(m[between].min()) if between.any() else np.inf
    ctx.log(f"band {a}: {len(covering)} cone pairs, constants "
            f"[{min(cs):.4g}, {max(cs):.4g}], joint min margin {mm:.4g}"
            + (" (final band)" if terminal else ""))
    return BandField(h, a, covering, cs, terminal, mm)


def _edge_constant(ctx, base, h, K, grid, cap):
    """Smallest lattice c with base + c h increasing along every causal edge
    leaving K on which h itself increases."""
    g = ctx.graph
    fb = g.from_grid(np.nan_to_num(base))
    fh = g.from_grid(np.nan_to_num(h))
    src_in = K.reshape(-1)[g.nodes[g.src]]
    db = fb[g.dst] - fb[g.src]
    dh = fh[g.dst] - fh[g.src]
    sel = src_in & (db <= 0) & (dh > 0)
    if not sel.any():
        return 1.0
    r = float(np.max(-db[sel] / dh[sel]))
    c = max(1.0, (math.floor(r / grid) + 1) * grid)
    if c > cap:
        raise SynthesisFailure(f"edge constant {c:.3g} exceeds the escalation cap", "edge monotonicity")
    return c


def check_band(ctx: SynthesisContext, a, h, floor, terminal=False):
    st = ctx.st
    support = st.included & (h != 0)
    allowed = ctx.future_of_surface(a - 1)
    if not terminal:
        allowed = allowed & ~ctx.future_of_surface(a + 2)
    if np.any(support & ~allowed):
        _fail(ctx, "band support", support & ~allowed, f"band {a}")
    s_next = ctx.surface(a + 1)
    on = np.zeros(st.n, dtype=bool)
    on[s_next] = True
    on = on.reshape(st.shape)
    if np.any(on & ~(h > floor)):
        _fail(ctx, "band surface value", on & ~(h > floor), f"band {a}")
    below = st.included if terminal else ctx.past_of_surface(a + 1)
    zone = below & ctx.interior & ctx.active(h)
    if np.any(zone & ~ctx.past_timelike(h)):
        _fail(ctx, "band past timelike", zone & ~ctx.past_timelike(h), f"band {a}")


def plan_bands(ctx: SynthesisContext):
    """Coverings for a = 0, 1, ... while the chart still holds a covering
    band and room for the next cutoff."""
    plans = []
    a = 0
    while True:
        try:
            cov = band_covering(ctx, a)
        except ConfigurationError:
            break
        plans.append((a, cov))
        if ctx.cutoff(a) is None or not len(ctx.surface(a + 1)):
            break
        a += 1
    if not plans:
        raise SynthesisFailure("no level surface of the reference time admits a covering", "covering",
                               None, ctx.trace)
    return plans


def _half_sum(ctx: SynthesisContext):
    """sum_n h_n over the future bands; the last planned band is not cut off."""
    plans = plan_bands(ctx)
    tmax = float(np.nanmax(ctx.T))
    total = np.zeros(ctx.st.shape)
    base = None
    bands = []
    for idx, (a, cov) in enumerate(plans):
        terminal = idx == len(plans) - 1
        floor = abs(a) + 2
        if terminal:
            floor = max(floor, math.floor(tmax) + 2)
        try:
            bf = globalize(ctx, a, cov, base=base, terminal=terminal, floor=floor)
        except SynthesisFailure as exc:
            ctx.log(f"band {a} failed: {exc}")
            exc.trace = list(ctx.trace)
            raise
        bands.append(bf)
        total = total + bf.field
        base = bf.field
    return total, bands


# ---------------------------------------------------------------- t1


@dataclass
class SteepResult:
    field: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    bands_plus: list
    bands_minus: list
    trace: list
    checks: dict


def steep_temporal(graph: CausalGraph, t_ref, params: SteepParams | None = None,
                   tolerance_scale=1.0, check=True) -> SteepResult:
    """t1 = t1+ - t1-: the future half from bands a >= 0 of t_ref, the past
    half by the same construction on the time-reversed chart."""
    st = graph.st
    ctx = SynthesisContext(graph, t_ref, params)
    ctx.log(f"future half: chart {st.nt}x{st.nx}, t_ref in [{np.nanmin(ctx.T):.4g}, {np.nanmax(ctx.T):.4g}]")
    plus, bands_p = _half_sum(ctx)

    st_r = time_reversed(st)
    graph_r = build_causal_graph(st_r, graph.radius)
    T_r = -np.asarray(t_ref, dtype=float).reshape(st.shape)[::-1]
    ctx_r = SynthesisContext(graph_r, T_r, params)
    ctx_r.log("past half (time-reversed chart)")
    minus_r, bands_m = _half_sum(ctx_r)
    minus = minus_r[::-1]

    t1 = np.where(st.included, plus - minus, np.nan)
    trace = ctx.trace + ctx_r.trace
    res = SteepResult(t1, plus, minus, bands_p, bands_m, trace, {})
    if check:
        res.checks = check_steep(graph, t1, t_ref, tol_h(st, tolerance_scale))
        trace.append("post-checks: " + ", ".join(f"{k}={v}" for k, v in res.checks.items()))
        if not res.checks["passed"]:
            raise SynthesisFailure(f"steep post-checks failed: {res.checks}", "post-check", None, trace)
    return res


def check_steep(graph: CausalGraph, t1, t_ref, tol):
    st = graph.st
    interior = fields.interior_mask(st)
    m = fields.steepness_margin(t1, st)
    min_margin = float(np.nanmin(m[interior]))
    viol = verify_time_function(t1, graph)
    T = np.asarray(t_ref, dtype=float).reshape(st.shape)
    beyond = st.included & (T >= 1)
    below = st.included & (T <= -1)
    band_ok = bool(np.all(t1[beyond] > np.floor(T[beyond]) + 1)) and \
        bool(np.all(-t1[below] > np.floor(-T[below]) + 1))
    return {
        "min_margin": min_margin,
        "margin_ok": min_margin >= 1 - tol,
        "violations": viol,
        "band_bound": band_ok,
        "passed": min_margin >= 1 - tol and viol == 0 and band_ok,
    }


# ---------------------------------------------------------------- ramps


def ramp_up(y):
    """0 for y <= 0, slope rising smoothly to 1 on [0, 1], then y - 1/2.
    The slope is the quintic smoothstep, so the ramp is C^3."""
    y = np.asarray(y, dtype=float)
    z = np.clip(y, 0.0, 1.0)
    inner = z ** 4 * (z * (z - 3.0) + 2.5)
    return np.where(y >= 1.0, y - 0.5, inner)


def ramp_down(y):
    """y for y <= 0, slope falling smoothly to 0 on [0, 1], then constant 1/2."""
    y = np.asarray(y, dtype=float)
    return np.where(y <= 0, y, np.where(y >= 1.0, 0.5, y - ramp_up(y)))


def phi_plus(y):
    """Increasing, 0 below 0, phi(1) = 1, slope 2 from 1 on: phi(y) >= y there."""
    return 2.0 * ramp_up(y)


def phi_minus(y):
    return -phi_plus(-np.asarray(y, dtype=float))


# ---------------------------------------------------------------- bounded functions


def _restrict(st: SampledSpacetime, mask) -> SampledSpacetime:
    from dataclasses import replace

    inc = st.included & mask
    return replace(st, included=inc, volume=np.where(inc, st.volume, 0.0))


def _flip(f):
    return np.asarray(f)[::-1]


def _surface_mask(st, nodes):
    m = np.zeros(st.n, dtype=bool)
    m[np.asarray(nodes, dtype=np.int64)] = True
    return m.reshape(st.shape)


def _node_values(st, f, nodes):
    """Surface data as one value per surface node (scalar, per-column array or grid)."""
    f = np.asarray(f, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    if f.ndim == 0:
        return np.full(nodes.size, float(f))
    if f.shape == (st.nx,):
        return f[nodes % st.nx]
    return f.reshape(-1)[nodes]


def _grid_ceil(r, grid):
    return (math.floor(r / grid) + 1) * grid


@dataclass
class BoundedPart:
    field: np.ndarray
    covering: FatConeCovering
    constants: list


def bounded_plus(graph: CausalGraph, t1, surf, f_vals, params: SteepParams | None = None) -> BoundedPart:
    """t1 + sum_i c_i phi_i(k_i tau_i): per covering pair, k_i tau_i is the
    scaled time separation from p'_i (steep on the future of C_i = J+(p_i) on
    the surface), phi_i vanishes below m_i - 1 and has slope 1 above m_i, and
    c_i lifts the sum above f on C_i."""
    prm = params or SteepParams()
    st = graph.st
    ctx = SynthesisContext(graph, np.zeros(st.shape), prm)
    surf = np.asarray(surf, dtype=np.int64)
    f_vals = np.asarray(f_vals, dtype=float)
    depths = list(range(prm.max_depth_rows, 0, -1))
    pairs = _greedy_cover(ctx, surf, st.included, depths)
    mult, mult_in = _certificate(ctx, pairs, surf)
    cov = FatConeCovering(pairs, surf, mult, mult_in)
    if not cov.valid:
        raise SynthesisFailure("covering certificate failed", "covering", None, ctx.trace)
    t1 = np.nan_to_num(np.asarray(t1, dtype=float).reshape(st.shape))
    on_surf = _surface_mask(st, surf)
    total = t1.copy()
    consts = []
    for pin, p in pairs:
        tau = np.sqrt(np.maximum(st.flat_interval_sq(pin), 0.0))
        tau = np.where(st.included & ctx.chrono_future(pin), tau, 0.0)
        Ci = on_surf & ctx.future(p)
        fut_C = ctx._union(graph.jplus, np.flatnonzero(Ci.reshape(-1))) & ctx.interior
        k = pick_constant(st, None, tau, fut_C, prm.grid, prm.cap) if fut_C.any() else 1.0
        k = max(k, 2.0 / float(tau[Ci].min()))
        ti = k * tau
        m_i = float(ti[Ci].min())
        s_i = np.where(tau > 0, ramp_up(ti - (m_i - 1.0)), 0.0)
        sel = np.isin(surf, np.flatnonzero(Ci.reshape(-1)))
        need = f_vals[sel] - t1.reshape(-1)[surf[sel]]
        r = float(np.max(need / s_i.reshape(-1)[surf[sel]]))
        c = max(1.0, _grid_ceil(r * (1 + 1e-9) if r > 0 else r, prm.grid))
        total = total + c * s_i
        consts.append(c)
    return BoundedPart(np.where(st.included, total, np.nan), cov, consts)


@dataclass
class BoundedResult:
    plus: np.ndarray | None
    minus: np.ndarray | None
    checks: dict


def steep_bounded(graph: CausalGraph, S_plus, f_plus, t_ref, S_minus=None, f_minus=None,
                  t1=None, params: SteepParams | None = None, tolerance_scale=1.0) -> BoundedResult:
    """Steep Cauchy temporal t2+ with t2+ > f+ on S+ and t2+ > t_ref/2 - 1 on
    J+(S+), and the time-dual t2- for (S-, f-).  Surfaces may be SurfaceGraph
    objects or arrays of grid indices; f may be a scalar, one value per column,
    or a grid field."""
    st = graph.st
    tol = tol_h(st, tolerance_scale)
    sp = surface_nodes(st, S_plus) if isinstance(S_plus, SurfaceGraph) else np.asarray(S_plus)
    sm = None
    if S_minus is not None:
        sm = surface_nodes(st, S_minus) if isinstance(S_minus, SurfaceGraph) else np.asarray(S_minus)
        ctx = SynthesisContext(graph, np.zeros(st.shape))
        reach = ctx._union(graph.iplus, sm)
        if not np.all(reach.reshape(-1)[sp]):
            raise PreconditionError("S+ is not contained in the chronological future of S-")
    if t1 is None:
        t1 = steep_temporal(graph, t_ref, params, tolerance_scale).field
    T = np.asarray(t_ref, dtype=float).reshape(st.shape)
    checks = {}
    plus = minus = None
    if sp is not None and len(sp):
        fv = _node_values(st, f_plus, sp)
        plus = bounded_plus(graph, t1, sp, fv, params).field
        checks.update(_bounded_checks(graph, plus, T, sp, fv, tol, "plus"))
    if sm is not None and len(sm):
        st_r = time_reversed(st)
        g_r = build_causal_graph(st_r, graph.radius)
        sm_r = _reverse_nodes(st, sm)
        fv = _node_values(st, f_minus, sm)
        part = bounded_plus(g_r, -_flip(t1), sm_r, -fv, params)
        minus = -_flip(part.field)
        checks.update(_bounded_checks(g_r, -_flip(minus), -_flip(T), sm_r, -fv, tol, "minus"))
    checks["passed"] = all(v for k, v in checks.items() if k.endswith("_ok"))
    return BoundedResult(plus, minus, checks)


def _reverse_nodes(st, nodes):
    i, j = np.divmod(np.asarray(nodes, dtype=np.int64), st.nx)
    return (st.nt - 1 - i) * st.nx + j


def _bounded_checks(graph, f, T, surf, fv, tol, tag):
    st = graph.st
    ctx = SynthesisContext(graph, np.zeros(st.shape))
    above = ctx._union(graph.jplus, surf) & np.isfinite(T)
    m = fields.steepness_margin(f, st)
    interior = fields.interior_mask(st)
    return {
        f"{tag}_surface_ok": bool(np.all(f.reshape(-1)[surf] > fv)),
        f"{tag}_growth_ok": bool(np.all(f[above] > T[above] / 2 - 1)),
        f"{tag}_margin_ok": bool(np.nanmin(m[interior]) >= 1 - tol),
        f"{tag}_monotone_ok": verify_time_function(f, graph) == 0,
    }


# ---------------------------------------------------------------- adapted


def signed_distance(st: SampledSpacetime, S: SurfaceGraph):
    """Proper time along each spatial column from the surface point of that
    column: positive above S, negative below."""
    lapse = np.sqrt(np.maximum(-st.metric[..., 0, 0], 0.0))
    dt = st.h_t
    cum = np.vstack([np.zeros((1, st.nx)), np.cumsum(0.5 * (lapse[1:] + lapse[:-1]) * dt, axis=0)])
    at_s = np.array([np.interp(S.u[j], st.t, cum[:, j]) for j in range(st.nx)])
    return np.where(st.included, cum - at_s[None, :], np.nan)


def theta_field(delta, collar, slope=2.2):
    """theta = 2 (d + 1) th+ / ((d + 1) th+ - th-) - 1 with d = exp(slope * delta) - 1,
    th+ rising from 0 at delta = -collar to 1 on S and th- rising from -1 on S
    to 0 at delta = +collar.  The bare formula has gradient (1/2) grad d on S;
    the slope factor makes theta steep there.  d + 1 stays positive for any
    collar width, which keeps theta monotone in delta."""
    th_p = fields.smoothstep((delta + collar) / collar)
    th_m = fields.smoothstep(delta / collar) - 1.0
    d = np.expm1(slope * np.asarray(delta, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = 2.0 * (d + 1.0) * th_p / ((d + 1.0) * th_p - th_m) - 1.0
    return theta, th_p, th_m


def side_reference(graph: CausalGraph, S: SurfaceGraph, side=+1, weights=None):
    """Geroch Cauchy time of the region strictly to the future (side=+1) or
    past (side=-1) of S, as a grid field (NaN elsewhere).  ``weights`` is an
    optional positive grid volume to restrict (e.g. a group-averaged one)."""
    from .geroch import VolumeMeasure, geroch_time

    st = graph.st
    delta = signed_distance(st, S)
    sub = _restrict(st, side * np.nan_to_num(delta, nan=-side) > 1e-9 * st.h_t)
    g = build_causal_graph(sub, graph.radius)
    w = (st.volume if weights is None else np.asarray(weights, dtype=float)).reshape(-1)[g.nodes]
    return geroch_time(g, VolumeMeasure(w)), g


@dataclass
class AdaptedResult:
    field: np.ndarray
    theta: np.ndarray
    theta_plus: np.ndarray
    theta_minus: np.ndarray
    delta: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    z_plus: np.ndarray
    z_minus: np.ndarray
    surface: SurfaceGraph
    collar: float
    slope: float
    checks: dict
    trace: list


def _inner_offset(graph, S, delta, theta, collar_rows):
    """Largest row offset k such that theta is steep on the part of the past
    of the shifted surface S + k h_t lying above S.  Between S and that
    surface only theta is guaranteed steep; the covering below it needs at
    least two rows, hence k >= 3."""
    st = graph.st
    ok = fields.steepness_margin(theta, st) > 1.0
    ctx = SynthesisContext(graph, np.zeros(st.shape))
    above = st.included & (np.nan_to_num(delta, nan=-1.0) > 0)
    for k in range(collar_rows, 2, -1):
        target = surface_nodes(st, SurfaceGraph(S.u + k * st.h_t, S.x, S.periodic, S.circumference))
        region = ctx._union(graph.jminus, target) & above
        region = _dilate(region, st.periodic) & above
        if np.all(ok[region]):
            return k
    raise RefinementNeeded("the collar function is not steep three rows away from S; refine the grid")


def _future_side(graph_sub, t_ref, S, k, S_outer, f_outer, params, tolerance_scale):
    st = graph_sub.st
    t1 = steep_temporal(graph_sub, t_ref, params, tolerance_scale)
    S_tilde = SurfaceGraph(S.u + k * st.h_t, S.x, S.periodic, S.circumference)
    near = surface_nodes(st, S_tilde)
    near = near[st.included.reshape(-1)[near]]
    t_plus = bounded_plus(graph_sub, t1.field, near, np.ones(near.size), params)
    outer = surface_nodes(st, S_outer)
    outer = outer[st.included.reshape(-1)[outer]]
    fo = np.maximum(_node_values(st, f_outer, outer), 1.0)
    T_plus = bounded_plus(graph_sub, t1.field, outer, fo, params)
    return t_plus.field, T_plus.field, t1.trace


def adapted_temporal(graph: CausalGraph, S: SurfaceGraph, S_minus: SurfaceGraph, S_plus: SurfaceGraph,
                     f_minus=-1.0, f_plus=1.0, t_minus_ref=None, t_plus_ref=None, weights=None,
                     params: SteepParams | None = None, collar_rows=8, slope=2.2,
                     tolerance_scale=1.0, check=True) -> AdaptedResult:
    """Steep temporal t3 = Z- + s- + theta + s+ + Z+ vanishing on S.

    theta is the collar function built from the signed distance; s+ = phi+(t+)
    and Z+ = phi+(T+) come from bounded steep functions on the region to the
    future of S (t+ > 1 just outside the collar, T+ > max(f+, 1) on S+); s-
    and Z- are their time duals.  Missing reference times are Geroch times of
    the two sides, with ``weights`` as volume if given.
    """
    st = graph.st
    h = st.h_t
    if not S.is_spacelike(light_slope=light_slope(st)):
        raise PreconditionError("S is not spacelike")
    if np.any(S_minus.u >= S.u) or np.any(S_plus.u <= S.u):
        raise PreconditionError("surfaces must satisfy S- < S < S+ column by column")
    # the collar spans at least collar_rows grid rows in every column
    lapse = np.sqrt(-st.metric[..., 0, 0])
    lapse_on_s = np.array([np.interp(S.u[j], st.t, lapse[:, j]) for j in range(st.nx)])
    collar = collar_rows * h * float(lapse_on_s.max())
    if np.any(S.u - (collar_rows + 3) * h < st.t[0]) or np.any(S.u + (collar_rows + 3) * h > st.t[-1]):
        raise RefinementNeeded("no causally convex collar around S fits in the chart at this resolution")
    delta = signed_distance(st, S)
    theta, th_p, th_m = theta_field(delta, collar, slope)
    trace = [f"collar {collar:.4g} ({collar_rows} rows), distance slope {slope}"]

    # future side
    if t_plus_ref is None:
        t_plus_ref, g_up = side_reference(graph, S, +1, weights)
    else:
        g_up = build_causal_graph(_restrict(st, np.isfinite(t_plus_ref)), graph.radius)
    k_up = _inner_offset(graph, S, delta, theta, collar_rows)
    trace.append(f"future inner surface at {k_up} rows above S")
    tp, Tp, tr = _future_side(g_up, t_plus_ref, S, k_up, S_plus, f_plus, params, tolerance_scale)
    trace += ["future side:"] + tr
    up = g_up.st.included
    s_plus = np.where(up, phi_plus(np.nan_to_num(tp)), 0.0)
    z_plus = np.where(up, phi_plus(np.nan_to_num(Tp)), 0.0)

    # past side on the time-reversed chart
    st_r = time_reversed(st)
    S_r = SurfaceGraph(-S.u, S.x, S.periodic, S.circumference)
    Sm_r = SurfaceGraph(-S_minus.u, S.x, S.periodic, S.circumference)
    fm = np.asarray(f_minus, dtype=float)
    fm_r = -(fm if fm.ndim < 2 else fm.reshape(st.shape)[::-1])
    graph_r = build_causal_graph(st_r, graph.radius)
    if t_minus_ref is None:
        wr = None if weights is None else _flip(np.asarray(weights).reshape(st.shape))
        tm_ref_r, g_dn = side_reference(graph_r, S_r, +1, wr)
    else:
        tm_ref_r = -_flip(np.asarray(t_minus_ref, dtype=float).reshape(st.shape))
        g_dn = build_causal_graph(_restrict(st_r, np.isfinite(tm_ref_r)), graph.radius)
    k_dn = _inner_offset(graph_r, S_r, -_flip(delta), -_flip(theta), collar_rows)
    trace.append(f"past inner surface at {k_dn} rows below S")
    tm_r, Tm_r, tr = _future_side(g_dn, tm_ref_r, S_r, k_dn, Sm_r, fm_r, params, tolerance_scale)
    trace += ["past side (time-reversed):"] + tr
    dn = g_dn.st.included
    s_minus = -_flip(np.where(dn, phi_plus(np.nan_to_num(tm_r)), 0.0))
    z_minus = -_flip(np.where(dn, phi_plus(np.nan_to_num(Tm_r)), 0.0))
    if t_minus_ref is None:
        t_minus_ref = -_flip(tm_ref_r)

    t3 = np.where(st.included, z_minus + s_minus + theta + s_plus + z_plus, np.nan)
    res = AdaptedResult(t3, theta, th_p, th_m, delta, s_plus, s_minus, z_plus, z_minus, S, collar, slope,
                        {}, trace)
    if check:
        res.checks = check_adapted(graph, res, S_minus, S_plus, f_minus, f_plus, t_minus_ref, t_plus_ref,
                                   tol_h(st, tolerance_scale))
        trace.append("post-checks: " + ", ".join(f"{k}={v}" for k, v in res.checks.items()))
        if not res.checks["passed"]:
            raise SynthesisFailure(f"adapted post-checks failed: {res.checks}", "post-check", None, trace)
    return res


def surface_values(res: AdaptedResult, st: SampledSpacetime, S: SurfaceGraph):
    """t3 at the surface point of every column: the collar function evaluated
    at the interpolated distance, plus the outer parts interpolated linearly
    between the bracketing nodes."""
    out = np.empty(st.nx)
    rest = res.z_minus + res.s_minus + res.s_plus + res.z_plus
    for j in range(st.nx):
        d = float(np.interp(S.u[j], st.t, np.nan_to_num(res.delta[:, j])))
        th, _, _ = theta_field(np.array(d), res.collar, res.slope)
        out[j] = float(th) + float(np.interp(S.u[j], st.t, rest[:, j]))
    return out


def level_set_distance(field_values, st: SampledSpacetime, S: SurfaceGraph, level=0.0):
    """Symmetric Hausdorff distance between the extracted level set and S."""
    from scipy.spatial.distance import directed_hausdorff

    from .geroch import level_crossings

    u, _ = level_crossings(field_values, st, level)
    ok = ~np.isnan(u)
    if not ok.any():
        return np.inf
    A = np.stack([st.x[ok], u[ok]], axis=1)
    B = np.stack([S.x, S.u], axis=1)
    return max(directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0])


def check_adapted(graph, res: AdaptedResult, S_minus, S_plus, f_minus, f_plus, t_minus_ref, t_plus_ref, tol):
    st = graph.st
    t3 = res.field
    S = res.surface
    zero = float(np.max(np.abs(surface_values(res, st, S))))
    haus = level_set_distance(t3, st, S)
    inc = st.included
    plateau_up = inc & (res.delta >= res.collar)
    plateau_dn = inc & (res.delta <= -res.collar)
    plateau_ok = bool(np.all(res.theta[plateau_up] == 1.0) and np.all(res.theta[plateau_dn] == -1.0))
    m = fields.steepness_margin(t3, st)
    interior = fields.interior_mask(st)
    min_margin = float(np.nanmin(m[interior]))
    ctx = SynthesisContext(graph, np.zeros(st.shape))
    sp = surface_nodes(st, S_plus)
    sm = surface_nodes(st, S_minus)
    fut = ctx._union(graph.iplus, sp)
    past = ctx._union(graph.iminus, sm)
    tp = np.asarray(t_plus_ref, dtype=float).reshape(st.shape)
    tm = np.asarray(t_minus_ref, dtype=float).reshape(st.shape)
    fa = fut & np.isfinite(tp)
    pa = past & np.isfinite(tm)
    growth_ok = bool(np.all(t3[fa] > tp[fa] / 2 - 2) and np.all(-t3[pa] > -tm[pa] / 2 - 2))
    surf_ok = bool(np.all(t3.reshape(-1)[sp] > _node_values(st, f_plus, sp)) and
                   np.all(-t3.reshape(-1)[sm] > -_node_values(st, f_minus, sm)))
    viol = verify_time_function(t3, graph)
    checks = {
        "zero_on_surface": zero,
        "zero_ok": zero <= 1e-6,
        "hausdorff": haus,
        "hausdorff_ok": haus < 2 * st.h_t,
        "plateau_ok": plateau_ok,
        "min_margin": min_margin,
        "margin_ok": min_margin >= 1 - tol,
        "growth_ok": growth_ok,
        "surface_bound_ok": surf_ok,
        "violations": viol,
        "monotone_ok": viol == 0,
    }
    checks["passed"] = all(v for k, v in checks.items() if k.endswith("_ok"))
    return checks
