"""Discrete causal relation on a sampled spacetime.

Nodes are the included grid events. An edge p -> q joins events within the
stencil radius whose displacement is future causal under the metric averaged
at the segment midpoint. Reachability (J+, J-, I+, I-) is held as packed
uint64 bitsets, one row per node, filled by a sweep over topological levels.

A chain is chronological (p << q) when it contains at least one timelike edge;
this is the discrete counterpart of deforming a causal curve with a timelike
piece into a timelike curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spacetime import SampledSpacetime

EPS_CONE = 1e-6
DEFAULT_RADIUS = 2


class CausalityViolation(RuntimeError):
    def __init__(self, message, cycle_nodes=()):
        super().__init__(message)
        self.cycle_nodes = list(cycle_nodes)


# ---------------------------------------------------------------- bitsets


def n_words(n):
    return (n + 63) // 64


def pack(mask):
    """Pack a boolean array (..., n) into (..., words) uint64."""
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[-1]
    pad = n_words(n) * 64 - n
    if pad:
        mask = np.concatenate([mask, np.zeros(mask.shape[:-1] + (pad,), dtype=bool)], axis=-1)
    b = np.packbits(mask, axis=-1, bitorder="little")
    return np.ascontiguousarray(b).view(np.uint64)


def unpack(bits, n):
    b = np.ascontiguousarray(bits).view(np.uint8)
    return np.unpackbits(b, axis=-1, count=n, bitorder="little").astype(bool)


def _self_bits(n):
    bits = np.zeros((n, n_words(n)), dtype=np.uint64)
    k = np.arange(n)
    bits[k, k // 64] = np.left_shift(np.uint64(1), (k % 64).astype(np.uint64))
    return bits


# ---------------------------------------------------------------- graph


@dataclass
class CausalGraph:
    st: SampledSpacetime
    radius: int
    nodes: np.ndarray          # grid index of each graph node
    src: np.ndarray            # (E,) graph-node indices
    dst: np.ndarray
    timelike: np.ndarray       # (E,) bool
    weight: np.ndarray         # (E,) proper time of the edge displacement
    offset: np.ndarray         # (E, 2) grid offset (di, dj)
    _level: np.ndarray | None = field(default=None, repr=False)
    _cycle: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.grid_to_node = np.full(self.st.n, -1, dtype=np.int64)
        self.grid_to_node[self.nodes] = np.arange(self.nodes.size)
        self._toposort()

    # -- basic accessors
    @property
    def n(self):
        return self.nodes.size

    @property
    def n_edges(self):
        return self.src.size

    @property
    def n_timelike(self):
        return int(self.timelike.sum())

    def node(self, i_t, i_x):
        g = self.st.index(i_t, i_x)
        k = int(self.grid_to_node[g])
        if k < 0:
            raise KeyError(f"grid node ({i_t}, {i_x}) is excluded")
        return k

    def grid_ij(self, k):
        return self.st.unindex(self.nodes[k])

    def coords(self, k):
        """(t, x) of graph nodes, vectorised."""
        i, j = np.divmod(self.nodes[np.asarray(k)], self.st.nx)
        return self.st.t[i], self.st.x[j]

    def to_grid(self, values, fill=np.nan):
        out = np.full(self.st.n, fill, dtype=float)
        out[self.nodes] = values
        return out.reshape(self.st.shape)

    def from_grid(self, grid_values):
        return np.asarray(grid_values, dtype=float).reshape(-1)[self.nodes]

    def mask_to_nodes(self, bits_row):
        return np.flatnonzero(unpack(bits_row, self.n))

    # -- topology
    def _toposort(self):
        n = self.n
        indeg = np.bincount(self.dst, minlength=n)
        order = np.argsort(self.src, kind="stable")
        s_sorted = self.src[order]
        indptr = np.searchsorted(s_sorted, np.arange(n + 1))
        level = np.full(n, -1, dtype=np.int64)
        frontier = np.flatnonzero(indeg == 0)
        lv = 0
        done = 0
        indeg = indeg.copy()
        while frontier.size:
            level[frontier] = lv
            done += frontier.size
            starts, stops = indptr[frontier], indptr[frontier + 1]
            lens = stops - starts
            if lens.sum():
                idx = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(lens.sum())
                targets = self.dst[order[idx]]
                np.subtract.at(indeg, targets, 1)
                cand = np.unique(targets)
                frontier = cand[indeg[cand] == 0]
            else:
                frontier = frontier[:0]
            lv += 1
        if done < n:
            self._level = None
            self._cycle = list(np.flatnonzero(level < 0))
        else:
            self._level = level
            self._cycle = None

    @property
    def is_acyclic(self):
        return self._level is not None

    @property
    def level(self):
        if self._level is None:
            raise CausalityViolation("causal graph has a closed causal chain", self._cycle)
        return self._level

    @cached_property
    def levels(self):
        lv = self.level
        order = np.argsort(lv, kind="stable")
        bounds = np.searchsorted(lv[order], np.arange(lv.max() + 2))
        return [order[bounds[i]:bounds[i + 1]] for i in range(lv.max() + 1)]

    @cached_property
    def topo_order(self):
        return np.concatenate(self.levels)

    def _padded(self, key, other):
        """Padded neighbour table (n, K) of ``other`` endpoints grouped by ``key``."""
        order = np.argsort(key, kind="stable")
        counts = np.bincount(key, minlength=self.n)
        K = int(counts.max()) if counts.size else 0
        table = np.full((self.n, max(K, 1)), -1, dtype=np.int64)
        eidx = np.full((self.n, max(K, 1)), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        ks = key[order]
        slot = np.arange(order.size) - starts[ks]
        table[ks, slot] = other[order]
        eidx[ks, slot] = order
        return table, eidx

    @cached_property
    def succ(self):
        return self._padded(self.src, self.dst)

    @cached_property
    def pred(self):
        return self._padded(self.dst, self.src)

    # -- closures
    def _sweep(self, forward_bits, reverse, chrono_from=None):
        """Bitset closure sweep.

        Returns rows R with R[u] = self | OR_{u->v} R[v] (future) or the
        time-dual when ``reverse``.  With ``chrono_from`` (the matching causal
        closure) computes the chronological closure instead:
        I[u] = OR_{timelike u->v} J[v]  |  OR_{u->v} I[v].
        """
        table, eidx = self.pred if reverse else self.succ
        levels = self.levels if reverse else self.levels[::-1]
        if chrono_from is None:
            R = _self_bits(self.n)
        else:
            R = np.zeros((self.n, n_words(self.n)), dtype=np.uint64)
        for U in levels:
            nb = table[U]
            for k in range(nb.shape[1]):
                s = nb[:, k]
                m = s >= 0
                if not m.any():
                    continue
                u, v = U[m], s[m]
                R[u] |= R[v]
                if chrono_from is not None:
                    tl = self.timelike[eidx[U[m], k]]
                    if tl.any():
                        R[u[tl]] |= chrono_from[v[tl]]
        return R

    @cached_property
    def jplus(self):
        return self._sweep(None, reverse=False)

    @cached_property
    def jminus(self):
        return self._sweep(None, reverse=True)

    @cached_property
    def iplus(self):
        return self._sweep(None, reverse=False, chrono_from=self.jplus)

    @cached_property
    def iminus(self):
        return self._sweep(None, reverse=True, chrono_from=self.jminus)

    def release(self):
        """Drop cached closures (memory)."""
        for name in ("jplus", "jminus", "iplus", "iminus"):
            self.__dict__.pop(name, None)

    def measure_of(self, bits, weights, chunk=1024):
        """sum_{q in row} weights[q] for every bitset row."""
        out = np.empty(bits.shape[0])
        for a in range(0, bits.shape[0], chunk):
            rows = unpack(bits[a:a + chunk], self.n)
            out[a:a + chunk] = rows @ weights
        return out


def _midpoint_metric(st, ga, gb):
    g = st.metric_flat()
    return 0.5 * (g[ga] + g[gb])


def stencil_offsets(radius):
    return [(di, dj) for di in range(-radius, radius + 1) for dj in range(-radius, radius + 1)
            if (di, dj) != (0, 0)]


def build_causal_graph(st: SampledSpacetime, radius: int = DEFAULT_RADIUS, check=True) -> CausalGraph:
    if radius < 1:
        raise ValueError("stencil radius must be >= 1")
    nodes = np.flatnonzero(st.included.ravel())
    inc = st.included.ravel()
    X = st.orientation.reshape(st.n, 2)
    i, j = np.divmod(nodes, st.nx)
    srcs, dsts, tls, ws, offs = [], [], [], [], []
    for di, dj in stencil_offsets(radius):
        ii, jj = i + di, j + dj
        ok = (ii >= 0) & (ii < st.nt)
        if st.periodic:
            jj = jj % st.nx
        else:
            ok &= (jj >= 0) & (jj < st.nx)
        a = nodes[ok]
        b = ii[ok] * st.nx + jj[ok]
        keep = inc[b]
        a, b = a[keep], b[keep]
        if a.size == 0:
            continue
        G = _midpoint_metric(st, a, b)
        v = st.displacement(di, dj)
        q = np.einsum("i,kij,j->k", v, G, v)
        scale = np.max(np.abs(G), axis=(1, 2))
        vv = float(v @ v)
        causal = q <= 1e-12 * scale * vv
        Xm = 0.5 * (X[a] + X[b])
        future = np.einsum("i,kij,kj->k", v, G, Xm) < 0
        sel = causal & future
        if not sel.any():
            continue
        a, b, q, scale = a[sel], b[sel], q[sel], scale[sel]
        srcs.append(a)
        dsts.append(b)
        tls.append(-q >= EPS_CONE * vv * scale)
        # null edges within roundoff of the cone carry zero proper time
        ws.append(np.where(-q > 1e-12 * scale * vv, np.sqrt(np.maximum(-q, 0.0)), 0.0))
        offs.append(np.tile([di, dj], (a.size, 1)))
    g2n = np.full(st.n, -1, dtype=np.int64)
    g2n[nodes] = np.arange(nodes.size)
    cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt))
    graph = CausalGraph(
        st=st, radius=radius, nodes=nodes,
        src=g2n[cat(srcs, np.int64)], dst=g2n[cat(dsts, np.int64)],
        timelike=cat(tls, bool), weight=cat(ws, float),
        offset=np.concatenate(offs) if offs else np.zeros((0, 2), dtype=np.int64),
    )
    if check and not graph.is_acyclic:
        raise CausalityViolation("cycle detected during topological sort", graph._cycle)
    return graph


def with_extra_edges(graph: CausalGraph, src, dst, timelike=None) -> CausalGraph:
    """Copy of ``graph`` with additional edges (graph-node indices); no cycle check."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    tl = np.zeros(src.size, dtype=bool) if timelike is None else np.asarray(timelike, dtype=bool)
    gs, gd = graph.nodes[src], graph.nodes[dst]
    off = np.stack([gd // graph.st.nx - gs // graph.st.nx, gd % graph.st.nx - gs % graph.st.nx], axis=1)
    return CausalGraph(
        st=graph.st, radius=graph.radius, nodes=graph.nodes,
        src=np.concatenate([graph.src, src]), dst=np.concatenate([graph.dst, dst]),
        timelike=np.concatenate([graph.timelike, tl]),
        weight=np.concatenate([graph.weight, np.zeros(src.size)]),
        offset=np.concatenate([graph.offset, off]),
    )


# ---------------------------------------------------------------- queries


def causal_future(graph: CausalGraph, p) -> np.ndarray:
    return graph.mask_to_nodes(graph.jplus[p])


def causal_past(graph: CausalGraph, p) -> np.ndarray:
    return graph.mask_to_nodes(graph.jminus[p])


def chronological_future(graph: CausalGraph, p) -> np.ndarray:
    return graph.mask_to_nodes(graph.iplus[p])


def chronological_past(graph: CausalGraph, p) -> np.ndarray:
    return graph.mask_to_nodes(graph.iminus[p])


def related(graph: CausalGraph, p, q):
    """p <= q."""
    return bool((int(graph.jplus[p][q // 64]) >> (q % 64)) & 1)


def chronological(graph: CausalGraph, p, q):
    """p << q."""
    return bool((int(graph.iplus[p][q // 64]) >> (q % 64)) & 1)


def diamond(graph: CausalGraph, p, q) -> np.ndarray:
    return graph.mask_to_nodes(graph.jplus[p] & graph.jminus[q])


def check_causal(graph: CausalGraph) -> bool:
    return graph.is_acyclic


def check_push_up(graph: CausalGraph):
    """Violations of I+ o J+ within I+ and J+ o I+ within I+, and of J+
    transitivity, checked edge-locally on the closure bitsets.

    By induction along chains the local inclusions imply the relational ones.
    Returns a list of (p, r, rule) triples.
    """
    J, I = graph.jplus, graph.iplus
    s, d, tl = graph.src, graph.dst, graph.timelike
    out = []
    # J+(r) within J+(p) for p -> r
    bad = np.any(J[d] & ~J[s], axis=1)
    out += [(int(a), int(b), "J+ transitivity") for a, b in zip(s[bad], d[bad])]
    # p -> r causal and r << q  =>  p << q
    bad = np.any(I[d] & ~I[s], axis=1)
    out += [(int(a), int(b), "J+ o I+ in I+") for a, b in zip(s[bad], d[bad])]
    # p -> r timelike and r <= q  =>  p << q
    st_, dt_ = s[tl], d[tl]
    bad = np.any(J[dt_] & ~I[st_], axis=1)
    out += [(int(a), int(b), "I+ o J+ in I+") for a, b in zip(st_[bad], dt_[bad])]
    # I+ within J+
    bad = np.flatnonzero(np.any(I & ~J, axis=1))
    out += [(int(a), int(a), "I+ in J+") for a in bad]
    return out


def push_up_oracle(graph: CausalGraph):
    """Exhaustive triple scan over dense relations (small graphs only)."""
    n = graph.n
    J = unpack(graph.jplus, n)
    I = unpack(graph.iplus, n)
    viol = 0
    for p in range(n):
        for r in np.flatnonzero(I[p]):
            viol += int(np.sum(J[r] & ~I[p]))
        for r in np.flatnonzero(J[p]):
            viol += int(np.sum(I[r] & ~I[p]))
    return viol


def check_antisymmetry(graph: CausalGraph):
    """Nodes p with some q != p in J+(p) and J-(p)."""
    both = graph.jplus & graph.jminus
    selfbits = _self_bits(graph.n)
    return np.flatnonzero(np.any(both & ~selfbits, axis=1))


def check_diamond_bounds(graph: CausalGraph, chunk=512):
    """Count nodes whose causal future leaves the coordinate cone bound
    |x - x_p| <= (t - t_p)/slope + r*h_x, t >= t_p.

    Every diamond J+(p) & J-(q) then lies in the box [t_p, t_q] x ball of
    radius (t_q - t_p)/slope + r*h_x around x_p.
    """
    from .spacetime import light_slope

    st = graph.st
    t, x = graph.coords(np.arange(graph.n))
    slope = light_slope(st)
    slack = graph.radius * st.h_x * (1 + 1e-9)
    bad = 0
    for a in range(0, graph.n, chunk):
        rows = unpack(graph.jplus[a:a + chunk], graph.n)
        dt = t[None, :] - t[a:a + chunk, None]
        dx = x[None, :] - x[a:a + chunk, None]
        if st.periodic:
            L = st.circumference
            dx = (dx + L / 2) % L - L / 2
        outside = (dt < -1e-12) | (np.abs(dx) > dt / slope + slack)
        bad += int(np.sum(np.any(rows & outside, axis=1)))
    return bad


def time_separation_from(graph: CausalGraph, p) -> np.ndarray:
    """Longest-path proper time from p to every node (-inf where unreachable)."""
    tau = np.full(graph.n, -np.inf)
    tau[p] = 0.0
    table, eidx = graph.pred
    lv0 = graph.level[p]
    for U in graph.levels[lv0 + 1:]:
        nb = table[U]
        best = tau[U]
        for k in range(nb.shape[1]):
            s = nb[:, k]
            m = s >= 0
            cand = np.full(U.size, -np.inf)
            cand[m] = tau[s[m]] + graph.weight[eidx[U[m], k]]
            best = np.maximum(best, cand)
        tau[U] = best
    return tau


def time_separation(graph: CausalGraph, p, q) -> float:
    v = time_separation_from(graph, p)[q]
    return float(v) if np.isfinite(v) else 0.0


def time_separation_oracle(graph: CausalGraph, p, q):
    """Exhaustive longest path by memoised recursion over successors (small graphs)."""
    import functools
    import sys

    table, eidx = graph.succ
    sys.setrecursionlimit(max(10000, sys.getrecursionlimit()))

    @functools.lru_cache(maxsize=None)
    def best(u):
        if u == q:
            return 0.0
        out = -np.inf
        for k in range(table.shape[1]):
            v = table[u, k]
            if v >= 0:
                out = max(out, graph.weight[eidx[u, k]] + best(int(v)))
        return out

    r = best(int(p))
    return float(r) if np.isfinite(r) else 0.0


# ---------------------------------------------------------------- chains


@dataclass
class Chain:
    nodes: list
    start_kind: str
    end_kind: str


def _endpoint_kind(graph: CausalGraph, k, forward):
    st = graph.st
    i, j = graph.grid_ij(k)
    if (forward and i == st.nt - 1) or (not forward and i == 0):
        return "time-boundary"
    if not st.periodic and (j == 0 or j == st.nx - 1):
        return "space-boundary"
    r = graph.radius
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            ii, jj = i + di, j + dj
            if st.periodic:
                jj %= st.nx
            if 0 <= ii < st.nt and 0 <= jj < st.nx and not st.included[ii, jj]:
                return "carved-boundary"
    return "interior"


def _extend(graph, k, forward):
    table, eidx = graph.succ if forward else graph.pred
    chain = [k]
    while True:
        nb = table[k]
        ok = nb >= 0
        if not ok.any():
            break
        e = eidx[k][ok]
        off = graph.offset[e]
        # prefer the most vertical, shortest step
        pick = np.lexsort((np.abs(off[:, 0]), np.abs(off[:, 1])))[0]
        k = int(nb[ok][pick])
        chain.append(k)
    return chain


def inextendible_chains(graph: CausalGraph, seeds):
    """Greedy maximal chains through each seed, with endpoint classification.

    An ``interior`` endpoint kind on an uncarved model flags a stencil defect.
    """
    out = []
    for s in np.atleast_1d(seeds):
        s = int(s)
        fwd = _extend(graph, s, True)
        bwd = _extend(graph, s, False)
        nodes = bwd[::-1] + fwd[1:]
        out.append(Chain(nodes, _endpoint_kind(graph, nodes[0], False), _endpoint_kind(graph, nodes[-1], True)))
    return out


def interior_dead_ends(graph: CausalGraph, seeds=None):
    seeds = np.arange(graph.n) if seeds is None else seeds
    chains = inextendible_chains(graph, seeds)
    return [c for c in chains if "interior" in (c.start_kind, c.end_kind)]


# ---------------------------------------------------------------- export


def write_edge_list(graph: CausalGraph, path):
    """One ``src dst kind`` line per edge; endpoints are flat grid indices."""
    kinds = np.where(graph.timelike, "timelike", "causal")
    gs, gd = graph.nodes[graph.src], graph.nodes[graph.dst]
    order = np.lexsort((gd, gs))
    with open(path, "w") as fh:
        for e in order:
            fh.write(f"{gs[e]} {gd[e]} {kinds[e]}\n")
