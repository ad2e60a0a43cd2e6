"""Sampled model spacetimes on a (t, x) product grid, finite symmetry groups
acting by exact grid maps, and spacelike surface graphs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lorlin

FAMILIES = ("Minkowski2d", "DiamondMinkowski", "CylinderProduct", "ConformalWarp", "CarvedMinkowski")

EPS_SPACE = 0.05


class ConfigurationError(ValueError):
    pass


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    family: str
    resolution: tuple[int, int] = (11, 11)
    t_range: tuple[float, float] = (-1.0, 1.0)
    x_range: tuple[float, float] = (-1.0, 1.0)
    circumference: float | None = None
    half_width: float = 1.0
    warp: str = "1"
    periodic: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        nt, nx = self.resolution
        if nt < 3 or nx < 3:
            raise ConfigurationError(f"resolution must be >= 3 per axis, got {self.resolution}")
        if self.t_range[1] <= self.t_range[0]:
            raise ConfigurationError("t_range must be increasing")
        if self.is_circle:
            if not self.circumference or self.circumference <= 0:
                raise ConfigurationError(f"{self.family} on a circle needs a positive circumference")
        elif self.x_range[1] <= self.x_range[0]:
            raise ConfigurationError("x_range must be increasing")

    @property
    def is_circle(self):
        return self.family == "CylinderProduct" or (self.family == "ConformalWarp" and self.periodic)


def warp_function(expr):
    """Compile a warp-factor expression in the coordinates t, x to a numpy callable."""
    import sympy

    t, x = sympy.symbols("t x")
    try:
        parsed = sympy.sympify(expr, locals={"t": t, "x": x, "pi": sympy.pi})
    except (sympy.SympifyError, TypeError, SyntaxError) as exc:
        raise ConfigurationError(f"cannot parse warp expression {expr!r}: {exc}") from exc
    extra = parsed.free_symbols - {t, x}
    if extra:
        raise ConfigurationError(f"warp expression uses unknown symbols {sorted(map(str, extra))}")
    f = sympy.lambdify((t, x), parsed, "numpy")
    return lambda tt, xx: np.broadcast_to(np.asarray(f(tt, xx), dtype=float), np.broadcast(tt, xx).shape)


@dataclass
class SampledSpacetime:
    """Events on a product grid, indexed flat as ``i_t * nx + i_x``."""

    family: str
    t: np.ndarray
    x: np.ndarray
    periodic: bool
    metric: np.ndarray        # (nt, nx, 2, 2)
    orientation: np.ndarray   # (nt, nx, 2), future timelike
    volume: np.ndarray        # (nt, nx), sqrt|det g| * cell volume
    included: np.ndarray      # (nt, nx) bool
    warp: np.ndarray          # (nt, nx), conformal factor Omega (1 for flat)
    circumference: float | None = None
    spec: ModelSpec | None = None

    @property
    def nt(self):
        return self.t.size

    @property
    def nx(self):
        return self.x.size

    @property
    def shape(self):
        return (self.nt, self.nx)

    @property
    def n(self):
        return self.nt * self.nx

    @property
    def h_t(self):
        return float(self.t[1] - self.t[0])

    @property
    def h_x(self):
        return float(self.x[1] - self.x[0])

    def index(self, i_t, i_x):
        return i_t * self.nx + i_x

    def unindex(self, k):
        return divmod(int(k), self.nx)

    def coords(self, k):
        i, j = self.unindex(k)
        return float(self.t[i]), float(self.x[j])

    def nearest(self, t, x):
        i = int(np.argmin(np.abs(self.t - t)))
        if self.periodic:
            d = (self.x - x + self.circumference / 2) % self.circumference - self.circumference / 2
            j = int(np.argmin(np.abs(d)))
        else:
            j = int(np.argmin(np.abs(self.x - x)))
        return self.index(i, j)

    def displacement(self, di, dj):
        return np.array([di * self.h_t, dj * self.h_x])

    def metric_flat(self):
        return self.metric.reshape(self.n, 2, 2)

    def flat_interval_sq(self, k):
        """Squared interval dt^2 - dx^2 from grid node k to every grid node in
        the chart's flat coordinates, maximised over periodic images; values
        <= 0 outside the chronological future of k.  Exact proper time squared
        for the flat families; cone-exact for conformal warps."""
        i0, j0 = divmod(int(k), self.nx)
        dt = (self.t - self.t[i0])[:, None]
        dx = (self.x - self.x[j0])[None, :]
        if self.periodic:
            L = self.circumference
            dx = (dx + L / 2) % L - L / 2
            reps = int(np.ceil((self.t[-1] - self.t[0]) / L)) + 1
            val = np.full(self.shape, -np.inf)
            for m in range(-reps, reps + 1):
                val = np.maximum(val, dt * dt - (dx + m * L) ** 2)
        else:
            val = dt * dt - dx * dx
        return np.where(dt > 0, val, -1.0)


def time_reversed(st: SampledSpacetime) -> SampledSpacetime:
    """The same chart with rows reversed and t -> -t; pulls back g by diag(-1, 1)."""
    J = np.diag([-1.0, 1.0])
    metric = np.einsum("ai,tsab,bj->tsij", J, st.metric[::-1], J)
    orient = -(st.orientation[::-1] @ J.T)
    return SampledSpacetime(
        family=st.family, t=-st.t[::-1].copy(), x=st.x.copy(), periodic=st.periodic,
        metric=np.ascontiguousarray(metric), orientation=np.ascontiguousarray(orient),
        volume=st.volume[::-1].copy(), included=st.included[::-1].copy(),
        warp=st.warp[::-1].copy(), circumference=st.circumference, spec=st.spec,
    )


def build_model(spec: ModelSpec) -> SampledSpacetime:
    nt, nx = spec.resolution
    t = np.linspace(spec.t_range[0], spec.t_range[1], nt)
    if spec.is_circle:
        L = float(spec.circumference)
        x = np.arange(nx) * (L / nx)
    else:
        L = None
        x = np.linspace(spec.x_range[0], spec.x_range[1], nx)
    T, X = np.meshgrid(t, x, indexing="ij")

    if spec.family == "ConformalWarp":
        omega = warp_function(spec.warp)(T, X)
        if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
            raise ConstructionError("warp factor must be finite and strictly positive on the grid")
    else:
        omega = np.ones_like(T)

    metric = np.zeros((nt, nx, 2, 2))
    metric[..., 0, 0] = -omega ** 2
    metric[..., 1, 1] = omega ** 2
    orientation = np.zeros((nt, nx, 2))
    orientation[..., 0] = 1.0 / omega

    included = np.ones((nt, nx), dtype=bool)
    if spec.family == "DiamondMinkowski":
        a = spec.half_width
        included = np.abs(T) + np.abs(X) <= a * (1 + 1e-12)
    elif spec.family == "CarvedMinkowski":
        # closed cone: the null boundary of J+(0) is removed as well
        included = ~(T >= np.abs(X) - 1e-12 * max(1.0, np.max(np.abs(X))))

    h_t = t[1] - t[0]
    h_x = x[1] - x[0]
    det = np.abs(metric[..., 0, 0] * metric[..., 1, 1] - metric[..., 0, 1] * metric[..., 1, 0])
    volume = np.sqrt(det) * h_t * h_x

    st = SampledSpacetime(
        family=spec.family, t=t, x=x, periodic=spec.is_circle, metric=metric,
        orientation=orientation, volume=np.where(included, volume, 0.0), included=included,
        warp=omega, circumference=L, spec=spec,
    )
    validate(st)
    return st


def validate(st: SampledSpacetime):
    g = st.metric
    for i, j in zip(*np.nonzero(st.included)):
        try:
            lorlin.check_metric(g[i, j])
        except lorlin.LorentzError as exc:
            raise ConstructionError(f"node ({i}, {j}) at t={st.t[i]:.6g}, x={st.x[j]:.6g}: {exc}") from exc
        if lorlin.classify(g[i, j], st.orientation[i, j]) is not lorlin.CausalClass.TIMELIKE:
            raise ConstructionError(f"orientation at node ({i}, {j}) is not timelike")
    if st.h_t <= 0 or st.h_x <= 0:
        raise ConstructionError("grid steps must be positive")


# ---------------------------------------------------------------- groups


@dataclass
class GroupAction:
    """Finite group of grid maps. ``perms[e][k]`` is the image of node k under
    element e; ``jacobians[e]`` is the (constant) coordinate differential."""

    perms: np.ndarray            # (|G|, n) int
    jacobians: np.ndarray        # (|G|, 2, 2)
    names: list[str]
    conformal_factor: np.ndarray  # (|G|, n): Omega^2 with phi^* g = Omega^2 g
    is_isometric: bool
    preserves_time_orientation: bool
    pullback_residual: float = 0.0
    table: np.ndarray | None = None  # (|G|, |G|) composition indices

    @property
    def order(self):
        return len(self.perms)

    def apply(self, e, values):
        """Pull back a node field: (phi_e^* f)(k) = f(phi_e(k))."""
        return np.asarray(values)[..., self.perms[e]]


def _rotation(st, k):
    if not st.periodic:
        raise ConfigurationError("rotations need a circular spatial slice")
    if k < 1 or st.nx % k:
        raise ConfigurationError(f"spatial node count {st.nx} is not divisible by rotation order {k}")
    shift = st.nx // k
    i, j = np.divmod(np.arange(st.n), st.nx)
    return i * st.nx + (j + shift) % st.nx, np.eye(2), f"rot({shift})"


def _reflection(st):
    i, j = np.divmod(np.arange(st.n), st.nx)
    if st.periodic:
        jj = (-j) % st.nx
    else:
        if not np.allclose(st.x, -st.x[::-1]):
            raise ConfigurationError("reflection needs an interval symmetric about x = 0")
        jj = st.nx - 1 - j
    return i * st.nx + jj, np.diag([1.0, -1.0]), "refl"


def _time_reflection(st):
    if not np.allclose(st.t, -st.t[::-1]):
        raise ConfigurationError("time reflection needs a time range symmetric about t = 0")
    i, j = np.divmod(np.arange(st.n), st.nx)
    return (st.nt - 1 - i) * st.nx + j, np.diag([-1.0, 1.0]), "trefl"


def _close(st, gens):
    ident = (np.arange(st.n), np.eye(2), "id")
    elems = [ident]
    seen = {ident[0].tobytes(): 0}
    frontier = [ident]
    while frontier:
        nxt = []
        for p, J, name in frontier:
            for gp, gJ, gname in gens:
                comp = gp[p]  # apply p then gp: k -> gp[p[k]]
                key = comp.tobytes()
                if key not in seen:
                    nm = gname if name == "id" else f"{gname}*{name}"
                    seen[key] = len(elems)
                    e = (comp, gJ @ J, nm)
                    elems.append(e)
                    nxt.append(e)
        frontier = nxt
    return elems, seen


def pullback_metric(st, perm, jac):
    """(phi^* g)_k = D^T g_{phi(k)} D, as an (n, 2, 2) array."""
    g = st.metric_flat()
    return np.einsum("ai,kab,bj->kij", jac, g[perm], jac)


def group_from_maps(st, elems, check=True):
    perms = np.array([e[0] for e in elems])
    jacs = np.array([e[1] for e in elems])
    names = [e[2] for e in elems]
    inc = st.included.ravel()
    g = st.metric_flat()
    ginv = np.linalg.inv(np.where(inc[:, None, None], g, np.eye(2)))
    factors = np.ones((len(elems), st.n))
    resid = 0.0
    preserves = True
    X = st.orientation.reshape(st.n, 2)
    for e, (p, J, _) in enumerate(elems):
        if check and not np.array_equal(inc[p], inc):
            raise ConstructionError(f"group element {names[e]} does not preserve the included node set")
        pb = pullback_metric(st, p, J)
        om2 = np.einsum("kij,kji->k", ginv, pb) / 2.0
        factors[e] = np.where(inc, om2, 1.0)
        r = np.abs(pb - om2[:, None, None] * g)[inc]
        resid = max(resid, float(r.max()) if r.size else 0.0)
        pushed = X @ J.T  # D X_k
        target = X[p]
        dots = np.einsum("ki,kij,kj->k", pushed, g[p], target)
        if np.any(dots[inc] >= 0):
            preserves = False
    iso = bool(np.all(np.abs(factors - 1.0) < 1e-12))
    ga = GroupAction(perms=perms, jacobians=jacs, names=names, conformal_factor=factors,
                     is_isometric=iso, preserves_time_orientation=preserves, pullback_residual=resid)
    if check:
        if resid > 1e-9:
            raise ConstructionError(f"conformal pullback residual {resid:.3e} exceeds 1e-9")
        ga.table = group_table(ga)
    return ga


def group_table(ga: GroupAction):
    """Composition table; raises unless the maps form a group."""
    index = {p.tobytes(): e for e, p in enumerate(ga.perms)}
    ident = np.arange(ga.perms.shape[1])
    if ident.tobytes() not in index:
        raise ConstructionError("group has no identity element")
    m = ga.order
    table = np.empty((m, m), dtype=int)
    for a in range(m):
        for b in range(m):
            comp = ga.perms[a][ga.perms[b]]
            key = comp.tobytes()
            if key not in index:
                raise ConstructionError(f"group not closed: {ga.names[a]} o {ga.names[b]}")
            table[a, b] = index[key]
    e0 = index[ident.tobytes()]
    for a in range(m):
        if e0 not in table[a]:
            raise ConstructionError(f"element {ga.names[a]} has no inverse")
    return table


def build_group(st: SampledSpacetime, rotation: int = 1, reflection: bool = False,
                time_reflection: bool = False) -> GroupAction:
    """Group generated by rotations of order ``rotation`` and optional reflections."""
    gens = []
    if rotation != 1:
        gens.append(_rotation(st, rotation))
    elif rotation < 1:
        raise ConfigurationError("rotation order must be >= 1")
    if reflection:
        gens.append(_reflection(st))
    if time_reflection:
        gens.append(_time_reflection(st))
    elems, _ = _close(st, gens)
    return group_from_maps(st, elems)


# ---------------------------------------------------------------- surfaces


@dataclass
class SurfaceGraph:
    """Graph t = u(x) over the spatial nodes, piecewise linear between them."""

    u: np.ndarray
    x: np.ndarray
    periodic: bool = False
    circumference: float | None = None
    max_slope: float = field(init=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.max_slope = float(np.max(np.abs(self.slopes()))) if self.u.size > 1 else 0.0

    def slopes(self):
        h = self.x[1] - self.x[0]
        if self.periodic:
            return (np.roll(self.u, -1) - self.u) / h
        return np.diff(self.u) / h

    def is_spacelike(self, eps=EPS_SPACE, light_slope=1.0):
        return self.max_slope < light_slope * (1 - eps)

    def __call__(self, x):
        if self.periodic:
            L = self.circumference
            xp = np.concatenate([self.x, [self.x[0] + L]])
            up = np.concatenate([self.u, [self.u[0]]])
            return np.interp(np.asarray(x) % L, xp, up)
        return np.interp(x, self.x, self.u)


class SurfaceError(ValueError):
    pass


def light_slope(st: SampledSpacetime):
    """Smallest light-cone slope |dt/dx| over the grid (diagonal metrics)."""
    g = st.metric
    return float(np.min(np.sqrt(g[..., 1, 1] / -g[..., 0, 0])[st.included]))


def make_surface(st: SampledSpacetime, u, eps=EPS_SPACE) -> SurfaceGraph:
    u = np.broadcast_to(np.asarray(u, dtype=float), (st.nx,)).copy()
    s = SurfaceGraph(u, st.x.copy(), st.periodic, st.circumference)
    if np.any(u <= st.t[0]) or np.any(u >= st.t[-1]):
        raise SurfaceError("surface leaves the chart interior")
    if not s.is_spacelike(eps, light_slope(st)):
        raise SurfaceError(f"surface is not spacelike: max slope {s.max_slope:.4g} exceeds "
                           f"{light_slope(st) * (1 - eps):.4g}")
    return s


def surface_between(st: SampledSpacetime, t_level: float) -> SurfaceGraph:
    if not st.t[0] < t_level < st.t[-1]:
        raise SurfaceError(f"level {t_level} outside the chart interior ({st.t[0]}, {st.t[-1]})")
    return make_surface(st, np.full(st.nx, float(t_level)))


def surface_invariant(s: SurfaceGraph, st: SampledSpacetime, ga: GroupAction, tol=1e-12):
    """Max deviation of the surface under the group (node maps act on columns)."""
    dev = 0.0
    cols = np.arange(st.nx)
    for e in range(ga.order):
        img = ga.perms[e][cols] % st.nx  # row 0 images -> columns
        rows = ga.perms[e][cols] // st.nx
        if np.any(rows != 0):
            return np.inf
        dev = max(dev, float(np.max(np.abs(s.u[img] - s.u))))
    return dev
