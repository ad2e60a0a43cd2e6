"""Lorentzian linear algebra on a single tangent space.

Sign convention: timelike vectors have B(v, v) < 0, signature (1, n-1).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class LorentzError(ValueError):
    """Raised on malformed input, e.g. a metric of the wrong signature or
    the norm of a spacelike vector."""


class CausalClass(enum.Enum):
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"
    SPACELIKE = "spacelike"
    ZERO = "zero"


def check_metric(B, tol=1e-12):
    """Return B as a float array after checking symmetry and signature (1, n-1)."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] < 2:
        raise LorentzError(f"metric must be a square matrix of size >= 2, got shape {B.shape}")
    scale = np.max(np.abs(B))
    if scale == 0 or not np.allclose(B, B.T, atol=tol * scale, rtol=0):
        raise LorentzError("metric is not symmetric")
    ev = np.linalg.eigvalsh(B)
    neg = int(np.sum(ev < -tol * scale))
    pos = int(np.sum(ev > tol * scale))
    if neg != 1 or pos != B.shape[0] - 1:
        raise LorentzError(f"metric signature is ({neg}, {pos}), expected (1, {B.shape[0] - 1})")
    return B


def minkowski(dim=2):
    return np.diag([-1.0] + [1.0] * (dim - 1))


def _pair(B, v):
    B = np.asarray(B, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != B.shape[0]:
        raise LorentzError(f"vector of length {v.shape[-1]} does not match metric of dim {B.shape[0]}")
    return B, v


def inner(B, v, w):
    """B(v, w), broadcasting over leading axes of v and w."""
    B, v = _pair(B, v)
    w = np.asarray(w, dtype=float)
    return np.einsum("...i,ij,...j->...", v, B, w)


def null_tolerance(B, v):
    # scale-free: relative to the metric entries and to |v|^2
    return 1e-12 * np.max(np.abs(B)) * np.sum(np.asarray(v, dtype=float) ** 2, axis=-1)


def classify(B, v):
    B, v = _pair(B, v)
    if not np.any(v):
        return CausalClass.ZERO
    q = inner(B, v, v)
    tol = null_tolerance(B, v)
    if q < -tol:
        return CausalClass.TIMELIKE
    if q > tol:
        return CausalClass.SPACELIKE
    return CausalClass.LIGHTLIKE


def is_causal(B, v):
    return classify(B, v) in (CausalClass.TIMELIKE, CausalClass.LIGHTLIKE)


def lorentz_norm(B, v):
    """sqrt(-B(v, v)) for a causal vector."""
    cls = classify(B, v)
    if cls is CausalClass.SPACELIKE:
        raise LorentzError("lorentz_norm of a spacelike vector")
    if cls is not CausalClass.TIMELIKE:
        return 0.0
    return float(np.sqrt(-inner(B, v, v)))


def lorentz_norms(B, V):
    """Row-wise lorentz_norm; rows classified lightlike get exactly 0."""
    B, V = _pair(B, V)
    q = inner(B, V, V)
    tol = null_tolerance(B, V)
    if np.any(q > tol):
        raise LorentzError("lorentz_norms got a spacelike row")
    return np.where(q < -tol, np.sqrt(np.maximum(-q, 0.0)), 0.0)


def same_cone(B, v, w):
    """True iff the nonzero causal vectors v, w lie in the same component of
    the causal double cone.

    Under the timelike-negative convention two causal vectors in the same
    component have B(v, w) < 0; the only boundary case B(v, w) = 0 is a pair
    of parallel null vectors, decided by the sign of their proportionality.
    """
    for u in (v, w):
        if classify(B, u) not in (CausalClass.TIMELIKE, CausalClass.LIGHTLIKE):
            raise LorentzError("same_cone needs nonzero causal vectors")
    B, v = _pair(B, v)
    w = np.asarray(w, dtype=float)
    b = inner(B, v, w)
    tol = 1e-12 * np.max(np.abs(B)) * np.linalg.norm(v) * np.linalg.norm(w)
    if b < -tol:
        return True
    if b > tol:
        return False
    return float(np.dot(v, w)) > 0


def cone_component_oracle(B, v, w, steps=64):
    """Brute-force same-component test: walk the straight segment from v to w
    and require every sample to stay causal and nonzero.

    The causal cone components are convex, so two vectors share a component
    iff the segment between them stays inside the causal set minus the origin.
    Independent of the sign-of-B(v, w) rule used by :func:`same_cone`.
    """
    B = np.asarray(B, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    d = w - v
    lams = np.linspace(0.0, 1.0, steps + 1)
    if d @ d > 0:
        # the segment can pass through the origin between samples
        lams = np.append(lams, np.clip(-(v @ d) / (d @ d), 0.0, 1.0))
    for lam in lams:
        u = (1 - lam) * v + lam * w
        if np.linalg.norm(u) < 1e-12 * (np.linalg.norm(v) + np.linalg.norm(w)):
            return False
        if inner(B, u, u) > null_tolerance(B, u) * 1e3:
            return False
    return True


def inverse_metric(B):
    return np.linalg.inv(np.asarray(B, dtype=float))


def null_frame(B):
    """Matrix E with E.T @ B @ E = diag(-1, 1, ..., 1)."""
    lam, Q = np.linalg.eigh(check_metric(B))
    return Q / np.sqrt(np.abs(lam))


def sample_causal(B, n, rng, null_fraction=0.2, component=None):
    """n random nonzero causal vectors of B.

    ``component`` is +1 or -1 to draw from one cone component (the one whose
    frame time coordinate has that sign), or None for a random component per
    row. A ``null_fraction`` of rows are exactly null in the frame.
    """
    E = null_frame(B)
    dim = E.shape[0]
    y = rng.normal(size=(n, dim - 1))
    y *= (rng.uniform(0, 1, size=(n, 1)) ** 0.5) / np.maximum(np.linalg.norm(y, axis=1, keepdims=True), 1e-300)
    null = rng.uniform(size=n) < null_fraction
    y[null] /= np.linalg.norm(y[null], axis=1, keepdims=True)
    a = rng.lognormal(0.0, 1.0, size=n)
    sign = rng.choice([-1.0, 1.0], size=n) if component is None else float(component)
    e = np.column_stack([np.ones(n), y]) * (a * sign)[:, None]
    return e @ E.T


@dataclass
class InequalityCounts:
    n: int
    cauchy_schwarz: int
    triangle: int
    triangle_equality_rank: int
    energy: int

    @property
    def total(self):
        return self.cauchy_schwarz + self.triangle + self.triangle_equality_rank + self.energy


def inequality_counterexamples(B, V, W, tol=1e-9) -> InequalityCounts:
    """Count rows (v, w) breaking the reverse Cauchy-Schwarz inequality, the
    reverse triangle inequality with its equality case, or energy monotonicity.

    Tolerances are relative to the Euclidean sizes of v and w. Triangle and
    energy rows are only counted when v, w share a cone component. Equality in
    the triangle inequality must come with numerical rank([v w]) = 1, taken at
    relative singular-value threshold 10*sqrt(tol).
    """
    B = check_metric(B)
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    s = np.max(np.abs(B))
    nv, nw = np.linalg.norm(V, axis=1), np.linalg.norm(W, axis=1)
    bvw, bvv, bww = inner(B, V, W), inner(B, V, V), inner(B, W, W)
    cs = bvw ** 2 - bvv * bww < -tol * (s * nv * nw) ** 2
    same = bvw < 0
    same |= (np.abs(bvw) <= 1e-12 * s * nv * nw) & (np.einsum("ij,ij->i", V, W) > 0)
    gap = np.zeros(len(V))
    gap[same] = lorentz_norms(B, (V + W)[same]) - lorentz_norms(B, V[same]) - lorentz_norms(B, W[same])
    scale = np.sqrt(s) * (nv + nw)
    tri = same & (gap < -tol * scale)
    equal = same & (np.abs(gap) <= tol * scale)
    sv = np.linalg.svd(np.stack([V, W], axis=2), compute_uv=False)
    # equality to within tol only pins the hyperbolic angle to O(sqrt(tol))
    rank_bad = equal & (sv[:, 1] > 10 * np.sqrt(abs(tol)) * sv[:, 0])
    energy = same & (inner(B, V + W, V + W) - bvv > tol * s * (nv + nw) ** 2)
    return InequalityCounts(len(V), int(cs.sum()), int(tri.sum()), int(rank_bad.sum()), int(energy.sum()))
