"""Node fields on a sampled spacetime and their finite-difference gradients."""

from __future__ import annotations

import numpy as np

from .spacetime import SampledSpacetime


def _diff_axis(f, inc, h, axis, periodic):
    """Central difference where both neighbours are included, one-sided where
    only one is, zero where neither is."""
    if periodic:
        fp = np.roll(f, -1, axis=axis)
        fm = np.roll(f, 1, axis=axis)
        ip = np.roll(inc, -1, axis=axis)
        im = np.roll(inc, 1, axis=axis)
    else:
        pad = [(0, 0), (0, 0)]
        pad[axis] = (1, 1)
        fpad = np.pad(f, pad, constant_values=np.nan)
        ipad = np.pad(inc, pad, constant_values=False)
        sl = [slice(None), slice(None)]
        sl[axis] = slice(2, None)
        fp, ip = fpad[tuple(sl)], ipad[tuple(sl)]
        sl[axis] = slice(None, -2)
        fm, im = fpad[tuple(sl)], ipad[tuple(sl)]
    with np.errstate(invalid="ignore"):
        central = (fp - fm) / (2 * h)
        fwd = (fp - f) / h
        bwd = (f - fm) / h
    out = np.where(ip & im, central, np.where(ip, fwd, np.where(im, bwd, 0.0)))
    return np.where(inc, out, np.nan)


def gradient(st: SampledSpacetime, f):
    """Coordinate differential (df/dt, df/dx) as an (nt, nx, 2) array."""
    f = np.asarray(f, dtype=float).reshape(st.shape)
    inc = st.included
    ft = _diff_axis(f, inc, st.h_t, 0, False)
    fx = _diff_axis(f, inc, st.h_x, 1, st.periodic)
    return np.stack([ft, fx], axis=-1)


def inverse_metric(st: SampledSpacetime):
    return np.linalg.inv(st.metric)


def lorentz_sq_of(st: SampledSpacetime, df):
    """g(grad f, grad f) = g^{ab} f_a f_b for a differential field."""
    return np.einsum("...a,...ab,...b->...", df, inverse_metric(st), df)


def lorentz_sq(st: SampledSpacetime, f):
    return lorentz_sq_of(st, gradient(st, f))


def steepness_margin(field, st: SampledSpacetime):
    """-g(grad f, grad f) per node: positive where the gradient is timelike,
    >= c^2 where the field is steep with constant c."""
    return -lorentz_sq(st, field)


def past_timelike(st: SampledSpacetime, f, strict_margin=0.0):
    """Boolean mask: grad f timelike and past directed (f increases along the
    future orientation)."""
    df = gradient(st, f)
    m = -lorentz_sq_of(st, df)
    rate = np.einsum("...a,...a->...", df, st.orientation)
    return (m > strict_margin) & (rate > 0)


def almost_temporal(st: SampledSpacetime, f, zero_tol=0.0):
    """grad f is zero (within zero_tol, Euclidean) or past timelike at every node."""
    df = gradient(st, f)
    zero = np.linalg.norm(df, axis=-1) <= zero_tol
    m = -lorentz_sq_of(st, df)
    rate = np.einsum("...a,...a->...", df, st.orientation)
    ok = zero | ((m > 0) & (rate > 0))
    return np.where(st.included, ok, True)


def interior_mask(st: SampledSpacetime):
    """Included nodes whose axis neighbours are all included and inside the chart."""
    inc = st.included
    m = inc.copy()
    m[0, :] = m[-1, :] = False
    m[1:, :] &= inc[:-1, :]
    m[:-1, :] &= inc[1:, :]
    if st.periodic:
        m &= np.roll(inc, 1, axis=1) & np.roll(inc, -1, axis=1)
    else:
        m[:, 0] = m[:, -1] = False
        m[:, 1:] &= inc[:, :-1]
        m[:, :-1] &= inc[:, 1:]
    return m


def coordinate_time(st: SampledSpacetime):
    return np.where(st.included, np.broadcast_to(st.t[:, None], st.shape), np.nan)


def coordinate_space(st: SampledSpacetime):
    return np.where(st.included, np.broadcast_to(st.x[None, :], st.shape), np.nan)


def smoothstep(y):
    """Quintic smoothstep: 0 for y <= 0, 1 for y >= 1, C^2 in between."""
    y = np.clip(y, 0.0, 1.0)
    return y * y * y * (y * (6 * y - 15) + 10)


def write_field_csv(st: SampledSpacetime, values, path):
    """CSV rows ``i_t, i_x, t_coord, x_coord, value`` over included nodes."""
    values = np.asarray(values, dtype=float).reshape(st.shape)
    with open(path, "w") as fh:
        fh.write("i_t,i_x,t_coord,x_coord,value\n")
        for i in range(st.nt):
            for j in range(st.nx):
                if st.included[i, j]:
                    fh.write(f"{i},{j},{st.t[i]:.12g},{st.x[j]:.12g},{values[i, j]:.17g}\n")


def read_field_csv(st: SampledSpacetime, path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = np.full(st.shape, np.nan)
    out[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 4]
    return out
