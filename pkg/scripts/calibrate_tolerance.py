"""Calibrate the steepness tolerance constant C in tol_h = C (h_t + h_x).

Smooth fields with known gradients are sampled on Minkowski charts of
several resolutions and scaled so that their exact steepness margin
-g(grad f, grad f) is at least 1.  C bounds the finite-difference deficit
(exact margin minus sampled margin) over interior nodes, divided by
h_t + h_x, over all fields and resolutions, rounded up to 0.05.
"""

import argparse

import numpy as np

from cauchytime import fields
from cauchytime.spacetime import ModelSpec, build_model
from cauchytime.steep import TOL_H_CONSTANT


def test_fields(T, X):
    """(name, f, exact margin) with min exact margin 1 on the chart."""
    for k in (1.0, 2.0, 4.0):
        a = 0.5 / k
        f = T + a * np.sin(k * X)
        m = 1 - (a * k * np.cos(k * X)) ** 2
        yield f"ripple k={k:g}", f / np.sqrt(m.min()), m / m.min()
    for w in (0.3, 0.6):
        # t + w cosh-type bending: grad = (1 + w t / r, -w x / r), r = sqrt(1 + t^2 + x^2)
        r = np.sqrt(1 + T ** 2 + X ** 2)
        f = T + w * r
        ft, fx = 1 + w * T / r, w * X / r
        m = ft ** 2 - fx ** 2
        yield f"bend w={w:g}", f / np.sqrt(m.min()), m / m.min()
    for v in (0.3, 0.6):
        g = 1 / np.sqrt(1 - v * v)
        yield f"boost v={v:g}", g * (T - v * X), np.ones_like(T)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[41, 61, 81, 121, 161])
    ap.add_argument("--extent", type=float, default=3.0)
    args = ap.parse_args(argv)
    worst = 0.0
    for n in args.resolutions:
        e = args.extent
        st = build_model(ModelSpec("Minkowski2d", (n, n), (-e, e), (-e, e)))
        T, X = np.meshgrid(st.t, st.x, indexing="ij")
        inner = fields.interior_mask(st)
        scale = st.h_t + st.h_x
        for name, f, exact in test_fields(T, X):
            m = fields.steepness_margin(f, st)
            deficit = max(float(np.max((exact - m)[inner])), 0.0)
            ratio = deficit / scale
            worst = max(worst, ratio)
            print(f"n={n:4d} {name:14s} max deficit {deficit:.3e}  ratio {ratio:.4f}")
    c = np.ceil(worst * 20) / 20
    print(f"worst ratio {worst:.4f} -> C = {c:.2f} (shipped constant {TOL_H_CONSTANT})")


if __name__ == "__main__":
    main()
