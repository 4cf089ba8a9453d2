"""Quadrature rules on the reference segment and the reference triangle."""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_segment(npoints):
    """Gauss-Legendre rule mapped to [0, 1].

    Returns ``(t, w)`` with weights summing to 1, exact for polynomials of
    degree ``2 * npoints - 1``.
    """
    if npoints < 1:
        raise ValueError("npoints must be positive")
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Quadrature on the reference triangle (0,0), (1,0), (0,1).

    Returns ``(bary, w)``: barycentric coordinates of shape (Q, 3) and
    weights summing to 1 (multiply by the element area).

    Degree 0/1 uses the centroid, degree 2 the edge midpoints, higher degrees
    a collapsed (Stroud conical) Gauss product rule.
    """
    if degree <= 1:
        bary = np.array([[1.0, 1.0, 1.0]]) / 3.0
        return bary, np.array([1.0])
    if degree == 2:
        bary = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        return bary, np.full(3, 1.0 / 3.0)
    # Duffy map (s, t) -> (s, t (1 - s)) raises the degree in s by one
    m = (degree + 3) // 2
    s, ws = gauss_segment(m)
    t, wt = gauss_segment(m)
    S, T = np.meshgrid(s, t, indexing="ij")
    xr = S
    yr = T * (1.0 - S)
    w = np.outer(ws, wt) * (1.0 - S) * 2.0
    xr, yr, w = xr.ravel(), yr.ravel(), w.ravel()
    bary = np.column_stack([1.0 - xr - yr, xr, yr])
    return bary, w
