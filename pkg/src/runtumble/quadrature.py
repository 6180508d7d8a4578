"""Gauss-Legendre (fixed, piecewise and adaptive) and Gauss-Hermite rules."""

from functools import lru_cache

import numpy as np

from ._validation import ToleranceError


@lru_cache(maxsize=None)
def gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def gauss_hermite_normal(n):
    """Nodes/weights for E[f(Z)], Z ~ N(0, 1)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


def fixed_gl(f, a, b, n=20):
    x, w = gauss_legendre(n)
    h = 0.5 * (b - a)
    m = 0.5 * (b + a)
    return h * np.sum(w * f(m + h * x))


def adaptive_gl(f, a, b, tol=1e-10, breakpoints=(), n=10, max_depth=40):
    """Integrate a vectorised ``f`` over [a, b] by recursive bisection.

    A panel is accepted when the n-point rule and the sum of the two n-point half-panel
    rules agree to ``tol * max(1, |I|)`` scaled by the panel's share of [a, b].
    """
    pts = sorted({a, b, *[p for p in breakpoints if a < p < b]})
    total = 0.0
    width = b - a
    for lo, hi in zip(pts[:-1], pts[1:]):
        stack = [(lo, hi, fixed_gl(f, lo, hi, n), 0)]
        while stack:
            l, r, whole, depth = stack.pop()
            mid = 0.5 * (l + r)
            left = fixed_gl(f, l, mid, n)
            right = fixed_gl(f, mid, r, n)
            err = abs(left + right - whole)
            if err <= tol * max(1.0, abs(left + right)) * (r - l) / width or err < 1e-15:
                total += left + right
            elif depth >= max_depth:
                raise ToleranceError(f"adaptive quadrature did not converge on [{l}, {r}]")
            else:
                stack.append((l, mid, left, depth + 1))
                stack.append((mid, r, right, depth + 1))
    return total


def piecewise_gl_nodes(edges, n=24):
    """Nodes and weights of an n-point rule on every panel of ``edges`` (last axis).

    ``edges`` has shape (..., k+1) with non-decreasing entries; returns arrays of shape
    (..., k*n).  Empty panels get zero weight.
    """
    x, w = gauss_legendre(n)
    lo = edges[..., :-1, None]
    hi = edges[..., 1:, None]
    h = 0.5 * (hi - lo)
    nodes = 0.5 * (hi + lo) + h * x
    weights = h * w
    shape = edges.shape[:-1] + (-1,)
    return nodes.reshape(shape), np.broadcast_to(weights, nodes.shape).reshape(shape)
