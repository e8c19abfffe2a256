"""Quadrature helpers for radial and axisymmetric integrals over R^n.

Radial integrals reduce to |S^{n-1}| * int f(r) r^{n-1} dr and are handled by
adaptive Gauss-Kronrod panels with an automatic tail cut.  Axisymmetric
integrands (functions of radius r about a center and of the cosine mu of the
polar angle to a fixed axis) reduce to a 2-d integral with angular weight
(1 - mu^2)^{(n-3)/2}, integrated exactly in mu by Gauss-Jacobi nodes.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_jacobi, roots_legendre

from .dimension import Dimension

# A tail block contributes nothing once it falls below this fraction of the
# running total.
TAIL_CUT = 1e-14


class IntegrationError(RuntimeError):
    """Quadrature did not converge; message carries the residual estimate."""


def radial_integral(f, dim: Dimension, r_max: float | None = None,
                    rel_tol: float = 1e-10) -> float:
    """Integral of the radial function f over R^n (or the ball of radius r_max).

    f is a scalar callable of r >= 0.
    """
    weight = dim.sphere_area

    def g(r):
        return f(r) * r ** (dim.n - 1)

    total = 0.0
    err_total = 0.0

    def piece(a, b):
        nonlocal total, err_total
        val, err = quad(g, a, b, limit=200, epsabs=0.0, epsrel=1e-12)
        total += val
        err_total += err

    if r_max is not None:
        edges = [0.0, min(1.0, r_max)]
        while edges[-1] < r_max:
            edges.append(min(2 * edges[-1], r_max))
        for a, b in zip(edges[:-1], edges[1:]):
            piece(a, b)
    else:
        piece(0.0, 1.0)
        a, b = 1.0, 2.0
        quiet = 0
        while quiet < 2:
            before = total
            piece(a, b)
            if abs(total - before) < TAIL_CUT * max(abs(total), 1e-300):
                quiet += 1
            else:
                quiet = 0
            a, b = b, 2 * b
            if b > 1e12:
                raise IntegrationError(
                    f"radial tail did not decay by r={a:.3g}; total={total:.6g}")

    if err_total > rel_tol * max(abs(total), 1e-300) + 1e-300:
        raise IntegrationError(
            f"quadrature residual {err_total:.3g} exceeds tolerance for "
            f"integral value {total:.6g}")
    return weight * total


@lru_cache(maxsize=64)
def _legendre(order: int):
    x, w = roots_legendre(order)
    return x, w


@lru_cache(maxsize=64)
def jacobi_mu_rule(n: int, order: int):
    """Nodes/weights integrating g(mu) (1-mu^2)^{(n-3)/2} dmu over [-1, 1]."""
    a = (n - 3) / 2
    mu, w = roots_jacobi(order, a, a)
    return mu, w


def panel_rule(edges, order: int):
    """Composite Gauss-Legendre nodes and weights over consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x, w = _legendre(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def geometric_edges(r_lo: float, r_hi: float, count: int, r_inner: float = 0.0):
    """Panel edges from r_inner to r_hi, geometrically graded from r_lo.

    The first panel is [r_inner, r_lo]; subsequent edges grow geometrically,
    resolving integrands that vary on the small scale r_lo near the center.
    """
    if r_hi <= r_lo:
        return np.array([r_inner, r_hi])
    factor = (r_hi / r_lo) ** (1.0 / count)
    edges = [r_inner, r_lo]
    while edges[-1] * factor < r_hi:
        edges.append(edges[-1] * factor)
    edges.append(r_hi)
    return np.array(edges)
