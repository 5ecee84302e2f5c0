"""Quadrature rules on the reference triangle and reference edge.

The reference triangle is {(x, y) : x >= 0, y >= 0, x + y <= 1} (area 1/2),
the reference edge is the interval [0, 1].  Triangle rules are built by
collapsing a Gauss-Legendre x Gauss-Jacobi tensor rule, so any requested
polynomial exactness degree is available.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference domain, exact up to ``degree``."""

    points: np.ndarray   # (nq, 2) on the triangle, (nq,) on the edge
    weights: np.ndarray  # (nq,), summing to the reference measure
    degree: int

    @property
    def npoints(self):
        return self.weights.shape[0]


def gauss_1d(npts):
    """Gauss-Legendre rule on [0, 1], exact for degree 2*npts - 1."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_rule(degree):
    """Rule on the reference edge [0, 1] exact for polynomials of ``degree``."""
    npts = max(1, (degree + 2) // 2)
    x, w = gauss_1d(npts)
    return QuadratureRule(points=x, weights=w, degree=2 * npts - 1)


def triangle_rule(degree):
    """Rule on the reference triangle exact for total ``degree``.

    Uses the Duffy collapse of the square: Gauss-Legendre in the first
    coordinate and Gauss-Jacobi (weight 1-b) in the second, which absorbs
    the collapse Jacobian exactly.
    """
    m = max(1, (degree + 2) // 2)
    ga, wa = np.polynomial.legendre.leggauss(m)
    gb, wb = roots_jacobi(m, 1.0, 0.0)
    A, B = np.meshgrid(ga, gb, indexing="ij")
    x = (1.0 + A) * (1.0 - B) / 4.0
    y = (1.0 + B) / 2.0
    w = np.outer(wa, wb) / 8.0
    pts = np.column_stack([x.ravel(), y.ravel()])
    return QuadratureRule(points=pts, weights=w.ravel(), degree=2 * m - 1)
