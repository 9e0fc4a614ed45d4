"""Quadrature rules on the reference simplices.

Reference cells:
  * tetrahedron K = conv{(0,0,0), (1,0,0), (0,1,0), (0,0,1)}, |K| = 1/6
  * triangle   T = conv{(0,0), (1,0), (0,1)}, |T| = 1/2
  * segment    [0, 1]

Rules are conical (Duffy) products of Gauss-Jacobi lines, so they exist for
any requested exactness degree and have strictly positive weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 24


@dataclass(frozen=True)
class QuadratureRule:
    """Points (n, dim) in reference coordinates, weights (n,), exactness degree."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def barycentric(self) -> np.ndarray:
        """Points in barycentric coordinates, shape (n, d + 1)."""
        lam0 = 1.0 - self.points.sum(axis=1, keepdims=True)
        return np.hstack([lam0, self.points])


def _jacobi_01(n: int, alpha: int):
    # Nodes/weights for int_0^1 (1-x)^alpha f(x) dx, exact for deg(f) <= 2n-1.
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w * 0.5 ** (alpha + 1)


def _line_count(degree: int) -> int:
    return degree // 2 + 1


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre on [0, 1], exact to the given total degree."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    n = _line_count(degree)
    x, w = _jacobi_01(n, 0)
    return QuadratureRule(x.reshape(-1, 1), w, degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Conical product rule on the reference triangle, sum of weights 1/2."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    n = _line_count(degree)
    x1, w1 = _jacobi_01(n, 1)
    x0, w0 = _jacobi_01(n, 0)
    # u = xi1, v = xi2 (1 - xi1); the (1 - xi1) Jacobian sits in the alpha=1 weight.
    u = np.repeat(x1, n)
    v = np.tile(x0, n) * (1.0 - u)
    w = np.repeat(w1, n) * np.tile(w0, n)
    return QuadratureRule(np.column_stack([u, v]), w, degree)


@lru_cache(maxsize=None)
def tetrahedron_rule(degree: int) -> QuadratureRule:
    """Conical product rule on the reference tetrahedron, sum of weights 1/6."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    n = _line_count(degree)
    x2, w2 = _jacobi_01(n, 2)
    x1, w1 = _jacobi_01(n, 1)
    x0, w0 = _jacobi_01(n, 0)
    xi1 = np.repeat(x2, n * n)
    xi2 = np.tile(np.repeat(x1, n), n)
    xi3 = np.tile(x0, n * n)
    x = xi1
    y = xi2 * (1.0 - xi1)
    z = xi3 * (1.0 - xi1) * (1.0 - xi2)
    w = np.repeat(w2, n * n) * np.tile(np.repeat(w1, n), n) * np.tile(w0, n * n)
    return QuadratureRule(np.column_stack([x, y, z]), w, degree)


def simplex_monomial_integral(alpha) -> float:
    """Exact integral of x^a y^b z^c (or x^a y^b in 2D) over the reference simplex.

    Classical formula: int_K prod x_i^{a_i} = (prod a_i!) * / (|a| + d)! with the
    barycentric convention; for plain monomials it reads a! b! c! / (a+b+c+3)!
    on the tetrahedron and a! b! / (a+b+2)! on the triangle.
    """
    from math import factorial

    alpha = tuple(int(a) for a in alpha)
    d = len(alpha)
    num = 1
    for a in alpha:
        num *= factorial(a)
    return num / factorial(sum(alpha) + d)
