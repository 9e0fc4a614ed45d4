"""Scalar polynomial bases on reference simplices.

Bernstein bases are used for moment weights and spanning sets because they
are numerically stable at simplex boundaries, where collapsed-coordinate
bases degenerate.  The 1D edge moments use orthonormal shifted Legendre
polynomials.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial

import numpy as np

__all__ = [
    "multiindices",
    "dim_P1",
    "dim_P2",
    "dim_P3",
    "bernstein_line",
    "bernstein_triangle",
    "bernstein_tet",
    "shifted_legendre",
    "monomials",
]


def dim_P1(p: int) -> int:
    """Dimension of polynomials of degree <= p in one variable."""
    return p + 1 if p >= 0 else 0


def dim_P2(p: int) -> int:
    """Dimension of polynomials of degree <= p in two variables."""
    return (p + 1) * (p + 2) // 2 if p >= 0 else 0


def dim_P3(p: int) -> int:
    """Dimension of polynomials of degree <= p in three variables."""
    return (p + 1) * (p + 2) * (p + 3) // 6 if p >= 0 else 0


@lru_cache(maxsize=None)
def multiindices(nvar: int, degree: int, exact: bool = False):
    """Multi-indices over `nvar` variables, ordered deterministically.

    With ``exact=True`` only indices of total degree == degree are returned,
    otherwise all of total degree <= degree.  The order is graded
    lexicographic (degree first, then lexicographic), which every consumer
    in this package relies on.

    Returns an int array of shape (n, nvar).
    """
    if degree < 0:
        return np.zeros((0, nvar), dtype=np.int64)
    out = []
    degrees = [degree] if exact else range(degree + 1)
    for d in degrees:

        def rec(prefix, used, slots):
            if slots == 0:
                if used == d:
                    out.append(prefix)
                return
            for k in range(d - used + 1):
                rec(prefix + (k,), used + k, slots - 1)

        rec((), 0, nvar)
    arr = np.array(out, dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _multinomial(p: int, alpha) -> float:
    num = factorial(p)
    for a in alpha:
        num //= factorial(int(a))
    return float(num)


def _bernstein_simplex(p: int, lambdas: np.ndarray):
    """Bernstein values and barycentric-gradient terms on a d-simplex.

    `lambdas` has shape (npts, d+1) with rows summing to one.  Returns
    ``vals`` of shape (npts, nb) and ``terms`` of shape (npts, nb, d+1)
    where ``terms[:, j, i]`` is the partial derivative of basis j with
    respect to the barycentric coordinate lambda_i (other lambdas held
    fixed).  Powers are tabulated so no division by a vanishing coordinate
    occurs on simplex boundaries.
    """
    npts, nlam = lambdas.shape
    alphas = multiindices(nlam, p, exact=True)
    nb = alphas.shape[0]
    # pow_tab[i, k] = lambda_i ** k, shape (npts, nlam, p + 1)
    pow_tab = np.ones((npts, nlam, p + 1))
    for k in range(1, p + 1):
        pow_tab[:, :, k] = pow_tab[:, :, k - 1] * lambdas
    vals = np.empty((npts, nb))
    terms = np.zeros((npts, nb, nlam))
    for j, alpha in enumerate(alphas):
        c = _multinomial(p, alpha)
        prod = np.full(npts, c)
        for i in range(nlam):
            prod = prod * pow_tab[:, i, alpha[i]]
        vals[:, j] = prod
        for i in range(nlam):
            a = int(alpha[i])
            if a == 0:
                continue
            dterm = np.full(npts, c * a)
            for m in range(nlam):
                k = a - 1 if m == i else int(alpha[m])
                dterm = dterm * pow_tab[:, m, k]
            terms[:, j, i] = dterm
    return vals, terms


def bernstein_line(p: int, t: np.ndarray):
    """Bernstein basis of degree p on [0, 1].

    Returns values (npts, p + 1) and derivatives (npts, p + 1).
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    lam = np.stack([1.0 - t, t], axis=1)
    vals, terms = _bernstein_simplex(p, lam)
    # d/dt = d/dlam1 - d/dlam0
    return vals, terms[:, :, 1] - terms[:, :, 0]


def bernstein_triangle(p: int, pts: np.ndarray):
    """Bernstein basis of degree p on the reference triangle.

    `pts` has shape (npts, 2) with coordinates (u, v) in the triangle
    {u, v >= 0, u + v <= 1}.  Returns values (npts, nb) and gradients
    (npts, nb, 2) with nb = (p+1)(p+2)/2.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    vals, terms = _bernstein_simplex(p, lam)
    grads = np.empty(terms.shape[:2] + (2,))
    grads[:, :, 0] = terms[:, :, 1] - terms[:, :, 0]
    grads[:, :, 1] = terms[:, :, 2] - terms[:, :, 0]
    return vals, grads


def bernstein_tet(p: int, pts: np.ndarray):
    """Bernstein basis of degree p on the reference tetrahedron.

    `pts` has shape (npts, 3); the reference tetrahedron is
    {x, y, z >= 0, x + y + z <= 1}.  Returns values (npts, nb) and
    gradients (npts, nb, 3) with nb = (p+1)(p+2)(p+3)/6.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    lam = np.column_stack([1.0 - pts.sum(axis=1), pts])
    vals, terms = _bernstein_simplex(p, lam)
    grads = np.empty(terms.shape[:2] + (3,))
    for d in range(3):
        grads[:, :, d] = terms[:, :, d + 1] - terms[:, :, 0]
    return vals, grads


def shifted_legendre(p: int, t: np.ndarray) -> np.ndarray:
    """Orthonormal Legendre polynomials on [0, 1], degrees 0..p.

    Returns values of shape (npts, p + 1); row q integrates to
    delta_{q0} and the family is orthonormal in L2(0, 1).
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    x = 2.0 * t - 1.0
    vals = np.empty((t.size, p + 1))
    vals[:, 0] = 1.0
    if p >= 1:
        vals[:, 1] = x
    for k in range(1, p):
        vals[:, k + 1] = ((2 * k + 1) * x * vals[:, k] - k * vals[:, k - 1]) / (k + 1)
    scale = np.sqrt(2.0 * np.arange(p + 1) + 1.0)
    return vals * scale


def monomials(p: int, pts: np.ndarray, exact: bool = True):
    """Monomials u^alpha at the given points, |alpha| = p (or <= p).

    `pts` has shape (npts, 3).  Returns values (npts, n) and gradients
    (npts, n, 3) in the order of :func:`multiindices`.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    alphas = multiindices(3, p, exact=exact)
    npts = pts.shape[0]
    pow_tab = np.ones((npts, 3, p + 1))
    for k in range(1, p + 1):
        pow_tab[:, :, k] = pow_tab[:, :, k - 1] * pts
    n = alphas.shape[0]
    vals = np.empty((npts, n))
    grads = np.zeros((npts, n, 3))
    for j, alpha in enumerate(alphas):
        prod = np.ones(npts)
        for i in range(3):
            prod = prod * pow_tab[:, i, alpha[i]]
        vals[:, j] = prod
        for i in range(3):
            a = int(alpha[i])
            if a == 0:
                continue
            dterm = np.full(npts, float(a))
            for m in range(3):
                k = a - 1 if m == i else int(alpha[m])
                dterm = dterm * pow_tab[:, m, k]
            grads[:, j, i] = dterm
    return vals, grads


def binomial(n: int, k: int) -> int:
    """Binomial coefficient with the convention C(n, k) = 0 for k < 0."""
    if k < 0 or k > n:
        return 0
    return comb(n, k)
