"""Built-in model problems: meshes and manufactured solutions.

The cube case is the smooth benchmark on (0,1)^3 with natural boundary
conditions; the L-shaped case has a corner singularity along the reentrant
axis and essential boundary conditions.  Polynomial cases reproduce exact
discrete solutions and drive the zero-estimate checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Callable

import numpy as np

from .mesh import Mesh, build_mesh

__all__ = [
    "ExactSolution",
    "generate_cube",
    "generate_lshape",
    "cube_solution",
    "lshape_solution",
    "polynomial_solution",
]

# the six tetrahedra of the Kuhn split of a unit cell, as paths from the
# lower to the upper main-diagonal corner; same diagonal in every cell
# keeps neighbouring cells face-matching
_KUHN_PATHS = tuple(permutations((0, 1, 2)))


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form fields of a model problem.

    All callables take (n, 3) coordinate arrays and return (n, 3) arrays.
    `potential` is the vector potential A, `curl` its curl, and `source`
    the current density j driving the curl-curl problem.
    """

    potential: Callable
    curl: Callable
    source: Callable


def _kuhn_cells(origins, vertex_id):
    """Six Kuhn tets per cell; `vertex_id` maps integer grid points to ids."""
    tets = []
    for ci, cj, ck in origins:
        corner = np.array([ci, cj, ck])
        for path in _KUHN_PATHS:
            cur = corner.copy()
            quad = [vertex_id(*cur)]
            for axis in path:
                cur[axis] += 1
                quad.append(vertex_id(*cur))
            tets.append(quad)
    return np.array(tets, dtype=np.int64)


def generate_cube(n: int, boundary: str = "N") -> Mesh:
    """Unit cube split into n^3 cells of 6 tets each (h = sqrt(3)/n)."""
    if n < 1:
        raise ValueError("n must be positive")
    s = np.linspace(0.0, 1.0, n + 1)
    grid = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1)
    verts = grid.reshape(-1, 3)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    origins = [(i, j, k) for i in range(n) for j in range(n) for k in range(n)]
    tets = _kuhn_cells(origins, vid)
    return build_mesh(verts, tets, boundary)


def generate_lshape(n: int, boundary: str = "D") -> Mesh:
    """L-shaped domain (-1,1)^2 x (0,1) minus {x>0, y<0}, n cells per unit.

    The reentrant edge is the z-axis segment from (0,0,0) to (0,0,1).
    """
    if n < 1:
        raise ValueError("n must be positive")
    nx, nz = 2 * n, n
    xs = np.linspace(-1.0, 1.0, nx + 1)
    zs = np.linspace(0.0, 1.0, nz + 1)

    def gid(i, j, k):
        return (i * (nx + 1) + j) * (nz + 1) + k

    origins = []
    for i in range(nx):
        for j in range(nx):
            xc = 0.5 * (xs[i] + xs[i + 1])
            yc = 0.5 * (xs[j] + xs[j + 1])
            if xc > 0 and yc < 0:
                continue
            for k in range(nz):
                origins.append((i, j, k))
    tets_full = _kuhn_cells(origins, gid)

    used = np.unique(tets_full)
    remap = np.full((nx + 1) * (nx + 1) * (nz + 1), -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    ii, jj, kk = np.unravel_index(used, (nx + 1, nx + 1, nz + 1))
    verts = np.column_stack([xs[ii], xs[jj], zs[kk]])
    return build_mesh(verts, remap[tets_full], boundary)


def cube_solution() -> ExactSolution:
    """Smooth divergence-free field on the cube with j.n = 0 on the boundary."""

    def potential(x):
        sx, cx = np.sin(np.pi * x[:, 0]), np.cos(np.pi * x[:, 0])
        sy, cy = np.sin(np.pi * x[:, 1]), np.cos(np.pi * x[:, 1])
        sz, cz = np.sin(np.pi * x[:, 2]), np.cos(np.pi * x[:, 2])
        return np.column_stack([sx * cy * cz, -cx * sy * cz, np.zeros(len(x))])

    def curl(x):
        sx, cx = np.sin(np.pi * x[:, 0]), np.cos(np.pi * x[:, 0])
        sy, cy = np.sin(np.pi * x[:, 1]), np.cos(np.pi * x[:, 1])
        sz, cz = np.sin(np.pi * x[:, 2]), np.cos(np.pi * x[:, 2])
        return np.pi * np.column_stack(
            [-cx * sy * sz, -sx * cy * sz, 2.0 * sx * sy * cz]
        )

    def source(x):
        return 3.0 * np.pi**2 * potential(x)

    return ExactSolution(potential, curl, source)


def _cutoff(r):
    """C^2 cutoff: 1 for r <= 1/4, 0 for r >= 3/4, quintic in between."""
    s = np.clip((r - 0.25) / 0.5, 0.0, 1.0)
    val = 1.0 - s**3 * (6.0 * s**2 - 15.0 * s + 10.0)
    d_s = -30.0 * s**2 * (s - 1.0) ** 2
    dd_s = -60.0 * s * (2.0 * s - 1.0) * (s - 1.0)
    return val, d_s / 0.5, dd_s / 0.25


_ALPHA = 1.5


def lshape_solution() -> ExactSolution:
    """Singular field A = (0, 0, chi(r) r^a sin(a theta)) with a = 3/2.

    theta is measured from the positive x-axis and spans [0, 3 pi / 2] on
    the L-shaped cross-section; the third derivatives of A blow up at the
    reentrant axis r = 0.  The trace does not vanish on the boundary leg
    at theta = 3 pi / 2, so the Dirichlet data there is inhomogeneous.
    """
    a = _ALPHA

    def polar(x):
        r = np.hypot(x[:, 0], x[:, 1])
        th = np.arctan2(x[:, 1], x[:, 0])
        th = np.where(th < 0, th + 2.0 * np.pi, th)
        return r, th

    def potential(x):
        r, th = polar(x)
        chi, _, _ = _cutoff(r)
        return np.column_stack(
            [np.zeros(len(x)), np.zeros(len(x)), chi * r**a * np.sin(a * th)]
        )

    def curl(x):
        # curl (0,0,u) = (du/dy, -du/dx, 0)
        r, th = polar(x)
        chi, dchi, _ = _cutoff(r)
        s, c = np.sin(th), np.cos(th)
        sa, ca = np.sin(a * th), np.cos(a * th)
        u_r = (dchi * r**a + chi * a * r ** (a - 1.0)) * sa
        u_t = chi * a * r ** (a - 1.0) * ca  # (1/r) du/dtheta
        ux = c * u_r - s * u_t
        uy = s * u_r + c * u_t
        return np.column_stack([uy, -ux, np.zeros(len(x))])

    def source(x):
        # j = (0, 0, -Lap2 u); the singular part is harmonic so only the
        # cutoff contributes
        r, th = polar(x)
        chi, dchi, ddchi = _cutoff(r)
        sa = np.sin(a * th)
        lap = ((2.0 * a + 1.0) * dchi * r ** (a - 1.0) + ddchi * r**a) * sa
        return np.column_stack([np.zeros(len(x)), np.zeros(len(x)), -lap])

    return ExactSolution(potential, curl, source)


def polynomial_solution(p: int) -> ExactSolution:
    """A polynomial field reproduced exactly at discretization order p."""
    if p == 0:
        const = np.array([1.0, -2.0, 0.5])
        d = np.array([0.3, -0.7, 1.1])

        def potential(x):
            return const + np.cross(d, x)

        def curl(x):
            return np.broadcast_to(2.0 * d, (len(x), 3)).copy()

        def source(x):
            return np.zeros((len(x), 3))

    elif p == 1:
        # (xy, -x^2, 0) spans the degree-2 tail allowed at order 1
        def potential(x):
            return np.column_stack(
                [x[:, 0] * x[:, 1], -x[:, 0] ** 2, np.zeros(len(x))]
            )

        def curl(x):
            return np.column_stack(
                [np.zeros(len(x)), np.zeros(len(x)), -3.0 * x[:, 0]]
            )

        def source(x):
            out = np.zeros((len(x), 3))
            out[:, 1] = 3.0
            return out

    else:

        def potential(x):
            return np.column_stack([x[:, 1] ** 2, x[:, 2] ** 2, x[:, 0] ** 2])

        def curl(x):
            return -2.0 * np.column_stack([x[:, 2], x[:, 0], x[:, 1]])

        def source(x):
            return np.full((len(x), 3), -2.0)

    return ExactSolution(potential, curl, source)
