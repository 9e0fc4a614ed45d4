"""Gauged curl-curl solver: saddle-point Galerkin system and error norms.

The magnetic potential is sought in conforming Nedelec space N_p with the
divergence gauge enforced by a Lagrange multiplier in grad(S_{p+1}),
S_{p+1} the conforming scalar space vanishing on the Dirichlet part.  On
a simply connected domain with connected Dirichlet boundary the saddle
system is nonsingular; with pure Neumann conditions one scalar dof is
anchored to factor out the constant multiplier mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import (
    CURL,
    GRAD,
    VALUE,
    assemble_bilinear,
    assemble_functional,
    difference_norms_squared,
)
from .cases import ExactSolution
from .mesh import TAG_DIRICHLET, Mesh
from .quadrature import MAX_DEGREE
from .spaces import LAGRANGE, NEDELEC, DiscreteField, DofSpace

__all__ = ["CurlCurlProblem", "SolveResult", "solve", "energy_error"]


@dataclass
class CurlCurlProblem:
    """Problem data for curl curl A = j with div A = 0.

    The boundary partition is read from the mesh face tags; `exact`
    supplies the manufactured solution when known (used for Dirichlet
    data and error reporting).  C_L is the lifting constant entering the
    global upper bound (1 on convex domains).
    """

    mesh: Mesh
    degree: int
    source: Callable[[np.ndarray], np.ndarray]
    exact: Optional[ExactSolution] = None
    C_L: float = 1.0
    data_quad_degree: Optional[int] = None

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.C_L <= 0:
            raise ValueError("C_L must be positive")

    @property
    def quad_data(self) -> int:
        return self.data_quad_degree or min(2 * self.degree + 6, MAX_DEGREE)


@dataclass
class SolveResult:
    potential: DiscreteField
    multiplier: DiscreteField
    diagnostics: dict = field(default_factory=dict)


def _dirichlet_faces(mesh: Mesh) -> np.ndarray:
    bf = mesh.boundary_faces()
    return bf[mesh.face_tags[bf] == TAG_DIRICHLET]


# above this many free unknowns the sparse LU fill no longer fits small
# machines; switch to the projected conjugate gradient path
DIRECT_DOF_LIMIT = 50000


def _projected_cg(A_ff, Gf, lu_n, b, x0, tol=1e-12, max_iter=50000):
    """CG for A x = b on the affine set Gf.T x = Gf.T x0.

    `lu_n` factors Gf.T Gf; the projector I - Gf (Gf.T Gf)^{-1} Gf.T keeps
    iterates in the constraint plane, where the curl-curl operator is
    positive definite.
    """

    def project(z):
        return z - Gf @ lu_n.solve(Gf.T @ z)

    x = x0.copy()
    r = project(b - A_ff @ x)
    d = r.copy()
    rho = float(r @ r)
    scale = max(np.sqrt(rho), 1e-30)
    for it in range(max_iter):
        if np.sqrt(rho) <= tol * scale:
            return x, it
        Ad = project(A_ff @ d)
        alpha = rho / float(d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        # periodic re-projection controls constraint drift
        if it % 50 == 49:
            r = project(r)
        rho_new = float(r @ r)
        d = r + (rho_new / rho) * d
        rho = rho_new
    raise RuntimeError(f"projected CG stalled after {max_iter} iterations")


def solve(problem: CurlCurlProblem) -> SolveResult:
    """Solve the gauged Galerkin system and verify its optimality residuals."""
    mesh, p = problem.mesh, problem.degree
    spn = DofSpace(mesh, NEDELEC, p)
    spl = DofSpace(mesh, LAGRANGE, p + 1)

    A = assemble_bilinear(spn, spn, CURL, CURL, 2 * p + 2)
    G = assemble_bilinear(spn, spl, VALUE, GRAD, 2 * p + 2)
    f = assemble_functional(spn, VALUE, problem.source, problem.quad_data)

    nu, nq = spn.ndof, spl.ndof
    dfaces = _dirichlet_faces(mesh)
    fixed = np.zeros(nu + nq, dtype=bool)
    values = np.zeros(nu + nq)
    if len(dfaces):
        umask = spn.constraint_mask(dfaces)
        fixed[:nu] = umask
        if problem.exact is not None:
            interp = spn.interpolate(problem.exact.potential)
            values[:nu][umask] = interp[umask]
        fixed[nu:] = spl.constraint_mask(dfaces)
    else:
        # pure Neumann: remove the constant multiplier mode
        fixed[nu] = True

    S = sps.bmat([[A, G], [G.T, None]], format="csr")
    rhs = np.concatenate([f, np.zeros(nq)])
    free = np.flatnonzero(~fixed)
    x = values.copy()
    if len(free) <= DIRECT_DOF_LIMIT:
        rhs_free = rhs[free] - S[free][:, fixed] @ values[fixed]
        K = S[free][:, free].tocsc()
        try:
            lu = spla.splu(K)
        except RuntimeError as exc:
            raise RuntimeError(
                "saddle factorization failed; check boundary partition "
                "and mesh topology"
            ) from exc
        x[free] = lu.solve(rhs_free)
        iterations = None
    else:
        fu, fq = ~fixed[:nu], ~fixed[nu:]
        A_ff = A[np.flatnonzero(fu)][:, np.flatnonzero(fu)].tocsr()
        Gf = G[np.flatnonzero(fu)][:, np.flatnonzero(fq)].tocsr()
        N = (Gf.T @ Gf).tocsc()
        lu_n = spla.splu(N)
        b = f[fu] - A[np.flatnonzero(fu)][:, np.flatnonzero(~fu)] @ values[:nu][~fu]
        # lift the inhomogeneous constraint into the start iterate
        g = -(G[np.flatnonzero(~fu)][:, np.flatnonzero(fq)].T @ values[:nu][~fu])
        x0 = Gf @ lu_n.solve(g)
        uf, iterations = _projected_cg(A_ff, Gf, lu_n, b, x0)
        x[:nu][fu] = uf
        # recover the multiplier from the first-block optimality residual
        x[nu:][fq] = lu_n.solve(Gf.T @ (b - A_ff @ uf))

    u, phi = x[:nu], x[nu:]
    resid = (S @ x - rhs)[free]
    fscale = max(np.linalg.norm(f), np.linalg.norm(A @ u), 1e-30)
    galerkin_rel = np.linalg.norm(resid[: len(np.flatnonzero(~fixed[:nu]))]) / fscale
    gauge_vals = (G.T @ u)[~fixed[nu:]]
    uscale = max(np.linalg.norm(u), 1e-30)
    gauge_rel = np.linalg.norm(gauge_vals) / uscale
    if galerkin_rel > 1e-9:
        raise RuntimeError(f"Galerkin residual {galerkin_rel:.3e} exceeds 1e-9")
    if gauge_rel > 1e-9:
        raise RuntimeError(f"gauge residual {gauge_rel:.3e} exceeds 1e-9")

    div_test = assemble_functional(spl, GRAD, problem.source, problem.quad_data)
    weak_div = np.linalg.norm(div_test[~fixed[nu:]]) / max(np.linalg.norm(f), 1e-30)

    diag = {
        "galerkin_residual": float(galerkin_rel),
        "gauge_residual": float(gauge_rel),
        "multiplier_norm": float(np.linalg.norm(phi) / max(uscale, 1.0)),
        "weak_divergence": float(weak_div),
        "n_dofs": int(nu + nq),
        "n_potential_dofs": int(nu),
        "solver": "direct" if iterations is None else "projected-cg",
        "cg_iterations": 0 if iterations is None else int(iterations),
    }
    return SolveResult(DiscreteField(spn, u), DiscreteField(spl, phi), diag)


def energy_error(
    potential: DiscreteField, exact_curl, quad_degree: Optional[int] = None
):
    """Global and per-edge-patch norms of curl(A - A_h).

    Returns (global_norm, per_edge_norms); the per-patch squares sum to 6
    times the global square because every tet has 6 edges.
    """
    sp = potential.space
    mesh = sp.mesh
    deg = quad_degree or min(2 * sp.degree + 6, MAX_DEGREE)
    per_tet_sq = difference_norms_squared(exact_curl, potential, CURL, deg)
    per_edge = np.empty(mesh.num_edges)
    for e in range(mesh.num_edges):
        per_edge[e] = np.sqrt(per_tet_sq[mesh.edge_tets(e)].sum())
    return float(np.sqrt(per_tet_sq.sum())), per_edge
