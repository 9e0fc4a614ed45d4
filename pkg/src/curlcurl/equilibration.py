"""Broken patchwise equilibration around mesh edges.

The error in the discrete magnetic field chi = curl A_h is estimated one
edge patch at a time.  The source j is first projected onto divergence-free
Raviart-Thomas fields on the patch; the local indicator eta_e is then the
patch distance from chi to the closest Nedelec field whose curl equals
that projection, with zero tangential trace on the Neumann faces sharing
the edge.  Two interchangeable routes compute the minimizer: a mixed
saddle-point problem coupling the whole patch, and a sequential sweep
solving one tiny problem per element while handing tangential traces to
the next element.  Cut-off constants computed from the lowest-order edge
function turn the indicator sum into a guaranteed upper bound.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull

from .assembly import (
    CURL,
    DIV,
    VALUE,
    assemble_bilinear,
    assemble_functional,
    physical_basis,
    quadrature_points,
)
from .mesh import (
    PATCH_DIRICHLET,
    PATCH_INTERIOR,
    PATCH_MIXED,
    PATCH_NEUMANN,
    EdgePatch,
)
from .quadrature import MAX_DEGREE, edge_rule, tetrahedron_rule, triangle_rule
from .spaces import (
    LAGRANGE,
    NEDELEC,
    RAVIART_THOMAS,
    DiscreteField,
    DofSpace,
    edge_function,
    nedelec_span,
    rt_span,
)

PATCH_METHOD = "PatchMixed"
SWEEP_METHOD = "Sweep"
_METHOD_NAMES = {
    "patch": PATCH_METHOD,
    "sweep": SWEEP_METHOD,
    PATCH_METHOD: PATCH_METHOD,
    SWEEP_METHOD: SWEEP_METHOD,
}

_RANK_TOL = 1e-12


class PatchProblem:
    """Local spaces and bilinear forms for one edge patch.

    All matrices are dense; a patch never holds more than a handful of
    tets, so sparse bookkeeping would only add overhead.  The Neumann
    faces sharing the central edge constrain both the Nedelec space
    (tangential trace) and the Raviart-Thomas space (normal trace).
    """

    def __init__(self, patch: EdgePatch, degree: int, data_quad_degree=None):
        if degree < 0:
            raise ValueError("polynomial degree must be nonnegative")
        self.patch = patch
        self.degree = degree
        sub = patch.submesh
        self.sub = sub
        self.quad_assemble = min(2 * degree + 2, MAX_DEGREE)
        self.quad_data = data_quad_degree or min(2 * degree + 6, MAX_DEGREE)
        self.rule = tetrahedron_rule(self.quad_assemble)

        self.nedelec = DofSpace(sub, NEDELEC, degree)
        self.rt = DofSpace(sub, RAVIART_THOMAS, degree)
        self.scalar = DofSpace(sub, LAGRANGE, degree, broken=True)
        gn = patch.gamma_n_faces
        self.n_free = ~self.nedelec.constraint_mask(gn)
        self.rt_free = ~self.rt.constraint_mask(gn)

        qa = self.quad_assemble
        self.mass_n = assemble_bilinear(
            self.nedelec, self.nedelec, VALUE, VALUE, qa
        ).toarray()
        self.mass_rt = assemble_bilinear(self.rt, self.rt, VALUE, VALUE, qa).toarray()
        # rows w, columns v: (w, curl v)
        self.curl_to_rt = assemble_bilinear(
            self.rt, self.nedelec, VALUE, CURL, qa
        ).toarray()
        # rows q, columns w: (q, div w)
        self.div_to_p = assemble_bilinear(self.scalar, self.rt, VALUE, DIV, qa).toarray()

        self._weights = self.rule.weights[None, :] * np.abs(sub.det_jacobians)[:, None]
        self._broken_n = None
        self._vrt = None

    @property
    def nedelec_broken(self) -> DofSpace:
        if self._broken_n is None:
            self._broken_n = DofSpace(self.sub, NEDELEC, self.degree, broken=True)
        return self._broken_n

    def rt_vandermonde(self) -> np.ndarray:
        if self._vrt is None:
            self._vrt = self.rt.vandermonde()
        return self._vrt

    def norm(self, values: np.ndarray) -> float:
        """Patch L2 norm of per-tet values at the assembly rule points."""
        v2 = values**2
        if v2.ndim == 3:
            v2 = v2.sum(axis=2)
        return float(np.sqrt(np.einsum("tq,tq->", self._weights, v2)))


def restricted_curl_values(patch: EdgePatch, potential: DiscreteField, pts):
    """curl A_h per patch element at shared reference points, (nt, nq, 3).

    The submesh keeps each tet's vertex ordering, so reference coordinates
    mean the same thing on the patch and on the parent mesh.
    """
    return potential.eval_curl(patch.parent_tets, pts)


def restricted_curl_dofs(pp: PatchProblem, potential: DiscreteField) -> np.ndarray:
    """Local Nedelec dof values of curl A_h on every patch element."""
    patch = pp.patch
    sub = pp.sub
    v0 = sub.vertices[sub.tets[:, 0]]
    out = np.empty((patch.num_tets, pp.nedelec.tet_dofs.shape[1]))
    for t in range(patch.num_tets):
        def chi(x, t=t):
            ref = (np.asarray(x, dtype=float) - v0[t]) @ sub.inv_jacobians[t].T
            return potential.eval_curl([patch.parent_tets[t]], ref)[0]

        out[t] = pp.nedelec.local_dof_values(chi, pp.quad_assemble, [t])[0]
    return out


def _functional_from_values(pp: PatchProblem, space: DofSpace, values) -> np.ndarray:
    """(values, basis) over the patch for precomputed rule-point values."""
    arr = physical_basis(space, np.arange(pp.sub.num_tets), VALUE, pp.rule.points)
    blk = np.einsum("tq,tqni,tqi->tn", pp._weights, arr, values)
    out = np.zeros(space.ndof)
    np.add.at(out, space.tet_dofs.ravel(), blk.ravel())
    return out


def divfree_projection(pp: PatchProblem, moments: np.ndarray):
    """Divergence-free constrained projection given (data, w) moments.

    Minimizes ||field - data|| over the Raviart-Thomas patch space with
    zero normal trace on the Neumann faces sharing the edge and zero
    divergence, the latter enforced against the broken scalar space.  The
    multiplier is unique because some patch boundary flux is always left
    free.  Returns (coefficients, relative KKT residual).
    """
    rf = np.flatnonzero(pp.rt_free)
    M = pp.mass_rt[np.ix_(rf, rf)]
    D = pp.div_to_p[:, rf]
    nr, ns = len(rf), D.shape[0]
    K = np.zeros((nr + ns, nr + ns))
    K[:nr, :nr] = M
    K[:nr, nr:] = D.T
    K[nr:, :nr] = D
    rhs = np.zeros(nr + ns)
    rhs[:nr] = moments[rf]
    sol = np.linalg.solve(K, rhs)
    resid = np.linalg.norm(K @ sol - rhs) / max(1.0, np.linalg.norm(rhs))
    coefs = np.zeros(pp.rt.ndof)
    coefs[rf] = sol[:nr]
    return coefs, float(resid)


def project_source(pp: PatchProblem, source, quad_degree=None):
    """Closest divergence-free Raviart-Thomas patch field to the source.

    Returns the projected field and a diagnostics dict.
    """
    deg = quad_degree or pp.quad_data
    moments = assemble_functional(pp.rt, VALUE, source, deg)
    coefs, resid = divfree_projection(pp, moments)
    flux = DiscreteField(pp.rt, coefs)
    dv = flux.eval_div(np.arange(pp.sub.num_tets), pp.rule.points)
    scale = max(1.0, float(np.abs(flux.eval(np.arange(pp.sub.num_tets),
                                            pp.rule.points)).max(initial=0.0)))
    info = {
        "kkt_residual": resid,
        "div_residual": float(np.abs(dv).max(initial=0.0) / scale),
    }
    return flux, info


def patch_equilibrate(pp: PatchProblem, chi_values, flux, source=None,
                      use_projected_rhs=True):
    """Patchwise minimizer of ||h - chi|| under curl h = flux.

    Solves the three-field saddle problem coupling the constrained Nedelec
    field, a Raviart-Thomas multiplier for the curl constraint, and a
    broken scalar multiplier pinning the divergence of the first
    multiplier.  With `use_projected_rhs` the curl rows integrate the
    projected source exactly; passing the raw source instead must give the
    same field, which makes a useful cross-check.

    Returns (field, eta, info).
    """
    nf = np.flatnonzero(pp.n_free)
    rf = np.flatnonzero(pp.rt_free)
    nn, nr, ns = len(nf), len(rf), pp.scalar.ndof
    M = pp.mass_n[np.ix_(nf, nf)]
    R = pp.curl_to_rt[np.ix_(rf, nf)]
    D = pp.div_to_p[:, rf]

    K = np.zeros((nn + nr + ns, nn + nr + ns))
    K[:nn, :nn] = M
    K[:nn, nn:nn + nr] = R.T
    K[nn:nn + nr, :nn] = R
    K[nn:nn + nr, nn + nr:] = D.T
    K[nn + nr:, nn:nn + nr] = D

    rhs = np.zeros(nn + nr + ns)
    rhs[:nn] = _functional_from_values(pp, pp.nedelec, chi_values)[nf]
    if use_projected_rhs:
        if flux.space is pp.rt:
            rhs[nn:nn + nr] = (pp.mass_rt @ flux.coefficients)[rf]
        else:
            # flux from a coarser space on the same patch; the assembly rule
            # still integrates its product with the test functions exactly
            fv = flux.eval(np.arange(pp.sub.num_tets), pp.rule.points)
            rhs[nn:nn + nr] = _functional_from_values(pp, pp.rt, fv)[rf]
    else:
        if source is None:
            raise ValueError("raw right-hand side needs the source callable")
        rhs[nn:nn + nr] = assemble_functional(pp.rt, VALUE, source, pp.quad_data)[rf]
    sol = np.linalg.solve(K, rhs)
    resid = np.linalg.norm(K @ sol - rhs) / max(1.0, np.linalg.norm(rhs))

    coefs = np.zeros(pp.nedelec.ndof)
    coefs[nf] = sol[:nn]
    h = DiscreteField(pp.nedelec, coefs)

    tets = np.arange(pp.sub.num_tets)
    hv = h.eval(tets, pp.rule.points)
    eta = pp.norm(hv - chi_values)
    hc = h.eval_curl(tets, pp.rule.points)
    jv = flux.eval(tets, pp.rule.points)
    scale = max(1.0, float(np.abs(jv).max(initial=0.0)))
    info = {
        "kkt_residual": float(resid),
        "curl_residual": float(np.abs(hc - jv).max(initial=0.0) / scale),
        "multiplier_norm": float(np.linalg.norm(sol[nn:nn + nr])),
    }
    return h, float(eta), info


@lru_cache(maxsize=None)
def _curl_span_matrix(p: int) -> np.ndarray:
    """Columns express the Nedelec span curls in the Raviart-Thomas span."""
    pts = tetrahedron_rule(min(2 * p + 2, MAX_DEGREE)).points
    rtv, _ = rt_span(p, pts)
    _, curls = nedelec_span(p, pts)
    A = rtv.transpose(0, 2, 1).reshape(-1, rtv.shape[1])
    B = curls.transpose(0, 2, 1).reshape(-1, curls.shape[1])
    X, _, rank, _ = np.linalg.lstsq(A, B, rcond=None)
    if rank < rtv.shape[1] or np.abs(A @ X - B).max() > 1e-10:
        raise RuntimeError("curl span does not embed; basis tables inconsistent")
    return X


def _positions(dof_row: np.ndarray, gids: np.ndarray) -> np.ndarray:
    """Local positions of the given global dofs inside one tet's dof row."""
    pos = np.empty(len(gids), dtype=np.int64)
    for i, g in enumerate(gids):
        hit = np.nonzero(dof_row == g)[0]
        if hit.size != 1:
            raise ValueError("dof is not shared by the paired elements")
        pos[i] = hit[0]
    return pos


def sweep_solve(pp: PatchProblem, flux, target_values=None, trace_rep=None,
                first_trace=None):
    """Element-by-element minimization along the patch enumeration.

    Each element minimizes ||h - target|| subject to curl h equal to the
    flux restriction and to tangential traces copied from the previously
    solved neighbor (or prescribed on Neumann faces).  `trace_rep`, when
    given, is a broken Nedelec field whose interface jumps shift the
    copied traces; this realizes arbitrary prescribed tangential jumps.
    `first_trace` optionally pins (local positions, values) on the first
    element.  Returns (per-element local coefficients, diagnostics).
    """
    patch = pp.patch
    sub = pp.sub
    spn = pp.nedelec
    nt = patch.num_tets
    nd = spn.tet_dofs.shape[1]
    rule = pp.rule

    Vrt = pp.rt_vandermonde()
    X = _curl_span_matrix(pp.degree)
    CN = spn.dual_coefs
    rloc = flux.local_coefficients()
    gloc = trace_rep.local_coefficients() if trace_rep is not None else None

    tets = np.arange(nt)
    basis = physical_basis(spn, tets, VALUE, rule.points)
    Mcell = np.einsum("tq,tqni,tqmi->tnm", pp._weights, basis, basis)
    if target_values is None:
        bcell = np.zeros((nt, nd))
    else:
        bcell = np.einsum("tq,tqni,tqi->tn", pp._weights, basis, target_values)

    coefs = np.empty((nt, nd))
    curl_resid = 0.0
    trace_gap = 0.0
    null_dims = []
    rscale = max(1.0, float(np.abs(rloc).max(initial=0.0)))
    for t in range(nt):
        fixed = {}
        constraints = list(patch.sweep_trace_faces(t))
        for face_id, src in constraints:
            lf = int(np.nonzero(sub.tet_faces[t] == face_id)[0][0])
            cl = spn.local_face_closure(lf)
            gids = spn.tet_dofs[t][cl]
            if src < 0:
                vals = gloc[t][cl] if gloc is not None else np.zeros(len(cl))
            else:
                pos = _positions(spn.tet_dofs[src], gids)
                vals = coefs[src][pos]
                if gloc is not None:
                    vals = vals + gloc[t][cl] - gloc[src][pos]
            for p_, v_ in zip(cl, vals):
                if p_ in fixed:
                    trace_gap = max(trace_gap, abs(fixed[p_] - v_))
                fixed[int(p_)] = float(v_)
        if t == 0 and first_trace is not None:
            pos0, vals0 = first_trace
            for p_, v_ in zip(pos0, vals0):
                if p_ in fixed:
                    trace_gap = max(trace_gap, abs(fixed[p_] - v_))
                fixed[int(p_)] = float(v_)

        fidx = np.array(sorted(fixed), dtype=np.int64)
        fvals = np.array([fixed[i] for i in fidx], dtype=float)
        free = np.setdiff1d(np.arange(nd), fidx)

        Rmat = Vrt[t] @ X @ CN[t]
        rhs = rloc[t].astype(float).copy()
        cfull = np.zeros(nd)
        if fidx.size:
            cfull[fidx] = fvals
            rhs -= Rmat[:, fidx] @ fvals
        if free.size:
            A = Rmat[:, free]
            U, s, Vh = np.linalg.svd(A)
            rank = int((s > s[0] * _RANK_TOL).sum()) if s.size and s[0] > 0 else 0
            part = np.zeros(free.size)
            if rank:
                part = Vh[:rank].T @ ((U[:, :rank].T @ rhs) / s[:rank])
            cfull[free] = part
            Z = Vh[rank:].T
            null_dims.append(Z.shape[1])
            if Z.shape[1]:
                Mt = Mcell[t]
                H = Z.T @ Mt[np.ix_(free, free)] @ Z
                g = Z.T @ (bcell[t] - Mt @ cfull)[free]
                cfull[free] += Z @ np.linalg.solve(H, g)
        else:
            null_dims.append(0)
        curl_resid = max(curl_resid,
                         float(np.abs(Rmat @ cfull - rloc[t]).max() / rscale))
        coefs[t] = cfull

    info = {
        "curl_residual": curl_resid,
        "trace_gap": trace_gap,
        "null_dims": null_dims,
    }
    return coefs, info


def sweep_equilibrate(pp: PatchProblem, chi_values, flux, chi_dofs=None,
                      mean_trace_first=False):
    """Sweep variant of the patch minimization; returns (field, eta, info).

    The default starts the sweep with an unconstrained first element.  With
    `mean_trace_first` (lowest order only) the first element of a patch
    without Neumann faces is instead pinned on one face: the non-central
    edge moments of that face take the trace of chi (its two-sided mean on
    interior patches), and the curl constraint supplies the remaining
    circulation.  Pinning all three moments would generally contradict the
    curl constraint, whose normal component fixes the circulation around
    the face.
    """
    patch = pp.patch
    first = None
    if mean_trace_first:
        if pp.degree != 0:
            raise ValueError("explicit first-element trace is a lowest-order device")
        if patch.patch_type in (PATCH_INTERIOR, PATCH_DIRICHLET):
            if chi_dofs is None:
                raise ValueError("first-element trace needs the chi dof values")
            spn = pp.nedelec
            sub = pp.sub
            face_id = int(patch.fan_faces[0])
            lf = int(np.nonzero(sub.tet_faces[0] == face_id)[0][0])
            cl = spn.local_face_closure(lf)
            # at degree 0 the closure positions are the face's local edges
            central = int(np.nonzero(sub.tet_edges[0] == patch.edge_local)[0][0])
            keep = np.array([c for c in cl if c != central], dtype=np.int64)
            vals = chi_dofs[0][keep]
            if patch.patch_type == PATCH_INTERIOR:
                last = patch.num_tets - 1
                pos = _positions(spn.tet_dofs[last], spn.tet_dofs[0][keep])
                vals = 0.5 * (vals + chi_dofs[last][pos])
            first = (keep, vals)
    coefs, info = sweep_solve(pp, flux, target_values=chi_values,
                              trace_rep=None, first_trace=first)
    h = DiscreteField(pp.nedelec_broken, coefs.ravel())
    tets = np.arange(pp.sub.num_tets)
    eta = pp.norm(h.eval(tets, pp.rule.points) - chi_values)
    return h, float(eta), info


def _calF_positions(patch: EdgePatch) -> list:
    """Indices into fan_faces of the faces carrying trace data."""
    n = patch.num_tets
    if patch.patch_type == PATCH_INTERIOR:
        return list(range(1, n + 1))
    if patch.patch_type == PATCH_DIRICHLET:
        return list(range(1, n))
    if patch.patch_type == PATCH_MIXED:
        return list(range(0, n))
    return list(range(0, n + 1))


def _face_sides(patch: EdgePatch, j: int):
    """(plus, minus) elements of fan face j; minus is None on the boundary.

    Jumps subtract the earlier element from the later one, and the face
    closing an interior loop subtracts the last element from the first.
    """
    n = patch.num_tets
    if j == 0:
        if patch.patch_type == PATCH_INTERIOR:
            return 0, n - 1
        return 0, None
    if j == n and patch.patch_type != PATCH_INTERIOR:
        return n - 1, None
    if j == n:
        return 0, n - 1
    return j, j - 1


def _face_ref_points(sub, face_id: int, tet: int, uv_pts) -> np.ndarray:
    """Reference coordinates inside a tet of chart points on one face."""
    fv = sub.vertices[sub.faces[face_id]]
    phys = fv[0] + uv_pts[:, :1] * (fv[1] - fv[0]) + uv_pts[:, 1:] * (fv[2] - fv[0])
    v0 = sub.vertices[sub.tets[tet, 0]]
    return (phys - v0) @ sub.inv_jacobians[tet].T


def compatibility_check(pp: PatchProblem, flux, trace_rep=None, tol=1e-10):
    """Verify that prescribed curl and jump data admit a broken field.

    Checks, with residuals relative to the data magnitude: elementwise
    divergence of the curl datum; the match between its normal jumps and
    the surface curl of the prescribed tangential jumps on every listed
    face; and the circulation closure of the jump data along the central
    edge for interior and Neumann patches.
    """
    patch = pp.patch
    sub = pp.sub
    nt = patch.num_tets
    tets = np.arange(nt)
    rule = pp.rule
    scale = max(1.0, float(np.abs(flux.eval(tets, rule.points)).max(initial=0.0)))
    if trace_rep is not None:
        scale = max(scale, float(np.abs(trace_rep.eval(tets, rule.points)).max()))

    div_resid = float(np.abs(flux.eval_div(tets, rule.points)).max(initial=0.0))

    frule = triangle_rule(pp.quad_assemble)
    face_resid = 0.0
    for j in _calF_positions(patch):
        face_id = int(patch.fan_faces[j])
        plus, minus = _face_sides(patch, j)
        nrm = sub.face_normals[face_id]
        rp = _face_ref_points(sub, face_id, plus, frule.points)
        jump_rt = flux.eval([plus], rp)[0]
        jump_curl = (trace_rep.eval_curl([plus], rp)[0]
                     if trace_rep is not None else 0.0)
        if minus is not None:
            rm = _face_ref_points(sub, face_id, minus, frule.points)
            jump_rt = jump_rt - flux.eval([minus], rm)[0]
            if trace_rep is not None:
                jump_curl = jump_curl - trace_rep.eval_curl([minus], rm)[0]
        lhs = jump_rt @ nrm
        rhs = jump_curl @ nrm if trace_rep is not None else np.zeros_like(lhs)
        face_resid = max(face_resid, float(np.abs(lhs - rhs).max(initial=0.0)))

    edge_resid = 0.0
    if patch.patch_type in (PATCH_INTERIOR, PATCH_NEUMANN):
        erule = edge_rule(min(2 * pp.degree + 2, MAX_DEGREE))
        lo, hi = sub.vertices[sub.edges[patch.edge_local]]
        pts = lo[None, :] + erule.points * (hi - lo)[None, :]
        tau = sub.edge_tangents[patch.edge_local]

        def jump_tangential(j):
            plus, minus = _face_sides(patch, j)
            rp = (pts - sub.vertices[sub.tets[plus, 0]]) @ sub.inv_jacobians[plus].T
            val = (trace_rep.eval([plus], rp)[0]
                   if trace_rep is not None else np.zeros((len(pts), 3)))
            if minus is not None and trace_rep is not None:
                rm = (pts - sub.vertices[sub.tets[minus, 0]]) @ sub.inv_jacobians[minus].T
                val = val - trace_rep.eval([minus], rm)[0]
            return val @ tau

        n = patch.num_tets
        if patch.patch_type == PATCH_INTERIOR:
            total = sum(jump_tangential(j) for j in range(1, n + 1))
        else:
            total = sum(jump_tangential(j) for j in range(0, n)) - jump_tangential(n)
        edge_resid = float(np.abs(total).max(initial=0.0))

    ok = (div_resid <= tol * scale and face_resid <= tol * scale
          and edge_resid <= tol * scale)
    return {
        "ok": bool(ok),
        "scale": scale,
        "div_residual": div_resid,
        "face_residual": face_resid,
        "edge_residual": edge_resid,
    }


@dataclass
class CutoffConstants:
    """Patch constants multiplying the indicators in the upper bound."""

    c_p: float
    c_cont: float
    c_kappa: float
    rule: str


def _patch_convex(patch: EdgePatch, tol=1e-10) -> bool:
    """All patch vertices lie on their convex hull, up to a scaled gap."""
    verts = patch.submesh.vertices
    hull = ConvexHull(verts)
    gaps = verts @ hull.equations[:, :3].T + hull.equations[None, :, 3]
    worst = gaps.max(axis=1).min()
    return bool(worst >= -tol * max(patch.h_patch, 1.0))


def cutoff_constants(patch: EdgePatch, c_p_fallback=1.0) -> CutoffConstants:
    """Poincare, continuity, and regularity constants for one patch.

    The Poincare constant is 1/pi on interior patches passing the
    convexity test, 1 on Dirichlet boundary patches, and a configurable
    fallback otherwise.  The continuity constant uses exact max norms of
    the lowest-order edge function: the field magnitude is convex on each
    tet, so vertex values suffice, and its curl is constant per tet.
    """
    sub = patch.submesh
    if patch.patch_type == PATCH_DIRICHLET:
        c_p, rule = 1.0, "dirichlet"
    elif patch.patch_type == PATCH_INTERIOR and _patch_convex(patch):
        c_p, rule = 1.0 / np.pi, "convex-interior"
    else:
        c_p, rule = float(c_p_fallback), "fallback"

    psi = edge_function(sub, patch.edge_local)
    tets = np.arange(sub.num_tets)
    corners = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                        [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    vals = psi.eval(tets, corners)
    vmax = float(np.linalg.norm(vals, axis=2).max())
    curls = psi.eval_curl(tets, corners[:1])
    cmax = float(np.linalg.norm(curls[:, 0, :], axis=1).max())

    c_cont = vmax + c_p * patch.h_patch * cmax
    c_kappa = (2.0 * patch.edge_length / patch.rho_patch) * (1.0 + c_p * patch.kappa)
    return CutoffConstants(c_p, float(c_cont), float(c_kappa), rule)


def oscillation(pp: PatchProblem, source, flux, c_pfw, quad_degree=None):
    """Weighted patch misfit between the source and its projection.

    Returns (osc, misfit) where osc scales the misfit norm by the
    configured constant times the patch diameter.
    """
    deg = quad_degree or pp.quad_data
    rule = tetrahedron_rule(min(deg, MAX_DEGREE))
    sub = pp.sub
    tets = np.arange(sub.num_tets)
    pts = quadrature_points(sub, tets, rule)
    jv = np.asarray(source(pts.reshape(-1, 3)), dtype=float).reshape(len(tets), -1, 3)
    fv = flux.eval(tets, rule.points)
    w = rule.weights[None, :] * np.abs(sub.det_jacobians)[:, None]
    misfit = float(np.sqrt(np.einsum("tq,tqi,tqi->", w, jv - fv, jv - fv)))
    return float(c_pfw) * patch_diameter(pp.patch) * misfit, misfit


def patch_diameter(patch: EdgePatch) -> float:
    return patch.h_patch


@dataclass
class PatchEstimate:
    """One edge's contribution to the error estimate."""

    edge: int
    eta: float
    osc: float
    misfit: float
    c_p: float
    c_cont: float
    c_kappa: float
    kappa: float
    patch_type: str
    method: str
    n_tets: int
    flux: DiscreteField | None = None


@dataclass
class EstimatorReport:
    """All per-edge estimates plus the aggregated quantities."""

    estimates: list
    method: str
    c_l: float
    c_pfw: float

    @property
    def degenerate_osc(self) -> bool:
        return self.c_pfw == 0.0

    @property
    def etas(self) -> np.ndarray:
        return np.array([est.eta for est in self.estimates])

    @property
    def oscs(self) -> np.ndarray:
        return np.array([est.osc for est in self.estimates])

    @property
    def c_conts(self) -> np.ndarray:
        return np.array([est.c_cont for est in self.estimates])

    @property
    def eta_cofree(self) -> float:
        return float(np.sqrt((self.etas**2).sum()))

    @property
    def eta_ofree(self) -> float:
        return float(np.sqrt(6.0 * ((self.c_conts * self.etas) ** 2).sum()))

    @property
    def upper_bound(self) -> float:
        terms = self.c_conts**2 * (self.etas + self.oscs) ** 2
        return float(np.sqrt(6.0) * self.c_l * np.sqrt(terms.sum()))


def estimate_edge(problem, potential: DiscreteField, e: int, method="patch",
                  c_pfw=1.0, c_p_fallback=1.0, mean_trace_first=False,
                  keep_flux=False) -> PatchEstimate:
    """Full indicator pipeline for one edge."""
    method_name = _METHOD_NAMES.get(method)
    if method_name is None:
        raise ValueError(f"unknown estimator method {method!r}")
    patch = problem.mesh.edge_patch(e)
    pp = PatchProblem(patch, problem.degree, data_quad_degree=problem.quad_data)
    flux, _ = project_source(pp, problem.source)
    chi = restricted_curl_values(patch, potential, pp.rule.points)
    if method_name == PATCH_METHOD:
        h, eta, _ = patch_equilibrate(pp, chi, flux)
    else:
        chi_dofs = restricted_curl_dofs(pp, potential) if mean_trace_first else None
        h, eta, _ = sweep_equilibrate(pp, chi, flux, chi_dofs=chi_dofs,
                                      mean_trace_first=mean_trace_first)
    osc, misfit = oscillation(pp, problem.source, flux, c_pfw)
    cc = cutoff_constants(patch, c_p_fallback)
    return PatchEstimate(
        edge=int(e),
        eta=eta,
        osc=float(osc),
        misfit=float(misfit),
        c_p=cc.c_p,
        c_cont=cc.c_cont,
        c_kappa=cc.c_kappa,
        kappa=patch.kappa,
        patch_type=patch.patch_type,
        method=method_name,
        n_tets=patch.num_tets,
        flux=h if keep_flux else None,
    )


def estimate(problem, potential: DiscreteField, method="patch", edges=None,
             c_pfw=1.0, c_p_fallback=1.0, mean_trace_first=False,
             keep_flux=False, threads=1) -> EstimatorReport:
    """Per-edge indicators and aggregates over the whole mesh.

    Results are keyed by edge, so any thread count yields byte-identical
    reports.
    """
    method_name = _METHOD_NAMES.get(method)
    if method_name is None:
        raise ValueError(f"unknown estimator method {method!r}")
    if edges is None:
        edges = range(problem.mesh.num_edges)
    edges = list(edges)

    def worker(e):
        return estimate_edge(problem, potential, e, method=method_name,
                             c_pfw=c_pfw, c_p_fallback=c_p_fallback,
                             mean_trace_first=mean_trace_first,
                             keep_flux=keep_flux)

    threads = max(1, int(threads))
    if threads == 1 or len(edges) < 2:
        results = [worker(e) for e in edges]
    else:
        if edges:
            first = worker(edges[0])
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rest = list(pool.map(worker, edges[1:]))
            results = [first] + rest
        else:
            results = []
    return EstimatorReport(results, method_name, float(problem.C_L), float(c_pfw))
