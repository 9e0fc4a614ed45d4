"""Element integration and sparse global assembly.

All bilinear forms are integrated by mapping reference quadrature points
through each tet's affine chart and contracting physical basis arrays;
the Piola factors are applied once per (tet, operator) so every form
reduces to the same weighted einsum.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from .mesh import Mesh
from .polynomials import bernstein_tet
from .quadrature import MAX_DEGREE, tetrahedron_rule
from .spaces import (
    LAGRANGE,
    NEDELEC,
    RAVIART_THOMAS,
    DiscreteField,
    DofSpace,
    nedelec_span,
    rt_span,
)

__all__ = [
    "physical_basis",
    "assemble_bilinear",
    "assemble_functional",
    "field_norms_squared",
    "difference_norms_squared",
    "quadrature_points",
]

CHUNK = 256

VALUE = "value"
CURL = "curl"
DIV = "div"
GRAD = "grad"

_VALID_OPS = {
    (NEDELEC, VALUE),
    (NEDELEC, CURL),
    (RAVIART_THOMAS, VALUE),
    (RAVIART_THOMAS, DIV),
    (LAGRANGE, VALUE),
    (LAGRANGE, GRAD),
}


def _reference_op(space: DofSpace, op: str, pts) -> np.ndarray:
    """(nq, ns, ...) reference spanning-set array for the operator."""
    if (space.family, op) not in _VALID_OPS:
        raise ValueError(f"operator {op!r} undefined for family {space.family!r}")
    if space.family == NEDELEC:
        vals, curls = nedelec_span(space.degree, pts)
        return vals if op == VALUE else curls
    if space.family == RAVIART_THOMAS:
        vals, divs = rt_span(space.degree, pts)
        return vals if op == VALUE else divs
    vals, grads = bernstein_tet(space.degree, pts)
    return vals if op == VALUE else grads


def physical_basis(space: DofSpace, tets, op: str, pts) -> np.ndarray:
    """Physical-frame basis arrays on the given tets at reference points.

    Returns (ntets, nq, nd_local, 3) for vector-valued operators and
    (ntets, nq, nd_local) for scalar-valued ones (Lagrange value, RT div).
    """
    tets = np.asarray(tets, dtype=np.int64).reshape(-1)
    mesh = space.mesh
    ref = _reference_op(space, op, pts)
    C = space.dual_coefs[tets]
    fam = space.family
    if fam == LAGRANGE and op == VALUE:
        return np.einsum("qs,tsn->tqn", ref, C)
    if fam == RAVIART_THOMAS and op == DIV:
        raw = np.einsum("qs,tsn->tqn", ref, C)
        return raw / mesh.det_jacobians[tets, None, None]
    raw = np.einsum("qsd,tsn->tqnd", ref, C)
    if (fam, op) in ((NEDELEC, VALUE), (LAGRANGE, GRAD)):
        Jinv = mesh.inv_jacobians[tets]
        return np.einsum("tdi,tqnd->tqni", Jinv, raw)
    J = mesh.jacobians[tets]
    det = mesh.det_jacobians[tets]
    return np.einsum("tid,tqnd->tqni", J, raw) / det[:, None, None, None]


def quadrature_points(mesh: Mesh, tets, rule):
    """Physical quadrature points (ntets, nq, 3) for the rule on each tet."""
    tets = np.asarray(tets, dtype=np.int64).reshape(-1)
    v0 = mesh.vertices[mesh.tets[tets, 0]]
    return v0[:, None, :] + rule.points[None] @ mesh.jacobians[tets].transpose(0, 2, 1)


def _pair_chunks(n, chunk=CHUNK):
    for lo in range(0, n, chunk):
        yield np.arange(lo, min(lo + chunk, n), dtype=np.int64)


def assemble_bilinear(
    row_space: DofSpace,
    col_space: DofSpace,
    row_op: str,
    col_op: str,
    quad_degree: int,
) -> sps.csr_matrix:
    """Sparse matrix of (row_op u_row, col_op u_col) over the common mesh."""
    if row_space.mesh is not col_space.mesh:
        raise ValueError("spaces must share a mesh")
    mesh = row_space.mesh
    rule = tetrahedron_rule(min(quad_degree, MAX_DEGREE))
    absdet = np.abs(mesh.det_jacobians)
    rows, cols, vals = [], [], []
    for tets in _pair_chunks(mesh.num_tets):
        ar = physical_basis(row_space, tets, row_op, rule.points)
        ac = physical_basis(col_space, tets, col_op, rule.points)
        w = rule.weights[None, :] * absdet[tets, None]
        if ar.ndim == 4 and ac.ndim == 4:
            blk = np.einsum("tq,tqni,tqmi->tnm", w, ar, ac)
        elif ar.ndim == 3 and ac.ndim == 3:
            blk = np.einsum("tq,tqn,tqm->tnm", w, ar, ac)
        else:
            raise ValueError("operator value ranks differ; no contraction defined")
        rd = row_space.tet_dofs[tets]
        cd = col_space.tet_dofs[tets]
        nr, nc = rd.shape[1], cd.shape[1]
        rows.append(np.repeat(rd, nc, axis=1).ravel())
        cols.append(np.tile(cd, (1, nr)).ravel())
        vals.append(blk.ravel())
    mat = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row_space.ndof, col_space.ndof),
    )
    return mat.tocsr()


def assemble_functional(space: DofSpace, op: str, fn, quad_degree: int) -> np.ndarray:
    """Global vector of (fn, op u_i) for a callable fn on physical points."""
    mesh = space.mesh
    rule = tetrahedron_rule(min(quad_degree, MAX_DEGREE))
    absdet = np.abs(mesh.det_jacobians)
    out = np.zeros(space.ndof)
    for tets in _pair_chunks(mesh.num_tets):
        arr = physical_basis(space, tets, op, rule.points)
        pts = quadrature_points(mesh, tets, rule)
        fv = fn(pts.reshape(-1, 3))
        w = rule.weights[None, :] * absdet[tets, None]
        if arr.ndim == 4:
            fv = np.asarray(fv, dtype=float).reshape(len(tets), -1, 3)
            blk = np.einsum("tq,tqni,tqi->tn", w, arr, fv)
        else:
            fv = np.asarray(fv, dtype=float).reshape(len(tets), -1)
            blk = np.einsum("tq,tqn,tq->tn", w, arr, fv)
        np.add.at(out, space.tet_dofs[tets].ravel(), blk.ravel())
    return out


def _eval_op(field: DiscreteField, op: str, tets, pts):
    if op == VALUE:
        return field.eval(tets, pts)
    if op == CURL:
        return field.eval_curl(tets, pts)
    if op == DIV:
        return field.eval_div(tets, pts)
    if op == GRAD:
        return field.eval_grad(tets, pts)
    raise ValueError(f"unknown operator {op!r}")


def difference_norms_squared(
    fn, field: DiscreteField | None, op: str, quad_degree: int, mesh: Mesh | None = None
) -> np.ndarray:
    """Per-tet squared L2 norms of fn - op(field).

    Either argument may be omitted: fn=None measures the field alone;
    field=None measures the callable alone (then `mesh` is required).
    """
    if field is not None:
        mesh = field.space.mesh
    elif fn is None or mesh is None:
        raise ValueError("need a field, or a callable with an explicit mesh")
    rule = tetrahedron_rule(min(quad_degree, MAX_DEGREE))
    absdet = np.abs(mesh.det_jacobians)
    out = np.empty(mesh.num_tets)
    for tets in _pair_chunks(mesh.num_tets):
        diff = None
        if field is not None:
            diff = _eval_op(field, op, tets, rule.points)
        if fn is not None:
            pts = quadrature_points(mesh, tets, rule)
            fv = np.asarray(fn(pts.reshape(-1, 3)), dtype=float)
            fv = fv.reshape(diff.shape if diff is not None else (len(tets), -1, 3))
            diff = fv if diff is None else fv - diff
        sq = diff ** 2 if diff.ndim == 2 else (diff ** 2).sum(axis=2)
        out[tets] = (rule.weights[None, :] * sq).sum(axis=1) * absdet[tets]
    return out


def field_norms_squared(field: DiscreteField, op: str, quad_degree: int) -> np.ndarray:
    """Per-tet squared L2 norms of op(field)."""
    return difference_norms_squared(None, field, op, quad_degree)
