"""Lagrange, Nedelec, and Raviart-Thomas spaces on tetrahedral meshes.

Degrees of freedom are moments against fixed weight polynomials over the
physical entities (edges, faces, interiors), always parametrized by the
ascending-vertex chart of each entity.  Because tets store their vertices
in ascending global order, the same functional is obtained from every
adjacent tet, so conforming spaces need no orientation flips: all dof
signs are +1.

Per-tet bases are constructed as dual bases of a fixed reference spanning
set pushed through the (co/contra-variant) Piola map; the dof functionals
reduce to reference-space contractions up to per-entity scalings, which
makes the generalized Vandermonde assembly fully batched.
"""

from __future__ import annotations

import numpy as np

from .mesh import LOCAL_EDGES, LOCAL_FACES, Mesh
from .polynomials import (
    bernstein_tet,
    bernstein_triangle,
    dim_P2,
    dim_P3,
    monomials,
    multiindices,
    shifted_legendre,
)
from .quadrature import MAX_DEGREE, edge_rule, tetrahedron_rule, triangle_rule

__all__ = [
    "LAGRANGE",
    "NEDELEC",
    "RAVIART_THOMAS",
    "space_dimension",
    "DofSpace",
    "DiscreteField",
    "basis_eval",
    "edge_function",
    "tangential_component",
    "surface_curl",
]

LAGRANGE = "lagrange"
NEDELEC = "nedelec"
RAVIART_THOMAS = "rt"

MAX_ORDER = 10

REF_VERTS = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)

# centering and scaling of the homogeneous tail generators; any affine
# reparametrization spans the same complement of [P_p]^3
_CENTER = np.array([0.25, 0.25, 0.25])
_SCALE = 0.5

_CROSS = [
    np.array([[0.0, 0, 0], [0, 0, 1], [0, -1, 0]]),  # v x e0 = (0, vz, -vy)
    np.array([[0.0, 0, -1], [0, 0, 0], [1, 0, 0]]),  # v x e1 = (-vz, 0, vx)
    np.array([[0.0, 1, 0], [-1, 0, 0], [0, 0, 0]]),  # v x e2 = (vy, -vx, 0)
]


def space_dimension(family: str, p: int) -> int:
    """Per-tet dimension of the requested family at degree p."""
    if family == LAGRANGE:
        return dim_P3(p)
    if family == NEDELEC:
        return (p + 1) * (p + 3) * (p + 4) // 2
    if family == RAVIART_THOMAS:
        return (p + 1) * (p + 2) * (p + 4) // 2
    raise ValueError(f"unknown family {family!r}")


def _check_order(family: str, p: int):
    if not 0 <= p <= MAX_ORDER:
        raise ValueError(f"degree {p} outside supported range 0..{MAX_ORDER}")
    space_dimension(family, p)


def lagrange_span(p: int, pts):
    """Values and gradients of the scalar spanning set (Bernstein)."""
    return bernstein_tet(p, pts)


def nedelec_span(p: int, pts):
    """Values and curls of the spanning set of N_p on the reference tet.

    Columns are [P_p]^3 in component-major Bernstein order followed by the
    homogeneous tail m_a(v) (v x e_i) with v the centered coordinates; for
    i = 2 only the generators with no v_z power are kept, which removes
    exactly the linear relations among the tail generators.

    Returns vals (npts, ns, 3) and curls (npts, ns, 3).
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    npts = pts.shape[0]
    bvals, bgrads = bernstein_tet(p, pts)
    nb = bvals.shape[1]
    ns = space_dimension(NEDELEC, p)
    vals = np.zeros((npts, ns, 3))
    curls = np.zeros((npts, ns, 3))
    for i in range(3):
        sl = slice(i * nb, (i + 1) * nb)
        vals[:, sl, i] = bvals
        # curl(B e_i) = grad B x e_i
        curls[:, sl, :] = np.cross(bgrads, np.eye(3)[i][None, None, :])
    v = (pts - _CENTER) / _SCALE
    mvals, mgrads = monomials(p, v, exact=True)
    alphas = multiindices(3, p, exact=True)
    col = 3 * nb
    for i in range(3):
        keep = np.arange(len(alphas)) if i < 2 else np.flatnonzero(alphas[:, 2] == 0)
        cross_v = v @ _CROSS[i].T  # (npts, 3) = v x e_i
        for a in keep:
            vals[:, col, :] = mvals[:, a, None] * cross_v
            # curl_x[m(v) (v x e_i)] = (grad_v m x (v x e_i) - 2 m e_i)/s
            gv = mgrads[:, a, :]
            curls[:, col, :] = (
                np.cross(gv, cross_v) - 2.0 * mvals[:, a, None] * np.eye(3)[i]
            ) / _SCALE
            col += 1
    assert col == ns
    return vals, curls


def rt_span(p: int, pts):
    """Values and divergences of the spanning set of RT_p.

    Columns are [P_p]^3 Bernstein then the tail m_a(v) v over |a| = p.
    Returns vals (npts, ns, 3) and divs (npts, ns).
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    npts = pts.shape[0]
    bvals, bgrads = bernstein_tet(p, pts)
    nb = bvals.shape[1]
    ns = space_dimension(RAVIART_THOMAS, p)
    vals = np.zeros((npts, ns, 3))
    divs = np.zeros((npts, ns))
    for i in range(3):
        sl = slice(i * nb, (i + 1) * nb)
        vals[:, sl, i] = bvals
        divs[:, sl] = bgrads[:, :, i]
    v = (pts - _CENTER) / _SCALE
    mvals, mgrads = monomials(p, v, exact=True)
    ntail = mvals.shape[1]
    col = 3 * nb
    for a in range(ntail):
        vals[:, col, :] = mvals[:, a, None] * v
        divs[:, col] = ((mgrads[:, a, :] * v).sum(axis=1) + 3.0 * mvals[:, a]) / _SCALE
        col += 1
    assert col == ns
    return vals, divs


class _ReferenceTables:
    """Reference-side ingredients of the dof functionals for one family."""

    _cache: dict = {}

    def __new__(cls, family: str, p: int):
        key = (family, p)
        if key not in cls._cache:
            obj = super().__new__(cls)
            obj._build(family, p)
            cls._cache[key] = obj
        return cls._cache[key]

    def _build(self, family: str, p: int):
        _check_order(family, p)
        self.family = family
        self.degree = p
        self.ndof = space_dimension(family, p)
        deg = min(2 * p + 2, MAX_DEGREE)
        if family == LAGRANGE:
            self._build_lagrange(p)
            return

        span = nedelec_span if family == NEDELEC else rt_span
        ns = self.ndof

        if family == NEDELEC:
            erule = edge_rule(deg)
            t = erule.points[:, 0]
            leg = shifted_legendre(p, t)  # (nq, p+1)
            self.n_edge = p + 1
            self.R_edge = np.empty((6, p + 1, ns))
            for ei, (la, lb) in enumerate(LOCAL_EDGES):
                sigma = REF_VERTS[lb] - REF_VERTS[la]
                xq = REF_VERTS[la] + t[:, None] * sigma
                svals, _ = span(p, xq)
                tang = svals @ sigma  # (nq, ns)
                self.R_edge[ei] = np.einsum("q,qk,qs->ks", erule.weights, leg, tang)
        else:
            self.n_edge = 0

        frule = triangle_rule(deg)
        uv = frule.points
        if family == NEDELEC:
            nfk = dim_P2(p - 1)
            fw = bernstein_triangle(p - 1, uv)[0] if nfk else np.zeros((len(uv), 0))
            self.n_face = 2 * nfk
            self.R_face = np.empty((4, 2, nfk, ns))
        else:
            nfk = dim_P2(p)
            fw = bernstein_triangle(p, uv)[0]
            self.n_face = nfk
            self.R_face = np.empty((4, nfk, ns))
        self.face_tangents = np.empty((4, 2, 3))
        for fi, (l0, l1, l2) in enumerate(LOCAL_FACES):
            tau0 = REF_VERTS[l1] - REF_VERTS[l0]
            tau1 = REF_VERTS[l2] - REF_VERTS[l0]
            self.face_tangents[fi] = (tau0, tau1)
            xq = REF_VERTS[l0] + uv[:, :1] * tau0 + uv[:, 1:] * tau1
            svals = span(p, xq)[0]
            if family == NEDELEC:
                if nfk:
                    for b, tau in enumerate((tau0, tau1)):
                        tang = svals @ tau
                        self.R_face[fi, b] = np.einsum(
                            "q,qk,qs->ks", frule.weights, fw, tang
                        )
            else:
                nrm = np.cross(tau0, tau1)
                flux = svals @ nrm
                self.R_face[fi] = np.einsum("q,qk,qs->ks", frule.weights, fw, flux)

        q3 = p - 2 if family == NEDELEC else p - 1
        nik = dim_P3(q3)
        self.n_int = 3 * nik
        trule = tetrahedron_rule(deg)
        svals = span(p, trule.points)[0]
        if nik:
            iw = bernstein_tet(q3, trule.points)[0]
            # R_int[d, k, s] = 6 sum_q w_q span_s,d(x_q) phi_k(x_q)
            self.R_int = 6.0 * np.einsum("q,qk,qsd->dks", trule.weights, iw, svals)
        else:
            self.R_int = np.zeros((3, 0, ns))

    def _build_lagrange(self, q: int):
        nodes = [REF_VERTS[i] for i in range(4)] if q > 0 else []
        self.n_vertex = 1 if q > 0 else 0
        self.n_edge = max(q - 1, 0)
        self.n_face = dim_P2(q - 3)
        self.n_int = dim_P3(q - 4)
        if q == 0:
            nodes = [np.full(3, 0.25)]
        for la, lb in LOCAL_EDGES:
            for k in range(1, q):
                nodes.append(REF_VERTS[la] + (k / q) * (REF_VERTS[lb] - REF_VERTS[la]))
        for l0, l1, l2 in LOCAL_FACES:
            tau0 = REF_VERTS[l1] - REF_VERTS[l0]
            tau1 = REF_VERTS[l2] - REF_VERTS[l0]
            for i in range(1, q):
                for j in range(1, q - i):
                    nodes.append(REF_VERTS[l0] + (i / q) * tau0 + (j / q) * tau1)
        for i in range(1, q):
            for j in range(1, q - i):
                for k in range(1, q - i - j):
                    nodes.append(np.array([i, j, k]) / q)
        self.nodes = np.array(nodes)
        assert self.nodes.shape[0] == self.ndof
        V = bernstein_tet(q, self.nodes)[0]
        self.C_const = np.linalg.solve(V, np.eye(self.ndof))


def _vandermonde(mesh: Mesh, family: str, p: int) -> np.ndarray:
    """Per-tet matrices of the local functionals applied to the span columns.

    Row d of V[t] holds functional d of tet t evaluated on every span
    element, so V[t] @ c gives the dof values of the field with span
    coefficients c.  Only the moment-based families are supported.
    """
    tab = _ReferenceTables(family, p)
    nt = mesh.num_tets
    nd = tab.ndof
    if family == LAGRANGE:
        raise ValueError("dof-vandermonde is only defined for moment dofs")

    V = np.empty((nt, nd, nd))
    row = 0
    if family == NEDELEC:
        ne = tab.n_edge
        elen = mesh.edge_lengths[mesh.tet_edges]  # (nt, 6)
        for ei in range(6):
            V[:, row:row + ne, :] = tab.R_edge[ei][None] / elen[:, ei, None, None]
            row += ne
        nfk = tab.n_face // 2
        if nfk:
            J = mesh.jacobians
            for fi in range(4):
                for b in range(2):
                    tau = tab.face_tangents[fi, b]
                    tlen = np.linalg.norm(J @ tau, axis=1)  # (nt,)
                    V[:, row:row + nfk, :] = (
                        tab.R_face[fi, b][None] / tlen[:, None, None]
                    )
                    row += nfk
        if tab.n_int:
            # physical row block: (J^{-T} s)_i = sum_d Jinv[d, i] s_d
            mix = np.einsum("tdi,dks->tiks", mesh.inv_jacobians, tab.R_int)
            V[:, row:row + tab.n_int, :] = mix.reshape(nt, tab.n_int, nd)
            row += tab.n_int
    else:
        nfk = tab.n_face
        areas = mesh.face_areas[mesh.tet_faces]  # (nt, 4)
        for fi in range(4):
            V[:, row:row + nfk, :] = (
                tab.R_face[fi][None] / (2.0 * areas[:, fi, None, None])
            )
            row += nfk
        if tab.n_int:
            scaled = mesh.jacobians / mesh.det_jacobians[:, None, None]
            mix = np.einsum("tid,dks->tiks", scaled, tab.R_int)
            V[:, row:row + tab.n_int, :] = mix.reshape(nt, tab.n_int, nd)
            row += tab.n_int
    assert row == nd
    return V


def _dual_coefficients(mesh: Mesh, family: str, p: int) -> np.ndarray:
    """Per-tet dual-basis coefficients C with basis_j = sum_s C[s, j] span_s."""
    tab = _ReferenceTables(family, p)
    nt = mesh.num_tets
    nd = tab.ndof
    if family == LAGRANGE:
        return np.broadcast_to(tab.C_const, (nt, nd, nd))
    V = _vandermonde(mesh, family, p)
    return np.linalg.solve(V, np.broadcast_to(np.eye(nd), (nt, nd, nd)))


class DofSpace:
    """A finite element space over a mesh (or patch submesh).

    Parameters
    ----------
    mesh : Mesh
    family : "lagrange" | "nedelec" | "rt"
    degree : polynomial order p >= 0
    broken : when True, no inter-element continuity; dofs are per tet.

    Attributes
    ----------
    ndof : global dimension
    tet_dofs : (nt, nd_local) global dof ids per tet
    signs : (nt, nd_local) orientation signs, identically +1 under the
        ascending-chart storage convention
    """

    def __init__(self, mesh: Mesh, family: str, degree: int, broken: bool = False):
        _check_order(family, degree)
        self.mesh = mesh
        self.family = family
        self.degree = degree
        self.broken = bool(broken)
        self.tables = _ReferenceTables(family, degree)
        self.nd_local = self.tables.ndof
        self._dual = None
        self._build_numbering()
        self.signs = np.ones((mesh.num_tets, self.nd_local))

    def _build_numbering(self):
        mesh, p = self.mesh, self.degree
        nt = mesh.num_tets
        nd = self.nd_local
        if self.broken:
            self.ndof = nt * nd
            self.tet_dofs = np.arange(self.ndof, dtype=np.int64).reshape(nt, nd)
            return
        tab = self.tables
        cols = []
        if self.family == LAGRANGE:
            q = p
            if q == 0:
                # discontinuous by nature; a single interior node per tet
                self.ndof = nt
                self.tet_dofs = np.arange(nt, dtype=np.int64)[:, None]
                return
            self.offset_edge = mesh.num_vertices
            self.offset_face = self.offset_edge + mesh.num_edges * tab.n_edge
            self.offset_int = self.offset_face + mesh.num_faces * tab.n_face
            self.ndof = self.offset_int + nt * tab.n_int
            cols.append(mesh.tets)
            if tab.n_edge:
                base = self.offset_edge + mesh.tet_edges * tab.n_edge
                cols.append(
                    base[:, :, None] + np.arange(tab.n_edge)[None, None, :]
                )
            if tab.n_face:
                base = self.offset_face + mesh.tet_faces * tab.n_face
                cols.append(
                    base[:, :, None] + np.arange(tab.n_face)[None, None, :]
                )
            if tab.n_int:
                cols.append(
                    self.offset_int
                    + (np.arange(nt) * tab.n_int)[:, None]
                    + np.arange(tab.n_int)[None, :]
                )
        elif self.family == NEDELEC:
            self.offset_face = mesh.num_edges * tab.n_edge
            self.offset_int = self.offset_face + mesh.num_faces * tab.n_face
            self.ndof = self.offset_int + nt * tab.n_int
            base = mesh.tet_edges * tab.n_edge
            cols.append(base[:, :, None] + np.arange(tab.n_edge)[None, None, :])
            if tab.n_face:
                base = self.offset_face + mesh.tet_faces * tab.n_face
                cols.append(
                    base[:, :, None] + np.arange(tab.n_face)[None, None, :]
                )
            if tab.n_int:
                cols.append(
                    self.offset_int
                    + (np.arange(nt) * tab.n_int)[:, None]
                    + np.arange(tab.n_int)[None, :]
                )
        else:
            self.offset_int = mesh.num_faces * tab.n_face
            self.ndof = self.offset_int + nt * tab.n_int
            base = mesh.tet_faces * tab.n_face
            cols.append(base[:, :, None] + np.arange(tab.n_face)[None, None, :])
            if tab.n_int:
                cols.append(
                    self.offset_int
                    + (np.arange(nt) * tab.n_int)[:, None]
                    + np.arange(tab.n_int)[None, :]
                )
        flat = [c.reshape(self.mesh.num_tets, -1) for c in cols]
        self.tet_dofs = np.concatenate(flat, axis=1).astype(np.int64)
        assert self.tet_dofs.shape[1] == nd

    @property
    def dual_coefs(self) -> np.ndarray:
        """(nt, ns, nd) arrays C with local basis_j = sum_s C[t][s, j] span_s."""
        if self._dual is None:
            self._dual = _dual_coefficients(self.mesh, self.family, self.degree)
        return self._dual

    def vandermonde(self) -> np.ndarray:
        """(nt, nd, nd) matrices applying the local functionals to the span.

        Recomputed on every call; patch-local solvers use it once and the
        global spaces never need it.
        """
        return _vandermonde(self.mesh, self.family, self.degree)

    # -- constraint masks ------------------------------------------------

    def face_closure_dofs(self, face_ids) -> np.ndarray:
        """Dofs whose trace on the given faces can be nonzero.

        For Nedelec these are the face moments plus the edge moments of the
        faces' edges (tangential trace); for Raviart-Thomas the face
        moments (normal trace); for Lagrange the vertex, edge, and face
        nodes on the closure.
        """
        face_ids = np.asarray(face_ids, dtype=np.int64).reshape(-1)
        if self.broken:
            raise ValueError("face_closure_dofs applies to conforming spaces")
        tab = self.tables
        mesh = self.mesh
        out = []
        if self.family == NEDELEC:
            edges = np.unique(mesh.face_edges[face_ids])
            out.append(
                (edges[:, None] * tab.n_edge + np.arange(tab.n_edge)).ravel()
            )
            if tab.n_face:
                out.append(
                    (
                        self.offset_face
                        + face_ids[:, None] * tab.n_face
                        + np.arange(tab.n_face)
                    ).ravel()
                )
        elif self.family == RAVIART_THOMAS:
            out.append(
                (face_ids[:, None] * tab.n_face + np.arange(tab.n_face)).ravel()
            )
        else:
            if self.degree == 0:
                return np.array([], dtype=np.int64)
            verts = np.unique(mesh.faces[face_ids])
            out.append(verts)
            edges = np.unique(mesh.face_edges[face_ids])
            if tab.n_edge:
                out.append(
                    (
                        self.offset_edge
                        + edges[:, None] * tab.n_edge
                        + np.arange(tab.n_edge)
                    ).ravel()
                )
            if tab.n_face:
                out.append(
                    (
                        self.offset_face
                        + face_ids[:, None] * tab.n_face
                        + np.arange(tab.n_face)
                    ).ravel()
                )
        if not out:
            return np.array([], dtype=np.int64)
        return np.unique(np.concatenate(out))

    def constraint_mask(self, face_ids) -> np.ndarray:
        """Boolean mask of dofs eliminated by zero trace on the faces."""
        mask = np.zeros(self.ndof, dtype=bool)
        mask[self.face_closure_dofs(face_ids)] = True
        return mask

    # -- interpolation ----------------------------------------------------

    def interpolate(self, fn, quad_degree: int | None = None) -> np.ndarray:
        """Coefficients whose dofs match those of the callable `fn`.

        `fn` maps (n, 3) physical points to (n, 3) values (or (n,) for
        Lagrange).  For conforming spaces each entity functional is applied
        once; for broken spaces per tet.
        """
        deg = quad_degree or min(2 * self.degree + 6, MAX_DEGREE)
        coeffs = np.zeros(self.ndof)
        mesh, tab = self.mesh, self.tables
        if self.family == LAGRANGE:
            return self._interpolate_lagrange(fn)
        if self.broken:
            dofs = self.local_dof_values(fn, deg)
            coeffs[self.tet_dofs.ravel()] = dofs.ravel()
            return coeffs

        if self.family == NEDELEC:
            er = edge_rule(deg)
            t = er.points[:, 0]
            leg = shifted_legendre(self.degree, t)
            a = mesh.vertices[mesh.edges[:, 0]]
            b = mesh.vertices[mesh.edges[:, 1]]
            for e in range(mesh.num_edges):
                pts = a[e] + t[:, None] * (b[e] - a[e])
                tang = fn(pts) @ (b[e] - a[e])
                vals = leg.T @ (er.weights * tang) / mesh.edge_lengths[e]
                coeffs[e * tab.n_edge:(e + 1) * tab.n_edge] = vals
        fr = triangle_rule(deg)
        uv = fr.points
        if self.family == NEDELEC and tab.n_face:
            nfk = tab.n_face // 2
            fw = bernstein_triangle(self.degree - 1, uv)[0]
            for f in range(mesh.num_faces):
                v0, v1, v2 = mesh.vertices[mesh.faces[f]]
                pts = v0 + uv[:, :1] * (v1 - v0) + uv[:, 1:] * (v2 - v0)
                fv = fn(pts)
                base = self.offset_face + f * tab.n_face
                for bdx, tau in enumerate((v1 - v0, v2 - v0)):
                    tang = fv @ tau / np.linalg.norm(tau)
                    coeffs[base + bdx * nfk: base + (bdx + 1) * nfk] = fw.T @ (
                        fr.weights * tang
                    )
        if self.family == RAVIART_THOMAS:
            fw = bernstein_triangle(self.degree, uv)[0]
            for f in range(mesh.num_faces):
                v0, v1, v2 = mesh.vertices[mesh.faces[f]]
                pts = v0 + uv[:, :1] * (v1 - v0) + uv[:, 1:] * (v2 - v0)
                nrm = np.cross(v1 - v0, v2 - v0)
                flux = fn(pts) @ nrm / (2.0 * mesh.face_areas[f])
                coeffs[f * tab.n_face:(f + 1) * tab.n_face] = fw.T @ (
                    fr.weights * flux
                )
        if tab.n_int:
            tr = tetrahedron_rule(deg)
            q3 = self.degree - 2 if self.family == NEDELEC else self.degree - 1
            iw = bernstein_tet(q3, tr.points)[0]
            for tt in range(mesh.num_tets):
                pts = (
                    mesh.vertices[mesh.tets[tt, 0]]
                    + tr.points @ mesh.jacobians[tt].T
                )
                fv = fn(pts)  # (nq, 3)
                blk = 6.0 * np.einsum("q,qk,qi->ik", tr.weights, iw, fv)
                base = self.offset_int + tt * tab.n_int
                coeffs[base: base + tab.n_int] = blk.reshape(-1)
        return coeffs

    def _interpolate_lagrange(self, fn) -> np.ndarray:
        mesh, tab = self.mesh, self.tables
        coeffs = np.empty(self.ndof)
        if self.broken or self.degree == 0:
            for tt in range(mesh.num_tets):
                pts = (
                    mesh.vertices[mesh.tets[tt, 0]] + tab.nodes @ mesh.jacobians[tt].T
                )
                coeffs[self.tet_dofs[tt]] = fn(pts)
            return coeffs
        q = self.degree
        coeffs[: mesh.num_vertices] = fn(mesh.vertices)
        if tab.n_edge:
            a = mesh.vertices[mesh.edges[:, 0]]
            b = mesh.vertices[mesh.edges[:, 1]]
            frac = np.arange(1, q)[None, :, None] / q
            pts = a[:, None, :] + frac * (b - a)[:, None, :]
            coeffs[self.offset_edge:self.offset_face] = fn(
                pts.reshape(-1, 3)
            ).reshape(-1)
        if tab.n_face:
            ij = np.array(
                [(i, j) for i in range(1, q) for j in range(1, q - i)], dtype=float
            )
            out = []
            for f in range(mesh.num_faces):
                v0, v1, v2 = mesh.vertices[mesh.faces[f]]
                pts = v0 + np.outer(ij[:, 0] / q, v1 - v0) + np.outer(
                    ij[:, 1] / q, v2 - v0
                )
                out.append(fn(pts))
            coeffs[self.offset_face:self.offset_int] = np.concatenate(out)
        if tab.n_int:
            ijk = np.array(
                [
                    (i, j, k)
                    for i in range(1, q)
                    for j in range(1, q - i)
                    for k in range(1, q - i - j)
                ],
                dtype=float,
            )
            out = []
            for tt in range(mesh.num_tets):
                pts = (
                    mesh.vertices[mesh.tets[tt, 0]]
                    + (ijk / q) @ mesh.jacobians[tt].T
                )
                out.append(fn(pts))
            coeffs[self.offset_int:] = np.concatenate(out)
        return coeffs

    def local_face_closure(self, local_face: int) -> np.ndarray:
        """Local dof indices whose trace on a tet's local face is nonzero.

        For Nedelec: the moments of the face's three edges plus the face
        moments; for Raviart-Thomas: the face moments.  Positions index
        into the local dof ordering, identical for every tet.
        """
        tab = self.tables
        face_edge_ids = {0: (3, 4, 5), 1: (1, 2, 5), 2: (0, 2, 4), 3: (0, 1, 3)}
        if self.family == NEDELEC:
            out = [
                np.arange(ei * tab.n_edge, (ei + 1) * tab.n_edge)
                for ei in face_edge_ids[local_face]
            ]
            if tab.n_face:
                base = 6 * tab.n_edge + local_face * tab.n_face
                out.append(np.arange(base, base + tab.n_face))
            return np.concatenate(out)
        if self.family == RAVIART_THOMAS:
            base = local_face * tab.n_face
            return np.arange(base, base + tab.n_face)
        raise ValueError("local_face_closure applies to vector families")

    def local_dof_values(self, fn, quad_degree: int | None = None, tets=None) -> np.ndarray:
        """Apply all local functionals of the given tets to a callable.

        Returns (len(tets), nd_local); row i holds the dof values a field
        equal to `fn` on tets[i] would carry.  Vector families only;
        tets=None covers the whole mesh.
        """
        deg = quad_degree or min(2 * self.degree + 6, MAX_DEGREE)
        if tets is None:
            tets = np.arange(self.mesh.num_tets)
        return self._local_dof_values(fn, deg, np.asarray(tets, dtype=np.int64))

    def _local_dof_values(self, fn, deg, tets) -> np.ndarray:
        mesh, tab = self.mesh, self.tables
        out = np.empty((len(tets), self.nd_local))
        col = 0
        if self.family == NEDELEC:
            er = edge_rule(deg)
            t = er.points[:, 0]
            leg = shifted_legendre(self.degree, t)
            for ei, (la, lb) in enumerate(LOCAL_EDGES):
                for ti, tt in enumerate(tets):
                    a = mesh.vertices[mesh.tets[tt, la]]
                    b = mesh.vertices[mesh.tets[tt, lb]]
                    pts = a + t[:, None] * (b - a)
                    tang = fn(pts) @ (b - a)
                    out[ti, col:col + tab.n_edge] = leg.T @ (
                        er.weights * tang
                    ) / np.linalg.norm(b - a)
                col += tab.n_edge
        fr = triangle_rule(deg)
        uv = fr.points
        if self.family == NEDELEC and tab.n_face:
            nfk = tab.n_face // 2
            fw = bernstein_triangle(self.degree - 1, uv)[0]
            for fi, (l0, l1, l2) in enumerate(LOCAL_FACES):
                for ti, tt in enumerate(tets):
                    v0, v1, v2 = mesh.vertices[mesh.tets[tt, [l0, l1, l2]]]
                    pts = v0 + uv[:, :1] * (v1 - v0) + uv[:, 1:] * (v2 - v0)
                    fv = fn(pts)
                    for bdx, tau in enumerate((v1 - v0, v2 - v0)):
                        tang = fv @ tau / np.linalg.norm(tau)
                        out[ti, col + bdx * nfk: col + (bdx + 1) * nfk] = fw.T @ (
                            fr.weights * tang
                        )
                col += tab.n_face
        if self.family == RAVIART_THOMAS:
            fw = bernstein_triangle(self.degree, uv)[0]
            for fi, (l0, l1, l2) in enumerate(LOCAL_FACES):
                for ti, tt in enumerate(tets):
                    v0, v1, v2 = mesh.vertices[mesh.tets[tt, [l0, l1, l2]]]
                    pts = v0 + uv[:, :1] * (v1 - v0) + uv[:, 1:] * (v2 - v0)
                    nrm = np.cross(v1 - v0, v2 - v0)
                    area = 0.5 * np.linalg.norm(nrm)
                    flux = fn(pts) @ nrm / (2.0 * area)
                    out[ti, col:col + tab.n_face] = fw.T @ (fr.weights * flux)
                col += tab.n_face
        if tab.n_int:
            tr = tetrahedron_rule(deg)
            q3 = self.degree - 2 if self.family == NEDELEC else self.degree - 1
            iw = bernstein_tet(q3, tr.points)[0]
            for ti, tt in enumerate(tets):
                pts = (
                    mesh.vertices[mesh.tets[tt, 0]] + tr.points @ mesh.jacobians[tt].T
                )
                blk = 6.0 * np.einsum("q,qk,qi->ik", tr.weights, iw, fn(pts))
                out[ti, col:col + tab.n_int] = blk.reshape(-1)
        return out


class DiscreteField:
    """A coefficient vector paired with its space."""

    def __init__(self, space: DofSpace, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.ndof,):
            raise ValueError("coefficient length must equal the space dimension")
        self.space = space
        self.coefficients = coefficients

    def local_coefficients(self, tets=None) -> np.ndarray:
        sp = self.space
        idx = sp.tet_dofs if tets is None else sp.tet_dofs[tets]
        sg = sp.signs if tets is None else sp.signs[tets]
        return self.coefficients[idx] * sg

    def eval(self, tets, ref_pts) -> np.ndarray:
        """Field values at reference points, per tet: (ntets, npts, 3|1)."""
        sp = self.space
        tets = np.asarray(tets, dtype=np.int64).reshape(-1)
        lc = self.local_coefficients(tets)  # (T, nd)
        C = sp.dual_coefs[tets]  # (T, ns, nd)
        a = np.einsum("tsn,tn->ts", C, lc)
        if sp.family == LAGRANGE:
            vals = bernstein_tet(sp.degree, ref_pts)[0]
            return np.einsum("qs,ts->tq", vals, a)
        if sp.family == NEDELEC:
            vals = nedelec_span(sp.degree, ref_pts)[0]
            raw = np.einsum("qsd,ts->tqd", vals, a)
            Jinv = sp.mesh.inv_jacobians[tets]
            return np.einsum("tdi,tqd->tqi", Jinv, raw)
        vals = rt_span(sp.degree, ref_pts)[0]
        raw = np.einsum("qsd,ts->tqd", vals, a)
        J = sp.mesh.jacobians[tets]
        det = sp.mesh.det_jacobians[tets]
        return np.einsum("tid,tqd->tqi", J, raw) / det[:, None, None]

    def eval_curl(self, tets, ref_pts) -> np.ndarray:
        sp = self.space
        if sp.family != NEDELEC:
            raise ValueError("curl evaluation requires a Nedelec field")
        tets = np.asarray(tets, dtype=np.int64).reshape(-1)
        lc = self.local_coefficients(tets)
        C = sp.dual_coefs[tets]
        a = np.einsum("tsn,tn->ts", C, lc)
        curls = nedelec_span(sp.degree, ref_pts)[1]
        raw = np.einsum("qsd,ts->tqd", curls, a)
        J = sp.mesh.jacobians[tets]
        det = sp.mesh.det_jacobians[tets]
        return np.einsum("tid,tqd->tqi", J, raw) / det[:, None, None]

    def eval_div(self, tets, ref_pts) -> np.ndarray:
        sp = self.space
        if sp.family != RAVIART_THOMAS:
            raise ValueError("div evaluation requires a Raviart-Thomas field")
        tets = np.asarray(tets, dtype=np.int64).reshape(-1)
        lc = self.local_coefficients(tets)
        C = sp.dual_coefs[tets]
        a = np.einsum("tsn,tn->ts", C, lc)
        divs = rt_span(sp.degree, ref_pts)[1]
        raw = np.einsum("qs,ts->tq", divs, a)
        return raw / sp.mesh.det_jacobians[tets, None]

    def eval_grad(self, tets, ref_pts) -> np.ndarray:
        sp = self.space
        if sp.family != LAGRANGE:
            raise ValueError("grad evaluation requires a Lagrange field")
        tets = np.asarray(tets, dtype=np.int64).reshape(-1)
        lc = self.local_coefficients(tets)
        C = sp.dual_coefs[tets]
        a = np.einsum("tsn,tn->ts", C, lc)
        grads = bernstein_tet(sp.degree, ref_pts)[1]
        raw = np.einsum("qsd,ts->tqd", grads, a)
        Jinv = sp.mesh.inv_jacobians[tets]
        return np.einsum("tdi,tqd->tqi", Jinv, raw)


def basis_eval(space: DofSpace, tet: int, points):
    """All local basis functions of one tet at reference points.

    Returns (values, derivative) where derivative is the curl for Nedelec,
    the divergence for Raviart-Thomas, and the gradient for Lagrange.
    Values have shape (npts, nd_local, 3) (or (npts, nd_local) scalar).
    """
    sp = space
    C = sp.dual_coefs[tet]  # (ns, nd)
    mesh = sp.mesh
    if sp.family == LAGRANGE:
        vals, grads = bernstein_tet(sp.degree, points)
        Jinv = mesh.inv_jacobians[tet]
        return vals @ C, np.einsum("di,qsd,sn->qni", Jinv, grads, C)
    if sp.family == NEDELEC:
        vals, curls = nedelec_span(sp.degree, points)
        Jinv = mesh.inv_jacobians[tet]
        J = mesh.jacobians[tet]
        det = mesh.det_jacobians[tet]
        pv = np.einsum("di,qsd,sn->qni", Jinv, vals, C)
        pc = np.einsum("id,qsd,sn->qni", J, curls, C) / det
        return pv, pc
    vals, divs = rt_span(sp.degree, points)
    J = mesh.jacobians[tet]
    det = mesh.det_jacobians[tet]
    pv = np.einsum("id,qsd,sn->qni", J, vals, C) / det
    pd = (divs @ C) / det
    return pv, pd


def edge_function(mesh: Mesh, e: int) -> DiscreteField:
    """The lowest-order edge field with unit mean tangential edge moment.

    Its integral of the tangential component along edge e' equals |e| when
    e' = e and zero otherwise; the support is the edge patch of e.
    """
    space = DofSpace(mesh, NEDELEC, 0)
    coeffs = np.zeros(space.ndof)
    coeffs[e] = 1.0
    return DiscreteField(space, coeffs)


def tangential_component(w, n):
    """Project vectors onto the plane orthogonal to the unit normal n."""
    w = np.asarray(w, dtype=float)
    n = np.asarray(n, dtype=float)
    return w - np.einsum("...i,i->...", w, n)[..., None] * n


def surface_curl(field: DiscreteField, face: int, uv_pts) -> np.ndarray:
    """Surface curl of the tangential trace on a face.

    Evaluates (curl v) . n_F at the face points given in the ascending
    chart coordinates (u, v); the result depends only on the tangential
    trace of `field` on that face.
    """
    mesh = field.space.mesh
    t = int(mesh.face_tets[face, 0])
    lf = int(np.flatnonzero(mesh.tet_faces[t] == face)[0])
    l0, l1, l2 = LOCAL_FACES[lf]
    uv_pts = np.asarray(uv_pts, dtype=float).reshape(-1, 2)
    ref = (
        REF_VERTS[l0]
        + uv_pts[:, :1] * (REF_VERTS[l1] - REF_VERTS[l0])
        + uv_pts[:, 1:] * (REF_VERTS[l2] - REF_VERTS[l0])
    )
    curl = field.eval_curl([t], ref)[0]
    return curl @ mesh.face_normals[face]
