"""Oriented tetrahedral meshes and edge patches.

Tets are stored with vertices in ascending global order, so every local
edge pair and local face triple is ascending as well.  Edge tangents run
from the lower to the higher vertex index and face normals follow the
right-hand rule on the ascending triple.  With that convention every
degree-of-freedom functional defined on an entity looks identical from
all adjacent tets and no orientation signs are needed downstream.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "TAG_INTERIOR",
    "TAG_DIRICHLET",
    "TAG_NEUMANN",
    "LOCAL_EDGES",
    "LOCAL_FACES",
    "Mesh",
    "MeshFormatError",
    "EdgePatch",
    "build_mesh",
    "edge_patch",
    "shape_metrics",
    "uniform_refine",
    "dorfler_mark",
    "read_mesh",
    "write_mesh",
]

TAG_INTERIOR = 0
TAG_DIRICHLET = 1
TAG_NEUMANN = 2

_TAG_NAMES = {TAG_DIRICHLET: "D", TAG_NEUMANN: "N"}
_TAG_CODES = {"D": TAG_DIRICHLET, "N": TAG_NEUMANN}

# local edge k connects local vertices LOCAL_EDGES[k]; ascending pairs
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
# local face l is opposite local vertex l; ascending triples
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])

PATCH_INTERIOR = "interior"
PATCH_DIRICHLET = "dirichlet"
PATCH_MIXED = "mixed"
PATCH_NEUMANN = "neumann"


def _find_face(faces: np.ndarray, tri) -> int:
    """Index of the ascending triple `tri` in a lexsorted face table, or -1."""
    tri = tuple(int(v) for v in np.sort(np.asarray(tri)))
    lo, hi = 0, faces.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if tuple(faces[mid]) < tri:
            lo = mid + 1
        else:
            hi = mid
    if lo < faces.shape[0] and tuple(faces[lo]) == tri:
        return lo
    return -1


class Mesh:
    """Immutable tetrahedral mesh with full incidence and geometry tables.

    Attributes
    ----------
    vertices : (nv, 3) float array
    tets : (nt, 4) int array, each row ascending
    edges : (ne, 2) int array, rows ascending, lexicographically sorted
    faces : (nf, 3) int array, rows ascending, lexicographically sorted
    tet_edges : (nt, 6) int, edge ids in LOCAL_EDGES order
    tet_faces : (nt, 4) int, face ids in LOCAL_FACES order
    face_tets : (nf, 2) int, adjacent tets (second is -1 on the boundary)
    face_tags : (nf,) int8, TAG_INTERIOR / TAG_DIRICHLET / TAG_NEUMANN
    tet_face_sign : (nt, 4) float, +1 where n_F is outward for that tet
    """

    def __init__(self, vertices, tets, edges, faces, tet_edges, tet_faces,
                 face_tets, face_tags):
        self.vertices = vertices
        self.tets = tets
        self.edges = edges
        self.faces = faces
        self.tet_edges = tet_edges
        self.tet_faces = tet_faces
        self.face_tets = face_tets
        self.face_tags = face_tags
        self._compute_geometry()
        self._edge_tets = None
        for arr in (vertices, tets, edges, faces, tet_edges, tet_faces,
                    face_tets, face_tags):
            arr.setflags(write=False)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_tets(self):
        return self.tets.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def num_faces(self):
        return self.faces.shape[0]

    def _compute_geometry(self):
        v = self.vertices
        t = self.tets
        a = v[t[:, 0]]
        # Jacobian columns are the edge vectors from the first vertex
        self.jacobians = np.stack(
            [v[t[:, 1]] - a, v[t[:, 2]] - a, v[t[:, 3]] - a], axis=2
        )
        self.det_jacobians = np.linalg.det(self.jacobians)
        self.inv_jacobians = np.linalg.inv(self.jacobians)
        self.volumes = np.abs(self.det_jacobians) / 6.0

        evec = v[self.edges[:, 1]] - v[self.edges[:, 0]]
        self.edge_lengths = np.linalg.norm(evec, axis=1)
        self.edge_tangents = evec / self.edge_lengths[:, None]

        f = self.faces
        t1 = v[f[:, 1]] - v[f[:, 0]]
        t2 = v[f[:, 2]] - v[f[:, 0]]
        cr = np.cross(t1, t2)
        nrm = np.linalg.norm(cr, axis=1)
        self.face_areas = 0.5 * nrm
        self.face_normals = cr / nrm[:, None]

        # tet diameters and inscribed-ball diameters (6V / surface area)
        pair = v[t]  # (nt, 4, 3)
        diffs = pair[:, :, None, :] - pair[:, None, :, :]
        self.h_tet = np.sqrt((diffs**2).sum(axis=3)).max(axis=(1, 2))
        face_area_sum = self.face_areas[self.tet_faces].sum(axis=1)
        self.rho_tet = 6.0 * self.volumes / face_area_sum

        centroid_t = pair.mean(axis=1)
        centroid_f = v[f].mean(axis=1)
        rel = centroid_f[self.tet_faces] - centroid_t[:, None, :]
        dots = (rel * self.face_normals[self.tet_faces]).sum(axis=2)
        self.tet_face_sign = np.where(dots > 0, 1.0, -1.0)

    def edge_tets(self, e: int) -> np.ndarray:
        """Ids of the tets containing edge e (unordered)."""
        if self._edge_tets is None:
            flat = self.tet_edges.ravel()
            order = np.argsort(flat, kind="stable")
            starts = np.searchsorted(flat[order], np.arange(self.num_edges + 1))
            self._edge_tets = (order // 6, starts)
        tets_of, starts = self._edge_tets
        return tets_of[starts[e]:starts[e + 1]]

    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_tets[:, 1] < 0)

    @property
    def face_edges(self) -> np.ndarray:
        """Edge ids of each face, shape (nf, 3), pairs (01, 02, 12)."""
        if getattr(self, "_face_edges", None) is None:
            nv = self.num_vertices
            codes = self.edges[:, 0] * nv + self.edges[:, 1]
            f = self.faces
            out = np.empty((self.num_faces, 3), dtype=np.int64)
            for c, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
                want = f[:, a] * nv + f[:, b]
                idx = np.searchsorted(codes, want)
                if np.any(codes[idx] != want):
                    raise ValueError("face references a missing edge")
                out[:, c] = idx
            self._face_edges = out
            out.setflags(write=False)
        return self._face_edges

    def edge_patch(self, e: int) -> "EdgePatch":
        return edge_patch(self, e)


def _topology(vertices, tets):
    """Shared incidence construction; tets rows must be ascending."""
    nt = tets.shape[0]
    pair = tets[:, LOCAL_EDGES]  # (nt, 6, 2)
    edges, tet_edges = np.unique(pair.reshape(-1, 2), axis=0, return_inverse=True)
    tet_edges = tet_edges.reshape(nt, 6)
    trip = tets[:, LOCAL_FACES]  # (nt, 4, 3)
    faces, tet_faces = np.unique(trip.reshape(-1, 3), axis=0, return_inverse=True)
    tet_faces = tet_faces.reshape(nt, 4)

    nf = faces.shape[0]
    face_tets = np.full((nf, 2), -1, dtype=np.int64)
    flat = tet_faces.ravel()
    order = np.argsort(flat, kind="stable")
    owner = order // 4
    starts = np.searchsorted(flat[order], np.arange(nf + 1))
    counts = np.diff(starts)
    if np.any(counts > 2):
        raise ValueError("non-matching mesh: a face is shared by more than two tets")
    for f in range(nf):
        own = owner[starts[f]:starts[f + 1]]
        face_tets[f, : own.size] = np.sort(own)
    return edges, faces, tet_edges, tet_faces, face_tets, counts


def _check_hanging_vertices(vertices, tets, J, h):
    """Reject vertices lying on or inside a tet they are not a corner of.

    In a matching mesh the intersection of a tet with any other vertex is
    empty, so a foreign vertex inside the closed tet signals a hanging
    vertex or overlapping elements.  Candidate pairs come from a uniform
    spatial grid over vertex positions.
    """
    cell = float(np.median(h))
    keys = np.floor(vertices / cell).astype(np.int64)
    buckets = {}
    for i, k in enumerate(map(tuple, keys)):
        buckets.setdefault(k, []).append(i)
    Jinv = np.linalg.inv(J)
    for t in range(tets.shape[0]):
        corners = vertices[tets[t]]
        lo = np.floor(corners.min(axis=0) / cell).astype(np.int64)
        hi = np.floor(corners.max(axis=0) / cell).astype(np.int64)
        cand = []
        for ix in range(lo[0], hi[0] + 1):
            for iy in range(lo[1], hi[1] + 1):
                for iz in range(lo[2], hi[2] + 1):
                    cand.extend(buckets.get((ix, iy, iz), ()))
        cand = np.array([c for c in cand if c not in tets[t]], dtype=np.int64)
        if cand.size == 0:
            continue
        lam = (vertices[cand] - corners[0]) @ Jinv[t].T
        lam0 = 1.0 - lam.sum(axis=1)
        tol = -1e-9
        inside = (lam0 >= tol) & np.all(lam >= tol, axis=1)
        if np.any(inside):
            v = int(cand[np.flatnonzero(inside)[0]])
            raise ValueError(f"non-matching mesh: vertex {v} lies inside tet {t}")


def build_mesh(vertices, tets, boundary_tags) -> Mesh:
    """Build a validated mesh.

    Parameters
    ----------
    vertices : (nv, 3) array of coordinates.
    tets : (nt, 4) array of vertex indices (any order within a row).
    boundary_tags : either the string "D" or "N" to tag the whole boundary,
        or a mapping from sorted boundary-face vertex triples to "D"/"N".

    Raises
    ------
    ValueError on invalid indices, degenerate tets, non-matching meshes,
    and untagged or mistagged boundary faces.
    """
    vertices = np.asarray(vertices, dtype=float)
    tets = np.asarray(tets, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ValueError("vertices must have shape (nv, 3)")
    if tets.ndim != 2 or tets.shape[1] != 4:
        raise ValueError("tets must have shape (nt, 4)")
    if tets.min(initial=0) < 0 or tets.max(initial=-1) >= len(vertices):
        raise ValueError("tet indices out of range")
    tets = np.sort(tets, axis=1)
    if np.any(np.diff(tets, axis=1) == 0):
        raise ValueError("degenerate tet: repeated vertex")

    edges, faces, tet_edges, tet_faces, face_tets, counts = _topology(vertices, tets)

    a = vertices[tets[:, 0]]
    J = np.stack([vertices[tets[:, k]] - a for k in (1, 2, 3)], axis=2)
    det = np.linalg.det(J)
    pair = vertices[tets]
    diffs = pair[:, :, None, :] - pair[:, None, :, :]
    h = np.sqrt((diffs**2).sum(axis=3)).max(axis=(1, 2))
    bad = np.abs(det) < 1e-12 * h**3
    if np.any(bad):
        raise ValueError(f"degenerate tet(s): {np.flatnonzero(bad).tolist()}")

    _check_hanging_vertices(vertices, tets, J, h)

    # boundary of a matching mesh is a closed surface: every edge of the
    # boundary face complex must belong to exactly two boundary faces
    bnd = np.flatnonzero(counts == 1)
    if bnd.size:
        btris = faces[bnd]
        bedges = np.concatenate(
            [btris[:, [0, 1]], btris[:, [0, 2]], btris[:, [1, 2]]], axis=0
        )
        _, ecounts = np.unique(bedges, axis=0, return_counts=True)
        if np.any(ecounts != 2):
            raise ValueError("non-matching mesh: boundary surface is not closed")

    face_tags = np.zeros(faces.shape[0], dtype=np.int8)
    if isinstance(boundary_tags, str):
        if boundary_tags not in _TAG_CODES:
            raise ValueError("boundary_tags string must be 'D' or 'N'")
        face_tags[bnd] = _TAG_CODES[boundary_tags]
    else:
        tag_map = {tuple(sorted(k)): v for k, v in dict(boundary_tags).items()}
        if not all(v in _TAG_CODES for v in tag_map.values()):
            raise ValueError("boundary tags must be 'D' or 'N'")
        for f in bnd:
            key = tuple(int(i) for i in faces[f])
            if key not in tag_map:
                raise ValueError(f"untagged boundary face {key}")
            face_tags[f] = _TAG_CODES[tag_map.pop(key)]
        if tag_map:
            raise ValueError(f"tags referencing non-boundary faces: {sorted(tag_map)}")

    return Mesh(vertices, tets, edges, faces, tet_edges, tet_faces,
                face_tets, face_tags)


class EdgePatch:
    """All tets sharing one edge, ordered for the elementwise sweep.

    The patch is materialized as a standalone submesh whose tet j is the
    j-th element of the sweep enumeration.  The central edge endpoints are
    ``apex_lo``/``apex_hi`` (local vertex ids, lower global index first)
    and the rim vertices ``rim[0..n]`` run along the enumeration, with
    ``rim[0] == rim[n]`` for interior patches.  ``fan_faces[j]`` is the
    local id of the face spanned by the central edge and ``rim[j]``.

    ``calF`` lists the faces carrying trace data in the minimization
    problems; ``internal_faces`` are the faces shared by two patch tets;
    ``gamma_n_faces`` are the boundary faces containing the central edge
    that lie on the Neumann boundary; ``gamma_d_faces`` is the rest of the
    patch boundary.
    """

    def __init__(self, parent, edge, submesh, parent_vertices, parent_tets,
                 edge_local, apex_lo, apex_hi, rim, fan_faces, patch_type):
        self.parent = parent
        self.edge = edge
        self.submesh = submesh
        self.parent_vertices = parent_vertices
        self.parent_tets = parent_tets
        self.edge_local = edge_local
        self.apex_lo = apex_lo
        self.apex_hi = apex_hi
        self.rim = rim
        self.fan_faces = fan_faces
        self.patch_type = patch_type

        n = submesh.num_tets
        self.num_tets = n
        if patch_type == PATCH_INTERIOR:
            self.internal_faces = fan_faces[1:]
        else:
            self.internal_faces = fan_faces[1:-1]
        bnd = set(submesh.boundary_faces().tolist())
        gamma_n = []
        if patch_type in (PATCH_MIXED, PATCH_NEUMANN):
            gamma_n.append(int(fan_faces[0]))
        if patch_type == PATCH_NEUMANN:
            gamma_n.append(int(fan_faces[-1]))
        self.gamma_n_faces = np.array(sorted(gamma_n), dtype=np.int64)
        self.gamma_d_faces = np.array(
            sorted(bnd.difference(self.gamma_n_faces.tolist())), dtype=np.int64
        )
        if patch_type == PATCH_INTERIOR:
            self.calF = np.array(self.internal_faces, dtype=np.int64)
        elif patch_type == PATCH_DIRICHLET:
            self.calF = np.array(self.internal_faces, dtype=np.int64)
        elif patch_type == PATCH_MIXED:
            self.calF = np.concatenate([[fan_faces[0]], self.internal_faces])
        else:
            self.calF = np.asarray(fan_faces, dtype=np.int64)

        verts = submesh.vertices
        diffs = verts[:, None, :] - verts[None, :, :]
        self.h_patch = float(np.sqrt((diffs**2).sum(axis=2)).max())
        self.rho_patch = float(submesh.rho_tet.min())
        self.kappa = self.h_patch / self.rho_patch

    @property
    def edge_length(self):
        return self.submesh.edge_lengths[self.edge_local]

    def sweep_trace_faces(self, j: int):
        """Faces of sweep element j with prescribed tangential traces.

        Returns a list of (local_face_id, source) pairs where source is the
        index of the previously solved element supplying the trace, or -1
        when the face lies on the Neumann boundary and the trace is data.
        """
        n = self.num_tets
        out = []
        if j == 0:
            if self.patch_type in (PATCH_MIXED, PATCH_NEUMANN):
                out.append((int(self.fan_faces[0]), -1))
        else:
            out.append((int(self.fan_faces[j]), j - 1))
        if j == n - 1:
            if self.patch_type == PATCH_INTERIOR:
                out.append((int(self.fan_faces[n]), 0))
            elif self.patch_type == PATCH_NEUMANN:
                out.append((int(self.fan_faces[n]), -1))
        return out


def edge_patch(mesh: Mesh, e: int) -> EdgePatch:
    """Extract and order the patch of tets around edge e."""
    if not 0 <= e < mesh.num_edges:
        raise ValueError(f"invalid edge id {e}")
    va, vb = (int(v) for v in mesh.edges[e])
    tet_ids = mesh.edge_tets(e)
    if tet_ids.size == 0:
        raise ValueError(f"edge {e} belongs to no tet")

    # rim vertices of each patch tet and tet adjacency through fan faces
    rim_of = {}
    tets_of_rim = {}
    for t in tet_ids:
        rim = [int(v) for v in mesh.tets[t] if v != va and v != vb]
        rim_of[int(t)] = rim
        for r in rim:
            tets_of_rim.setdefault(r, []).append(int(t))
    if any(len(ts) > 2 for ts in tets_of_rim.values()):
        raise ValueError(f"edge patch {e} is not homeomorphic to a fan")

    boundary_rims = [r for r, ts in tets_of_rim.items() if len(ts) == 1]
    if len(boundary_rims) not in (0, 2):
        raise ValueError(f"edge patch {e} is not homeomorphic to a fan")
    is_cycle = len(boundary_rims) == 0

    if is_cycle:
        start = int(tet_ids.min())
        r1, r2 = rim_of[start]
        nb1 = [t for t in tets_of_rim[r1] if t != start][0]
        nb2 = [t for t in tets_of_rim[r2] if t != start][0]
        if nb1 == nb2:  # two-tet cycle, both rims shared
            second, first_rim = nb1, r1
        elif nb1 < nb2:
            second, first_rim = nb1, r1
        else:
            second, first_rim = nb2, r2
        order = [start]
        rim_seq = [r2 if first_rim == r1 else r1, first_rim]
        cur, prev_rim = second, first_rim
        while cur != start:
            order.append(cur)
            nxt_rim = [r for r in rim_of[cur] if r != prev_rim][0]
            rim_seq.append(nxt_rim)
            cands = [t for t in tets_of_rim[nxt_rim] if t != cur]
            if not cands:
                raise ValueError(f"edge patch {e} is not homeomorphic to a fan")
            cur, prev_rim = cands[0], nxt_rim
        patch_type = PATCH_INTERIOR
    else:
        end_faces = {}
        for r in boundary_rims:
            t = tets_of_rim[r][0]
            fid = _find_face(mesh.faces, (va, vb, r))
            if fid < 0 or mesh.face_tets[fid, 1] >= 0:
                raise ValueError(f"edge patch {e} inconsistent with face incidence")
            end_faces[r] = (t, int(mesh.face_tags[fid]))
        tags = {r: tag for r, (t, tag) in end_faces.items()}
        if any(tag == TAG_INTERIOR for tag in tags.values()):
            raise ValueError(f"edge patch {e}: untagged boundary face")
        n_rims = [r for r, tag in tags.items() if tag == TAG_NEUMANN]
        if len(n_rims) == 1:
            start_rim = n_rims[0]
            patch_type = PATCH_MIXED
        else:
            patch_type = PATCH_NEUMANN if len(n_rims) == 2 else PATCH_DIRICHLET
            start_rim = min(
                boundary_rims, key=lambda r: (end_faces[r][0], r)
            )
        order = [end_faces[start_rim][0]]
        rim_seq = [start_rim]
        prev_rim = start_rim
        while True:
            cur = order[-1]
            nxt_rim = [r for r in rim_of[cur] if r != prev_rim][0]
            rim_seq.append(nxt_rim)
            cands = [t for t in tets_of_rim[nxt_rim] if t != cur]
            if not cands:
                break
            order.append(cands[0])
            prev_rim = nxt_rim
        if len(order) != tet_ids.size:
            raise ValueError(f"edge patch {e} is not homeomorphic to a fan")

    # build the submesh with tets in sweep order; ascending vertex
    # renumbering keeps every local chart identical to the parent's
    parent_tets = np.array(order, dtype=np.int64)
    pverts = np.unique(mesh.tets[parent_tets])
    local_of = {int(g): i for i, g in enumerate(pverts)}
    ltets = np.vectorize(lambda g: local_of[g])(mesh.tets[parent_tets])
    edges, faces, tet_edges, tet_faces, face_tets, _ = _topology(
        mesh.vertices[pverts], ltets
    )
    submesh = Mesh(
        mesh.vertices[pverts], ltets, edges, faces, tet_edges, tet_faces,
        face_tets, _inherit_tags(mesh, pverts, faces),
    )

    la, lb = local_of[va], local_of[vb]
    lo, hi = (la, lb) if pverts[la] < pverts[lb] else (lb, la)
    edge_local = int(
        np.flatnonzero((submesh.edges[:, 0] == lo) & (submesh.edges[:, 1] == hi))[0]
    )
    rim_local = np.array([local_of[r] for r in rim_seq], dtype=np.int64)
    fan_faces = np.array(
        [_find_face(submesh.faces, (lo, hi, r)) for r in rim_local], dtype=np.int64
    )
    if np.any(fan_faces < 0):
        raise ValueError(f"edge patch {e}: fan face lookup failed")

    return EdgePatch(mesh, e, submesh, pverts, parent_tets, edge_local,
                     lo, hi, rim_local, fan_faces, patch_type)


def _inherit_tags(parent: Mesh, pverts, local_faces) -> np.ndarray:
    """Tags for submesh faces, looked up from the parent by vertex triple."""
    global_faces = pverts[local_faces]
    tags = np.zeros(local_faces.shape[0], dtype=np.int8)
    for i, tri in enumerate(global_faces):
        fid = _find_face(parent.faces, tri)
        if fid >= 0:
            tags[i] = parent.face_tags[fid]
    return tags


def shape_metrics(patch: EdgePatch):
    """Patch diameter, minimal inscribed-ball diameter, and their ratio."""
    return patch.h_patch, patch.rho_patch, patch.kappa


def uniform_refine(mesh: Mesh) -> Mesh:
    """Red refinement: each tet is split into 8 children.

    Children reuse the parent vertex ids; edge midpoints get ids
    nv + edge_id.  The octahedron core is split along a fixed diagonal,
    which reproduces the same child shapes on every level for the
    structured meshes used here.
    """
    nv = mesh.num_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    verts = np.vstack([mesh.vertices, mids])

    t = mesh.tets
    m = nv + mesh.tet_edges  # (nt, 6): m01 m02 m03 m12 m13 m23
    m01, m02, m03, m12, m13, m23 = (m[:, k] for k in range(6))
    v0, v1, v2, v3 = (t[:, k] for k in range(4))
    children = np.stack(
        [
            np.stack([v0, m01, m02, m03], axis=1),
            np.stack([v1, m01, m12, m13], axis=1),
            np.stack([v2, m02, m12, m23], axis=1),
            np.stack([v3, m03, m13, m23], axis=1),
            np.stack([m01, m02, m03, m13], axis=1),
            np.stack([m01, m02, m12, m13], axis=1),
            np.stack([m02, m03, m13, m23], axis=1),
            np.stack([m02, m12, m13, m23], axis=1),
        ],
        axis=1,
    ).reshape(-1, 4)

    # child boundary faces lie inside parent faces; recover the parent
    # triple from the vertices' provenance (vertex -> itself, midpoint ->
    # its parent edge endpoints)
    tag_of = {}
    for f in mesh.boundary_faces():
        tri = tuple(int(x) for x in mesh.faces[f])
        tag_of[tri] = _TAG_NAMES[int(mesh.face_tags[f])]

    def support(vid):
        if vid < nv:
            return (int(vid),)
        return tuple(int(x) for x in mesh.edges[vid - nv])

    child_edges, child_faces, _, _, _, counts = _topology(verts, np.sort(children, axis=1))
    tags = {}
    for f in np.flatnonzero(counts == 1):
        tri = child_faces[f]
        sup = sorted({g for v in tri for g in support(v)})
        if len(sup) != 3:
            raise ValueError("refinement produced a boundary face without a parent")
        parent = tag_of.get(tuple(sup))
        if parent is None:
            raise ValueError("refinement produced an untagged boundary face")
        tags[tuple(int(x) for x in tri)] = parent

    return build_mesh(verts, children, tags)


def dorfler_mark(indicators, theta: float) -> np.ndarray:
    """Greedy minimal marked set M with sum_M eta^2 >= theta * sum eta^2."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    eta = np.asarray(indicators, dtype=float)
    if np.any(eta < 0):
        raise ValueError("indicators must be nonnegative")
    sq = eta**2
    total = sq.sum()
    if total == 0:
        return np.array([], dtype=np.int64)
    order = np.argsort(-eta, kind="stable")
    csum = np.cumsum(sq[order])
    k = int(np.searchsorted(csum, theta * total - 1e-14 * total)) + 1
    marked = order[:k]
    marked = marked[eta[marked] > 0]
    return np.sort(marked)


def write_mesh(mesh: Mesh, path):
    """Write the line-oriented ASCII mesh format."""
    lines = ["tetmesh 1"]
    lines.append(f"vertices {mesh.num_vertices}")
    for x, y, z in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} {z:.17g}")
    lines.append(f"tets {mesh.num_tets}")
    for row in mesh.tets:
        lines.append(" ".join(str(int(v)) for v in row))
    bnd = mesh.boundary_faces()
    lines.append(f"boundary {bnd.size}")
    for f in bnd:
        i, j, l = (int(v) for v in mesh.faces[f])
        lines.append(f"{i} {j} {l} {_TAG_NAMES[int(mesh.face_tags[f])]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class MeshFormatError(ValueError):
    """Malformed mesh file; `line` is the 1-based offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_mesh(path) -> Mesh:
    """Read the ASCII mesh format written by :func:`write_mesh`."""
    with open(path) as fh:
        tokens = []
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend((tok, lineno) for tok in line.split())
    pos = 0
    last_line = [1]

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshFormatError(last_line[0], "unexpected end of file")
        out = [tokens[pos + k][0] for k in range(n)]
        last_line[0] = tokens[pos + n - 1][1]
        pos += n
        return out

    def take_parsed(n, what, parse):
        start = pos
        vals = take(n)
        try:
            return [parse(v) for v in vals]
        except ValueError:
            for k, v in enumerate(vals):
                try:
                    parse(v)
                except ValueError:
                    raise MeshFormatError(
                        tokens[start + k][1], f"bad {what} {v!r}"
                    ) from None
            raise

    def take_ints(n, what):
        return take_parsed(n, what, int)

    def take_floats(n, what):
        return take_parsed(n, what, float)

    def take_count(kw):
        got, n = take(2)
        if got != kw:
            raise MeshFormatError(last_line[0], f"expected {kw!r}, got {got!r}")
        try:
            return int(n)
        except ValueError:
            raise MeshFormatError(last_line[0], f"bad {kw} count {n!r}") from None

    magic, version = take(2)
    if magic != "tetmesh" or version != "1":
        raise MeshFormatError(last_line[0], "not a tetmesh version 1 file")
    nv = take_count("vertices")
    verts = np.array(take_floats(3 * nv, "vertex coordinate"),
                     dtype=float).reshape(nv, 3)
    nt = take_count("tets")
    tets = np.array(take_ints(4 * nt, "tet vertex id"),
                    dtype=np.int64).reshape(nt, 4)
    nb = take_count("boundary")
    tags = {}
    for _ in range(nb):
        i, j, l = take_ints(3, "face vertex id")
        (tag,) = take(1)
        if tag not in _TAG_CODES:
            raise MeshFormatError(last_line[0], f"invalid boundary tag {tag!r}")
        tags[(i, j, l)] = tag
    if pos != len(tokens):
        raise MeshFormatError(tokens[pos][1], "trailing content after boundary faces")
    return build_mesh(verts, tets, tags)
