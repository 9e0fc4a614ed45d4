"""Mesh construction, edge patches, refinement, and marking."""

import numpy as np
import pytest

from curlcurl.cases import generate_cube, generate_lshape
from curlcurl.mesh import (
    PATCH_DIRICHLET,
    PATCH_INTERIOR,
    PATCH_MIXED,
    PATCH_NEUMANN,
    TAG_DIRICHLET,
    TAG_NEUMANN,
    build_mesh,
    dorfler_mark,
    edge_patch,
    read_mesh,
    shape_metrics,
    uniform_refine,
    write_mesh,
)

REF_VERTS = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)


def single_tet(tag="D"):
    return build_mesh(REF_VERTS, [[0, 1, 2, 3]], tag)


def test_single_tet_counts():
    m = single_tet()
    assert m.num_tets == 1
    assert m.num_edges == 6
    assert m.num_faces == 4
    assert np.all(m.face_tags == TAG_DIRICHLET)
    assert m.volumes[0] == pytest.approx(1.0 / 6.0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_cube_tet_count(n):
    m = generate_cube(n)
    assert m.num_tets == 6 * n**3
    assert m.num_vertices == (n + 1) ** 3
    assert m.volumes.sum() == pytest.approx(1.0, rel=1e-13)
    assert m.h_tet.max() == pytest.approx(np.sqrt(3.0) / n, rel=1e-13)


def test_cube_edge_count_n1():
    # 12 cube edges + 6 face diagonals + 1 main diagonal
    m = generate_cube(1)
    assert m.num_edges == 19


def test_face_incidence_and_orientation():
    m = generate_cube(2)
    interior = np.flatnonzero(m.face_tets[:, 1] >= 0)
    boundary = m.boundary_faces()
    assert interior.size + boundary.size == m.num_faces
    # interior faces: normal is outward for exactly one adjacent tet
    for f in interior[:50]:
        t0, t1 = m.face_tets[f]
        l0 = int(np.flatnonzero(m.tet_faces[t0] == f)[0])
        l1 = int(np.flatnonzero(m.tet_faces[t1] == f)[0])
        assert m.tet_face_sign[t0, l0] * m.tet_face_sign[t1, l1] == -1.0
    # divergence theorem on constants, per tet
    total = np.zeros((m.num_tets, 3))
    for l in range(4):
        f = m.tet_faces[:, l]
        total += (
            m.tet_face_sign[:, l, None] * m.face_areas[f, None] * m.face_normals[f]
        )
    area = m.face_areas.sum()
    assert np.abs(total).max() <= 1e-12 * area


def test_interior_patch_cube_diagonal():
    m = generate_cube(1, boundary="N")
    # the main diagonal connects vertex 0 to vertex 7 (grid corners)
    d = int(
        np.flatnonzero((m.edges[:, 0] == 0) & (m.edges[:, 1] == m.num_vertices - 1))[0]
    )
    patch = edge_patch(m, d)
    assert patch.patch_type == PATCH_INTERIOR
    assert patch.num_tets == 6
    assert len(patch.internal_faces) == 6
    assert patch.rim[0] == patch.rim[-1]
    assert patch.calF.size == 6
    # consecutive tets share the fan face between them
    sm = patch.submesh
    for j in range(patch.num_tets):
        nxt = (j + 1) % patch.num_tets
        shared = set(sm.tet_faces[j]) & set(sm.tet_faces[nxt])
        assert patch.fan_faces[j + 1] in shared


def test_one_tet_patches():
    m = single_tet("D")
    for e in range(6):
        p = edge_patch(m, e)
        assert p.num_tets == 1
        assert p.patch_type == PATCH_DIRICHLET
        assert p.calF.size == 0
    m2 = single_tet("N")
    p = edge_patch(m2, 0)
    assert p.patch_type == PATCH_NEUMANN
    assert p.calF.size == 2
    assert p.gamma_n_faces.size == 2


def test_mixed_patch():
    # cube with bottom Dirichlet, rest Neumann
    m = generate_cube(1)
    tags = {}
    for f in m.boundary_faces():
        tri = tuple(int(v) for v in m.faces[f])
        z = m.vertices[list(tri), 2]
        tags[tri] = "D" if np.all(z < 1e-12) else "N"
    m = build_mesh(m.vertices, m.tets, tags)
    # find a boundary edge in the bottom plane: one end face in D, the
    # walk terminates at a face in N
    found = None
    for e in range(m.num_edges):
        va, vb = m.edges[e]
        on_bottom = m.vertices[va, 2] < 1e-12 and m.vertices[vb, 2] < 1e-12
        if not on_bottom:
            continue
        p = edge_patch(m, e)
        if p.patch_type == PATCH_MIXED:
            found = p
            break
    assert found is not None
    # enumeration starts at the Neumann end
    assert found.gamma_n_faces.size == 1
    assert found.fan_faces[0] == found.gamma_n_faces[0]
    assert found.calF.size == found.num_tets
    assert set(found.calF.tolist()) == set(
        [int(found.fan_faces[0])] + [int(f) for f in found.internal_faces]
    )


def test_every_tet_in_six_patches():
    m = generate_cube(2, boundary="N")
    counts = np.zeros(m.num_tets)
    vol_by_patch = 0.0
    for e in range(m.num_edges):
        p = edge_patch(m, e)
        counts[p.parent_tets] += 1
        vol_by_patch += p.submesh.volumes.sum()
        # ordering invariant: consecutive patch tets share a face containing e
        sm = p.submesh
        for j in range(p.num_tets - 1):
            shared = set(sm.tet_faces[j]) & set(sm.tet_faces[j + 1])
            assert int(p.fan_faces[j + 1]) in shared
    assert np.all(counts == 6)
    assert vol_by_patch == pytest.approx(6.0 * m.volumes.sum(), rel=1e-12)


def test_shape_metrics_regular_tet():
    a = 1.3
    verts = a * np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
    ) / np.sqrt(2.0)  # regular tetrahedron with edge a*2
    edge = 2.0 * a
    m = build_mesh(verts, [[0, 1, 2, 3]], "D")
    assert m.h_tet[0] == pytest.approx(edge, rel=1e-13)
    assert m.rho_tet[0] == pytest.approx(edge / np.sqrt(6.0), rel=1e-13)
    p = edge_patch(m, 0)
    h, rho, kappa = shape_metrics(p)
    assert kappa == pytest.approx(np.sqrt(6.0), rel=1e-13)


def test_kappa_lower_bound_and_scale_invariance():
    m = generate_cube(2, boundary="N")
    kappas = []
    for e in range(m.num_edges):
        kappas.append(shape_metrics(edge_patch(m, e))[2])
    assert min(kappas) >= np.sqrt(6.0) - 1e-9
    scaled = build_mesh(5.0 * m.vertices, m.tets, "N")
    for e in [0, 7, 23]:
        k1 = shape_metrics(edge_patch(m, e))[2]
        k2 = shape_metrics(edge_patch(scaled, e))[2]
        assert k2 == pytest.approx(k1, rel=1e-12)


def test_uniform_refine_counts_and_volume():
    m = single_tet()
    r = uniform_refine(m)
    assert r.num_tets == 8
    assert r.volumes.sum() == pytest.approx(m.volumes.sum(), rel=1e-12)
    kappa_parent = (m.h_tet / m.rho_tet).max()
    kappa_child = (r.h_tet / r.rho_tet).max()
    assert kappa_child <= 2.5 * kappa_parent  # measured bound for this split


def test_uniform_refine_matches_rebuild():
    m = uniform_refine(generate_cube(1, boundary="N"))
    m2 = generate_cube(2, boundary="N")
    assert m.num_tets == m2.num_tets == 48
    bary1 = np.sort(
        np.round(m.vertices[m.tets].mean(axis=1), 12).view("f8,f8,f8").ravel()
    )
    bary2 = np.sort(
        np.round(m2.vertices[m2.tets].mean(axis=1), 12).view("f8,f8,f8").ravel()
    )
    assert np.array_equal(bary1, bary2)
    # tags inherited: all-Neumann stays all-Neumann
    assert np.all(m.face_tags[m.boundary_faces()] == TAG_NEUMANN)


def test_lshape_mesh():
    m = generate_lshape(2)
    assert m.num_tets == 18 * 2**3
    assert m.volumes.sum() == pytest.approx(3.0, rel=1e-12)
    assert np.all(m.face_tags[m.boundary_faces()] == TAG_DIRICHLET)
    # no vertex lies strictly inside the removed quadrant
    assert not np.any((m.vertices[:, 0] > 1e-12) & (m.vertices[:, 1] < -1e-12))


def test_dorfler_examples():
    assert dorfler_mark([3.0, 0.0, 0.0], 0.5).tolist() == [0]
    assert dorfler_mark([2.0, 2.0, 1.0], 0.6).tolist() == [0, 1]
    allm = dorfler_mark([1.0, 0.0, 2.0], 1.0)
    assert allm.tolist() == [0, 2]
    with pytest.raises(ValueError):
        dorfler_mark([1.0], 0.0)
    with pytest.raises(ValueError):
        dorfler_mark([1.0], 1.5)


def test_mesh_io_roundtrip(tmp_path):
    m = generate_cube(2, boundary="N")
    path = tmp_path / "cube.mesh"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.tets, m2.tets)
    assert np.allclose(m.vertices, m2.vertices)
    assert np.array_equal(m.face_tags, m2.face_tags)
    # comments and the header survive a manual read
    text = path.read_text()
    assert text.startswith("tetmesh 1")


def test_build_errors():
    with pytest.raises(ValueError, match="degenerate"):
        build_mesh(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.5, 0.5, 0.0]]),
            [[0, 1, 2, 3]],
            "D",
        )
    with pytest.raises(ValueError, match="untagged"):
        build_mesh(REF_VERTS, [[0, 1, 2, 3]], {(0, 1, 2): "D"})
    with pytest.raises(ValueError, match="non-matching"):
        verts = np.vstack([REF_VERTS, [0.5, 0.0, 0.0]])
        build_mesh(verts, [[0, 1, 2, 3], [4, 1, 2, 3]], "D")
    with pytest.raises(ValueError):
        build_mesh(REF_VERTS, [[0, 1, 2, 4]], "D")
