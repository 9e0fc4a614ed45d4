"""Tests for affine maps and Piola transports."""

import numpy as np
import pytest

from curlcurl.cases import generate_cube
from curlcurl.mesh import build_mesh
from curlcurl.piola import (
    AffineMap,
    contravariant_piola,
    covariant_piola,
    covariant_transport,
    reflection_map,
)
from curlcurl.quadrature import tetrahedron_rule
from curlcurl.spaces import NEDELEC, RAVIART_THOMAS, DiscreteField, DofSpace


def single_tet_mesh(verts):
    return build_mesh(np.asarray(verts, dtype=float), [[0, 1, 2, 3]], "D")


def field_on(mesh, family, p, seed):
    sp = DofSpace(mesh, family, p)
    f = DiscreteField(sp, np.random.default_rng(seed).standard_normal(sp.ndof))

    def fn(x):
        v0 = mesh.vertices[mesh.tets[0, 0]]
        ref = (np.asarray(x) - v0) @ mesh.inv_jacobians[0].T
        return f.eval([0], ref)[0]

    def curl_fn(x):
        v0 = mesh.vertices[mesh.tets[0, 0]]
        ref = (np.asarray(x) - v0) @ mesh.inv_jacobians[0].T
        return f.eval_curl([0], ref)[0]

    return f, fn, curl_fn


VERTS_IN = np.array(
    [[0.0, 0.0, 0.0], [1.1, 0.1, 0.0], [0.2, 0.9, -0.1], [0.3, 0.2, 1.2]]
)
RANDOM_J = np.array([[0.9, 0.2, -0.1], [0.1, 1.2, 0.3], [-0.2, 0.1, 0.8]])
RANDOM_B = np.array([0.4, -0.3, 0.7])


def test_identity_map_is_identity():
    amap = AffineMap.identity()
    _, fn, _ = field_on(single_tet_mesh(VERTS_IN), NEDELEC, 1, 0)
    pts = np.array([[0.3, 0.3, 0.2], [0.5, 0.2, 0.1]])
    for transport in (covariant_piola, contravariant_piola):
        assert np.abs(transport(amap, fn)(pts) - fn(pts)).max() < 1e-14


def test_from_vertices_maps_vertices():
    dst = VERTS_IN @ RANDOM_J.T + RANDOM_B
    amap = AffineMap.from_vertices(VERTS_IN, dst)
    assert np.abs(amap.apply(VERTS_IN) - dst).max() < 1e-12
    assert np.abs(amap.matrix - RANDOM_J).max() < 1e-12
    inv = amap.inverse()
    assert np.abs(inv.apply(dst) - VERTS_IN).max() < 1e-12
    with pytest.raises(ValueError):
        AffineMap(np.zeros((3, 3)), np.zeros(3))


@pytest.mark.parametrize("flip", [1.0, -1.0])
def test_commute_and_coefficient_transport(flip):
    J = RANDOM_J * np.array([flip, 1.0, 1.0])[:, None]
    amap = AffineMap(J, RANDOM_B)
    mesh_in = single_tet_mesh(VERTS_IN)
    mesh_out = single_tet_mesh(amap.apply(VERTS_IN))
    _, fn, curl_fn = field_on(mesh_in, NEDELEC, 2, 1)

    sp_out = DofSpace(mesh_out, NEDELEC, 2)
    coeffs = np.zeros(sp_out.ndof)
    coeffs[sp_out.tet_dofs[0]] = covariant_transport(amap, fn, sp_out, 0)
    g = DiscreteField(sp_out, coeffs)

    ref = tetrahedron_rule(4).points
    v0 = mesh_out.vertices[mesh_out.tets[0, 0]]
    phys = v0 + ref @ mesh_out.jacobians[0].T

    pushed = covariant_piola(amap, fn)(phys)
    scale = max(np.abs(pushed).max(), 1.0)
    assert np.abs(g.eval([0], ref)[0] - pushed).max() < 1e-11 * scale

    pushed_curl = contravariant_piola(amap, curl_fn)(phys)
    cscale = max(np.abs(pushed_curl).max(), 1.0)
    assert np.abs(g.eval_curl([0], ref)[0] - pushed_curl).max() < 1e-12 * cscale


@pytest.mark.parametrize("flip", [1.0, -1.0])
def test_adjoint_identity(flip):
    J = RANDOM_J * np.array([flip, 1.0, 1.0])[:, None]
    amap = AffineMap(J, RANDOM_B)
    mesh_in = single_tet_mesh(VERTS_IN)
    mesh_out = single_tet_mesh(amap.apply(VERTS_IN))
    _, fn_in, _ = field_on(mesh_in, NEDELEC, 2, 2)
    _, fn_out, _ = field_on(mesh_out, NEDELEC, 2, 3)

    rule = tetrahedron_rule(8)

    def integrate(mesh, integrand):
        v0 = mesh.vertices[mesh.tets[0, 0]]
        pts = v0 + rule.points @ mesh.jacobians[0].T
        vals = integrand(pts)
        return float(rule.weights @ vals) * abs(mesh.det_jacobians[0])

    lhs = integrate(
        mesh_out, lambda x: (covariant_piola(amap, fn_in)(x) * fn_out(x)).sum(axis=1)
    )
    inv_push = contravariant_piola(amap.inverse(), fn_out)
    rhs = amap.sign * integrate(
        mesh_in, lambda x: (fn_in(x) * inv_push(x)).sum(axis=1)
    )
    assert abs(lhs - rhs) < 1e-12 * max(abs(lhs), 1.0)


def test_contravariant_preserves_div_free():
    amap = AffineMap(RANDOM_J, RANDOM_B)
    mesh_in = single_tet_mesh(VERTS_IN)
    mesh_out = single_tet_mesh(amap.apply(VERTS_IN))
    # a div-free RT_2 member: the curl of a Nedelec field
    _, _, curl_fn = field_on(mesh_in, NEDELEC, 2, 4)
    sp_out = DofSpace(mesh_out, RAVIART_THOMAS, 2)
    w = DiscreteField(sp_out, sp_out.interpolate(contravariant_piola(amap, curl_fn)))
    ref = tetrahedron_rule(4).points
    scale = max(np.abs(w.eval([0], ref)).max(), 1.0)
    assert np.abs(w.eval_div([0], ref)).max() < 1e-12 * scale


def test_reflection_map_on_patch_pairs():
    mesh = generate_cube(1, boundary="N")
    rule = tetrahedron_rule(6)
    checked = 0
    for fc in range(mesh.num_faces):
        t0, t1 = mesh.face_tets[fc]
        if t1 < 0:
            continue
        vin = mesh.vertices[mesh.tets[t0]]
        vout = mesh.vertices[mesh.tets[t1]]
        amap = reflection_map(vin, vout)
        shared = mesh.vertices[mesh.faces[fc]]
        assert np.abs(amap.apply(shared) - shared).max() < 1e-12
        assert amap.sign == -1.0
        # mapping back and forth across the face is the identity
        back = reflection_map(vout, vin)
        both = back.compose(amap)
        assert np.abs(both.matrix - np.eye(3)).max() < 1e-12
        assert np.abs(both.offset).max() < 1e-12

        # tangential trace preserved on the invariant face
        _, fn, curl_fn = field_on(single_tet_mesh(vin), NEDELEC, 1, fc)
        pushed = covariant_piola(amap, fn)
        n = mesh.face_normals[fc]
        uv = np.array([[0.2, 0.3], [0.5, 0.25], [0.1, 0.1]])
        pts = shared[0] + uv[:, :1] * (shared[1] - shared[0]) + uv[:, 1:] * (
            shared[2] - shared[0]
        )
        a, b = fn(pts), pushed(pts)
        tja = a - (a @ n)[:, None] * n
        tjb = b - (b @ n)[:, None] * n
        assert np.abs(tja - tjb).max() < 1e-12 * max(np.abs(a).max(), 1.0)

        # normal flux through the invariant face preserved up to sign
        from curlcurl.quadrature import triangle_rule

        fr = triangle_rule(6)
        fpts = shared[0] + fr.points[:, :1] * (shared[1] - shared[0]) + fr.points[
            :, 1:
        ] * (shared[2] - shared[0])
        wpush = contravariant_piola(amap, curl_fn)
        flux_in = float(fr.weights @ (curl_fn(fpts) @ n))
        flux_out = float(fr.weights @ (wpush(fpts) @ n))
        # fixed chart normal: flux preserved exactly; per-tet outward
        # normals flip across the face, which contributes sign(det J)
        assert abs(flux_out - flux_in) < 1e-12 * max(abs(flux_in), 1.0)
        assert abs(flux_out - amap.sign * (-flux_in)) < 1e-12 * max(abs(flux_in), 1.0)

        # patch-context L2 stability with inscribed-ball diameter rho
        _, fn2, _ = field_on(single_tet_mesh(vin), NEDELEC, 2, fc + 100)
        pts_out = mesh.vertices[mesh.tets[t1, 0]] + rule.points @ mesh.jacobians[t1].T
        pts_in = mesh.vertices[mesh.tets[t0, 0]] + rule.points @ mesh.jacobians[t0].T
        nrm_out = np.sqrt(
            float(rule.weights @ (covariant_piola(amap, fn2)(pts_out) ** 2).sum(1))
            * abs(mesh.det_jacobians[t1])
        )
        nrm_in = np.sqrt(
            float(rule.weights @ (fn2(pts_in) ** 2).sum(1))
            * abs(mesh.det_jacobians[t0])
        )
        bound = mesh.h_tet[t0] / mesh.rho_tet[t1]
        assert nrm_out <= bound * nrm_in * (1 + 1e-12)
        checked += 1
    assert checked > 0


def test_reflection_map_requires_shared_face():
    mesh = generate_cube(1, boundary="N")
    # find two tets with no shared face
    vin = mesh.vertices[mesh.tets[0]]
    for t in range(1, mesh.num_tets):
        shared = len(set(map(tuple, vin)) & set(map(tuple, mesh.vertices[mesh.tets[t]])))
        if shared < 3:
            with pytest.raises(ValueError):
                reflection_map(vin, mesh.vertices[mesh.tets[t]])
            return
    raise AssertionError("expected a non-adjacent pair")
