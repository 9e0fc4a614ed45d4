"""Tests for the gauged saddle-point solver and the energy error norms."""

import numpy as np
import pytest

from curlcurl.assembly import VALUE, field_norms_squared
from curlcurl.cases import (
    cube_solution,
    generate_cube,
    polynomial_solution,
)
from curlcurl.solver import CurlCurlProblem, energy_error, solve
from curlcurl.spaces import LAGRANGE, NEDELEC, DiscreteField, DofSpace


def zero_source(x):
    return np.zeros((len(x), 3))


def test_zero_source_pure_neumann_gives_zero_field():
    mesh = generate_cube(2, boundary="N")
    res = solve(CurlCurlProblem(mesh, 0, zero_source))
    assert np.abs(res.potential.coefficients).max() < 1e-12
    assert np.abs(res.multiplier.coefficients).max() < 1e-12


@pytest.mark.parametrize("p", [0, 1, 2])
def test_polynomial_solution_reproduced(p):
    # the exact potential lies in N_p, so the curl error must vanish
    sol = polynomial_solution(p)
    mesh = generate_cube(2, boundary="D")
    res = solve(CurlCurlProblem(mesh, p, sol.source, exact=sol))
    err, per_edge = energy_error(res.potential, sol.curl)
    scale = np.sqrt(field_norms_squared(res.potential, VALUE, 2 * p + 2).sum())
    assert err <= 1e-9 * max(1.0, scale)
    assert per_edge.max() <= 1e-9 * max(1.0, scale)


def test_smooth_cube_diagnostics():
    sol = cube_solution()
    mesh = generate_cube(2, boundary="N")
    res = solve(CurlCurlProblem(mesh, 1, sol.source, exact=sol))
    d = res.diagnostics
    assert d["galerkin_residual"] <= 1e-9
    assert d["gauge_residual"] <= 1e-9
    # div j = 0 holds only up to data quadrature; the multiplier mirrors it
    assert d["multiplier_norm"] <= 100.0 * d["weak_divergence"]
    assert d["n_potential_dofs"] < d["n_dofs"]


def test_multiplier_vanishes_with_escalated_data_quadrature():
    sol = cube_solution()
    mesh = generate_cube(2, boundary="N")
    res = solve(
        CurlCurlProblem(mesh, 1, sol.source, exact=sol, data_quad_degree=14)
    )
    d = res.diagnostics
    assert d["weak_divergence"] <= 1e-11
    assert d["multiplier_norm"] <= 1e-10


def test_energy_error_decreases_with_degree():
    sol = cube_solution()
    mesh = generate_cube(2, boundary="N")
    errs = []
    for p in (0, 1, 2):
        res = solve(CurlCurlProblem(mesh, p, sol.source, exact=sol))
        errs.append(energy_error(res.potential, sol.curl)[0])
    assert errs[2] < errs[1] < errs[0]


def test_per_edge_norms_sum_to_six_times_global():
    # every tet has six edges, so the patch squares cover the mesh six times
    sol = cube_solution()
    mesh = generate_cube(2, boundary="N")
    res = solve(CurlCurlProblem(mesh, 0, sol.source, exact=sol))
    err, per_edge = energy_error(res.potential, sol.curl)
    assert np.isclose((per_edge**2).sum(), 6.0 * err**2, rtol=1e-12)


def test_inhomogeneous_dirichlet_data_interpolated():
    sol = polynomial_solution(0)
    mesh = generate_cube(2, boundary="D")
    res = solve(CurlCurlProblem(mesh, 0, sol.source, exact=sol))
    spn = res.potential.space
    interp = spn.interpolate(sol.potential)
    fixed = spn.constraint_mask(mesh.boundary_faces())
    got = res.potential.coefficients[fixed]
    assert np.abs(got - interp[fixed]).max() < 1e-12


def test_gauge_orthogonality_against_gradients():
    sol = cube_solution()
    mesh = generate_cube(2, boundary="N")
    res = solve(CurlCurlProblem(mesh, 0, sol.source, exact=sol))
    from curlcurl.assembly import GRAD, assemble_bilinear

    spn = DofSpace(mesh, NEDELEC, 0)
    spl = DofSpace(mesh, LAGRANGE, 1)
    G = assemble_bilinear(spn, spl, VALUE, GRAD, 4)
    g = G.T @ res.potential.coefficients
    scale = max(1.0, np.linalg.norm(res.potential.coefficients))
    assert np.abs(g).max() <= 1e-9 * scale


def test_quad_data_default_and_override():
    mesh = generate_cube(1, boundary="N")
    pb = CurlCurlProblem(mesh, 1, zero_source)
    assert pb.quad_data == 8
    pb2 = CurlCurlProblem(mesh, 1, zero_source, data_quad_degree=12)
    assert pb2.quad_data == 12


def test_invalid_problem_arguments():
    mesh = generate_cube(1, boundary="N")
    with pytest.raises(ValueError):
        CurlCurlProblem(mesh, -1, zero_source)
    with pytest.raises(ValueError):
        CurlCurlProblem(mesh, 0, zero_source, C_L=0.0)
