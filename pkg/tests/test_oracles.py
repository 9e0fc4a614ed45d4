"""Tests for the verification oracles: enriched dual norms, stability
ratios on random data, the global bound checks, and the conforming-flux
error majorant."""

import numpy as np
import pytest

from curlcurl.assembly import CURL, field_norms_squared
from curlcurl.cases import cube_solution, generate_cube, polynomial_solution
from curlcurl.equilibration import (
    PatchProblem,
    estimate,
    patch_equilibrate,
    project_source,
    restricted_curl_values,
    sweep_equilibrate,
)
from curlcurl.mesh import PATCH_INTERIOR, PATCH_NEUMANN
from curlcurl.oracles import (
    bound_check,
    oscillation_comparison,
    prager_synge_flux,
    random_patch_data,
    residual_dual_norm,
    stability_experiment,
)
from curlcurl.solver import CurlCurlProblem, energy_error, solve
from curlcurl.spaces import LAGRANGE, DiscreteField, DofSpace

SOL = cube_solution()
MESH_N = generate_cube(2, "N")
MESH_D = generate_cube(2, "D")


def edge_of_type(mesh, wanted):
    for e in range(mesh.num_edges):
        if mesh.edge_patch(e).patch_type == wanted:
            return e
    raise LookupError(f"no {wanted} patch in this mesh")


def solved_patch(mesh, p, e):
    problem = CurlCurlProblem(mesh, p, SOL.source, exact=SOL)
    pot = solve(problem).potential
    patch = mesh.edge_patch(e)
    pp = PatchProblem(patch, p, data_quad_degree=problem.quad_data)
    flux, _ = project_source(pp, problem.source)
    return problem, pot, patch, pp, flux


@pytest.mark.parametrize("p", [0, 1])
def test_zero_enrichment_reproduces_indicator(p):
    e = edge_of_type(MESH_N, PATCH_INTERIOR)
    problem, pot, patch, pp, flux = solved_patch(MESH_N, p, e)
    chi = restricted_curl_values(patch, pot, pp.rule.points)
    _, eta, _ = patch_equilibrate(pp, chi, flux)
    dual = residual_dual_norm(patch, p, pot, flux, 0,
                              data_quad_degree=problem.quad_data)
    assert abs(dual - eta) <= 1e-10 * max(1.0, eta)


@pytest.mark.parametrize("ptype", [PATCH_INTERIOR, PATCH_NEUMANN])
def test_dual_norm_nonincreasing_in_enrichment(ptype):
    e = edge_of_type(MESH_N, ptype)
    _, pot, patch, pp, flux = solved_patch(MESH_N, 1, e)
    duals = [residual_dual_norm(patch, 1, pot, flux, d) for d in range(3)]
    for lo, hi in zip(duals[1:], duals[:-1]):
        assert lo <= hi * (1 + 1e-9)


def test_negative_enrichment_rejected():
    e = edge_of_type(MESH_N, PATCH_INTERIOR)
    _, pot, patch, pp, flux = solved_patch(MESH_N, 0, e)
    with pytest.raises(ValueError):
        residual_dual_norm(patch, 0, pot, flux, -1)


def test_random_patch_data_is_seeded_and_divergence_free():
    e = edge_of_type(MESH_N, PATCH_INTERIOR)
    patch = MESH_N.edge_patch(e)
    pp = PatchProblem(patch, 1)
    chi_a, flux_a = random_patch_data(pp, 42)
    chi_b, flux_b = random_patch_data(pp, 42)
    chi_c, _ = random_patch_data(pp, 43)
    assert np.array_equal(chi_a.coefficients, chi_b.coefficients)
    assert np.array_equal(flux_a.coefficients, flux_b.coefficients)
    assert not np.array_equal(chi_a.coefficients, chi_c.coefficients)
    tets = np.arange(patch.num_tets)
    dv = flux_a.eval_div(tets, pp.rule.points)
    scale = np.abs(flux_a.eval(tets, pp.rule.points)).max()
    assert np.abs(dv).max() <= 1e-10 * max(1.0, scale)


@pytest.mark.parametrize("ptype", [PATCH_INTERIOR, PATCH_NEUMANN])
def test_stability_ratios_bounded_below_by_one(ptype):
    e = edge_of_type(MESH_N, ptype)
    patch = MESH_N.edge_patch(e)
    se = stability_experiment(patch, range(3), delta=2, seed=5, edge=e)
    assert (se.ratios_patch >= 1 - 1e-10).all()
    assert (se.ratios_sweep >= se.ratios_patch - 1e-10).all()
    assert (se.ratios_patch <= 10.0).all()
    assert se.spread("patch") >= 1.0
    assert se.degrees == [0, 1, 2]
    assert se.patch_type == ptype


def test_gradient_target_with_zero_flux():
    """A curl-free broken target against zero curl data stays finite."""
    e = edge_of_type(MESH_N, PATCH_INTERIOR)
    patch = MESH_N.edge_patch(e)
    p = 1
    pp = PatchProblem(patch, p)
    scal = DofSpace(pp.sub, LAGRANGE, p + 1, broken=True)
    rng = np.random.default_rng(3)
    q = DiscreteField(scal, rng.uniform(-1.0, 1.0, scal.ndof))
    tets = np.arange(patch.num_tets)
    chi_vals = q.eval_grad(tets, pp.rule.points)
    chi = DiscreteField(pp.nedelec_broken, _broken_nedelec_dofs(pp, patch, q))
    flux = DiscreteField(pp.rt, np.zeros(pp.rt.ndof))
    _, eta, _ = patch_equilibrate(pp, chi_vals, flux)
    dual = residual_dual_norm(patch, p, chi, flux, 2)
    assert eta > 0
    assert dual > 0
    assert eta >= dual * (1 - 1e-10)
    assert eta / dual <= 10.0


def _broken_nedelec_dofs(pp, patch, q):
    """Per-tet Nedelec dofs of the gradient of a broken scalar field."""
    nd = pp.nedelec_broken.tet_dofs.shape[1]
    out = np.empty((patch.num_tets, nd))
    for t in range(patch.num_tets):

        def grad_t(x, _t=t):
            v0 = pp.sub.vertices[pp.sub.tets[_t, 0]]
            ref = (x - v0) @ pp.sub.inv_jacobians[_t].T
            return q.eval_grad([_t], ref)[0]

        out[t] = pp.nedelec.local_dof_values(grad_t, pp.quad_data, [t])[0]
    return out.ravel()


def test_ratio_scaling_invariance():
    e = edge_of_type(MESH_N, PATCH_INTERIOR)
    patch = MESH_N.edge_patch(e)
    pp = PatchProblem(patch, 1)
    chi, flux = random_patch_data(pp, 11)
    tets = np.arange(patch.num_tets)
    chi_vals = chi.eval(tets, pp.rule.points)
    _, eta, _ = patch_equilibrate(pp, chi_vals, flux)
    dual = residual_dual_norm(patch, 1, chi, flux, 2)
    s = 3.7
    chi_s = DiscreteField(chi.space, s * chi.coefficients)
    flux_s = DiscreteField(flux.space, s * flux.coefficients)
    _, eta_s, _ = patch_equilibrate(pp, s * chi_vals, flux_s)
    dual_s = residual_dual_norm(patch, 1, chi_s, flux_s, 2)
    assert eta_s == pytest.approx(s * eta, rel=1e-10)
    assert dual_s == pytest.approx(s * dual, rel=1e-10)
    assert eta_s / dual_s == pytest.approx(eta / dual, rel=1e-9)


def test_exactly_reproduced_solution_has_zero_dual_norm():
    exact = polynomial_solution(1)
    problem = CurlCurlProblem(MESH_D, 1, exact.source, exact=exact)
    pot = solve(problem).potential
    scale = np.sqrt(field_norms_squared(pot, CURL, 6).sum())
    e = edge_of_type(MESH_D, PATCH_INTERIOR)
    patch = MESH_D.edge_patch(e)
    pp = PatchProblem(patch, 1, data_quad_degree=problem.quad_data)
    flux, _ = project_source(pp, problem.source)
    chi = restricted_curl_values(patch, pot, pp.rule.points)
    _, eta, _ = patch_equilibrate(pp, chi, flux)
    dual = residual_dual_norm(patch, 1, pot, flux, 2,
                              data_quad_degree=problem.quad_data)
    assert eta <= 1e-9 * max(1.0, scale)
    assert dual <= 1e-9 * max(1.0, scale)


def test_prager_synge_bounds_polynomial_error():
    exact = polynomial_solution(2)
    problem = CurlCurlProblem(MESH_D, 0, exact.source, exact=exact)
    res = solve(problem)
    err, _ = energy_error(res.potential, exact.curl)
    g, bound, info = prager_synge_flux(problem, res.potential)
    scale = np.sqrt(field_norms_squared(g, CURL, 8).sum())
    assert info["curl_gap"] <= 1e-9
    assert info["kkt_residual"] <= 1e-9
    assert err <= bound + 1e-9 * max(1.0, scale)
    assert bound <= 10.0 * err


def test_prager_synge_degenerates_with_reproduced_solution():
    exact = polynomial_solution(1)
    problem = CurlCurlProblem(MESH_D, 1, exact.source, exact=exact)
    res = solve(problem)
    err, _ = energy_error(res.potential, exact.curl)
    _, bound, info = prager_synge_flux(problem, res.potential)
    scale = np.sqrt(field_norms_squared(res.potential, CURL, 6).sum())
    assert err <= 1e-9 * scale
    assert bound <= 1e-8 * scale
    assert info["curl_gap"] <= 1e-9


def test_bound_check_tabulates_and_passes():
    exact = polynomial_solution(2)
    problem = CurlCurlProblem(MESH_D, 0, exact.source, exact=exact)
    res = solve(problem)
    err, per_edge = energy_error(res.potential, exact.curl)
    report = estimate(problem, res.potential, method="patch")
    bc = bound_check(report, err, per_edge)
    assert bc.upper_ok
    assert bc.error == pytest.approx(err)
    assert bc.upper_bound == pytest.approx(report.upper_bound)
    assert bc.margin >= 1e-6
    assert len(bc.efficiencies) == len(report.estimates)
    assert bc.max_efficiency == pytest.approx(bc.efficiencies.max())
    assert (bc.efficiencies_plain >= bc.efficiencies - 1e-12).all()
    assert bc.max_efficiency_plain <= 3.0


def test_oscillation_comparison_reports_gap():
    e = edge_of_type(MESH_N, PATCH_INTERIOR)
    problem, pot, patch, pp, flux = solved_patch(MESH_N, 1, e)
    oc = oscillation_comparison(patch, 1, pot, problem.source, delta=2,
                                data_quad_degree=problem.quad_data)
    for key in ("raw_dual_norm", "projected_dual_norm", "gap", "osc",
                "misfit"):
        assert np.isfinite(oc[key])
        assert oc[key] >= 0.0
    assert oc["gap"] == pytest.approx(
        abs(oc["raw_dual_norm"] - oc["projected_dual_norm"]))
