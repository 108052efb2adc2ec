import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rigidity_lab.cone import CENTER_AT_APEX, HALF_SPHERE_ON_FLAT_FACE, CircularAperture, make_cone
from rigidity_lab.identities import (
    PolynomialField,
    curvature_density,
    divergence_check,
    effective_c,
    gamma1_edge_values,
    gamma1_flux_sign,
    hessian_deviation,
    identity_curvature,
    identity_energy,
    identity_pohozaev,
    identity_suite,
    newton_bracket,
    newton_deficit,
    p_function,
    p_function_check,
    pohozaev_radial_oracle,
    pointwise_mask,
    rigidity_detect,
)
from rigidity_lab.mesh.volume import mesh_sector_domain, perturbed_rho, sector_mesh
from rigidity_lab.poisson import ScalarField, solve_mixed

REFLECT = np.array([[0.0, 1.0], [1.0, 0.0]])


def _by_name(reports):
    return {r.name: r for r in reports}


def test_effective_c_on_sector(quarter_solve):
    u, _ = quarter_solve
    ec = effective_c(u)
    assert np.isclose(ec.c, 0.5, rtol=1e-3)
    assert ec.spread <= 1e-2
    assert ec.overdetermined


def test_effective_c_on_perturbed_domain(perturbed_solve):
    ec = effective_c(perturbed_solve)
    assert ec.spread > 0.05
    assert not ec.overdetermined


@pytest.mark.parametrize("which", ["quarter_solve", "perturbed_solve", "reentrant_solve"])
def test_effective_c_is_definitional(which, request):
    u = request.getfixturevalue(which)
    u = u[0] if isinstance(u, tuple) else u
    ec = effective_c(u)
    assert abs(ec.c * ec.gamma_length - ec.area) <= 1e-12 * ec.area


@pytest.mark.parametrize("which,energy", [("quarter_solve", math.pi / 32), ("half_solve", math.pi / 16)])
def test_energy_identity_on_sectors(which, energy, request):
    u, _ = request.getfixturevalue(which)
    r = identity_energy(u)
    assert r.rel_residual <= 1e-8
    assert np.isclose(r.lhs, energy, rtol=2e-2)


def test_energy_identity_on_perturbed_domain(perturbed_solve):
    r = identity_energy(perturbed_solve)
    assert not r.informational and r.rel_residual <= 1e-8


def test_pohozaev_on_sector(quarter_solve):
    u, _ = quarter_solve
    reports = _by_name(identity_pohozaev(u))
    main = reports["pohozaev"]
    assert np.isclose(main.lhs, math.pi / 16, rtol=2e-2)
    assert np.isclose(main.rhs, math.pi / 16, rtol=2e-2)
    assert main.passed and not main.informational
    small = reports["gamma1_hessian_x_term"]
    assert abs(small.details["gamma1_term"]) <= 1e-2 * main.rhs


def test_pohozaev_radial_oracle_in_space():
    cone = make_cone(3, CircularAperture(math.pi / 2))
    lhs, rhs = pohozaev_radial_oracle(cone, 1 / 3)
    assert np.isclose(rhs, (1 / 9) * (2 * math.pi / 3), rtol=1e-13)
    # independent oracle: u = (1 - r^2)/6 integrated over the hemisphere in spherical coordinates
    int_u, _ = integrate.tplquad(lambda r, t, p: (1 - r * r) / 6 * r * r * math.sin(t),
                                 0, 2 * math.pi, 0, math.pi / 2, 0, 1)
    assert np.isclose(lhs, (1 + 2 / 3) * int_u, rtol=1e-8)
    assert np.isclose(lhs, rhs, rtol=1e-12)


@pytest.mark.parametrize("which,value", [("quarter_solve", math.pi / 64), ("half_solve", math.pi / 32)])
def test_curvature_identity_on_sectors(which, value, request):
    u, _ = request.getfixturevalue(which)
    r = identity_curvature(u)
    assert np.isclose(r.lhs, value, rtol=2e-2)
    assert np.isclose(r.rhs, value, rtol=2e-2)
    assert r.passed


def test_curvature_density_of_quadratic():
    rng = np.random.default_rng(1)
    grad = rng.normal(size=(50, 2))
    hess = np.broadcast_to(-0.5 * np.eye(2), (50, 2, 2))
    # J(A) = tr(A) I - A = -(1/2) I, so the density is |Du|^2 / 2
    assert np.allclose(curvature_density(grad, hess), np.sum(grad**2, axis=1) / 2, rtol=1e-12)


def test_newton_bracket_examples():
    assert np.allclose(newton_bracket(np.array([[[0.0, 1.0], [1.0, 0.0]]])), 1.0)
    assert np.allclose(newton_bracket(np.array([-0.5 * np.eye(2), 3 * np.eye(3)[:2, :2]])), 0.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_newton_bracket_is_nonnegative(abc):
    a, b, c = abc
    assert newton_bracket(np.array([[[a, b], [b, c]]]))[0] >= -1e-12 * (1 + a * a + b * b + c * c)


def test_newton_deficit_separates_sector_from_perturbation(quarter_solve, perturbed_solve):
    base = newton_deficit(quarter_solve[0])
    pert = newton_deficit(perturbed_solve)
    assert base.passed and pert.passed
    assert base.details["normalized_deficit"] <= 1e-4
    assert pert.details["normalized_deficit"] > 100 * base.details["normalized_deficit"]


def test_newton_deficit_of_synthetic_field(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.05)
    u = ScalarField(mesh, mesh.vertices[:, 0] * mesh.vertices[:, 1])
    r = newton_deficit(u)
    assert np.isclose(r.details["mean_bracket"], 1.0, rtol=1e-9)


def test_gamma1_structure_on_sector(quarter_solve):
    u, _ = quarter_solve
    _, hx, hg = gamma1_edge_values(u)
    assert np.max(np.abs(hx)) <= 1e-2
    assert np.max(np.abs(hg)) <= 1e-2
    assert gamma1_flux_sign(u).passed


def test_gamma1_flux_sign_non_convex_is_informational(reentrant):
    u, _ = solve_mixed(mesh_sector_domain(reentrant, perturbed_rho(0.2, 2, 1.0), 0.04))
    r = gamma1_flux_sign(u)
    assert r.informational and r.passed
    assert math.isfinite(r.lhs)


def test_p_function_on_sector(quarter_solve):
    u, _ = quarter_solve
    v = p_function(u).values[pointwise_mask(u.mesh)]
    assert np.max(np.abs(v - 0.25)) <= 1e-2
    assert all(r.passed and not r.informational for r in p_function_check(u))


def test_p_function_on_perturbed_domain(perturbed_solve):
    reports = _by_name(p_function_check(perturbed_solve))
    assert reports["p_function_max"].details["margin"] > 0


def test_p_function_scaling(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.05)
    u, _ = solve_mixed(mesh)
    w, _ = solve_mixed(mesh.transformed(scale=2.0))
    assert np.allclose(p_function(w).values, 4 * p_function(u).values, rtol=1e-6)
    assert [r.passed for r in p_function_check(w)] == [r.passed for r in p_function_check(u)]


def test_rigidity_on_sector(quarter_solve):
    v = rigidity_detect(quarter_solve[0])
    assert v.is_spherical_sector
    assert np.linalg.norm(v.p0) <= 1e-2
    assert v.case.kind == CENTER_AT_APEX


def test_rigidity_half_disc_on_flat_face(half):
    u, _ = solve_mixed(sector_mesh(half, 0.5, 0.02, (1.0, 0.0)))
    v = rigidity_detect(u)
    assert v.is_spherical_sector
    assert v.case.kind == HALF_SPHERE_ON_FLAT_FACE
    assert np.allclose(v.p0, (1.0, 0.0), atol=1e-2)


def test_rigidity_on_perturbed_domain(quarter_solve, perturbed_solve):
    v = rigidity_detect(perturbed_solve)
    assert not v.is_spherical_sector
    base = hessian_deviation(quarter_solve[0])["mean"]
    assert v.hessian_deviation["mean"] >= 10 * base


def test_hessian_deviation_grows_with_amplitude(quarter):
    means = []
    for eps in (0.05, 0.1, 0.2):
        u, _ = solve_mixed(mesh_sector_domain(quarter, perturbed_rho(eps, 2, 1.0), 0.02))
        means.append(hessian_deviation(u)["mean"])
    assert means[0] < means[1] < means[2]


@pytest.mark.parametrize("eps", [0.0, 0.1])
@pytest.mark.parametrize("motion", ["reflect", "scale_small", "scale_large"])
def test_rigidity_verdict_invariance(quarter, eps, motion):
    mesh = mesh_sector_domain(quarter, perturbed_rho(eps, 2, 1.0), 0.04)
    base = rigidity_detect(solve_mixed(mesh)[0]).is_spherical_sector
    moved = {"reflect": mesh.transformed(matrix=REFLECT), "scale_small": mesh.transformed(scale=0.3),
             "scale_large": mesh.transformed(scale=3.0)}[motion]
    assert rigidity_detect(solve_mixed(moved)[0]).is_spherical_sector == base


def test_divergence_of_position(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.05)
    r = divergence_check(mesh, PolynomialField.position())
    assert np.isclose(r.lhs, 2 * mesh.area, rtol=1e-13)
    assert r.passed
    assert np.isclose(r.details["flux_gamma"], 2 * mesh.area, rtol=1e-13)
    assert abs(r.details["flux_gamma1"]) <= 1e-14


def test_divergence_of_quadratic(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.05)
    r = divergence_check(mesh, PolynomialField(({(2, 0): 1.0}, {})))
    assert np.isclose(r.lhs, float(np.sum(mesh.areas * 2 * mesh.centroids[:, 0])), rtol=1e-13)
    assert r.rel_residual <= 1e-10
    # the smooth quarter disc value is 2/3; the polygon converges to it
    assert np.isclose(r.lhs, 2 / 3, rtol=1e-2)


def test_divergence_of_constant(quarter):
    r = divergence_check(sector_mesh(quarter, 1.0, 0.05), PolynomialField(({(0, 0): 1.3}, {(0, 0): -0.4})))
    assert r.lhs == 0.0 and abs(r.rhs) <= 1e-12


def test_polynomial_field_rejects_high_degree():
    with pytest.raises(ValueError):
        PolynomialField(({(3, 0): 1.0}, {}))


def test_suite_on_sector_all_pass(quarter_solve):
    assert all(r.passed and not r.informational for r in identity_suite(quarter_solve[0]))


def test_suite_on_perturbed_domain(perturbed_solve):
    reports = _by_name(identity_suite(perturbed_solve))
    for name in ("energy", "newton_deficit", "divergence"):
        assert reports[name].passed and not reports[name].informational
    for name in ("pohozaev", "curvature", "p_function_constant"):
        assert reports[name].informational


def test_suite_on_non_convex_sector(reentrant_solve):
    reports = _by_name(identity_suite(reentrant_solve))
    assert reports["gamma1_flux_sign"].informational
    assert reports["p_function_max"].informational
    assert reports["energy"].passed
