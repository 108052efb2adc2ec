import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidity_lab.cone import Angle, make_cone
from rigidity_lab.errors import SingularSystem, UnknownTag
from rigidity_lab.mesh.volume import GAMMA, GAMMA1, sector_mesh
from rigidity_lab.poisson import (
    ScalarField,
    boundary_normal_derivative,
    convergence_csv,
    convergence_study,
    error_norms,
    recover_gradient,
    recover_hessian,
    solution_csv,
    solve_mixed,
    total_flux,
)


def _exact(x):
    return (1 - np.sum(x * x, axis=1)) / 4


@pytest.mark.parametrize("which", ["quarter_solve", "half_solve"])
def test_sector_solution_matches_exact(which, request):
    u, report = request.getfixturevalue(which)
    linf, _ = error_norms(u, _exact)
    assert linf <= 5e-4
    assert report.residual <= 1e-10
    assert report.positivity_ok


def test_solution_vanishes_on_gamma(quarter_solve):
    u, _ = quarter_solve
    assert np.all(u.values[u.mesh.tag_vertices(GAMMA)] == 0.0)


def test_maximum_principle(quarter_solve, reentrant_solve, perturbed_solve):
    for u in (quarter_solve[0], reentrant_solve, perturbed_solve):
        assert u.values.min() >= -1e-9


def test_pure_neumann_is_singular(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.1)
    tags = np.full(len(mesh.edge_tags), GAMMA1)
    with pytest.raises(SingularSystem):
        solve_mixed(dataclasses.replace(mesh, edge_tags=tags))


def test_gradient_recovery_on_exact_data(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.02)
    g = recover_gradient(ScalarField(mesh, _exact(mesh.vertices))).values
    inner = mesh.interior_mask
    assert np.max(np.linalg.norm(g[inner] + mesh.vertices[inner] / 2, axis=1)) <= 2e-2


def test_gradient_of_constant_and_linear(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.05)
    assert np.allclose(recover_gradient(ScalarField(mesh, np.ones(mesh.n_vertices))).values, 0.0, atol=1e-12)
    g = recover_gradient(ScalarField(mesh, mesh.vertices[:, 0])).values
    assert np.allclose(g[mesh.interior_mask], [1.0, 0.0], atol=1e-12)


def test_hessian_of_quadratic_and_linear(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.05)
    H = recover_hessian(ScalarField(mesh, -np.sum(mesh.vertices**2, axis=1) / 4)).values
    assert np.allclose(H, -0.5 * np.eye(2), atol=1e-9)
    L = recover_hessian(ScalarField(mesh, 3 * mesh.vertices[:, 0] - mesh.vertices[:, 1])).values
    assert np.allclose(L, 0.0, atol=1e-9)


def test_hessian_of_sector_solve(quarter_solve):
    u, _ = quarter_solve
    H = recover_hessian(u).values
    dev = np.linalg.norm(H + 0.5 * np.eye(2), axis=(1, 2))
    assert dev.mean() <= 5e-2


def test_normal_derivatives_on_sector(quarter_solve):
    u, _ = quarter_solve
    _, g = boundary_normal_derivative(u, GAMMA)
    assert np.all(np.abs(g + 0.5) <= 5e-3)
    _, g1 = boundary_normal_derivative(u, GAMMA1)
    assert np.all(np.abs(g1) <= 5e-3)


def test_total_flux_is_minus_area(quarter_solve, perturbed_solve):
    for u in (quarter_solve[0], perturbed_solve):
        assert np.isclose(total_flux(u, GAMMA), -u.mesh.area, rtol=1e-8, atol=0)


def test_unknown_tag(quarter_solve):
    with pytest.raises(UnknownTag):
        boundary_normal_derivative(quarter_solve[0], "SIDE")


def test_discrete_energy_identity(perturbed_solve):
    u = perturbed_solve
    energy = float(np.sum(u.mesh.areas * np.sum(u.cell_gradients**2, axis=1)))
    assert np.isclose(energy, u.integral(), rtol=1e-8)


@pytest.mark.parametrize("theta0", [math.pi / 2, math.pi])
def test_convergence_order_two(theta0):
    rows = convergence_study(make_cone(2, Angle(theta0)), [0.08, 0.04, 0.02])
    assert all(abs(r.order_l2 - 2) <= 0.3 for r in rows[1:])
    text = convergence_csv(rows)
    assert text.splitlines()[0] == "h,dofs,linf,l2,order_linf,order_l2"
    assert len(text.splitlines()) == 4


def test_convergence_reentrant_is_reported(reentrant):
    rows = convergence_study(reentrant, [0.08, 0.04])
    assert rows[1].order_l2 is not None and rows[1].l2 < rows[0].l2


@settings(max_examples=5, deadline=None)
@given(st.floats(0.3, 4.0))
def test_scaling_covariance(s):
    mesh = sector_mesh(make_cone(2, Angle(1.2)), 1.0, 0.1)
    u, _ = solve_mixed(mesh)
    v, _ = solve_mixed(mesh.transformed(scale=s))
    assert np.allclose(v.values, s * s * u.values, rtol=1e-7, atol=1e-9 * s * s)


def test_rotation_of_the_mesh_rotates_the_solution(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.1)
    u, _ = solve_mixed(mesh)
    c, s = math.cos(0.4), math.sin(0.4)
    v, _ = solve_mixed(mesh.transformed(matrix=[[c, -s], [s, c]]))
    assert np.allclose(v.values, u.values, atol=1e-9)


def test_solution_csv_columns(quarter):
    u, _ = solve_mixed(sector_mesh(quarter, 1.0, 0.2))
    lines = solution_csv(u).splitlines()
    assert lines[0] == "vertex_id,x,y,u,du_x,du_y"
    assert len(lines) == u.mesh.n_vertices + 1
