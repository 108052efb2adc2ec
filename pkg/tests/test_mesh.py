import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidity_lab.cone import Angle, CircularAperture, make_cone
from rigidity_lab.errors import DegenerateShape, EmptyIntersection, ParseError, SelfIntersection
from rigidity_lab.mesh.off import format_off, load_off, parse_off, store_off
from rigidity_lab.mesh.quality import mesh_from_request, validate
from rigidity_lab.mesh.surface import (
    gamma_curve,
    mesh_flat_disc,
    mesh_folded_flap,
    mesh_perturbed_cap,
    mesh_spherical_cap,
)
from rigidity_lab.mesh.volume import GAMMA, GAMMA1, CircularArc, mesh_sector_domain, perturbed_rho, sector_mesh


def test_quarter_disc_area(quarter):
    mesh = mesh_sector_domain(quarter, CircularArc(1.0, (0.0, 0.0)), 0.05)
    assert abs(mesh.area - math.pi / 4) <= 0.01 * math.pi / 4


def test_quarter_disc_quality(quarter):
    report = validate(sector_mesh(quarter, 1.0, 0.05))
    assert report.passed, report.failures
    assert report.min_angle > 20.0


def test_radial_graph_quality(quarter):
    report = validate(mesh_sector_domain(quarter, perturbed_rho(0.2, 2, 1.0), 0.05))
    assert report.passed, report.failures


def test_arc_leaving_the_cone(quarter):
    with pytest.raises(DegenerateShape):
        mesh_sector_domain(quarter, CircularArc(1.0, (2.0, 2.0)), 0.05)


def test_sector_has_single_apex_and_both_tags(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.05)
    assert mesh.apex_vertex is not None
    assert np.allclose(mesh.vertices[mesh.apex_vertex], 0.0)
    assert set(mesh.edge_tags) == {GAMMA, GAMMA1}
    assert np.allclose(mesh.cone.distance_to_boundary(mesh.vertices[mesh.tag_vertices(GAMMA1)]), 0.0, atol=1e-12)


def test_cap_area(circ45):
    mesh = mesh_spherical_cap(circ45, 1.0, (0, 0, 0), 0.05)
    exact = 2 * math.pi * (1 - math.cos(math.pi / 4))
    assert abs(mesh.area - exact) <= 0.01 * exact
    assert validate(mesh).passed


def test_hemisphere_area(wedge90):
    mesh = mesh_spherical_cap(wedge90, 0.5, (1.0, 0.0, 0.0), 0.05)
    assert abs(mesh.area - math.pi / 2) <= 0.01 * math.pi / 2
    assert validate(mesh).passed


def test_cap_out_of_reach(circ45):
    with pytest.raises(EmptyIntersection):
        mesh_spherical_cap(circ45, 1.0, (10.0, 0.0, 0.0), 0.05)


@pytest.mark.parametrize("kind", ["cap", "hemisphere"])
def test_cap_vertices_project_exactly(kind, circ45, wedge90):
    if kind == "cap":
        p0, R, mesh = np.zeros(3), 1.0, mesh_spherical_cap(circ45, 1.0, (0, 0, 0), 0.05)
    else:
        p0, R = np.array([1.0, 0, 0]), 0.5
        mesh = mesh_spherical_cap(wedge90, R, tuple(p0), 0.05)
    assert np.max(np.abs(np.linalg.norm(mesh.vertices - p0, axis=1) - R)) <= 1e-12


def test_perturbed_cap_zero_amplitude_is_identity(cap):
    out = mesh_perturbed_cap(cap.mesh, 0.0, 3)
    assert np.array_equal(out.vertices, cap.mesh.vertices)
    assert np.array_equal(out.cells, cap.mesh.cells)


def test_perturbed_cap_keeps_boundary_on_cone(perturbed_cap):
    m = perturbed_cap.mesh
    assert np.max(m.cone.distance_to_boundary(m.vertices[m.boundary_vertices])) <= 1e-12
    assert validate(m).passed


def test_perturbed_cap_self_intersection(cap):
    with pytest.raises(SelfIntersection):
        mesh_perturbed_cap(cap.mesh, 0.5, 3)


def test_other_surfaces_validate(circ45, quarter):
    assert validate(mesh_flat_disc(circ45, 1.0, 0.05)).passed
    assert validate(mesh_folded_flap(make_cone(3, CircularAperture(math.pi / 3)), 0.05)).passed
    assert validate(gamma_curve(sector_mesh(quarter, 1.0, 0.05))).passed


def test_flipped_triangle_is_flagged(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.1)
    tri = np.array(mesh.triangles)
    tri[3] = tri[3][[0, 2, 1]]
    report = validate(dataclasses.replace(mesh, triangles=tri))
    assert not report.checks["orientation"]
    assert not report.passed


def test_untagged_edge_is_flagged(quarter):
    mesh = sector_mesh(quarter, 1.0, 0.1)
    bad = dataclasses.replace(mesh, boundary_edges=mesh.boundary_edges[1:], edge_tags=mesh.edge_tags[1:])
    report = validate(bad)
    assert not report.checks["tag_coverage"]


@pytest.mark.parametrize("which", ["sector", "perturbed", "cap", "curve"])
def test_off_round_trip_is_bitwise(which, tmp_path, quarter, circ45):
    if which == "sector":
        mesh = sector_mesh(quarter, 1.0, 0.05)
    elif which == "perturbed":
        mesh = mesh_sector_domain(quarter, perturbed_rho(0.2, 2, 1.0, 0.37), 0.05)
    elif which == "cap":
        mesh = mesh_perturbed_cap(mesh_spherical_cap(circ45, 1.0, (0, 0, 0), 0.1), 0.1, 3, 0.2)
    else:
        mesh = gamma_curve(sector_mesh(quarter, 1.0, 0.05))
    path = tmp_path / "m.off"
    store_off(mesh, path)
    back = load_off(path)
    assert type(back) is type(mesh)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert back.cone == mesh.cone
    assert format_off(back) == format_off(mesh)
    if which in ("sector", "perturbed"):
        assert np.array_equal(back.triangles, mesh.triangles)
        assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
        assert list(back.edge_tags) == list(mesh.edge_tags)
    else:
        assert np.array_equal(back.cells, mesh.cells)
        assert np.array_equal(back.boundary_vertices, mesh.boundary_vertices)


def test_off_empty_file(tmp_path):
    path = tmp_path / "empty.off"
    path.write_text("")
    with pytest.raises(ParseError):
        load_off(path)


def test_off_non_manifold_edge():
    text = "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 -1 0\n1 1 1\n3 0 1 2\n3 0 3 1\n3 0 1 4\n"
    with pytest.raises(ParseError):
        parse_off(text)


@pytest.mark.parametrize("text,line", [
    ("OF\n", 1),
    ("OFF\n1 1 0\n0 0 0\n", 3),
    ("OFF\n3 1 0\n0 0 0\n1 0 x\n0 1 0\n3 0 1 2\n", 4),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n", 6),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n9 9 9\n", 7),
])
def test_off_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_off(text)
    assert info.value.line == line


def test_plain_off_is_read_as_surface():
    mesh = parse_off("OFF\n3 1 0\n0 0 1\n1 0 1\n0 1 1.5\n3 0 1 2\n")
    assert mesh.dim_ambient == 3 and len(mesh.boundary_vertices) == 3


def test_mesh_request_schema():
    mesh = mesh_from_request('{"cone": "angle:1.5707963267948966", "shape": {"type": "arc", "R": 1}, "h": 0.1}')
    assert np.isclose(mesh.area, math.pi / 4, rtol=0.02)
    cap = mesh_from_request({"cone": {"dim": 3, "kind": "circular", "alpha": 0.7}, "shape": {"type": "cap"}, "h": 0.1})
    assert cap.dim_ambient == 3


def _flux_of_position(mesh):
    flux = 0.0
    for tag in (GAMMA, GAMMA1):
        e = mesh.edges_with_tag(tag)
        mid = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
        flux += float(np.sum(mesh.edge_lengths(e) * np.sum(mid * mesh.edge_normals(e), axis=1)))
    return flux


@settings(max_examples=8, deadline=None)
@given(st.floats(0.4, 3.0), st.floats(0.0, 0.25), st.integers(1, 3), st.floats(0.0, 3.0))
def test_position_flux_equals_twice_the_area(theta0, eps, mode, phase):
    mesh = mesh_sector_domain(make_cone(2, Angle(theta0)), perturbed_rho(eps, mode, 1.0, phase), 0.08)
    assert np.isclose(_flux_of_position(mesh), 2 * mesh.area, rtol=1e-10)


def test_refinement_reduces_area_error(quarter):
    errors = [abs(sector_mesh(quarter, 1.0, h).area - math.pi / 4) for h in (0.08, 0.04, 0.02)]
    assert errors[0] / errors[1] >= 3.0
    assert errors[1] / errors[2] >= 3.0
