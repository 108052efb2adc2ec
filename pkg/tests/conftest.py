import math

import pytest

from rigidity_lab.cmc import compute_geometry, conormal_frame
from rigidity_lab.cone import Angle, CircularAperture, Wedge, make_cone
from rigidity_lab.mesh.surface import mesh_perturbed_cap, mesh_spherical_cap
from rigidity_lab.mesh.volume import mesh_sector_domain, perturbed_rho, sector_mesh
from rigidity_lab.poisson import solve_mixed


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Log one pass/fail line for an acceptance criterion and return the verdict."""

    def _record(number, ok, text):
        request.config.stash[ACCEPTANCE].append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")
        return ok

    return _record


class Surface:
    """A surface mesh bundled with its geometry and boundary frame."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.geo = compute_geometry(mesh)
        self.frame = conormal_frame(mesh, self.geo)


@pytest.fixture(scope="session")
def quarter():
    return make_cone(2, Angle(math.pi / 2))


@pytest.fixture(scope="session")
def half():
    return make_cone(2, Angle(math.pi))


@pytest.fixture(scope="session")
def reentrant():
    return make_cone(2, Angle(3 * math.pi / 2))


@pytest.fixture(scope="session")
def circ45():
    return make_cone(3, CircularAperture(math.pi / 4))


@pytest.fixture(scope="session")
def wedge90():
    return make_cone(3, Wedge(math.pi / 2))


@pytest.fixture(scope="session")
def quarter_solve(quarter):
    u, report = solve_mixed(sector_mesh(quarter, 1.0, 0.02))
    return u, report


@pytest.fixture(scope="session")
def half_solve(half):
    return solve_mixed(sector_mesh(half, 1.0, 0.02))


@pytest.fixture(scope="session")
def reentrant_solve(reentrant):
    return solve_mixed(sector_mesh(reentrant, 1.0, 0.02))[0]


@pytest.fixture(scope="session")
def perturbed_solve(quarter):
    return solve_mixed(mesh_sector_domain(quarter, perturbed_rho(0.2, 2, 1.0), 0.02))[0]


@pytest.fixture(scope="session")
def cap(circ45):
    return Surface(mesh_spherical_cap(circ45, 1.0, (0.0, 0.0, 0.0), 0.05))


@pytest.fixture(scope="session")
def hemisphere(wedge90):
    return Surface(mesh_spherical_cap(wedge90, 0.5, (1.0, 0.0, 0.0), 0.05))


@pytest.fixture(scope="session")
def perturbed_cap(cap):
    return Surface(mesh_perturbed_cap(cap.mesh, 0.1, 3))
