"""Invariant audit of meshes and the JSON mesh-request schema."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..cone import ConeSpec
from ..errors import OutOfRangeParameter
from .surface import SurfaceMesh, mesh_perturbed_cap, mesh_spherical_cap
from .volume import GAMMA, GAMMA1, CircularArc, VolumeMesh, mesh_sector_domain, perturbed_rho


@dataclass
class MeshQualityReport:
    n_vertices: int
    n_cells: int
    min_angle: float
    max_angle: float
    h_min: float
    h_max: float
    h_mean: float
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def _angles(p: np.ndarray) -> np.ndarray:
    """Interior angles in degrees of triangles given as (m, 3, dim) points."""
    out = np.empty(p.shape[:2])
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.sum(a * b, axis=1) / (na * nb)
        out[:, i] = np.degrees(np.arccos(np.clip(np.nan_to_num(cos, nan=1.0), -1.0, 1.0)))
    return out


def _edge_stats(x: np.ndarray, cells: np.ndarray):
    k = cells.shape[1]
    if k == 2:
        e = cells
    else:
        e = np.unique(np.sort(np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]]), axis=1), axis=0)
    L = np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
    return float(L.min()), float(L.max()), float(L.mean())


def _directed_edges(cells: np.ndarray) -> np.ndarray:
    return np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])


def _connected(n: int, cells: np.ndarray) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for c in cells:
        for j in range(1, len(c)):
            ra, rb = find(int(c[0])), find(int(c[j]))
            if ra != rb:
                parent[ra] = rb
    used = np.unique(cells)
    return len(used) == n and len({find(int(v)) for v in used}) == 1


def _validate_volume(mesh: VolumeMesh, tol: float):
    checks, failures = {}, []
    t = mesh.triangles
    e = _directed_edges(t)
    counts = Counter(map(tuple, np.sort(e, axis=1).tolist()))
    manifold = all(n <= 2 for n in counts.values())
    boundary = {k for k, n in counts.items() if n == 1}
    checks["manifold"] = manifold
    if not manifold:
        failures.append("an edge is shared by more than two triangles")
    oriented = bool(np.all(mesh.signed_areas > 0))
    checks["orientation"] = oriented
    if not oriented:
        flipped = int(np.sum(mesh.signed_areas <= 0))
        failures.append(f"{flipped} triangle(s) not counter-clockwise")
    tagged = Counter(map(tuple, np.sort(mesh.boundary_edges, axis=1).tolist()))
    coverage = set(tagged) == boundary and all(n == 1 for n in tagged.values())
    checks["tag_coverage"] = coverage
    if not coverage:
        missing = len(boundary - set(tagged))
        extra = len(set(tagged) - boundary)
        failures.append(f"tags do not partition the boundary ({missing} untagged, {extra} not on the boundary)")
    both = bool(np.any(mesh.edge_tags == GAMMA) and np.any(mesh.edge_tags == GAMMA1))
    checks["both_tags"] = both
    if not both:
        failures.append("GAMMA and GAMMA1 must both be nonempty")
    if mesh.cone is not None:
        g1 = mesh.tag_vertices(GAMMA1)
        scale = float(np.max(np.linalg.norm(mesh.vertices, axis=1))) or 1.0
        on = bool(len(g1) == 0 or np.max(mesh.cone.distance_to_boundary(mesh.vertices[g1])) <= tol * scale)
        checks["gamma1_on_cone"] = on
        if not on:
            failures.append("GAMMA1 vertices off the cone boundary")
    return checks, failures


def _validate_surface(mesh: SurfaceMesh, tol: float):
    checks, failures = {}, []
    x, cells = mesh.vertices, mesh.cells
    if mesh.dim_ambient == 3:
        e = _directed_edges(cells)
        directed = Counter(map(tuple, e.tolist()))
        undirected = Counter(map(tuple, np.sort(e, axis=1).tolist()))
        manifold = all(n <= 2 for n in undirected.values())
        oriented = all(n == 1 for n in directed.values())
        checks["manifold"] = manifold
        checks["orientation"] = oriented
        if not manifold:
            failures.append("an edge is shared by more than two triangles")
        if not oriented:
            failures.append("inconsistent triangle orientation")
        bnd = [k for k, n in directed.items() if undirected[tuple(sorted(k))] == 1]
        out_deg = Counter(a for a, _ in bnd)
        in_deg = Counter(b for _, b in bnd)
        loops = all(out_deg[v] == 1 and in_deg[v] == 1 for v in set(out_deg) | set(in_deg))
        checks["boundary_loops"] = loops
        if not loops:
            failures.append("boundary is not a disjoint union of closed loops")
        listed = set(int(v) for v in mesh.boundary_vertices)
        agrees = listed == set(out_deg)
        checks["boundary_listed"] = agrees
        if not agrees:
            failures.append("boundary vertex list disagrees with the boundary edges")
    else:
        chain = bool(np.all(cells[1:, 0] == cells[:-1, 1])) if len(cells) > 1 else True
        checks["orientation"] = chain
        if not chain:
            failures.append("segments do not form an oriented chain")
    connected = _connected(mesh.n_vertices, cells)
    checks["connected"] = connected
    if not connected:
        failures.append("surface is not connected")
    if mesh.cone is not None and len(mesh.boundary_vertices):
        b = x[mesh.boundary_vertices]
        scale = float(np.max(np.linalg.norm(x, axis=1))) or 1.0
        on = bool(np.max(mesh.cone.distance_to_boundary(b)) <= tol * scale)
        off_apex = bool(np.min(np.linalg.norm(b, axis=1)) > tol * scale)
        checks["boundary_on_cone"] = on
        checks["boundary_off_apex"] = off_apex
        if not on:
            failures.append("boundary vertices off the cone boundary")
        if not off_apex:
            failures.append("a boundary vertex sits at the apex")
    return checks, failures


def validate(mesh, tol: float = 1e-9) -> MeshQualityReport:
    """Audit every structural invariant; failures are reported, never raised."""
    if isinstance(mesh, VolumeMesh):
        cells = mesh.triangles
        checks, failures = _validate_volume(mesh, tol)
    elif isinstance(mesh, SurfaceMesh):
        cells = mesh.cells
        checks, failures = _validate_surface(mesh, tol)
    else:
        raise OutOfRangeParameter(f"cannot validate {type(mesh).__name__}")
    x = mesh.vertices
    if len(cells) == 0:
        return MeshQualityReport(len(x), 0, math.nan, math.nan, math.nan, math.nan, math.nan,
                                 checks, failures + ["mesh has no cells"])
    if cells.shape[1] == 3:
        ang = _angles(x[cells])
        amin, amax = float(ang.min()), float(ang.max())
    else:
        amin = amax = 180.0
    if not amin > 0:
        failures.append("degenerate cell with a zero angle")
    checks["positive_angles"] = bool(amin > 0)
    hmin, hmax, hmean = _edge_stats(x, cells)
    return MeshQualityReport(len(x), len(cells), amin, amax, hmin, hmax, hmean, checks, failures)


# -- JSON mesh requests ------------------------------------------------
def mesh_from_request(request) -> VolumeMesh | SurfaceMesh:
    """Build a mesh from ``{"cone": ..., "shape": ..., "h": ...}``.

    ``cone`` is a cone dictionary or the compact ``kind:angle`` string.
    Shapes: ``{"type": "arc", "R", "p0"}`` and
    ``{"type": "radial", "R", "eps", "mode", "phase"}`` in planar cones,
    ``{"type": "cap", "R", "p0"}`` and
    ``{"type": "perturbed_cap", "R", "eps", "mode", "phase"}`` in space.
    """
    if isinstance(request, str):
        request = json.loads(request)
    try:
        cone_in, shape, h = request["cone"], request["shape"], float(request["h"])
    except (KeyError, TypeError, ValueError) as exc:
        raise OutOfRangeParameter(f"mesh request needs cone, shape and h: {exc}") from None
    cone = ConeSpec.parse(cone_in) if isinstance(cone_in, str) else ConeSpec.from_dict(cone_in)
    kind = shape.get("type")
    R = float(shape.get("R", 1.0))
    if kind == "arc":
        return mesh_sector_domain(cone, CircularArc(R, tuple(shape.get("p0", (0.0, 0.0)))), h)
    if kind == "radial":
        rho = perturbed_rho(float(shape.get("eps", 0.2)), int(shape.get("mode", 2)), R,
                            float(shape.get("phase", 0.0)))
        return mesh_sector_domain(cone, rho, h)
    if kind == "cap":
        return mesh_spherical_cap(cone, R, tuple(shape.get("p0", (0.0, 0.0, 0.0))), h)
    if kind == "perturbed_cap":
        base = mesh_spherical_cap(cone, R, (0.0, 0.0, 0.0), h)
        return mesh_perturbed_cap(base, float(shape.get("eps", 0.1)), int(shape.get("mode", 3)),
                                  float(shape.get("phase", 0.0)))
    raise OutOfRangeParameter(f"unknown shape type {kind!r}")
