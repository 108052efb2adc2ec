"""Triangle meshes of sector-like domains in planar cones."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay

from ..cone import ConeSpec
from ..errors import DegenerateShape, OutOfRangeParameter

GAMMA = "GAMMA"
GAMMA1 = "GAMMA1"
TAGS = (GAMMA, GAMMA1)


@dataclass(frozen=True)
class CircularArc:
    R: float
    p0: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class RadialGraph:
    rho: Callable[[np.ndarray], np.ndarray]
    label: str = "radial graph"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VolumeMesh:
    """Triangulated sector-like domain with tagged boundary edges.

    ``boundary_edges`` are stored oriented like the counter-clockwise
    triangles they belong to, so the outward normal of edge ``(a, b)`` is
    the clockwise rotation of ``x_b - x_a``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    apex_vertex: int | None = None
    cone: ConeSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "edge_tags", _frozen(self.edge_tags, "<U6").reshape(-1))
        if len(self.edge_tags) != len(self.boundary_edges):
            raise ValueError("one tag per boundary edge is required")

    dim = 2

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    # -- per-cell geometry ---------------------------------------------
    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three P1 hat functions on each cell, shape (m, 3, 2)."""
        p = self.vertices[self.triangles]
        a2 = 2.0 * self.signed_areas
        g = np.empty((len(p), 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / a2
            g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / a2
        return g

    # -- boundary ------------------------------------------------------
    def edges_with_tag(self, tag: str) -> np.ndarray:
        return self.boundary_edges[self.edge_tags == tag]

    def edge_vectors(self, edges: np.ndarray) -> np.ndarray:
        return self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]

    def edge_lengths(self, edges: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors(edges), axis=1)

    def edge_normals(self, edges: np.ndarray) -> np.ndarray:
        t = self.edge_vectors(edges)
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def tag_vertices(self, tag: str) -> np.ndarray:
        return np.unique(self.edges_with_tag(tag))

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def junction_vertices(self) -> np.ndarray:
        """Vertices shared by GAMMA and GAMMA1 edges (the discrete relative boundary)."""
        return np.intersect1d(self.tag_vertices(GAMMA), self.tag_vertices(GAMMA1))

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return mask

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        """Barycentric (one third) dual areas."""
        return np.bincount(self.triangles.ravel(), np.repeat(self.areas / 3.0, 3), self.n_vertices)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        t = self.triangles
        i = np.concatenate([t[:, 0], t[:, 1], t[:, 2], t[:, 1], t[:, 2], t[:, 0]])
        j = np.concatenate([t[:, 1], t[:, 2], t[:, 0], t[:, 0], t[:, 1], t[:, 2]])
        a = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(self.n_vertices,) * 2).tocsr()
        a.data[:] = 1.0
        return a

    @cached_property
    def all_edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def transformed(self, matrix=None, scale: float = 1.0, cone: ConeSpec | None = None) -> "VolumeMesh":
        """Apply ``x -> scale * matrix @ x``, keeping triangles counter-clockwise."""
        m = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
        verts = scale * self.vertices @ m.T
        tris, edges = self.triangles, self.boundary_edges
        if np.linalg.det(m) < 0:
            tris = tris[:, ::-1]
            edges = edges[:, ::-1]
        return VolumeMesh(verts, tris, edges, self.edge_tags, self.apex_vertex,
                          self.cone if cone is None else cone, dict(self.meta))


# -- generation ----------------------------------------------------------

@dataclass(frozen=True)
class _Star:
    center: np.ndarray
    phi_a: float
    phi_b: float
    rho: Callable[[np.ndarray], np.ndarray]
    apex_is_origin: bool
    dir_a: np.ndarray
    dir_b: np.ndarray


def _star_domain(cone: ConeSpec, shape) -> _Star:
    if isinstance(shape, RadialGraph):
        probe = np.linspace(0.0, cone.angle, 721)
        r = np.asarray(shape.rho(probe), dtype=float)
        if not np.all(np.isfinite(r)) or np.min(r) <= 0:
            raise DegenerateShape("radial graph must stay strictly positive")
        return _Star(np.zeros(2), 0.0, cone.angle, shape.rho, True,
                     cone.face_direction(0), cone.face_direction(1))

    if not isinstance(shape, CircularArc):
        raise DegenerateShape(f"unsupported gamma shape {shape!r}")
    R = float(shape.R)
    p0 = np.asarray(shape.p0, dtype=float)
    if R <= 0:
        raise DegenerateShape("arc radius must be positive")
    dist0 = float(np.linalg.norm(p0))
    scale = max(R, dist0)

    if dist0 < R * (1.0 - 1e-12):
        def rho(phi, p0=p0, R=R):
            phi = np.asarray(phi, dtype=float)
            b = np.cos(phi) * p0[0] + np.sin(phi) * p0[1]
            return b + np.sqrt(b * b - p0 @ p0 + R * R)

        return _Star(np.zeros(2), 0.0, cone.angle, rho, True,
                     cone.face_direction(0), cone.face_direction(1))

    if dist0 <= R * (1.0 + 1e-12):
        raise DegenerateShape("arc passes through the apex")

    gap = cone.distance_to_boundary(p0)
    if gap <= 1e-12 * scale:
        face = int(cone.nearest_face(p0))
        d = cone.face_direction(face)
        if face == 0:
            phi_a, phi_b, dir_a, dir_b = 0.0, math.pi, d, -d
        else:
            phi_a, phi_b, dir_a, dir_b = cone.angle - math.pi, cone.angle, -d, d
        arc = np.linspace(phi_a, phi_b, 181)[1:-1]
        pts = p0 + R * np.stack([np.cos(arc), np.sin(arc)], axis=1)
        if not np.all(cone.contains(pts)):
            raise DegenerateShape("half-disc leaves the cone")
        return _Star(p0, phi_a, phi_b, lambda phi, R=R: np.full(np.shape(phi), R), False,
                     dir_a, dir_b)

    if gap >= R and cone.contains(p0):
        raise DegenerateShape("arc does not meet the cone boundary: no Neumann part")
    raise DegenerateShape("arc leaves the cone or is not star-shaped about the apex")


def _polar_seeds(span: float, rho_max: float, h: float):
    """Polar seeding of a unit sector, split into convex pieces.

    Returns reference points ``(t, phi)`` (phi measured from the start of the
    span), a list of index arrays (one per piece) and the ring index per point.
    """
    K = max(2, math.ceil(rho_max / h))
    pieces = max(1, math.ceil(span / (math.pi / 2) - 1e-9))
    width = span / pieces
    keys = {}
    tp, ring = [], []

    def key_of(k, piece, j, m):
        if k == 0:
            return (0, 0, 0)
        if j == m:
            return (k, piece + 1, 0)
        return (k, piece, j)

    piece_ids = []
    for piece in range(pieces):
        ids = []
        for k in range(K + 1):
            t = k / K
            m = 0 if k == 0 else max(1, math.ceil(t * rho_max * width / h))
            for j in range(m + 1 if k else 1):
                key = key_of(k, piece, j, m)
                if key not in keys:
                    keys[key] = len(tp)
                    phi = (key[1] + (key[2] / m if k else 0.0)) * width
                    tp.append((t, phi))
                    ring.append(k)
                ids.append(keys[key])
        piece_ids.append(np.array(ids))
    return np.array(tp), piece_ids, np.array(ring), K


def _triangulate_pieces(tp: np.ndarray, piece_ids) -> np.ndarray:
    ref = np.stack([tp[:, 0] * np.cos(tp[:, 1]), tp[:, 0] * np.sin(tp[:, 1])], axis=1)
    tris = []
    for ids in piece_ids:
        tri = Delaunay(ref[ids])
        t = ids[tri.simplices]
        tris.append(t)
    tris = np.concatenate(tris)
    p = ref[tris]
    a = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
               - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    tris[a < 0] = tris[a < 0][:, ::-1]
    return tris[np.abs(a) > 1e-14]


def boundary_edges_of(triangles: np.ndarray) -> np.ndarray:
    """Edges used by exactly one triangle, oriented as in that triangle."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return e[counts[inv.ravel()] == 1]


def mesh_sector_domain(cone: ConeSpec, gamma_shape, h: float) -> VolumeMesh:
    """Mesh the sector-like domain bounded by ``gamma_shape`` inside a planar cone.

    The domain is seeded on rings around its star center (the apex, or the
    arc center for half-discs standing on a face) and triangulated piecewise
    so the straight boundary lies exactly on the cone faces.
    """
    if cone.dim != 2:
        raise OutOfRangeParameter("volume meshes are planar (dim=2)")
    if not 0 < h <= 0.5:
        raise OutOfRangeParameter(f"h={h} not in (0, 0.5]")
    star = _star_domain(cone, gamma_shape)
    span = star.phi_b - star.phi_a
    probe = np.linspace(star.phi_a, star.phi_b, 721)
    rho_max = float(np.max(star.rho(probe)))
    tp, pieces, ring, K = _polar_seeds(span, rho_max, h)
    tris = _triangulate_pieces(tp, pieces)

    phi = star.phi_a + tp[:, 1]
    on_a = np.isclose(tp[:, 1], 0.0, atol=1e-14)
    on_b = np.isclose(tp[:, 1], span, atol=1e-12)
    phi[on_a], phi[on_b] = star.phi_a, star.phi_b
    r = tp[:, 0] * star.rho(phi)
    d = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    # ray points sit exactly on the cone faces
    d[on_a], d[on_b] = star.dir_a, star.dir_b
    verts = star.center + r[:, None] * d

    edges = boundary_edges_of(tris)
    on_gamma = (ring[edges[:, 0]] == K) & (ring[edges[:, 1]] == K)
    tags = np.where(on_gamma, GAMMA, GAMMA1)
    apex = int(np.flatnonzero(ring == 0)[0]) if star.apex_is_origin else None
    meta = {"h": float(h), "shape": _shape_label(gamma_shape)}
    return VolumeMesh(verts, tris, edges, tags, apex, cone, meta)


def _shape_label(shape) -> str:
    if isinstance(shape, CircularArc):
        return f"arc(R={shape.R!r}, p0={tuple(shape.p0)!r})"
    return shape.label


def sector_mesh(cone: ConeSpec, R: float, h: float, p0=(0.0, 0.0)) -> VolumeMesh:
    return mesh_sector_domain(cone, CircularArc(R, tuple(p0)), h)


def perturbed_rho(eps: float = 0.2, mode: int = 2, R: float = 1.0, phase: float = 0.0) -> RadialGraph:
    """``rho(phi) = R (1 + eps sin(mode (phi - phase)))``."""

    def rho(phi):
        return R * (1.0 + eps * np.sin(mode * (np.asarray(phi, dtype=float) - phase)))

    return RadialGraph(rho, f"rho=R(1+{eps!r} sin({mode}(phi-{phase!r})))")
