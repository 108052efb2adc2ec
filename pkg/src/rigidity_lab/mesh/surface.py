"""Surface meshes for the relative boundary GAMMA.

Triangulated surfaces (ambient dimension 3) are built from rings of seeds
around a pole: the pole is a single vertex, ring ``k`` sits at parameter
``t = k/K`` and the last ring is the boundary loop, placed exactly on the
cone. Seeds are Delaunay-triangulated in a planar chart. For spheres the
chart is the stereographic projection from the antipode of the pole, which
is conformal and maps circles to circles, so the planar Delaunay
triangulation is the spherical one.

Polylines (ambient dimension 2) come from the GAMMA edges of a volume mesh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

from ..cone import ConeSpec
from ..errors import DegenerateShape, EmptyIntersection, OutOfRangeParameter, SelfIntersection
from .volume import GAMMA, VolumeMesh, _frozen


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Oriented surface with boundary on a cone.

    ``cells`` are triangles (3D) or segments (2D). ``boundary_vertices`` lists
    the boundary loop in the order induced by the cell orientation (3D) or
    the two end points (2D); ``boundary_faces`` gives the cone face each one
    lies on. Cell orientation encodes the normal: in 3D the right-hand rule,
    in 2D the clockwise rotation of the segment direction.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertices: np.ndarray
    boundary_faces: np.ndarray
    cone: ConeSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = _frozen(self.vertices, float)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", _frozen(self.cells, np.int64))
        object.__setattr__(self, "boundary_vertices", _frozen(self.boundary_vertices, np.int64))
        object.__setattr__(self, "boundary_faces", _frozen(self.boundary_faces, np.int64))
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise OutOfRangeParameter("vertices must be points in the plane or in space")
        if self.cells.shape[1] != v.shape[1]:
            raise OutOfRangeParameter("cells must be segments in 2D and triangles in 3D")

    @property
    def dim_ambient(self) -> int:
        return int(self.vertices.shape[1])

    @property
    def n_vertices(self) -> int:
        return int(len(self.vertices))

    @cached_property
    def cell_measures(self) -> np.ndarray:
        x = self.vertices[self.cells]
        if self.dim_ambient == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    @property
    def area(self) -> float:
        return float(self.cell_measures.sum())

    @cached_property
    def cell_normals(self) -> np.ndarray:
        x = self.vertices[self.cells]
        if self.dim_ambient == 2:
            d = x[:, 1] - x[:, 0]
            n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        else:
            n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        k = self.cells.shape[1]
        return np.bincount(self.cells.ravel(), np.repeat(self.cell_measures / k, k), self.n_vertices)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Boundary edges of a triangulated surface, oriented as in their triangle."""
        if self.dim_ambient == 2:
            return np.zeros((0, 2), dtype=np.int64)
        return boundary_loop_edges(self.cells)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.n_vertices, dtype=bool)
        m[self.boundary_vertices] = True
        return m

    @cached_property
    def neighbors(self) -> list:
        """Sorted 1-ring neighbor lists."""
        nb = [set() for _ in range(self.n_vertices)]
        k = self.cells.shape[1]
        for c in self.cells:
            for i in range(k):
                for j in range(k):
                    if i != j:
                        nb[c[i]].add(int(c[j]))
        return [sorted(s) for s in nb]

    def with_vertices(self, vertices, **meta) -> "SurfaceMesh":
        m = dict(self.meta)
        m.update(meta)
        return SurfaceMesh(vertices, self.cells, self.boundary_vertices, self.boundary_faces, self.cone, m)


def boundary_loop_edges(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return e[cnt[inv.ravel()] == 1]


def order_loop(edges: np.ndarray) -> np.ndarray:
    """Vertices of a single closed loop given its directed edges."""
    nxt = {int(a): int(b) for a, b in edges}
    if len(nxt) != len(edges):
        raise DegenerateShape("boundary is not a simple loop")
    start = min(nxt)
    loop = [start]
    while True:
        v = nxt[loop[-1]]
        if v == start:
            break
        loop.append(v)
        if len(loop) > len(edges):
            raise DegenerateShape("boundary is not a simple loop")
    if len(loop) != len(edges):
        raise DegenerateShape("boundary has more than one component")
    return np.array(loop)


# -- ring seeding --------------------------------------------------------

def _ring_seeds(ring_lengths: np.ndarray, spacing: float):
    """Pole plus rings; ring ``k`` gets about ``ring_lengths[k-1] / spacing`` points."""
    K = len(ring_lengths)
    ts, phis, ring = [0.0], [0.0], [0]
    for k in range(1, K + 1):
        m = max(6, int(math.ceil(ring_lengths[k - 1] / spacing - 1e-9)))
        shift = 0.5 * (k % 2)
        phi = 2 * math.pi * (np.arange(m) + shift) / m
        ts.extend([k / K] * m)
        phis.extend(phi.tolist())
        ring.extend([k] * m)
    return np.array(ts), np.array(phis), np.array(ring)


def _triangulate_chart(chart_r: np.ndarray, phi: np.ndarray) -> np.ndarray:
    w = np.stack([chart_r * np.cos(phi), chart_r * np.sin(phi)], axis=1)
    tri = Delaunay(w).simplices.astype(np.int64)
    p = w[tri]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tri[cross < 0] = tri[cross < 0][:, [0, 2, 1]]
    scale = np.max(np.abs(w))
    return tri[np.abs(cross) > 1e-14 * scale * scale]


def _orient(vertices: np.ndarray, tri: np.ndarray, pole: int, outward: np.ndarray) -> np.ndarray:
    """Flip all triangles if those at the pole disagree with ``outward``."""
    at_pole = np.any(tri == pole, axis=1)
    x = vertices[tri[at_pole]]
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    if np.sum(n @ outward) < 0:
        tri = tri[:, [0, 2, 1]]
    return tri


def _assemble(vertices, tri, ring, K, face, cone, meta) -> SurfaceMesh:
    edges = boundary_loop_edges(tri)
    loop = order_loop(edges)
    if not np.all(ring[loop] == K):
        raise DegenerateShape("boundary loop does not coincide with the outer ring")
    faces = np.full(len(loop), face, dtype=np.int64)
    return SurfaceMesh(vertices, tri, loop, faces, cone, meta)


def _frame(c: np.ndarray):
    c = c / np.linalg.norm(c)
    a = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    a = a - (a @ c) * c
    a /= np.linalg.norm(a)
    return a, np.cross(c, a), c


def _sphere_disc(center, R, pole_dir, Theta, h, a=None, b=None):
    """Seeds and triangles of the geodesic disc of angular radius ``Theta``."""
    if a is None:
        a, b, c = _frame(np.asarray(pole_dir, float))
    else:
        c = np.asarray(pole_dir, float)
    K = max(2, int(math.ceil(R * Theta / h)))
    spacing = R * Theta / K
    theta_k = Theta * np.arange(1, K + 1) / K
    t, phi, ring = _ring_seeds(2 * math.pi * R * np.sin(theta_k), spacing)
    theta = t * Theta
    tri = _triangulate_chart(np.tan(theta / 2) / math.tan(Theta / 2), phi)
    st = np.sin(theta)
    x = center + R * (np.outer(st * np.cos(phi), a) + np.outer(st * np.sin(phi), b) + np.outer(np.cos(theta), c))
    x[0] = center + R * c
    tri = _orient(x, tri, 0, c)
    return x, tri, ring, K


def _sample_sphere(center, R, n=4000):
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    g = math.pi * (3 - math.sqrt(5)) * i
    return center + R * np.stack([r * np.cos(g), r * np.sin(g), z], axis=1)


def _check_h(h: float):
    if not (0 < h <= 0.5):
        raise OutOfRangeParameter("h must lie in (0, 0.5]")


def mesh_spherical_cap(cone: ConeSpec, R: float, p0=(0.0, 0.0, 0.0), h: float = 0.05) -> SurfaceMesh:
    """Triangulate ``cone intersected with the sphere |x - p0| = R``.

    Supported configurations are a circular cone with ``p0`` on its axis
    inside the ball (the cap around the axis), and a wedge with ``p0`` on a
    face far enough from the edge (a half-sphere standing on that face).
    """
    if cone.dim != 3:
        raise OutOfRangeParameter("spherical caps need a three dimensional cone")
    _check_h(h)
    if R <= 0:
        raise OutOfRangeParameter("R must be positive")
    p0 = np.asarray(p0, dtype=float)
    meta = {"kind": "cap", "p0": p0.tolist(), "R": float(R), "h": float(h)}

    if cone.kind == "circular" and np.hypot(p0[0], p0[1]) <= 1e-12 * R and abs(p0[2]) < R:
        alpha = cone.angle
        z0 = p0[2]
        s = z0 * math.cos(alpha) + math.sqrt(R * R - z0 * z0 * math.sin(alpha) ** 2)
        Theta = math.atan2(s * math.sin(alpha), s * math.cos(alpha) - z0)
        x, tri, ring, K = _sphere_disc(p0, R, np.array([0.0, 0.0, 1.0]), Theta, h,
                                       a=np.array([1.0, 0.0, 0.0]), b=np.array([0.0, 1.0, 0.0]))
        bd = ring == K
        d = x[bd] / np.linalg.norm(x[bd], axis=1)[:, None]
        x[bd] = s * np.stack([d[:, 0] / np.hypot(d[:, 0], d[:, 1]) * math.sin(alpha),
                              d[:, 1] / np.hypot(d[:, 0], d[:, 1]) * math.sin(alpha),
                              np.full(bd.sum(), math.cos(alpha))], axis=1)
        meta["theta_max"] = Theta
        return _assemble(x, tri, ring, K, 0, cone, meta)

    if cone.kind == "wedge":
        gaps = np.abs(cone._face_distances(p0[None, :])[0])
        face = int(np.argmin(gaps))
        if gaps[face] <= 1e-12 * R and np.hypot(p0[0], p0[1]) > R:
            inward = -cone.face_normal(face)
            a = cone.face_direction(face)
            b = np.array([0.0, 0.0, 1.0])
            x, tri, ring, K = _sphere_disc(p0, R, inward, math.pi / 2, h, a=a, b=b)
            bd = ring == K
            # put the boundary loop exactly in the face plane
            x[bd] -= np.outer((x[bd] - p0) @ inward, inward)
            inner = ~bd
            if not np.all(cone.contains(x[inner], strict=True)):
                raise DegenerateShape("half-sphere leaves the wedge")
            meta["kind"] = "hemisphere"
            meta["face"] = face
            return _assemble(x, tri, ring, K, face, cone, meta)

    pts = _sample_sphere(p0, R)
    if not np.any(cone.contains(pts, strict=True)):
        raise EmptyIntersection("sphere does not meet the cone")
    raise DegenerateShape("unsupported cap configuration")


def perturbation_mode(cone: ConeSpec, x: np.ndarray, k: int, phase: float = 0.0) -> np.ndarray:
    """Angular mode ``k cos(k (phi - phase)) sin(pi theta / (2 alpha))^k``.

    Smooth at the axis, and its polar derivative vanishes on the cone, so
    radial perturbations keep meeting the cone orthogonally.
    """
    alpha = cone.angle
    r = np.linalg.norm(x, axis=1)
    theta = np.arccos(np.clip(x[:, 2] / r, -1, 1))
    phi = np.arctan2(x[:, 1], x[:, 0])
    return k * np.cos(k * (phi - phase)) * np.sin(np.pi * theta / (2 * alpha)) ** k


def mesh_perturbed_cap(base: SurfaceMesh, eps: float, k: int = 3, phase: float = 0.0) -> SurfaceMesh:
    """Radial perturbation ``x -> x (1 + eps f_k)`` of a centered cap.

    Boundary vertices slide along their rays and so stay on the cone. An
    orientation flip of any triangle (signed volume of the cone over it)
    raises ``SelfIntersection``.
    """
    if base.cone is None or base.cone.kind != "circular" or base.dim_ambient != 3:
        raise OutOfRangeParameter("perturbed caps need a cap in a circular cone")
    if np.linalg.norm(base.meta.get("p0", [1.0])) > 1e-12:
        raise OutOfRangeParameter("perturbed caps need a cap centered at the apex")
    if k < 1:
        raise OutOfRangeParameter("mode must be a positive integer")
    x = base.vertices
    factor = 1.0 + eps * perturbation_mode(base.cone, x, k, phase)
    y = x * factor[:, None]

    def signed(v):
        p = v[base.cells]
        return np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))

    if np.any(factor <= 0) or np.any(np.sign(signed(y)) != np.sign(signed(x))):
        raise SelfIntersection("perturbation flips the orientation of the surface")
    return base.with_vertices(y, kind="perturbed_cap", eps=float(eps), mode=int(k), phase=float(phase))


def _radial_revolution(cone, profile, h, n_profile=2001, kind="revolution"):
    """Surface of revolution about the z axis from a profile ``t -> (r, theta)``.

    ``theta(1)`` must equal the cone aperture so the outer ring lies on the
    cone. The chart radius is the arc length of the profile.
    """
    tt = np.linspace(0.0, 1.0, n_profile)
    r, th = profile(tt)
    pts = np.stack([r * np.sin(th), r * np.cos(th)], axis=1)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    L = s[-1]
    K = max(2, int(math.ceil(L / h)))
    # rings equally spaced in arc length
    s_k = L * np.arange(1, K + 1) / K
    t_k = np.interp(s_k, s, tt)
    rk, thk = profile(t_k)
    t, phi, ring = _ring_seeds(2 * math.pi * rk * np.sin(thk), L / K)
    t_seed = np.concatenate([[0.0], t_k[ring[1:] - 1]])
    rr, th_s = profile(t_seed)
    tri = _triangulate_chart(np.interp(t_seed, tt, s), phi)
    x = np.stack([rr * np.sin(th_s) * np.cos(phi), rr * np.sin(th_s) * np.sin(phi), rr * np.cos(th_s)], axis=1)
    x[0] = [0.0, 0.0, rr[0]]
    tri = _orient(x, tri, 0, np.array([0.0, 0.0, 1.0]))
    return _assemble(x, tri, ring, K, 0, cone, {"kind": kind, "h": float(h)})


def mesh_flat_disc(cone: ConeSpec, height: float = 1.0, h: float = 0.05) -> SurfaceMesh:
    """Planar disc ``z = height`` cut out by a circular cone, normal ``+z``."""
    if cone.dim != 3 or cone.kind != "circular" or cone.angle >= math.pi / 2:
        raise OutOfRangeParameter("flat discs need a circular cone with aperture below pi/2")
    _check_h(h)
    alpha = cone.angle

    def profile(t):
        # keep the rings planar: radius grows linearly in tan(theta)
        th = np.arctan(np.tan(alpha) * np.asarray(t, float))
        return height / np.cos(th), th

    mesh = _radial_revolution(cone, profile, h, kind="flat_disc")
    x = np.array(mesh.vertices)
    x[:, 2] = height
    return mesh.with_vertices(x, height=float(height))


def mesh_folded_flap(cone: ConeSpec, h: float = 0.05, fold: float = 0.3) -> SurfaceMesh:
    """Surface of revolution whose profile folds back in polar angle.

    The profile is ``r = 1 + 0.6 t``, ``theta = alpha (t + fold sin(2 pi t))``;
    for ``fold > 1/(2 pi)`` the polar angle decreases on a band, where the
    support function is negative. The radius grows monotonically, so the
    surface is embedded.
    """
    if cone.dim != 3 or cone.kind != "circular":
        raise OutOfRangeParameter("folded flaps need a circular cone")
    _check_h(h)
    alpha = cone.angle

    def profile(t):
        t = np.asarray(t, float)
        return 1.0 + 0.6 * t, alpha * (t + fold * np.sin(2 * np.pi * t))

    return _radial_revolution(cone, profile, h, kind="folded_flap")


def gamma_curve(mesh: VolumeMesh) -> SurfaceMesh:
    """The GAMMA edges of a planar volume mesh as an ordered polyline.

    Segments keep the orientation of the volume mesh, so the clockwise
    rotation of each segment is the outward normal of the domain.
    """
    edges = mesh.edges_with_tag(GAMMA)
    nxt = {int(a): int(b) for a, b in edges}
    heads = set(nxt.values())
    starts = [a for a in nxt if a not in heads]
    if len(starts) != 1:
        raise DegenerateShape("GAMMA is not a single open arc")
    order = [starts[0]]
    while order[-1] in nxt:
        order.append(nxt[order[-1]])
    order = np.array(order)
    cells = np.stack([np.arange(len(order) - 1), np.arange(1, len(order))], axis=1)
    ends = np.array([0, len(order) - 1])
    faces = np.zeros(2, dtype=np.int64)
    if mesh.cone is not None:
        faces = mesh.cone.nearest_face(mesh.vertices[order[ends]])
    return SurfaceMesh(mesh.vertices[order], cells, ends, faces, mesh.cone, {"kind": "gamma_curve"})
