"""Mesh-free model of cones, spherical sectors and the center classifier.

Conventions
-----------
* ``dim=2``, kind ``angle``: the cone is ``{(r cos p, r sin p): 0 < p < theta0}``.
* ``dim=3``, kind ``circular``: points whose angle with ``+z`` is below ``alpha``.
* ``dim=3``, kind ``wedge``: points whose ``(x, y)`` polar angle lies in
  ``(0, beta)``; the edge is the ``z`` axis.

Face ids: ``0`` is the face at polar angle 0 (2D / wedge), ``1`` the face at
``theta0`` / ``beta``; the circular cone has the single lateral face ``0``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyBoundary, NonPositiveMeasure, OutOfRangeParameter

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Angle:
    theta0: float


@dataclass(frozen=True)
class CircularAperture:
    alpha: float


@dataclass(frozen=True)
class Wedge:
    beta: float


_PARAM_NAME = {"angle": "theta0", "circular": "alpha", "wedge": "beta"}


@dataclass(frozen=True)
class ConeSpec:
    dim: int
    kind: str
    angle: float
    convex: bool = field(init=False)

    def __post_init__(self):
        if self.kind == "angle":
            if self.dim != 2:
                raise OutOfRangeParameter("angle cross-sections need dim=2")
            if not 0.0 < self.angle < TWO_PI:
                raise OutOfRangeParameter(f"theta0={self.angle} not in (0, 2pi)")
            convex = self.angle <= math.pi
        elif self.kind in ("circular", "wedge"):
            if self.dim != 3:
                raise OutOfRangeParameter(f"{self.kind} cross-sections need dim=3")
            if not 0.0 < self.angle < math.pi:
                name = _PARAM_NAME[self.kind]
                raise OutOfRangeParameter(f"{name}={self.angle} not in (0, pi)")
            convex = self.kind == "wedge" or self.angle <= math.pi / 2
        else:
            raise OutOfRangeParameter(f"unknown cross-section kind {self.kind!r}")
        object.__setattr__(self, "convex", bool(convex))

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {"dim": self.dim, "kind": self.kind, _PARAM_NAME[self.kind]: self.angle}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ConeSpec":
        kind = d["kind"]
        if kind not in _PARAM_NAME:
            raise OutOfRangeParameter(f"unknown cross-section kind {kind!r}")
        return cls(int(d["dim"]), kind, float(d[_PARAM_NAME[kind]]))

    @classmethod
    def from_json(cls, text: str) -> "ConeSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def parse(cls, text: str) -> "ConeSpec":
        """Parse the compact ``kind:angle`` form used on the command line."""
        kind, _, value = text.partition(":")
        kind = kind.strip().lower()
        if not value:
            raise OutOfRangeParameter(f"cone descriptor {text!r} has no angle")
        dim = 2 if kind == "angle" else 3
        return cls(dim, kind, float(value))

    # -- faces ----------------------------------------------------------
    @property
    def n_faces(self) -> int:
        return 1 if self.kind == "circular" else 2

    def face_direction(self, face: int) -> np.ndarray:
        """Unit in-plane direction of a flat face (2D rays and wedge faces)."""
        if self.kind == "circular":
            raise ValueError("the circular cone has no flat faces")
        phi = 0.0 if face == 0 else self.angle
        d = np.array([math.cos(phi), math.sin(phi)])
        return d if self.dim == 2 else np.array([d[0], d[1], 0.0])

    def face_normal(self, face: int) -> np.ndarray:
        """Outward unit normal of a flat face."""
        if self.kind == "circular":
            raise ValueError("the circular cone has no flat faces")
        if face == 0:
            n = np.array([0.0, -1.0])
        else:
            n = np.array([-math.sin(self.angle), math.cos(self.angle)])
        return n if self.dim == 2 else np.array([n[0], n[1], 0.0])

    # -- point queries -------------------------------------------------
    def _polar(self, x: np.ndarray) -> np.ndarray:
        return np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)

    def contains(self, x, strict: bool = True) -> np.ndarray:
        """Membership in the open cone (``strict``) or its closure."""
        x = np.asarray(x, dtype=float)
        if self.kind == "circular":
            r = np.linalg.norm(x, axis=-1)
            cosang = np.divide(x[..., 2], r, out=np.ones_like(r), where=r > 0)
            inside = cosang > math.cos(self.angle) if strict else cosang >= math.cos(self.angle) - 1e-14
            return inside & (r > 0) if strict else inside
        phi = self._polar(x)
        rho = np.hypot(x[..., 0], x[..., 1])
        if strict:
            return (phi > 0) & (phi < self.angle) & (rho > 0)
        eps = 1e-12
        return (phi <= self.angle + eps) | (phi >= TWO_PI - eps) | (rho == 0)

    def _face_distances(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "circular":
            rho = np.hypot(x[..., 0], x[..., 1])
            q = np.stack([rho, x[..., 2]], axis=-1)
            d = np.array([math.sin(self.angle), math.cos(self.angle)])
            return _ray_distance(q, d)[..., None]
        q = x[..., :2]
        out = [_ray_distance(q, self.face_direction(f)[:2]) for f in range(2)]
        return np.stack(out, axis=-1)

    def distance_to_boundary(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._face_distances(x).min(axis=-1)

    def nearest_face(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._face_distances(x).argmin(axis=-1)

    def normal_at(self, x) -> np.ndarray:
        """Outward unit normal of the face of ``bd Sigma`` closest to ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "circular":
            phi = np.arctan2(x[..., 1], x[..., 0])
            ca, sa = math.cos(self.angle), math.sin(self.angle)
            return np.stack([ca * np.cos(phi), ca * np.sin(phi), -sa * np.ones_like(phi)], axis=-1)
        faces = self.nearest_face(x)
        normals = np.stack([self.face_normal(0), self.face_normal(1)])
        return normals[faces]

    def boundary_samples(self, p0, R: float, n: int = 64) -> np.ndarray:
        """Points of ``bd B_R(p0)`` lying on ``bd Sigma`` (minus the apex)."""
        p0 = np.asarray(p0, dtype=float)
        pts = []
        if self.dim == 2:
            for f in range(2):
                d = self.face_direction(f)
                pts.extend(t * d for t in _ray_sphere_roots(d, p0, R))
        elif self.kind == "circular":
            sa, ca = math.sin(self.angle), math.cos(self.angle)
            for phi in np.linspace(0.0, TWO_PI, n, endpoint=False):
                d = np.array([sa * math.cos(phi), sa * math.sin(phi), ca])
                pts.extend(t * d for t in _ray_sphere_roots(d, p0, R))
        else:
            ez = np.array([0.0, 0.0, 1.0])
            for f in range(2):
                d = self.face_direction(f)
                m = self.face_normal(f)
                delta = float(p0 @ m)
                if abs(delta) >= R:
                    continue
                c = p0 - delta * m
                r = math.sqrt(R * R - delta * delta)
                for t in np.linspace(0.0, TWO_PI, n, endpoint=False):
                    q = c + r * (math.cos(t) * d + math.sin(t) * ez)
                    if q @ d >= -1e-12:
                        pts.append(q)
        return np.array(pts).reshape(-1, self.dim)


def _ray_distance(q: np.ndarray, d: np.ndarray) -> np.ndarray:
    s = q @ d
    foot = np.where(s[..., None] > 0, s[..., None] * d, 0.0)
    return np.linalg.norm(q - foot, axis=-1)


def _ray_sphere_roots(d: np.ndarray, p0: np.ndarray, R: float) -> list:
    b = float(d @ p0)
    disc = b * b - float(p0 @ p0) + R * R
    if disc < 0:
        return []
    s = math.sqrt(disc)
    return [t for t in {b - s, b + s} if t > 1e-14]


def make_cone(dim: int, cross_section) -> ConeSpec:
    """Build a validated cone from a cross-section descriptor.

    ``cross_section`` is an :class:`Angle`, :class:`CircularAperture` or
    :class:`Wedge`; a bare float is read as ``theta0`` in 2D.
    """
    if isinstance(cross_section, Angle):
        return ConeSpec(dim, "angle", float(cross_section.theta0))
    if isinstance(cross_section, CircularAperture):
        return ConeSpec(dim, "circular", float(cross_section.alpha))
    if isinstance(cross_section, Wedge):
        return ConeSpec(dim, "wedge", float(cross_section.beta))
    if isinstance(cross_section, (int, float)) and dim == 2:
        return ConeSpec(2, "angle", float(cross_section))
    raise OutOfRangeParameter(f"unsupported cross-section descriptor {cross_section!r}")


def unit_sector_measure(cone: ConeSpec) -> float:
    """Lebesgue measure of ``Sigma`` intersected with the unit ball."""
    if cone.kind == "angle":
        return cone.angle / 2.0
    if cone.kind == "circular":
        return TWO_PI / 3.0 * (1.0 - math.cos(cone.angle))
    return 2.0 * cone.angle / 3.0


def unit_sector_boundary_measure(cone: ConeSpec) -> float:
    """Measure of ``Sigma`` intersected with the unit sphere (``N`` times the above)."""
    return cone.dim * unit_sector_measure(cone)


@dataclass(frozen=True)
class ExactSectorSolution:
    """Quadratic torsion profile ``u = (N^2 c^2 - |x - p0|^2) / (2N)``."""

    cone: ConeSpec
    c: float
    p0: tuple = None

    def __post_init__(self):
        if self.c <= 0:
            raise OutOfRangeParameter("c must be positive")
        p0 = (0.0,) * self.cone.dim if self.p0 is None else tuple(float(v) for v in self.p0)
        if len(p0) != self.cone.dim:
            raise OutOfRangeParameter("p0 has the wrong dimension")
        object.__setattr__(self, "p0", p0)

    @property
    def N(self) -> int:
        return self.cone.dim

    @property
    def R(self) -> float:
        return self.N * self.c

    @property
    def center(self) -> np.ndarray:
        return np.array(self.p0)

    def u(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum((x - self.center) ** 2, axis=-1)
        return (self.R**2 - r2) / (2 * self.N)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -(x - self.center) / self.N

    def hessian(self) -> np.ndarray:
        return -np.eye(self.N) / self.N

    def normal_derivative(self, x, normal) -> np.ndarray:
        return np.sum(self.grad(x) * np.asarray(normal, dtype=float), axis=-1)

    def scaled(self, s: float) -> "ExactSectorSolution":
        return ExactSectorSolution(self.cone, s * self.c, tuple(s * v for v in self.p0))


def exact_sector_solution(cone: ConeSpec, c: float, p0: Sequence[float] | None = None) -> ExactSectorSolution:
    return ExactSectorSolution(cone, float(c), None if p0 is None else tuple(p0))


CENTER_AT_APEX = "CenterAtApex"
HALF_SPHERE_ON_FLAT_FACE = "HalfSphereOnFlatFace"
NOT_ORTHOGONAL = "NotOrthogonal"
NOT_SPHERICAL = "NotSpherical"
UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class CaseVerdict:
    kind: str
    p0: tuple
    residuals: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p0": list(self.p0), "residuals": dict(self.residuals)}


def classify_center(cone: ConeSpec, p0, R: float, boundary_samples, tol: float = 1e-6) -> CaseVerdict:
    """Decide where the center of an orthogonal spherical cap sits.

    Orthogonality is measured as ``|<nu_sphere, nu_cone>|`` at every sample.
    An orthogonal configuration is either centered at the apex or is a
    half-sphere standing on a flat face with the whole boundary on the tangent
    hyperplane through ``p0``. Orthogonal configurations matching neither
    pattern (possible only for non-convex cones) come back ``Unclassified``.
    """
    samples = np.asarray(boundary_samples, dtype=float).reshape(-1, cone.dim)
    if len(samples) == 0:
        raise EmptyBoundary("no boundary samples given")
    p0 = np.asarray(p0, dtype=float)
    rel = samples - p0
    dist = np.linalg.norm(rel, axis=1)
    sphericity = float(np.max(np.abs(dist - R)) / R)
    on_cone = float(np.max(cone.distance_to_boundary(samples)) / R)
    nu_s = rel / dist[:, None]
    nu_c = cone.normal_at(samples)
    orth = float(np.max(np.abs(np.sum(nu_s * nu_c, axis=1))))
    apex = float(np.linalg.norm(p0) / R)
    residuals = {
        "orthogonality": orth,
        "sphericity": sphericity,
        "boundary": on_cone,
        "apex_distance": apex,
    }
    p0t = tuple(float(v) for v in p0)

    if sphericity > tol or on_cone > tol:
        return CaseVerdict(NOT_SPHERICAL, p0t, residuals)
    if orth > tol:
        return CaseVerdict(NOT_ORTHOGONAL, p0t, residuals)
    if apex <= tol:
        return CaseVerdict(CENTER_AT_APEX, p0t, residuals)
    face_gap = float(cone.distance_to_boundary(p0) / R)
    residuals["center_to_boundary"] = face_gap
    if face_gap <= tol:
        m = cone.normal_at(p0)
        flat = float(np.max(np.abs(rel @ m)) / R)
        residuals["hyperplane"] = flat
        if flat <= tol:
            return CaseVerdict(HALF_SPHERE_ON_FLAT_FACE, p0t, residuals)
    return CaseVerdict(UNCLASSIFIED, p0t, residuals)


def relative_isoperimetric_ratio(cone: ConeSpec, relative_perimeter: float, volume: float) -> float:
    """``P(E) / (N alpha_N^(1/N) |E|^((N-1)/N))``; at least 1 in convex cones."""
    if relative_perimeter <= 0 or volume <= 0:
        raise NonPositiveMeasure("perimeter and volume must be positive")
    if not cone.convex:
        warnings.warn("isoperimetric bound only holds in convex cones", stacklevel=2)
    N = cone.dim
    alpha = unit_sector_measure(cone)
    return relative_perimeter / (N * alpha ** (1.0 / N) * volume ** ((N - 1.0) / N))
