"""Discrete geometry of surfaces with boundary on a cone.

Conventions: the normal ``nu`` points away from the enclosed region, and the
shape operator ``S`` satisfies ``d nu = S dx``, so a sphere of radius ``R``
has ``S = I/R`` and ``H = tr(S)/(N-1) = 1/R``.

On surfaces, normals and shape operators come from a polynomial height-field
("jet") fit through each vertex: quartic over the 2-ring in the interior,
cubic at boundary vertices, where one-sided quartic fits are unstable. The
neighborhood widens to the 3-ring when it holds too few points. The fit is
iterated so
that its frame is aligned with the fitted normal, and the shape operator is
read off the fitted first and second fundamental forms. Max's weights, each
incident triangle contributing ``(a x b) / (|a|^2 |b|^2)``, only seed the
first frame. A second estimator, the unsymmetrized least-squares solution of
``nu_j - nu_i = A (x_j - x_i)`` over the 1-ring, is kept as ``shape_raw``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cone import CaseVerdict, ConeSpec, classify_center
from .errors import DegenerateStar, NonPositiveH, NotStarshaped, OutOfRangeParameter
from .mesh.surface import SurfaceMesh
from .reports import IdentityReport

CMC_SPREAD = 0.02
MINKOWSKI_C = 1.0
JET_DEGREE = 4
BOUNDARY_JET_DEGREE = 3


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    mesh: SurfaceMesh
    normals: np.ndarray
    frames: np.ndarray        # (n, N, N-1) orthonormal tangent bases
    shape: np.ndarray         # (n, N, N) symmetric shape operator in ambient coordinates
    shape_raw: np.ndarray     # (n, N, N) unsymmetrized fit, for the direct derivative of nu
    principal: np.ndarray     # (n, N-1) ascending principal curvatures
    H: np.ndarray
    support: np.ndarray
    areas: np.ndarray         # barycentric vertex areas
    laplacian: sp.csr_matrix  # cotangent Laplace-Beltrami (rows of boundary vertices unused)
    H_laplacian: np.ndarray

    @property
    def N(self) -> int:
        return self.mesh.dim_ambient

    @property
    def k_max(self) -> np.ndarray:
        return self.principal[:, -1]

    @property
    def norm_h2(self) -> np.ndarray:
        return np.sum(self.principal**2, axis=1)

    @property
    def sigma2(self) -> np.ndarray:
        k = self.principal
        if k.shape[1] < 2:
            return np.zeros(len(k))
        return k[:, 0] * k[:, 1]

    @property
    def H0(self) -> float:
        return float(np.dot(self.areas, self.H) / self.areas.sum())

    @property
    def H_spread(self) -> float:
        """Area-weighted standard deviation of ``H`` relative to ``|H0|``."""
        H0 = self.H0
        sd = math.sqrt(float(np.dot(self.areas, (self.H - H0) ** 2) / self.areas.sum()))
        return sd / abs(H0) if H0 != 0 else math.inf

    @property
    def interior(self) -> np.ndarray:
        return ~self.mesh.boundary_mask

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        N = self.N
        axes = "xyz"[:N]
        kcols = [f"k{i + 1}" for i in range(N - 1)]
        w.writerow(["vertex_id", *axes, *[f"nu_{a}" for a in axes], "H", *kcols, "lambda"])
        for i in range(self.mesh.n_vertices):
            row = [*self.mesh.vertices[i], *self.normals[i], self.H[i], *self.principal[i], self.support[i]]
            w.writerow([i] + [f"{v:.17g}" for v in row])
        return buf.getvalue()


def _tangent_frames(normals: np.ndarray) -> np.ndarray:
    n = normals
    if n.shape[1] == 2:
        return np.stack([-n[:, 1], n[:, 0]], axis=1)[:, :, None]
    helper = np.where(np.abs(n[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = helper - np.sum(helper * n, axis=1)[:, None] * n
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(n, e1)
    return np.stack([e1, e2], axis=2)


def _max_normals(mesh: SurfaceMesh) -> np.ndarray:
    x = mesh.vertices
    out = np.zeros_like(x)
    t = mesh.cells
    for r in range(3):
        i, j, k = t[:, r], t[:, (r + 1) % 3], t[:, (r + 2) % 3]
        a = x[j] - x[i]
        b = x[k] - x[i]
        w = np.cross(a, b) / (np.sum(a * a, axis=1) * np.sum(b * b, axis=1))[:, None]
        np.add.at(out, i, w)
    norm = np.linalg.norm(out, axis=1)
    if np.any(norm == 0):
        raise DegenerateStar(f"vertex {int(np.argmin(norm))} has a degenerate star")
    return out / norm[:, None]


def rings(mesh: SurfaceMesh, v: int, depth: int) -> list:
    """Vertices within ``depth`` edges of ``v`` (excluding ``v``), sorted."""
    seen = {v}
    front = [v]
    for _ in range(depth):
        nxt = []
        for a in front:
            for b in mesh.neighbors[a]:
                if b not in seen:
                    seen.add(b)
                    nxt.append(b)
        front = nxt
    seen.discard(v)
    return sorted(seen)


def _jet_columns(u, v, degree):
    cols = [u**(p - q) * v**q for p in range(1, degree + 1) for q in range(p + 1)]
    return np.stack(cols, axis=1)


def _jet_fit(x: np.ndarray, i: int, nb: list, n0: np.ndarray, degree: int = JET_DEGREE):
    """Normal and ambient shape operator from a polynomial jet through ``x[i]``."""
    d = x[nb] - x[i]
    for _ in range(3):
        e = _tangent_frames(n0[None, :])[0]
        u, v, w = d @ e[:, 0], d @ e[:, 1], d @ n0
        s = np.sqrt(np.mean(u * u + v * v))
        u, v = u / s, v / s
        M = _jet_columns(u, v, degree)
        c, *_ = np.linalg.lstsq(M, w, rcond=None)
        g = c[:2] / s
        hess = np.array([[2 * c[2], c[3]], [c[3], 2 * c[4]]]) / s**2
        frame_normal = n0
        nu = n0 - e @ g
        W = float(np.linalg.norm(nu))
        n0 = nu / W
    # graph parametrization p(u, v) = x_i + u e1 + v e2 + f(u, v) frame_normal
    T = e + np.outer(frame_normal, g)
    inv = np.linalg.inv(T.T @ T)
    second = -hess / W
    S = T @ inv @ second @ inv @ T.T
    return n0, 0.5 * (S + S.T)


def _cotan_laplacian(mesh: SurfaceMesh):
    """Cotangent Laplacian with circumcentric (Voronoi) vertex areas."""
    x = mesh.vertices
    t = mesh.cells
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    vor = np.zeros(n)
    for r in range(3):
        i, j, k = t[:, r], t[:, (r + 1) % 3], t[:, (r + 2) % 3]
        a = x[i] - x[k]
        b = x[j] - x[k]
        cot = np.sum(a * b, axis=1) / np.linalg.norm(np.cross(a, b), axis=1)
        half = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [half, half, -half, -half]
        l2 = np.sum((x[i] - x[j]) ** 2, axis=1)
        np.add.at(vor, i, cot * l2 / 8)
        np.add.at(vor, j, cot * l2 / 8)
    W = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    if np.any(vor <= 0):
        bad = np.flatnonzero(vor <= 0)
        interior = ~mesh.boundary_mask
        if np.any(interior[bad]):
            raise DegenerateStar(f"vertex {int(bad[interior[bad]][0])} has non-positive area")
        vor[bad] = np.inf
    return sp.diags(1.0 / vor) @ W


def _fit_shape(x, normals, frames, neighbors):
    n, N = x.shape
    d = N - 1
    sym = np.zeros((n, N, N))
    raw = np.zeros((n, N, N))
    for i in range(n):
        nb = neighbors[i]
        E = frames[i]
        dx = (x[nb] - x[i]) @ E
        dn = (normals[nb] - normals[i]) @ E
        if d == 1:
            s = float(np.dot(dx[:, 0], dn[:, 0]) / np.dot(dx[:, 0], dx[:, 0]))
            S = np.array([[s]])
            A = S
        else:
            a, b = dx[:, 0], dx[:, 1]
            z = np.zeros_like(a)
            M = np.concatenate([np.stack([a, b, z], axis=1), np.stack([z, a, b], axis=1)])
            rhs = np.concatenate([dn[:, 0], dn[:, 1]])
            s, *_ = np.linalg.lstsq(M, rhs, rcond=None)
            S = np.array([[s[0], s[1]], [s[1], s[2]]])
            # unsymmetrized fit: rows of A solve dn_k = A_k . dx separately
            A = np.linalg.lstsq(dx, dn, rcond=None)[0].T
        sym[i] = E @ S @ E.T
        raw[i] = E @ A @ E.T
    return sym, raw


def _curve_geometry(mesh: SurfaceMesh):
    n = mesh.n_vertices
    seg_n = mesh.cell_normals
    normals = np.zeros((n, 2))
    np.add.at(normals, mesh.cells[:, 0], seg_n)
    np.add.at(normals, mesh.cells[:, 1], seg_n)
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    L = mesh.cell_measures
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        lm, lp = L[i - 1], L[i]
        c = 2.0 / (lm + lp)
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [c / lm, -c / lm - c / lp, c / lp]
    lap = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return normals, lap


def compute_geometry(mesh: SurfaceMesh) -> SurfaceGeometry:
    """Normals, shape operators, curvatures, support function and Laplacian."""
    x = mesh.vertices
    N = mesh.dim_ambient
    if N == 2:
        if mesh.n_vertices < 3:
            raise DegenerateStar("a curve needs at least three vertices")
        normals, lap = _curve_geometry(mesh)
    else:
        seed = _max_normals(mesh)
        normals = np.empty_like(seed)
        shape = np.empty((mesh.n_vertices, 3, 3))
        on_boundary = mesh.boundary_mask
        for v in range(mesh.n_vertices):
            degree = BOUNDARY_JET_DEGREE if on_boundary[v] else JET_DEGREE
            need = 12 if on_boundary[v] else 18
            nb = rings(mesh, v, 2)
            if len(nb) < need:
                nb = rings(mesh, v, 3)
            normals[v], shape[v] = _jet_fit(x, v, nb, seed[v], degree)
        lap = _cotan_laplacian(mesh)
    if np.any(mesh.vertex_areas <= 0):
        raise DegenerateStar("vertex with zero area")
    frames = _tangent_frames(normals)
    sym, raw = _fit_shape(x, normals, frames, mesh.neighbors)
    if N == 2:
        shape = sym
    S_t = np.einsum("vai,vab,vbj->vij", frames, shape, frames)
    principal = np.linalg.eigvalsh(S_t)
    H = np.trace(S_t, axis1=1, axis2=2) / (N - 1)
    lx = lap @ x
    H_lap = -np.sum(lx * normals, axis=1) / (N - 1)
    return SurfaceGeometry(mesh, normals, frames, shape, raw, principal, H,
                           np.sum(x * normals, axis=1), mesh.vertex_areas, lap, H_lap)


@dataclass(frozen=True, eq=False)
class BoundaryFrame:
    vertices: np.ndarray      # indices into the mesh
    points: np.ndarray
    conormal: np.ndarray
    ds: np.ndarray
    x_gamma: np.ndarray

    @property
    def length(self) -> float:
        return float(self.ds.sum())


def conormal_frame(mesh: SurfaceMesh, geometry: SurfaceGeometry) -> BoundaryFrame:
    """Outward unit conormal ``n`` and arc-length weights on the boundary."""
    x = mesh.vertices
    bv = mesh.boundary_vertices
    nu = geometry.normals[bv]
    if mesh.dim_ambient == 2:
        first, last = mesh.cells[0], mesh.cells[-1]
        out = np.stack([x[first[0]] - x[first[1]], x[last[1]] - x[last[0]]])
        ds = np.ones(2)
    else:
        edges = mesh.boundary_edges
        t = mesh.cells
        fn = mesh.cell_normals
        # triangle owning each boundary edge
        lookup = {}
        for f, tri in enumerate(t):
            for r in range(3):
                lookup[(int(tri[r]), int(tri[(r + 1) % 3]))] = f
        pos = {int(v): i for i, v in enumerate(bv)}
        out = np.zeros((len(bv), 3))
        ds = np.zeros(len(bv))
        for a, b in edges:
            f = lookup[(int(a), int(b))]
            d = x[b] - x[a]
            o = np.cross(d, fn[f])
            o /= np.linalg.norm(o)
            L = float(np.linalg.norm(d))
            for v in (a, b):
                out[pos[int(v)]] += o
                ds[pos[int(v)]] += 0.5 * L
    out -= np.sum(out * nu, axis=1)[:, None] * nu
    out /= np.linalg.norm(out, axis=1)[:, None]
    pts = x[bv]
    xg = pts - np.sum(pts * nu, axis=1)[:, None] * nu
    return BoundaryFrame(bv.copy(), pts, out, ds, xg)


def gluing_integral_I1(frame: BoundaryFrame) -> float:
    """``int_{bd GAMMA} <x, n> ds`` by the trapezoid rule."""
    return float(np.sum(frame.ds * np.sum(frame.points * frame.conormal, axis=1)))


@dataclass
class GluingReport:
    I1: float
    I2: float
    H_term: float
    h_term: float
    direct_h_term: float
    mismatch: float
    length: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _h_boundary(frame: BoundaryFrame, geometry: SurfaceGeometry, raw: bool = False) -> np.ndarray:
    S = (geometry.shape_raw if raw else geometry.shape)[frame.vertices]
    return np.einsum("vi,vij,vj->v", frame.x_gamma, S, frame.conormal)


def gluing_integral_I2(frame: BoundaryFrame, geometry: SurfaceGeometry) -> float:
    """``int_{bd GAMMA} (H <x_G, n> - h(x_G, n)) ds``."""
    return gluing_report(frame, geometry).I2


def gluing_report(frame: BoundaryFrame, geometry: SurfaceGeometry) -> GluingReport:
    """Both gluing integrals and the parts of the second one.

    ``direct_h_term`` evaluates ``<grad_n nu, x>`` with the unsymmetrized
    fit of the derivative of ``nu``; its difference from the symmetric
    ``h(x_G, n)`` is reported as ``mismatch``.
    """
    H = geometry.H[frame.vertices]
    xn = np.sum(frame.x_gamma * frame.conormal, axis=1)
    H_term = float(np.sum(frame.ds * H * xn))
    h_term = float(np.sum(frame.ds * _h_boundary(frame, geometry)))
    raw = geometry.shape_raw[frame.vertices]
    direct = float(np.sum(frame.ds * np.einsum("vij,vj,vi->v", raw, frame.conormal, frame.points)))
    return GluingReport(gluing_integral_I1(frame), H_term - h_term, H_term, h_term, direct,
                        abs(direct - h_term), frame.length)


def starshape_check(geometry: SurfaceGeometry) -> tuple[float, bool]:
    lam = float(geometry.support.min())
    return lam, lam > 0


@dataclass
class JellettReport:
    applicable: bool
    H0: float
    H_spread: float
    U: float
    U_local: float
    B: float
    balance: float
    threshold: float
    umbilic: bool | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def jellett_test(geometry: SurfaceGeometry, frame: BoundaryFrame, tol: float = 1e-2) -> JellettReport:
    """Umbilicity deficit and its boundary counterpart.

    ``U = int (|h|^2 - (N-1) H0^2) lambda`` and
    ``B = int_{bd} (H0 <x, n> - h(x_G, n)) ds``. For constant mean curvature
    the two agree (the deficit is the integral of a tangential Laplacian).
    The surface is called umbilic when ``U <= tol * area * H0^2``.
    """
    lam, ok = starshape_check(geometry)
    if not ok:
        raise NotStarshaped(f"support function reaches {lam:.3e}")
    N = geometry.N
    H0 = geometry.H0
    area = float(geometry.areas.sum())
    if abs(H0) * math.sqrt(area) <= 1e-8:
        return JellettReport(False, H0, math.inf, 0.0, 0.0, 0.0, 0.0, 0.0, None)
    a = geometry.areas
    U = float(np.sum(a * (geometry.norm_h2 - (N - 1) * H0**2) * geometry.support))
    U_local = float(np.sum(a * (geometry.norm_h2 - (N - 1) * geometry.H**2) * geometry.support))
    xn = np.sum(frame.points * frame.conormal, axis=1)
    B = float(np.sum(frame.ds * (H0 * xn - _h_boundary(frame, geometry))))
    threshold = tol * area * H0**2
    balance = abs(U - B) / max(abs(U), abs(B), threshold)
    return JellettReport(True, H0, geometry.H_spread, U, U_local, B, balance, threshold, bool(U <= threshold))


def umbilicity_deficit(geometry: SurfaceGeometry, tol: float = 1e-2) -> IdentityReport:
    """Unweighted umbilicity test ``int (|h|^2 - (N-1) H^2) = 0``.

    The integrand is the squared traceless part of the second fundamental
    form, so it needs no starshapedness. Residuals are in units of
    ``area * H0^2`` (or the area alone for minimal surfaces).
    """
    N = geometry.N
    a = geometry.areas
    deficit = float(np.sum(a * (geometry.norm_h2 - (N - 1) * geometry.H**2)))
    area = float(a.sum())
    scale = area * max(geometry.H0**2, 1.0 if geometry.H0 == 0 else 0.0)
    return IdentityReport("umbilicity", deficit, 0.0, tol, scale=scale,
                          details={"max_pointwise": float(np.max(geometry.norm_h2 - (N - 1) * geometry.H**2))})


def position_laplacian_identity(geometry: SurfaceGeometry, tol: float = 5e-2) -> IdentityReport:
    """Per vertex ``Lap(|x|^2 / 2)`` against ``(N-1)(1 - H lambda)``.

    The report compares the area-weighted RMS of the difference over the
    interior vertices with ``N - 1``.
    """
    x = geometry.mesh.vertices
    N = geometry.N
    lhs = geometry.laplacian @ (0.5 * np.sum(x * x, axis=1))
    rhs = (N - 1) * (1 - geometry.H * geometry.support)
    m = geometry.interior
    a = geometry.areas[m]
    diff = (lhs - rhs)[m]
    rms = math.sqrt(float(np.dot(a, diff**2) / a.sum()))
    return IdentityReport("position_laplacian", rms, 0.0, tol, scale=float(N - 1),
                          details={"max_abs": float(np.abs(diff).max()),
                                   "mean_lhs": float(np.dot(a, lhs[m]) / a.sum()),
                                   "mean_rhs": float(np.dot(a, rhs[m]) / a.sum())})


def mesh_size(mesh: SurfaceMesh) -> float:
    """Target edge length recorded by the generator, else the mean edge length."""
    if "h" in mesh.meta:
        return float(mesh.meta["h"])
    x = mesh.vertices
    c = mesh.cells
    e = c if mesh.dim_ambient == 2 else np.concatenate([c[:, [0, 1]], c[:, [1, 2]], c[:, [2, 0]]])
    return float(np.mean(np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)))


def minkowski_check(geometry: SurfaceGeometry, frame: BoundaryFrame, tol: float = 2e-2) -> IdentityReport:
    """``int (H - sigma_2 lambda) = int_{bd} (H <x_G, n> - h(x_G, n) / 2) ds`` in space.

    Both sides can vanish (on caps centered at the apex each integrand is
    zero), so residuals are measured against the summed magnitudes of the
    four individual terms. The tolerance is ``max(tol, MINKOWSKI_C * h)``:
    curvature errors of one-sided boundary fits decay only linearly in h.
    """
    if geometry.N != 3:
        raise OutOfRangeParameter("the second Minkowski formula needs a surface in space")
    a = geometry.areas
    H = geometry.H[frame.vertices]
    xn = np.sum(frame.x_gamma * frame.conormal, axis=1)
    terms = [a * geometry.H, -a * geometry.sigma2 * geometry.support,
             frame.ds * H * xn, -0.5 * frame.ds * _h_boundary(frame, geometry)]
    lhs = float(np.sum(terms[0]) + np.sum(terms[1]))
    rhs = float(np.sum(terms[2]) + np.sum(terms[3]))
    scale = float(sum(abs(np.sum(t)) for t in terms))
    h = mesh_size(geometry.mesh)
    return IdentityReport("minkowski", lhs, rhs, max(tol, MINKOWSKI_C * h), scale=scale,
                          details={"scale": scale, "h": h})


@dataclass
class SweepReport:
    volume: float
    sweep_bound: float
    area_bound: float
    H0: float
    H_spread: float
    clamped_vertices: int
    convex_cone: bool
    cmc: bool
    volume_le_sweep: bool
    sweep_le_area: bool | None
    margin: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.volume_le_sweep and self.sweep_le_area is not False

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def enclosed_volume(mesh: SurfaceMesh) -> float:
    """``|Omega| = (1/N) int <x, nu>`` over GAMMA, exact for the polyhedral cone over GAMMA."""
    x = mesh.vertices[mesh.cells]
    N = mesh.dim_ambient
    if N == 2:
        return 0.5 * float(np.sum(x[:, 0, 0] * x[:, 1, 1] - x[:, 0, 1] * x[:, 1, 0]))
    return float(np.sum(np.einsum("ij,ij->i", x[:, 0], np.cross(x[:, 1], x[:, 2])))) / 6.0


def sweep_integrand(principal: np.ndarray, k_cap: np.ndarray) -> np.ndarray:
    """``int_0^{1/k} prod_i (1 - t k_i) dt`` in closed form, ``k = k_cap`` per vertex."""
    a = 1.0 / k_cap
    if principal.shape[1] == 1:
        k = principal[:, 0]
        return a - k * a**2 / 2
    k1, k2 = principal[:, 0], principal[:, 1]
    return a - (k1 + k2) * a**2 / 2 + k1 * k2 * a**3 / 3


def montiel_ros_bound(mesh: SurfaceMesh, geometry: SurfaceGeometry, cone: ConeSpec | None = None,
                      tol: float = 2e-2) -> SweepReport:
    """Volume, sweep bound ``int int_0^{1/k_m} prod (1 - t k_i)`` and ``|GAMMA| / (N H0)``.

    The sweep uses the largest principal curvature where it is positive; at
    vertices with ``k_m <= 0`` it falls back to ``H0``. The second inequality
    is asserted only when the mean curvature is nearly constant.
    """
    cone = mesh.cone if cone is None else cone
    H0 = geometry.H0
    if H0 <= 0:
        raise NonPositiveH(f"mean curvature average {H0:.3e} is not positive")
    N = geometry.N
    vol = enclosed_volume(mesh)
    km = geometry.k_max
    clamp = km <= 0
    k_cap = np.where(clamp, H0, km)
    sweep = float(np.dot(geometry.areas, sweep_integrand(geometry.principal, k_cap)))
    area_bound = float(geometry.areas.sum()) / (N * H0)
    cmc = geometry.H_spread <= CMC_SPREAD
    convex = cone is None or cone.convex
    vol_ok = vol <= sweep * (1 + tol)
    area_ok = (sweep <= area_bound * (1 + tol)) if cmc else None
    return SweepReport(vol, sweep, area_bound, H0, geometry.H_spread, int(clamp.sum()), convex, cmc,
                       bool(vol_ok), area_ok, (sweep - vol) / vol, tol)


def fit_sphere(points: np.ndarray):
    """Algebraic least-squares sphere; returns ``(center, radius, rms)``."""
    A = np.hstack([2 * points, np.ones((len(points), 1))])
    b = np.sum(points**2, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c = sol[:-1]
    R = math.sqrt(max(sol[-1] + float(c @ c), 0.0))
    rms = float(np.sqrt(np.mean((np.linalg.norm(points - c, axis=1) - R) ** 2)))
    return c, R, rms


@dataclass
class CapFit:
    p0: tuple
    R: float
    rms: float
    spherical: bool
    case: CaseVerdict | None

    def to_dict(self) -> dict:
        return {"p0": list(self.p0), "R": self.R, "rms": self.rms, "spherical": self.spherical,
                "case": None if self.case is None else self.case.to_dict()}


def cap_fit_classify(mesh: SurfaceMesh, geometry: SurfaceGeometry | None = None,
                     cone: ConeSpec | None = None, rms_tol: float = 1e-2,
                     tol: float | None = None) -> CapFit:
    """Sphere fit of the vertices followed by the center classifier.

    The classifier tolerance defaults to ten times the relative fit residual
    (at least ``1e-6``), so exact caps are judged with analytic precision.
    """
    cone = mesh.cone if cone is None else cone
    c, R, rms = fit_sphere(mesh.vertices)
    spherical = rms <= rms_tol * R
    case = None
    if spherical and cone is not None:
        ctol = tol if tol is not None else max(1e-6, 10 * rms / R)
        case = classify_center(cone, c, R, mesh.vertices[mesh.boundary_vertices], ctol)
    return CapFit(tuple(float(v) for v in c), R, rms, bool(spherical), case)


def translated_cap_I1(alpha: float, R: float, eps: float) -> float:
    """Closed form of ``int <x, n> ds`` for the sphere ``|x - eps e_z| = R`` in a circular cone.

    On the boundary circle ``<x, n> = <p0, n> = -eps sin(Theta)``, with
    ``Theta`` the polar angle of the circle seen from the center.
    """
    s = eps * math.cos(alpha) + math.sqrt(R * R - (eps * math.sin(alpha)) ** 2)
    return -2 * math.pi * eps * s * s * math.sin(alpha) ** 2 / R
