"""Integral identities for the torsion problem on sector-like domains.

Every check works from one discrete solution: values ``u_h`` at the vertices
and, per vertex, the gradient and Hessian of a local quadratic least-squares
fit (``recover_hessian``). Using one fit for both derivatives keeps them
mutually consistent, which matters for the cubic and quartic integrands below.
Integrals of vertex quantities use the barycentric vertex areas, i.e. the
mean of the three vertex values on each cell times the cell area.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .cone import ConeSpec, CaseVerdict, classify_center, unit_sector_measure
from .mesh.volume import GAMMA, GAMMA1, VolumeMesh
from .poisson import ScalarField, boundary_normal_derivative, recover_hessian
from .reports import IdentityReport

GEOMETRIC_TOL = 2e-2
DEFINITIONAL_TOL = 1e-8
# relative flux spread below which the Neumann data on GAMMA counts as constant
OVERDETERMINED_SPREAD = 5e-2
# |cos| between GAMMA and GAMMA1 below which a junction counts as orthogonal
JUNCTION_ORTHOGONALITY_TOL = 5e-2

_fits: "weakref.WeakKeyDictionary[ScalarField, object]" = weakref.WeakKeyDictionary()


def _fit(u: ScalarField):
    hess = _fits.get(u)
    if hess is None:
        hess = recover_hessian(u)
        _fits[u] = hess
    return hess


def derivatives(u: ScalarField):
    """Per-vertex ``(Du, D2u)`` from the patch fit (cached per field)."""
    fit = _fit(u)
    return fit.gradients, fit.values


def pointwise_mask(mesh: VolumeMesh) -> np.ndarray:
    """Vertices used by pointwise reports: everything except O and the junctions."""
    mask = np.ones(mesh.n_vertices, dtype=bool)
    mask[mesh.junction_vertices] = False
    if mesh.apex_vertex is not None:
        mask[mesh.apex_vertex] = False
    return mask



def junction_defects(mesh: VolumeMesh) -> np.ndarray:
    """``|cos|`` of the angle between GAMMA and GAMMA1 at each junction vertex.

    The GAMMA tangent is a one-sided quadratic interpolation through the
    junction and the next two GAMMA vertices, so the chord error of a curved
    GAMMA does not show up as a defect.
    """
    gam = mesh.edges_with_tag(GAMMA)
    gam1 = mesh.edges_with_tag(GAMMA1)
    nbr: dict[int, list[int]] = {}
    for a, b in gam:
        nbr.setdefault(int(a), []).append(int(b))
        nbr.setdefault(int(b), []).append(int(a))
    x = mesh.vertices
    out = []
    for j in mesh.junction_vertices:
        j = int(j)
        a = nbr[j][0]
        nxt = [v for v in nbr.get(a, []) if v != j]
        if nxt:
            b = nxt[0]
            s1 = np.linalg.norm(x[a] - x[j])
            s2 = s1 + np.linalg.norm(x[b] - x[a])
            t = (-(1 / s1 + 1 / s2) * x[j] + s2 / (s1 * (s2 - s1)) * x[a]
                 - s1 / (s2 * (s2 - s1)) * x[b])
        else:
            t = x[a] - x[j]
        face = gam1[(gam1[:, 0] == j) | (gam1[:, 1] == j)][0]
        d = x[face[1]] - x[face[0]]
        out.append(abs(float(t @ d)) / (np.linalg.norm(t) * np.linalg.norm(d)))
    return np.array(out)


def orthogonal_junctions(mesh: VolumeMesh, tol: float = JUNCTION_ORTHOGONALITY_TOL) -> bool:
    d = junction_defects(mesh)
    return bool(len(d) == 0 or d.max() <= tol)


def _junction_band(mesh: VolumeMesh, edges: np.ndarray, width: float) -> np.ndarray:
    """Mask of edges whose midpoint lies within ``width`` of a junction vertex."""
    J = mesh.vertices[mesh.junction_vertices]
    if len(J) == 0:
        return np.zeros(len(edges), dtype=bool)
    mid = mesh.vertices[edges].mean(axis=1)
    dist = np.min(np.linalg.norm(mid[:, None, :] - J[None, :, :], axis=2), axis=1)
    return dist < width


def vertex_integral(mesh: VolumeMesh, values: np.ndarray) -> float:
    return float(np.dot(mesh.vertex_areas, values))


def _gamma1_integral(mesh: VolumeMesh, vertex_values: np.ndarray) -> float:
    """Trapezoid rule over GAMMA1 for a quantity sampled per edge endpoint.

    ``vertex_values`` has shape ``(n_edges, 2)``.
    """
    e = mesh.edges_with_tag(GAMMA1)
    return float(np.sum(mesh.edge_lengths(e) * vertex_values.mean(axis=1)))


@dataclass(frozen=True)
class EffectiveC:
    c: float
    area: float
    gamma_length: float
    spread: float
    flux_min: float
    flux_max: float

    @property
    def overdetermined(self) -> bool:
        return self.spread <= OVERDETERMINED_SPREAD * self.c


def effective_c(u: ScalarField, mesh: VolumeMesh | None = None) -> EffectiveC:
    """``|Omega| / |GAMMA|`` plus the spread of ``-du/dnu`` along GAMMA."""
    mesh = u.mesh if mesh is None else mesh
    area = mesh.area
    length = float(np.sum(mesh.edge_lengths(mesh.edges_with_tag(GAMMA))))
    _, flux = boundary_normal_derivative(u, GAMMA)
    neg = -flux
    return EffectiveC(area / length, area, length, float(neg.max() - neg.min()),
                      float(neg.min()), float(neg.max()))


def _resolve_c(u: ScalarField, c_eff) -> EffectiveC:
    if c_eff is None:
        return effective_c(u)
    if isinstance(c_eff, EffectiveC):
        return c_eff
    ec = effective_c(u)
    return EffectiveC(float(c_eff), ec.area, ec.gamma_length, ec.spread, ec.flux_min, ec.flux_max)


def identity_energy(u: ScalarField, tol: float = GEOMETRIC_TOL) -> IdentityReport:
    """``int |Du|^2 = int u`` with exact P1 quadrature on both sides."""
    mesh = u.mesh
    g = u.cell_gradients
    lhs = float(np.sum(mesh.areas * np.sum(g * g, axis=1)))
    rhs = u.integral()
    return IdentityReport("energy", lhs, rhs, tol)


def identity_pohozaev(u: ScalarField, c_eff=None, tol: float = GEOMETRIC_TOL) -> list[IdentityReport]:
    """Pohozaev-type balance ``(1 + 2/N) int u = c^2 |Omega|`` and its parts.

    Returns three reports: the balance itself (informational unless the GAMMA
    flux is constant), the version keeping the GAMMA1 boundary term
    ``int_{GAMMA1} u <D2u x, nu>``, and the smallness of that term.
    """
    mesh = u.mesh
    ec = _resolve_c(u, c_eff)
    N = 2
    c2 = ec.c**2
    int_u = u.integral()
    _, hess = derivatives(u)
    e = mesh.edges_with_tag(GAMMA1)
    nrm = mesh.edge_normals(e)
    x = mesh.vertices[e]
    hx = np.einsum("evij,evj->evi", hess[e], x)
    term_pts = u.values[e] * np.einsum("evi,ei->ev", hx, nrm)
    term = _gamma1_integral(mesh, term_pts)
    target = c2 * mesh.area
    main = IdentityReport("pohozaev", (1 + 2 / N) * int_u, target, tol,
                          informational=not ec.overdetermined,
                          details={"c_eff": ec.c, "spread": ec.spread})
    full = IdentityReport("pohozaev_with_gamma1_term", (N + 2) * int_u, N * target - term, tol,
                          informational=not ec.overdetermined, details={"gamma1_term": term})
    regular = orthogonal_junctions(mesh)
    small = IdentityReport("gamma1_hessian_x_term", abs(term), 0.0, 1e-2, kind="le", scale=target,
                           informational=not regular,
                           details={"gamma1_term": term, "orthogonal_junctions": regular})
    return [main, full, small]


def pohozaev_radial_oracle(cone: ConeSpec, c: float) -> tuple[float, float]:
    """Both sides of ``(1 + 2/N) int u = c^2 |Omega|`` for the exact sector, by 1D quadrature.

    Works in any supported dimension; the volume integral reduces to
    ``N alpha_N int_0^R u(r) r^(N-1) dr``.
    """
    N = cone.dim
    R = N * c
    surface = N * unit_sector_measure(cone)
    radial, _ = integrate.quad(lambda r: (R * R - r * r) / (2 * N) * r ** (N - 1), 0.0, R,
                               epsabs=1e-14, epsrel=1e-13)
    volume = unit_sector_measure(cone) * R**N
    return (1 + 2 / N) * surface * radial, c * c * volume


def curvature_density(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """``-<J(D2u) Du, Du> / (N - 1)`` with ``J(A) = tr(A) I - A``.

    Equals ``H |Du|^3`` where ``H`` is the mean curvature of the level set,
    without dividing by ``|Du|``.
    """
    N = grad.shape[1]
    tr = np.trace(hess, axis1=1, axis2=2)
    quad = np.einsum("vi,vij,vj->v", grad, hess, grad)
    return -(tr * np.sum(grad * grad, axis=1) - quad) / (N - 1)


def identity_curvature(u: ScalarField, c_eff=None, tol: float = GEOMETRIC_TOL) -> IdentityReport:
    """``int H |Du|^3 = c^2 |Omega| / (N + 2)`` for the level-set mean curvature ``H``."""
    mesh = u.mesh
    ec = _resolve_c(u, c_eff)
    N = 2
    grad, hess = derivatives(u)
    dens = curvature_density(grad, hess)
    lhs = vertex_integral(mesh, dens)
    rhs = ec.c**2 * mesh.area / (N + 2)

    # direct route: H = div(nu) / (N - 1) with nu = -Du/|Du| interpolated linearly
    norm = np.linalg.norm(grad, axis=1)
    safe = norm > 1e-12
    nu = np.zeros_like(grad)
    nu[safe] = -grad[safe] / norm[safe, None]
    t = mesh.triangles
    div = np.einsum("cij,cij->c", mesh.basis_gradients, nu[t])
    gcell = np.linalg.norm(grad[t].mean(axis=1), axis=1)
    direct = div / (N - 1) * gcell**3
    rep = dens[t].mean(axis=1)
    valid = safe[t].all(axis=1)
    disagree = valid & (np.abs(direct - rep) > 0.1 * np.abs(rep))
    return IdentityReport("curvature", lhs, rhs, tol,
                          informational=not ec.overdetermined,
                          details={"disagreeing_cells": int(disagree.sum()), "cells": int(len(t)),
                                   "direct_integral": float(np.sum(mesh.areas * direct))})


def newton_bracket(hess: np.ndarray) -> np.ndarray:
    """``((N-1)/(2N)) (tr A)^2 - sigma_2(A)`` per matrix; zero iff ``A`` is scalar."""
    N = hess.shape[1]
    tr = np.trace(hess, axis1=1, axis2=2)
    sq = np.sum(hess * hess, axis=(1, 2))
    sigma2 = 0.5 * (tr * tr - sq)
    return (N - 1) / (2 * N) * tr * tr - sigma2


def newton_deficit(u: ScalarField, tol: float = 1e-3) -> IdentityReport:
    """``int u [((N-1)/(2N)) (Lap u)^2 - sigma_2(D2u)] >= 0``."""
    mesh = u.mesh
    _, hess = derivatives(u)
    bracket = newton_bracket(hess)
    lhs = vertex_integral(mesh, u.values * bracket)
    mask = pointwise_mask(mesh)
    return IdentityReport("newton_deficit", lhs, 0.0, tol, kind="ge", scale=max(u.integral(), 1e-300),
                          details={"min_bracket": float(bracket[mask].min()),
                                   "mean_bracket": float(bracket[mask].mean()),
                                   "normalized_deficit": lhs / max(u.integral(), 1e-300)})


def gamma1_edge_values(u: ScalarField):
    """Per GAMMA1 edge: ``<D2u x, nu>`` and ``<D2u Du, nu>`` at the edge midpoint."""
    mesh = u.mesh
    grad, hess = derivatives(u)
    e = mesh.edges_with_tag(GAMMA1)
    nrm = mesh.edge_normals(e)
    xm = mesh.vertices[e].mean(axis=1)
    hm = hess[e].mean(axis=1)
    gm = grad[e].mean(axis=1)
    hx = np.einsum("eij,ej,ei->e", hm, xm, nrm)
    hg = np.einsum("eij,ej,ei->e", hm, gm, nrm)
    return e, hx, hg


def gamma1_flux_sign(u: ScalarField, c_eff=None, tol: float = 1e-2,
                     band_width: float = 0.2) -> IdentityReport:
    """``int_{GAMMA1} u <D2u Du, nu> <= 0``.

    Asserted only for convex cones whose GAMMA meets GAMMA1 orthogonally. At a
    non-orthogonal junction the solution has a corner singularity and the
    recovered Hessian is unreliable nearby; the report then carries, besides
    the full integral, the integral restricted to edges farther than
    ``band_width`` from the junctions.
    """
    mesh = u.mesh
    ec = _resolve_c(u, c_eff)
    grad, hess = derivatives(u)
    e, _, hg = gamma1_edge_values(u)
    nrm = mesh.edge_normals(e)
    pts = u.values[e] * np.einsum("evij,evj,ei->ev", hess[e], grad[e], nrm)
    contrib = mesh.edge_lengths(e) * pts.mean(axis=1)
    integral = float(np.sum(contrib))
    band = _junction_band(mesh, e, band_width)
    convex = mesh.cone is None or mesh.cone.convex
    regular = orthogonal_junctions(mesh)
    scale = ec.c**2 * mesh.area
    return IdentityReport("gamma1_flux_sign", integral, 0.0, tol, kind="le",
                          scale=scale, informational=not (convex and regular),
                          details={"edge_max": float(hg.max()), "edge_min": float(hg.min()),
                                   "edges": int(len(e)), "convex_cone": bool(convex),
                                   "orthogonal_junctions": regular,
                                   "junction_defect": float(np.max(junction_defects(mesh), initial=0.0)),
                                   "integral_outside_band": float(np.sum(contrib[~band])),
                                   "normalized_outside_band": float(np.sum(contrib[~band])) / scale,
                                   "band_width": band_width})


@dataclass(frozen=True, eq=False)
class PFunctionField:
    mesh: VolumeMesh
    values: np.ndarray
    c_eff: float


def p_function(u: ScalarField, c_eff=None) -> PFunctionField:
    ec = _resolve_c(u, c_eff)
    grad, _ = derivatives(u)
    N = 2
    return PFunctionField(u.mesh, np.sum(grad * grad, axis=1) + (2.0 / N) * u.values, ec.c)


def p_function_check(u: ScalarField, c_eff=None, tol: float = GEOMETRIC_TOL) -> list[IdentityReport]:
    """Bound, constancy and integral of ``v = |Du|^2 + (2/N) u`` against ``c^2``."""
    mesh = u.mesh
    ec = _resolve_c(u, c_eff)
    v = p_function(u, ec).values
    c2 = ec.c**2
    mask = pointwise_mask(mesh)
    vm = v[mask]
    vmax = float(vm.max())
    convex = mesh.cone is None or mesh.cone.convex
    far = vm[np.argmax(np.abs(vm - c2))]
    return [
        IdentityReport("p_function_max", vmax, c2, tol, kind="le", scale=c2,
                       informational=not (convex and ec.overdetermined),
                       details={"margin": vmax - c2, "c_eff": ec.c}),
        IdentityReport("p_function_constant", float(far), c2, tol,
                       informational=not ec.overdetermined,
                       details={"max_abs_deviation": float(abs(far - c2)),
                                "mean_abs_deviation": float(np.mean(np.abs(vm - c2)))}),
        IdentityReport("p_function_integral", vertex_integral(mesh, v), c2 * mesh.area, tol,
                       informational=not ec.overdetermined),
    ]


@dataclass
class RigidityVerdict:
    hessian_deviation: dict
    p0: tuple
    c: float
    fit_rms: float
    is_spherical_sector: bool
    case: CaseVerdict | None = None
    thresholds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "hessian_deviation": dict(self.hessian_deviation),
            "p0": list(self.p0),
            "c": self.c,
            "fit_rms": self.fit_rms,
            "is_spherical_sector": self.is_spherical_sector,
            "case": None if self.case is None else self.case.to_dict(),
            "thresholds": dict(self.thresholds),
        }


def fit_paraboloid(points: np.ndarray, values: np.ndarray):
    """Least-squares fit of ``(A - |x - p0|^2) / (2N)``; returns ``(A, p0, rms)``.

    Linear in ``(A - |p0|^2, p0)`` after multiplying through by ``2N``.
    """
    N = points.shape[1]
    design = np.hstack([np.ones((len(points), 1)), 2 * points])
    target = 2 * N * values + np.sum(points**2, axis=1)
    sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    p0 = sol[1:]
    A = sol[0] + float(p0 @ p0)
    model = (A - np.sum((points - p0) ** 2, axis=1)) / (2 * N)
    rms = float(np.sqrt(np.mean((model - values) ** 2)))
    return A, p0, rms


def hessian_deviation(u: ScalarField) -> dict:
    mesh = u.mesh
    N = 2
    _, hess = derivatives(u)
    dev = np.linalg.norm(hess + np.eye(N) / N, axis=(1, 2))[mesh.interior_mask]
    return {"mean": float(dev.mean()), "max": float(dev.max())}


def rigidity_detect(u: ScalarField, fit_tol: float = 1e-2, hessian_tol: float = 0.1,
                    classify_tol: float | None = None) -> RigidityVerdict:
    """Decide whether the solution is the spherical-sector paraboloid.

    On success the fitted center and radius go to ``classify_center`` with the
    junction vertices (where GAMMA meets the cone) as boundary samples. The
    classifier tolerance defaults to the mesh size, since the fitted center is
    only accurate to discretization error.
    """
    mesh = u.mesh
    N = 2
    inner = mesh.interior_mask
    A, p0, rms = fit_paraboloid(mesh.vertices[inner], u.values[inner])
    dev = hessian_deviation(u)
    umax = float(u.values.max())
    spherical = bool(A > 0 and rms <= fit_tol * umax and dev["mean"] <= hessian_tol)
    c = math.sqrt(A) / N if A > 0 else float("nan")
    case = None
    if spherical and mesh.cone is not None:
        tol = classify_tol if classify_tol is not None else float(mesh.meta.get("h", 0.05))
        samples = mesh.vertices[mesh.junction_vertices]
        case = classify_center(mesh.cone, p0, N * c, samples, tol)
    return RigidityVerdict(dev, tuple(float(v) for v in p0), c, rms, spherical, case,
                           {"fit_rms": fit_tol * umax, "hessian_mean": hessian_tol})


# -- divergence theorem on the mesh ----------------------------------------

@dataclass(frozen=True)
class PolynomialField:
    """Vector field whose components are polynomials of degree at most two.

    ``components[k]`` maps exponent pairs ``(a, b)`` to the coefficient of
    ``x^a y^b`` in component ``k``.
    """

    components: tuple

    def __post_init__(self):
        comps = tuple(dict(c) for c in self.components)
        if len(comps) != 2:
            raise ValueError("expected two components")
        for c in comps:
            for a, b in c:
                if a < 0 or b < 0 or a + b > 2:
                    raise ValueError("degree must be at most two")
        object.__setattr__(self, "components", comps)

    @classmethod
    def position(cls) -> "PolynomialField":
        return cls(({(1, 0): 1.0}, {(0, 1): 1.0}))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, comp in enumerate(self.components):
            for (a, b), coef in comp.items():
                out[..., k] += coef * x[..., 0] ** a * x[..., 1] ** b
        return out

    def divergence(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for (a, b), coef in self.components[0].items():
            if a:
                out += coef * a * x[..., 0] ** (a - 1) * x[..., 1] ** b
        for (a, b), coef in self.components[1].items():
            if b:
                out += coef * b * x[..., 0] ** a * x[..., 1] ** (b - 1)
        return out


def divergence_check(mesh: VolumeMesh, F: PolynomialField, tol: float = 1e-10) -> IdentityReport:
    """``int div F`` against the outward flux through GAMMA and GAMMA1.

    Both sides use rules exact for the polynomial degrees involved (centroid
    rule for the linear divergence, Simpson on each straight edge), so on the
    polygonal domain they agree to rounding.
    """
    lhs = float(np.sum(mesh.areas * F.divergence(mesh.centroids)))
    flux = {}
    for tag in (GAMMA, GAMMA1):
        e = mesh.edges_with_tag(tag)
        a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        avg = (F(a) + 4 * F(0.5 * (a + b)) + F(b)) / 6
        flux[tag] = float(np.sum(mesh.edge_lengths(e) * np.sum(avg * mesh.edge_normals(e), axis=1)))
    rhs = flux[GAMMA] + flux[GAMMA1]
    return IdentityReport("divergence", lhs, rhs, tol, scale=max(abs(lhs), abs(rhs), mesh.area),
                          details={"flux_gamma": flux[GAMMA], "flux_gamma1": flux[GAMMA1]})


def identity_suite(u: ScalarField, tol_scale: float = 1.0) -> list[IdentityReport]:
    """All identity reports for one solve, in a fixed order."""
    ec = effective_c(u)
    t = GEOMETRIC_TOL * tol_scale
    out = [identity_energy(u, t)]
    out += identity_pohozaev(u, ec, t)
    out.append(identity_curvature(u, ec, t))
    out.append(newton_deficit(u))
    out.append(gamma1_flux_sign(u, ec))
    out += p_function_check(u, ec, t)
    out.append(divergence_check(u.mesh, PolynomialField.position()))
    return out
