"""P1 finite elements for -Lap u = 1, u = 0 on GAMMA, du/dnu = 0 on GAMMA1."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .cone import ExactSectorSolution
from .errors import NoConvergence, RankDeficientPatch, SingularSystem, UnknownTag
from .mesh.volume import GAMMA, GAMMA1, TAGS, VolumeMesh


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: VolumeMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.mesh.n_vertices)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @cached_property
    def cell_gradients(self) -> np.ndarray:
        g = self.mesh.basis_gradients
        return np.einsum("cij,ci->cj", g, self.values[self.mesh.triangles])

    def integral(self) -> float:
        """Exact integral of the piecewise linear interpolant."""
        return float(np.sum(self.mesh.areas * self.values[self.mesh.triangles].mean(axis=1)))


@dataclass(frozen=True, eq=False)
class GradientField:
    mesh: VolumeMesh
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class HessianField:
    mesh: VolumeMesh
    values: np.ndarray
    gradients: np.ndarray | None = None
    widened: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def trace(self) -> np.ndarray:
        return np.trace(self.values, axis1=1, axis2=2)


@dataclass
class SolveReport:
    dofs: int
    iterations: int
    residual: float
    tol: float
    min_u: float
    positivity_ok: bool
    assembly_time: float = 0.0
    solve_time: float = 0.0
    warnings: list = field(default_factory=list)

    def to_dict(self, timings: bool = False) -> dict:
        d = asdict(self)
        if not timings:
            d.pop("assembly_time")
            d.pop("solve_time")
        return d

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)


def assemble(mesh: VolumeMesh):
    """Stiffness matrix and consistent load vector for the unit source."""
    g = mesh.basis_gradients
    ke = mesh.areas[:, None, None] * np.einsum("cik,cjk->cij", g, g)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2).tocsr()
    f = mesh.vertex_areas.copy()
    return K, f


def _dirichlet_mask(mesh: VolumeMesh) -> np.ndarray:
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[mesh.tag_vertices(GAMMA)] = True
    return mask


def solve_mixed(mesh: VolumeMesh, tol: float = 1e-10, maxiter: int | None = None):
    """Galerkin solution of the mixed problem by Jacobi-preconditioned CG.

    Dirichlet vertices are eliminated from the system; the Neumann condition on
    GAMMA1 is natural. Returns ``(ScalarField, SolveReport)``.
    """
    dirichlet = _dirichlet_mask(mesh)
    if not dirichlet.any():
        raise SingularSystem("no GAMMA edges: pure Neumann problem has no unique solution")
    t0 = time.perf_counter()
    K, f = assemble(mesh)
    free = np.flatnonzero(~dirichlet)
    A = K[free][:, free].tocsr()
    b = f[free]
    t1 = time.perf_counter()

    dinv = 1.0 / A.diagonal()
    M = LinearOperator(A.shape, matvec=lambda r: dinv * r, dtype=float)
    cap = maxiter if maxiter is not None else max(100, int(50 * math.sqrt(len(free))))
    count = [0]

    def _tick(_):
        count[0] += 1

    x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=cap, M=M, callback=_tick)
    resid = float(np.linalg.norm(b - A @ x) / np.linalg.norm(b))
    if info != 0 and resid > tol:
        raise NoConvergence(f"CG stopped after {count[0]} iterations, residual {resid:.3e}")
    t2 = time.perf_counter()

    u = np.zeros(mesh.n_vertices)
    u[free] = x
    min_u = float(u.min())
    warnings = []
    if mesh.cone is not None and not mesh.cone.convex:
        warnings.append("non-convex cone: rigidity sign checks are informational")
    positivity = min_u >= -10 * tol
    if not positivity:
        warnings.append(f"discrete maximum principle violated: min u = {min_u:.3e}")
    report = SolveReport(
        dofs=int(len(free)),
        iterations=int(count[0]),
        residual=resid,
        tol=float(tol),
        min_u=min_u,
        positivity_ok=bool(positivity),
        assembly_time=t1 - t0,
        solve_time=t2 - t1,
        warnings=warnings,
    )
    return ScalarField(mesh, u), report


def recover_gradient(u: ScalarField) -> GradientField:
    """Area-weighted average of the cell gradients around each vertex."""
    mesh = u.mesh
    w = mesh.areas
    g = u.cell_gradients
    t = mesh.triangles.ravel()
    out = np.zeros((mesh.n_vertices, 2))
    for k in range(2):
        out[:, k] = np.bincount(t, np.repeat(w * g[:, k], 3), mesh.n_vertices)
    out /= np.bincount(t, np.repeat(w, 3), mesh.n_vertices)[:, None]
    return GradientField(mesh, out)


def _ring_pattern(mesh: VolumeMesh, rings: int) -> sp.csr_matrix:
    a = (mesh.adjacency + sp.identity(mesh.n_vertices, format="csr")).tocsr()
    p = a
    for _ in range(rings - 1):
        p = (p @ a).tocsr()
    p.data[:] = 1.0
    return p


def _quadratic_fit(mesh: VolumeMesh, values: np.ndarray, pattern: sp.csr_matrix, rows: np.ndarray):
    """Least-squares quadratic through the patch of each vertex in ``rows``."""
    x = mesh.vertices
    sub = pattern[rows].tocoo()
    i_local, j = sub.row, sub.col
    i = rows[i_local]
    d = x[j] - x[i]
    scale = np.sqrt(np.bincount(i_local, np.sum(d * d, axis=1), len(rows))
                    / np.maximum(np.bincount(i_local, minlength=len(rows)) - 1, 1))
    scale[scale == 0] = 1.0
    d = d / scale[i_local, None]
    mono = np.stack([np.ones(len(d)), d[:, 0], d[:, 1], d[:, 0] ** 2, d[:, 0] * d[:, 1], d[:, 1] ** 2], axis=1)
    outer = mono[:, :, None] * mono[:, None, :]
    M = np.zeros((len(rows), 6, 6))
    np.add.at(M, i_local, outer)
    rhs = np.zeros((len(rows), 6))
    np.add.at(rhs, i_local, mono * values[j][:, None])
    counts = np.bincount(i_local, minlength=len(rows))
    eig = np.linalg.eigvalsh(M)
    ok = (counts >= 6) & (eig[:, 0] > 1e-10 * eig[:, -1])
    coef = np.zeros((len(rows), 6))
    if ok.any():
        coef[ok] = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    hess = np.empty((len(rows), 2, 2))
    hess[:, 0, 0] = 2 * coef[:, 3]
    hess[:, 0, 1] = hess[:, 1, 0] = coef[:, 4]
    hess[:, 1, 1] = 2 * coef[:, 5]
    hess /= (scale**2)[:, None, None]
    grad = coef[:, 1:3] / scale[:, None]
    return hess, grad, ok


def recover_hessian(u: ScalarField, rings: int = 2) -> HessianField:
    """Per-vertex Hessian from a quadratic least-squares fit over the vertex patch.

    Patches with fewer than six points (or a singular design) are widened by
    one ring; a patch that stays singular raises ``RankDeficientPatch``.
    """
    mesh = u.mesh
    rows = np.arange(mesh.n_vertices)
    hess, grad, ok = _quadratic_fit(mesh, u.values, _ring_pattern(mesh, rings), rows)
    widened = rows[~ok]
    if len(widened):
        h2, g2, ok2 = _quadratic_fit(mesh, u.values, _ring_pattern(mesh, rings + 1), widened)
        if not ok2.all():
            raise RankDeficientPatch(f"vertices {widened[~ok2].tolist()} have singular patches")
        hess[widened], grad[widened] = h2, g2
    return HessianField(mesh, hess, grad, widened)


def boundary_normal_derivative(u: ScalarField, tag: str):
    """Per-edge normal derivative on the edges carrying ``tag``.

    Vertex fluxes come from the Galerkin residual ``K u - f`` (the variational
    lifting of the normal derivative); they are turned into a P1 boundary
    density with the boundary mass matrix and averaged onto edges. The total
    GAMMA flux therefore equals ``-|Omega|`` up to the solver tolerance.
    Returns ``(edges, values)``.
    """
    if tag not in TAGS:
        raise UnknownTag(tag)
    mesh = u.mesh
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        return edges, np.zeros(0)
    K, f = assemble(mesh)
    resid = K @ u.values - f
    if tag == GAMMA1:
        resid[_dirichlet_mask(mesh)] = 0.0
    verts, local = np.unique(edges, return_inverse=True)
    local = local.reshape(-1, 2)
    L = mesh.edge_lengths(edges)
    rows = np.concatenate([local[:, 0], local[:, 1], local[:, 0], local[:, 1]])
    cols = np.concatenate([local[:, 0], local[:, 1], local[:, 1], local[:, 0]])
    vals = np.concatenate([L / 3, L / 3, L / 6, L / 6])
    Mb = sp.coo_matrix((vals, (rows, cols)), shape=(len(verts),) * 2).tocsc()
    g = sp.linalg.spsolve(Mb, resid[verts])
    return edges, 0.5 * (g[local[:, 0]] + g[local[:, 1]])


def total_flux(u: ScalarField, tag: str = GAMMA) -> float:
    edges, vals = boundary_normal_derivative(u, tag)
    return float(np.sum(vals * u.mesh.edge_lengths(edges)))


# -- error measures ------------------------------------------------------

_DUNAVANT4 = (
    np.array([
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
    ]),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)


def error_norms(u: ScalarField, exact) -> tuple[float, float]:
    """Nodal max error and L2 error (degree-4 quadrature) against ``exact(x)``."""
    mesh = u.mesh
    linf = float(np.max(np.abs(u.values - exact(mesh.vertices))))
    bary, w = _DUNAVANT4
    p = mesh.vertices[mesh.triangles]
    vals = u.values[mesh.triangles]
    total = 0.0
    for b, wq in zip(bary, w):
        xq = np.einsum("k,ckd->cd", b, p)
        e = vals @ b - exact(xq)
        total += wq * float(np.sum(mesh.areas * e * e))
    return linf, math.sqrt(total)


@dataclass
class ConvergenceRow:
    h: float
    dofs: int
    linf: float
    l2: float
    order_linf: float | None = None
    order_l2: float | None = None


def convergence_study(cone, h_list, R: float = 1.0, p0=(0.0, 0.0), tol: float = 1e-10) -> list[ConvergenceRow]:
    """Errors of the discrete solution on spherical sectors for a list of mesh sizes."""
    from .mesh.volume import sector_mesh

    exact = ExactSectorSolution(cone, R / cone.dim, tuple(p0))
    rows = []
    for h in h_list:
        mesh = sector_mesh(cone, R, h, p0)
        u, rep = solve_mixed(mesh, tol)
        linf, l2 = error_norms(u, exact.u)
        rows.append(ConvergenceRow(float(h), rep.dofs, linf, l2))
    for prev, row in zip(rows, rows[1:]):
        r = math.log(prev.h / row.h)
        row.order_linf = math.log(prev.linf / row.linf) / r
        row.order_l2 = math.log(prev.l2 / row.l2) / r
    return rows


def convergence_csv(rows: list[ConvergenceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "dofs", "linf", "l2", "order_linf", "order_l2"])
    for r in rows:
        w.writerow([f"{r.h:.17g}", r.dofs, f"{r.linf:.17g}", f"{r.l2:.17g}",
                    "" if r.order_linf is None else f"{r.order_linf:.17g}",
                    "" if r.order_l2 is None else f"{r.order_l2:.17g}"])
    return buf.getvalue()


def solution_csv(u: ScalarField, grad: GradientField | None = None) -> str:
    """CSV with columns ``vertex_id,x,y,u,du_x,du_y``."""
    grad = recover_gradient(u) if grad is None else grad
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vertex_id", "x", "y", "u", "du_x", "du_y"])
    for i, (p, val, g) in enumerate(zip(u.mesh.vertices, u.values, grad.values)):
        w.writerow([i] + [f"{v:.17g}" for v in (p[0], p[1], val, g[0], g[1])])
    return buf.getvalue()
