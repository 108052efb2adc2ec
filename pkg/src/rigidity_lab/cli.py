"""Command line pipeline: build a scenario, run a suite, write reports.

Every subcommand resolves a :class:`SuiteConfig` from defaults, an optional
JSON config file and command line flags (flags win), builds the scenario
geometry and writes its reports into the output directory. Reports embed the
resolved configuration and its hash, carry no timings, and serialize floats
with 17 significant digits, so identical configurations produce identical
files.

Exit codes: 0 when every asserted check passes, 1 when one fails, 2 for
invalid input, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cmc import (compute_geometry, conormal_frame, enclosed_volume, gluing_report, jellett_test,
                  minkowski_check, montiel_ros_bound, position_laplacian_identity, cap_fit_classify,
                  umbilicity_deficit)
from .cone import ConeSpec
from .errors import (DegenerateStar, NotStarshaped, OutOfRangeParameter, RigidityLabError,
                     SolverError)
from .identities import effective_c, identity_suite, rigidity_detect
from .mesh.off import format_off, load_off
from .mesh.quality import validate
from .mesh.surface import SurfaceMesh, mesh_perturbed_cap, mesh_spherical_cap
from .mesh.volume import GAMMA, CircularArc, VolumeMesh, mesh_sector_domain, perturbed_rho
from .poisson import convergence_csv, convergence_study, solution_csv, solve_mixed
from .reports import IdentityReport, isoperimetric_report, reports_csv, to_jsonable

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

SCENARIOS = ("sector", "perturbed_domain", "cap", "perturbed_cap", "wedge_hemisphere", "custom_mesh")
VOLUME_SCENARIOS = ("sector", "perturbed_domain")
SURFACE_SCENARIOS = ("cap", "perturbed_cap", "wedge_hemisphere")
COMMANDS = ("solve", "identities", "surface", "sweep", "mesh", "convergence")

_DEFAULT_CONE = {
    "sector": "angle:1.5707963267948966",
    "perturbed_domain": "angle:1.5707963267948966",
    "cap": "circular:0.78539816339744828",
    "perturbed_cap": "circular:0.78539816339744828",
    "wedge_hemisphere": "wedge:1.5707963267948966",
}


class ConfigError(OutOfRangeParameter):
    pass


@dataclass
class SuiteConfig:
    scenario: str = "sector"
    cone: str | None = None
    h: float = 0.05
    R: float | None = None
    c: float | None = None
    eps: float | None = None
    mode: int | None = None
    seed: int | None = None
    tol_scale: float = 1.0
    out: str = "out"
    mesh: str | None = None
    h_list: list = field(default_factory=lambda: [0.04, 0.02, 0.01])

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if not (isinstance(self.h, (int, float)) and 0 < self.h <= 0.5):
            raise ConfigError(f"h={self.h} not in (0, 0.5]")
        for h in self.h_list:
            if not 0 < h <= 0.5:
                raise ConfigError(f"h={h} in h_list not in (0, 0.5]")
        if self.R is not None and self.R <= 0:
            raise ConfigError("R must be positive")
        if self.c is not None and self.c <= 0:
            raise ConfigError("c must be positive")
        if self.mode is not None and self.mode < 1:
            raise ConfigError("mode must be a positive integer")
        if not self.tol_scale > 0:
            raise ConfigError("tol_scale must be positive")
        if self.scenario == "custom_mesh" and not self.mesh:
            raise ConfigError("custom_mesh needs --mesh PATH")


def _config_from_mapping(data: dict) -> dict:
    known = {f.name for f in fields(SuiteConfig)} | {"scenarios"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return dict(data)


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return _config_from_mapping(data)


@dataclass(frozen=True)
class Resolved:
    """Fully specified scenario with every default filled in."""

    config: SuiteConfig
    cone: ConeSpec | None
    R: float
    eps: float
    mode: int
    phase: float

    def as_dict(self) -> dict:
        d = asdict(self.config)
        d.pop("out")
        d.update({"cone": None if self.cone is None else self.cone.to_dict(), "R": self.R,
                  "eps": self.eps, "mode": self.mode, "phase": self.phase})
        return to_jsonable(d)

    @property
    def hash(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def resolve(cfg: SuiteConfig) -> Resolved:
    cfg.validate()
    s = cfg.scenario
    if cfg.cone is not None:
        cone = ConeSpec.parse(cfg.cone)
    elif s in _DEFAULT_CONE:
        cone = ConeSpec.parse(_DEFAULT_CONE[s])
    else:
        cone = None
    volume = s in VOLUME_SCENARIOS
    if cfg.c is not None:
        dim = cone.dim if cone is not None else 2
        R = dim * cfg.c
    elif cfg.R is not None:
        R = float(cfg.R)
    else:
        R = 0.5 if s == "wedge_hemisphere" else 1.0
    eps, mode, phase = 0.0, 0, 0.0
    if s in ("perturbed_domain", "perturbed_cap"):
        eps = cfg.eps if cfg.eps is not None else (0.2 if volume else 0.1)
        mode = cfg.mode if cfg.mode is not None else (2 if volume else 3)
        if cfg.seed is not None:
            phase = float(np.random.default_rng(cfg.seed).uniform(0.0, 2.0 * math.pi / mode))
    return Resolved(cfg, cone, float(R), float(eps), int(mode), phase)


# -- scenario geometry ------------------------------------------------------
def build_mesh(res: Resolved):
    s = res.config.scenario
    h = res.config.h
    cone = res.cone
    if s == "custom_mesh":
        mesh = load_off(res.config.mesh)
        if cone is not None:
            if isinstance(mesh, VolumeMesh):
                mesh = VolumeMesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, mesh.edge_tags,
                                  mesh.apex_vertex, cone, mesh.meta)
            else:
                mesh = SurfaceMesh(mesh.vertices, mesh.cells, mesh.boundary_vertices, mesh.boundary_faces,
                                   cone, mesh.meta)
        if mesh.cone is None:
            raise ConfigError("the mesh file has no cone; pass --cone")
        return mesh
    if s in VOLUME_SCENARIOS:
        if cone.dim != 2:
            raise ConfigError(f"scenario {s} needs a planar cone (angle:THETA0)")
        if s == "sector":
            return mesh_sector_domain(cone, CircularArc(res.R, (0.0, 0.0)), h)
        return mesh_sector_domain(cone, perturbed_rho(res.eps, res.mode, res.R, res.phase), h)
    if cone.dim != 3:
        raise ConfigError(f"scenario {s} needs a cone in space (circular:ALPHA or wedge:BETA)")
    if s == "wedge_hemisphere":
        if cone.kind != "wedge":
            raise ConfigError("wedge_hemisphere needs a wedge cone")
        return mesh_spherical_cap(cone, res.R, (2.0 * res.R, 0.0, 0.0), h)
    base = mesh_spherical_cap(cone, res.R, (0.0, 0.0, 0.0), h)
    if s == "perturbed_cap":
        return mesh_perturbed_cap(base, res.eps, res.mode, res.phase)
    return base


def _volume_mesh(res: Resolved) -> VolumeMesh:
    mesh = build_mesh(res)
    if not isinstance(mesh, VolumeMesh):
        raise ConfigError(f"scenario {res.config.scenario} does not describe a sector-like domain")
    return mesh


def _surface_mesh(res: Resolved) -> SurfaceMesh:
    mesh = build_mesh(res)
    if not isinstance(mesh, SurfaceMesh) or mesh.dim_ambient != 3:
        raise ConfigError(f"scenario {res.config.scenario} does not describe a surface in space")
    return mesh


def _envelope(command: str, res: Resolved, body: dict) -> str:
    doc = {"command": command, "version": __version__, "config": res.as_dict(),
           "config_hash": res.hash, "seed": res.config.seed}
    doc.update(body)
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _status(reports) -> int:
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# -- commands ---------------------------------------------------------------
def cmd_solve(res: Resolved):
    mesh = _volume_mesh(res)
    u, rep = solve_mixed(mesh)
    body = {"solve": rep.to_dict(), "mesh": _mesh_summary(mesh)}
    files = {"solution.csv": solution_csv(u), "solve_report.json": _envelope("solve", res, body)}
    return EXIT_OK, files


def _mesh_summary(mesh) -> dict:
    q = validate(mesh)
    return {"n_vertices": q.n_vertices, "n_cells": q.n_cells, "h_max": q.h_max,
            "min_angle": q.min_angle, "quality_pass": q.passed}


def cmd_identities(res: Resolved):
    mesh = _volume_mesh(res)
    u, rep = solve_mixed(mesh)
    ts = res.config.tol_scale
    reports = identity_suite(u, ts)
    ec = effective_c(u)
    gamma_len = float(np.sum(mesh.edge_lengths(mesh.edges_with_tag(GAMMA))))
    sector = res.config.scenario == "sector"
    reports.append(isoperimetric_report(mesh.cone, gamma_len, mesh.area, 2e-2 * ts, equality=sector))
    verdict = rigidity_detect(u)
    body = {
        "solve": rep.to_dict(),
        "mesh": _mesh_summary(mesh),
        "effective_c": asdict(ec),
        "rigidity": verdict.to_dict(),
        "reports": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
    }
    files = {"identities.json": _envelope("identities", res, body), "identities.csv": reports_csv(reports)}
    return _status(reports), files


def _surface_suite(res: Resolved):
    mesh = _surface_mesh(res)
    ts = res.config.tol_scale
    geo = compute_geometry(mesh)
    frame = conormal_frame(mesh, geo)
    reports = [minkowski_check(geo, frame, 2e-2 * ts), position_laplacian_identity(geo, 5e-2 * ts)]
    umb = umbilicity_deficit(geo, 1e-2 * ts)
    umb.informational = True
    reports.append(umb)
    try:
        jell = jellett_test(geo, frame, 1e-2 * ts).to_dict()
        umbilic = jell["umbilic"] if jell["applicable"] else None
    except NotStarshaped as exc:
        jell = {"applicable": False, "reason": str(exc)}
        umbilic = None
    if umbilic is None:
        umbilic = bool(umb.rel_residual <= umb.tol)
    sweep = montiel_ros_bound(mesh, geo, tol=2e-2 * ts)
    reports.append(IdentityReport("montiel_ros_volume", sweep.volume, sweep.sweep_bound, sweep.tol,
                                  kind="le", scale=sweep.volume, informational=not sweep.convex_cone))
    if sweep.cmc:
        reports.append(IdentityReport("montiel_ros_area", sweep.sweep_bound, sweep.area_bound, sweep.tol,
                                      kind="le", scale=sweep.area_bound, informational=not sweep.convex_cone))
    reports.append(isoperimetric_report(mesh.cone, mesh.area, enclosed_volume(mesh), 2e-2 * ts))
    fit = cap_fit_classify(mesh, geo)
    lam_min = float(geo.support.min())
    summary = {
        "mesh": _mesh_summary(mesh),
        "H0": geo.H0,
        "H_spread": geo.H_spread,
        "H_range": [float(geo.H.min()), float(geo.H.max())],
        "lambda_min": lam_min,
        "starshaped": lam_min > 0,
        "umbilic": umbilic,
    }
    return mesh, geo, frame, reports, sweep, jell, fit, summary


def cmd_surface(res: Resolved):
    mesh, geo, frame, reports, sweep, jell, fit, summary = _surface_suite(res)
    body = {
        "summary": summary,
        "gluing": gluing_report(frame, geo).to_dict(),
        "jellett": jell,
        "sweep": sweep.to_dict(),
        "case": fit.to_dict(),
        "reports": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
    }
    files = {"surface.json": _envelope("surface", res, body), "surface.csv": reports_csv(reports),
             "geometry.csv": geo.to_csv()}
    return _status(reports), files


def cmd_sweep(res: Resolved):
    mesh = _surface_mesh(res)
    geo = compute_geometry(mesh)
    sweep = montiel_ros_bound(mesh, geo, tol=2e-2 * res.config.tol_scale)
    iso = isoperimetric_report(mesh.cone, mesh.area, sweep.volume, 2e-2 * res.config.tol_scale)
    body = {"sweep": sweep.to_dict(), "isoperimetric": iso.to_dict(),
            "pass": bool(sweep.passed and iso.passed)}
    return (EXIT_OK if body["pass"] else EXIT_FAIL), {"sweep.json": _envelope("sweep", res, body)}


def cmd_mesh(res: Resolved):
    mesh = build_mesh(res)
    q = validate(mesh)
    body = {"quality": q.to_dict()}
    files = {"mesh.off": format_off(mesh), "quality.json": _envelope("mesh", res, body)}
    return (EXIT_OK if q.passed else EXIT_FAIL), files


def cmd_convergence(res: Resolved):
    if res.config.scenario != "sector":
        raise ConfigError("convergence studies need the sector scenario (exact solution known)")
    cone = res.cone
    if cone.dim != 2:
        raise ConfigError("convergence studies need a planar cone")
    rows = convergence_study(cone, res.config.h_list, res.R)
    body = {"rows": [asdict(r) for r in rows]}
    files = {"convergence.csv": convergence_csv(rows),
             "convergence.json": _envelope("convergence", res, body)}
    return EXIT_OK, files


_COMMANDS = {"solve": cmd_solve, "identities": cmd_identities, "surface": cmd_surface,
             "sweep": cmd_sweep, "mesh": cmd_mesh, "convergence": cmd_convergence}


def run(command: str, cfg: SuiteConfig, out_dir: Path | None = None):
    """Run one scenario; returns ``(exit_code, message)`` and writes its files."""
    try:
        res = resolve(cfg)
        code, files = _COMMANDS[command](res)
    except (SolverError, DegenerateStar, np.linalg.LinAlgError, FloatingPointError) as exc:
        return EXIT_NUMERIC, f"numerical failure: {exc}"
    except (RigidityLabError, ValueError, KeyError, OSError) as exc:
        return EXIT_INPUT, f"input error: {exc}"
    out = Path(cfg.out) if out_dir is None else out_dir
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    status = "pass" if code == EXIT_OK else "fail"
    return code, f"{command} {cfg.scenario}: {status} -> {out}"


def _threads() -> int:
    raw = os.environ.get("RIGIDITY_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"RIGIDITY_LAB_THREADS={raw!r} is not an integer") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rigidity-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file; flags override its values")
        s.add_argument("--scenario", help="scenario name, or a comma separated batch")
        s.add_argument("--cone", help="kind:angle, e.g. angle:1.5708, circular:0.7854, wedge:1.5708")
        s.add_argument("--h", type=float, help="target edge length in (0, 0.5]")
        s.add_argument("--R", type=float, help="sector or sphere radius")
        s.add_argument("--c", type=float, help="Neumann constant; sets R = N c")
        s.add_argument("--eps", type=float, help="perturbation amplitude")
        s.add_argument("--mode", type=int, help="perturbation angular frequency")
        s.add_argument("--seed", type=int, help="seed for the perturbation phase")
        s.add_argument("--out", help="output directory")
        s.add_argument("--tol-scale", dest="tol_scale", type=float, help="multiplier on all tolerances")
        s.add_argument("--mesh", help="OFF file for the custom_mesh scenario")
        s.add_argument("--h-list", dest="h_list", help="comma separated mesh sizes for convergence")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config) if args.config else {}
        for key in ("scenario", "cone", "h", "R", "c", "eps", "mode", "seed", "out", "tol_scale", "mesh"):
            value = getattr(args, key)
            if value is not None:
                data[key] = value
        if args.h_list:
            data["h_list"] = [float(v) for v in args.h_list.split(",")]
        scenarios = data.pop("scenarios", None)
        if isinstance(data.get("scenario"), str) and "," in data["scenario"]:
            scenarios = data.pop("scenario").split(",")
        base = SuiteConfig(**data)
        threads = _threads()
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    if not scenarios:
        code, msg = run(args.command, base)
        print(msg, file=sys.stdout if code < EXIT_INPUT else sys.stderr)
        return code
    jobs = []
    for name in scenarios:
        cfg = SuiteConfig(**{**asdict(base), "scenario": name.strip()})
        jobs.append((cfg, Path(base.out) / name.strip()))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda job: run(args.command, *job), jobs))
    for code, msg in results:
        print(msg, file=sys.stdout if code < EXIT_INPUT else sys.stderr)
    return max(code for code, _ in results)


if __name__ == "__main__":
    raise SystemExit(main())
