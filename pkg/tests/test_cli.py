import json

import pytest

from rigidity_lab.cli import SuiteConfig, load_config, main, resolve
from rigidity_lab.errors import OutOfRangeParameter


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def _json(path):
    return json.loads(path.read_text())


def test_solve_sector(tmp_path):
    assert _run(tmp_path, "solve", "--cone", "angle:1.5708", "--scenario", "sector", "--R", "1", "--h", "0.02") == 0
    rep = _json(tmp_path / "solve_report.json")
    assert rep["solve"]["dofs"] > 1000
    assert rep["solve"]["residual"] <= 1e-10
    header = (tmp_path / "solution.csv").read_text().splitlines()[0]
    assert header == "vertex_id,x,y,u,du_x,du_y"


def test_solve_rejects_large_h(tmp_path):
    assert _run(tmp_path, "solve", "--scenario", "sector", "--h", "0.9") == 2


def test_solve_non_convex_warns(tmp_path):
    assert _run(tmp_path, "solve", "--cone", "angle:4.7124", "--scenario", "sector", "--h", "0.05") == 0
    warnings = _json(tmp_path / "solve_report.json")["solve"]["warnings"]
    assert any("convex" in w for w in warnings)


def test_identities_sector_all_pass(tmp_path):
    assert _run(tmp_path, "identities", "--scenario", "sector", "--h", "0.04") == 0
    rep = _json(tmp_path / "identities.json")
    assert rep["pass"] and all(r["pass"] for r in rep["reports"])
    assert rep["rigidity"]["is_spherical_sector"]
    lines = (tmp_path / "identities.csv").read_text().splitlines()
    assert lines[0] == "name,lhs,rhs,rel_residual,tol,pass"


def test_identities_perturbed_domain(tmp_path):
    assert _run(tmp_path, "identities", "--scenario", "perturbed_domain", "--h", "0.04") == 0
    rep = _json(tmp_path / "identities.json")
    reports = {r["name"]: r for r in rep["reports"]}
    assert reports["energy"]["pass"] and not reports["energy"]["informational"]
    assert rep["rigidity"]["is_spherical_sector"] is False


def test_identities_non_convex_marks_sign_checks(tmp_path):
    assert _run(tmp_path, "identities", "--scenario", "sector", "--cone", "angle:4.7124", "--h", "0.05") == 0
    reports = {r["name"]: r for r in _json(tmp_path / "identities.json")["reports"]}
    assert reports["gamma1_flux_sign"]["informational"]


@pytest.mark.parametrize("scenario,umbilic,case", [
    ("cap", True, "CenterAtApex"),
    ("wedge_hemisphere", True, "HalfSphereOnFlatFace"),
    ("perturbed_cap", False, None),
])
def test_surface_scenarios(tmp_path, scenario, umbilic, case):
    assert _run(tmp_path, "surface", "--scenario", scenario) == 0
    rep = _json(tmp_path / "surface.json")
    assert rep["summary"]["umbilic"] is umbilic
    got = rep["case"]["case"]
    assert (got["kind"] if got else None) == case
    if scenario == "perturbed_cap":
        assert rep["sweep"]["volume"] < rep["sweep"]["sweep_bound"]
    assert (tmp_path / "geometry.csv").read_text().startswith("vertex_id,x,y,z,nu_x,nu_y,nu_z,H,k1,k2,lambda")


def test_sweep_and_mesh_commands(tmp_path):
    assert _run(tmp_path, "sweep", "--scenario", "cap", "--h", "0.1") == 0
    assert _json(tmp_path / "sweep.json")["pass"]
    assert _run(tmp_path, "mesh", "--scenario", "perturbed_domain", "--h", "0.1") == 0
    assert (tmp_path / "mesh.off").read_text().startswith("OFF")
    assert _json(tmp_path / "quality.json")["quality"]["pass"]


def test_mesh_self_intersection_is_input_error(tmp_path):
    assert _run(tmp_path, "mesh", "--scenario", "perturbed_cap", "--eps", "0.5") == 2


def test_convergence_command(tmp_path):
    assert _run(tmp_path, "convergence", "--scenario", "sector", "--h-list", "0.08,0.04") == 0
    assert (tmp_path / "convergence.csv").read_text().splitlines()[0] == "h,dofs,linf,l2,order_linf,order_l2"


def test_custom_mesh_round_trip(tmp_path):
    assert _run(tmp_path / "a", "mesh", "--scenario", "sector", "--h", "0.1") == 0
    off = tmp_path / "a" / "mesh.off"
    assert _run(tmp_path / "b", "solve", "--scenario", "custom_mesh", "--mesh", str(off)) == 0
    assert _run(tmp_path / "c", "solve", "--scenario", "custom_mesh", "--mesh", str(tmp_path / "none.off")) == 2


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "sector", "h": 0.1, "seed": 7}))
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg), "--h", "0.08", "--out", str(out)]) == 0
    rep = _json(out / "solve_report.json")
    assert rep["config"]["h"] == 0.08 and rep["seed"] == 7
    cfg.write_text(json.dumps({"scenario": "sector", "bogus": 1}))
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 2


def test_unknown_config_key_raises(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"hh": 0.1}')
    with pytest.raises(OutOfRangeParameter):
        load_config(cfg)


def test_seed_sets_the_phase():
    a = resolve(SuiteConfig(scenario="perturbed_domain", seed=3))
    b = resolve(SuiteConfig(scenario="perturbed_domain", seed=3))
    c = resolve(SuiteConfig(scenario="perturbed_domain"))
    assert a.phase == b.phase and 0 < a.phase < 3.2
    assert c.phase == 0.0 and c.eps == 0.2 and c.mode == 2


def test_c_sets_the_radius():
    assert resolve(SuiteConfig(scenario="cap", c=0.5)).R == 1.5


def test_batch_runs_each_scenario(tmp_path, monkeypatch):
    monkeypatch.setenv("RIGIDITY_LAB_THREADS", "2")
    assert _run(tmp_path, "solve", "--scenario", "sector,perturbed_domain", "--h", "0.1") == 0
    assert (tmp_path / "sector" / "solve_report.json").exists()
    assert (tmp_path / "perturbed_domain" / "solve_report.json").exists()


@pytest.mark.parametrize("command,scenario", [("identities", "perturbed_domain"), ("surface", "perturbed_cap")])
def test_determinism(tmp_path, command, scenario):
    for run in ("a", "b"):
        assert _run(tmp_path / run, command, "--scenario", scenario, "--h", "0.08", "--seed", "11") in (0, 1)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
