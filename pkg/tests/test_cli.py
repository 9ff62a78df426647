import csv
import json

import pytest

from boltzkit.cli import (EXIT_FAIL, EXIT_PASS, EXIT_USAGE, ScenarioError,
                          main, parse_scenario)

BASE = {
    "kernel": {"dimension": 3, "beta": 1.0, "profile": "isotropic"},
    "grid": {"vmax": 4.0, "n": 7},
    "initial": {"kind": "scaled-maxwellian", "a": 1.0, "scale": 0.5},
    "time": {"steps": 10, "cadence": 1},
}


def _write(tmp_path, payload, name="scen.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _scen(tmp_path, **over):
    payload = {k: dict(v) for k, v in BASE.items()}
    for sec, vals in over.items():
        payload.setdefault(sec, {})
        payload[sec] = {**payload.get(sec, {}), **vals} \
            if isinstance(vals, dict) else vals
    return _write(tmp_path, payload)


# ----------------------------------------------------------------------
# scenario parsing


def test_parse_defaults(tmp_path):
    scenario, binputs, vsec, echo = parse_scenario(_scen(tmp_path))
    assert scenario.steps == 10
    assert scenario.dt is None and scenario.dt_nu == 0.25
    assert scenario.grid.n == 7
    assert binputs is None
    assert vsec["k_table_max"] == 50
    assert echo["time"]["steps"] == 10


def test_parse_schema_rejections(tmp_path):
    with pytest.raises(ScenarioError, match="unknown top-level"):
        parse_scenario(_write(tmp_path, {**BASE, "bogus": {}}))
    with pytest.raises(ScenarioError, match="unknown key 'nn'"):
        parse_scenario(_scen(tmp_path, grid={"nn": 5}))
    with pytest.raises(ScenarioError, match=r"beta must lie in \(0,1\]"):
        parse_scenario(_scen(tmp_path, kernel={"beta": 1.5}))
    with pytest.raises(ScenarioError, match="alpha < d-1"):
        parse_scenario(_scen(tmp_path, kernel={"profile": "power_singular",
                                               "alpha": 2.5}))
    with pytest.raises(ScenarioError, match="requires key 'a'"):
        parse_scenario(_scen(tmp_path, initial={"kind": "maxwellian",
                                                "a": None}))
    with pytest.raises(ScenarioError, match="requires key 'rho0'"):
        parse_scenario(_scen(tmp_path, barrier={"a0": 1.0, "a1": 0.5,
                                                "C1": 1.0, "C0": 1.0,
                                                "a": 0.25}))
    with pytest.raises(ScenarioError, match="not valid JSON"):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        parse_scenario(str(bad))
    with pytest.raises(ScenarioError, match="cannot read"):
        parse_scenario(str(tmp_path / "missing.json"))


def test_parse_barrier_section(tmp_path):
    path = _scen(tmp_path, barrier={"a0": 1.0, "a1": 0.5, "C1": 8.0,
                                    "rho0": 1.0, "C0": 1.0, "a": 0.25})
    _, binputs, _, _ = parse_scenario(path)
    assert binputs is not None
    assert binputs.a == 0.25 and binputs.c1 == 0.0


# ----------------------------------------------------------------------
# subcommands end to end (coarse grids for speed)


def test_cli_kernel_table(tmp_path):
    out = tmp_path / "out"
    code = main(["kernel-table", "--scenario", _scen(tmp_path),
                 "--out", str(out)])
    assert code == EXIT_PASS
    with open(out / "kernel_table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 51
    assert float(rows[1]["a_k"]) == pytest.approx(1.0, abs=1e-12)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["passed"] is True


def test_cli_run_and_moments_verify(tmp_path):
    out = tmp_path / "out"
    scen = _scen(tmp_path)
    code = main(["run", "--scenario", scen, "--out", str(out)])
    assert code == EXIT_PASS
    assert (out / "field.bin").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["conservation_ok"] is True
    assert manifest["status"] == "ok"
    with open(out / "diagnostics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    assert {"t", "m0", "m1", "H", "sup_ratio", "min_f"} <= set(rows[0])
    assert any(c.startswith("z_") for c in rows[0])

    code = main(["moments-verify", "--scenario", scen, "--out", str(out),
                 "--diagnostics", str(out / "diagnostics.csv")])
    assert code in (EXIT_PASS, EXIT_FAIL)
    cert = json.loads((out / "certificate.json").read_text())
    assert "certificate" in cert and "passed" in cert


def test_cli_moments_verify_missing_diagnostics(tmp_path):
    code = main(["moments-verify", "--scenario", _scen(tmp_path),
                 "--out", str(tmp_path / "empty")])
    assert code == EXIT_USAGE


def test_cli_barrier(tmp_path):
    out = tmp_path / "outb"
    scen = _scen(tmp_path, barrier={
        "a0": 1.0, "c0": -0.6931471805599453, "a1": 0.5, "c1": 0.0,
        "C1": 8.27, "rho0": 2.5, "C0": 0.5, "a": 0.25})
    code = main(["barrier", "--scenario", scen, "--out", str(out)])
    assert code == EXIT_PASS
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["passed"] is True
    assert cert["certificate"]["R"] > 0


def test_cli_barrier_requires_section(tmp_path):
    code = main(["barrier", "--scenario", _scen(tmp_path),
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_USAGE


def test_cli_collision_check_plumbing(tmp_path):
    out = tmp_path / "outc"
    scen = _scen(tmp_path, verify={"representation": "both"})
    # coarse grid: relax the tolerance so the plumbing, not the grid, is
    # under test
    code = main(["collision-check", "--scenario", scen, "--out", str(out),
                 "--tolerance-scale", "10"])
    assert code == EXIT_PASS
    report = json.loads((out / "certificate.json").read_text())
    assert "representation_residual" in report
    assert report["skip_count"] >= 0


def test_cli_collision_check_bad_representation(tmp_path):
    scen = _scen(tmp_path, verify={"representation": "bogus"})
    code = main(["collision-check", "--scenario", scen,
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_USAGE


def test_cli_usage_errors(tmp_path):
    assert main(["frobnicate", "--scenario", "x"]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["run", "--scenario", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path)]) == EXIT_USAGE
