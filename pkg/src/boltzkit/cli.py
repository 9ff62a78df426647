"""Command-line driver: scenario ingestion, subcommand dispatch, and
machine-readable report emission.

Subcommands: run, barrier, moments-verify, collision-check, kernel-table.
Scenario files are JSON with sections kernel, grid, initial, time, barrier,
verify; unknown keys are rejected by name.  Exit codes: 0 all checks pass,
1 a check failed, 2 usage or schema error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time as _time
from typing import Optional

import numpy as np

from . import __version__
from .barrier import (BarrierError, BarrierInputs, build_barrier,
                      check_barrier_inequality)
from .collision import (CollisionError, collision_frequency,
                        make_angular_quadrature, make_plane_quadrature,
                        q_plus_carleman, q_plus_sigma)
from .fields import FieldError, MaxwellianParams, build_grid, save_field
from .kernel import KernelError, KernelSpec, ak_closed_form, compute_ak, \
    normalize_kernel
from .moments import (MomentError, choose_certificate_constants,
                      system_constants, verify_geometric_bound)
from .solver import (InitialCondition, Scenario, SolverAbort, SolverError,
                     run as run_scenario)

__all__ = ["main", "parse_scenario", "ScenarioError"]

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class ScenarioError(ValueError):
    """Raised for scenario schema violations."""


def _section(raw: dict, name: str, allowed: dict, required=()) -> dict:
    """Validate one scenario section against its schema; returns the section
    with defaults applied.  allowed maps key -> default."""
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ScenarioError(f"section {name!r} must be an object")
    for key in sec:
        if key not in allowed:
            raise ScenarioError(f"unknown key {key!r} in section {name!r}")
    for key in required:
        if key not in sec:
            raise ScenarioError(f"section {name!r} requires key {key!r}")
    out = dict(allowed)
    out.update(sec)
    return out


def _maxwellian(entry, where: str) -> MaxwellianParams:
    if not isinstance(entry, dict):
        raise ScenarioError(f"{where} must be an object with keys a, b, c")
    for key in entry:
        if key not in ("a", "b", "c"):
            raise ScenarioError(f"unknown key {key!r} in {where}")
    if "a" not in entry:
        raise ScenarioError(f"{where} requires key 'a'")
    return MaxwellianParams(a=float(entry["a"]),
                            b=tuple(entry.get("b", ())),
                            c=float(entry.get("c", 0.0)))


def parse_scenario(path: str):
    """Read and validate a scenario file; returns (Scenario, barrier inputs
    or None, verify section, echo dict)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}")
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ScenarioError("scenario root must be an object")
    for key in raw:
        if key not in ("kernel", "grid", "initial", "time", "barrier", "verify"):
            raise ScenarioError(f"unknown top-level section {key!r}")

    ker = _section(raw, "kernel",
                   {"dimension": 3, "beta": 1.0, "profile": "isotropic",
                    "alpha": 0.0, "table_path": None})
    dim = int(ker["dimension"])
    if not 0.0 < float(ker["beta"]) <= 1.0:
        raise ScenarioError("beta must lie in (0,1]")
    if ker["profile"] == "power_singular" and float(ker["alpha"]) >= dim - 1:
        raise ScenarioError("alpha < d-1 required")
    table_z = table_h = None
    if ker["table_path"] is not None:
        if not os.path.exists(ker["table_path"]):
            raise ScenarioError(f"kernel table file not found: {ker['table_path']}")
        data = np.loadtxt(ker["table_path"], delimiter=",")
        table_z, table_h = data[:, 0], data[:, 1]
    spec = KernelSpec(dimension=dim, beta=float(ker["beta"]),
                      profile=str(ker["profile"]), alpha=float(ker["alpha"]),
                      table_z=table_z, table_h=table_h)

    gsec = _section(raw, "grid", {"vmax": 6.0, "n": 11})
    grid = build_grid(dim, float(gsec["vmax"]), int(gsec["n"]))

    isec = _section(raw, "initial",
                    {"kind": "maxwellian", "a": None, "b": (), "c": 0.0,
                     "scale": 1.0, "second": None, "path": None})
    kind = str(isec["kind"])
    maxw = None
    if isec["a"] is not None:
        maxw = MaxwellianParams(a=float(isec["a"]), b=tuple(isec["b"]),
                                c=float(isec["c"]))
    second = _maxwellian(isec["second"], "initial.second") \
        if isec["second"] is not None else None
    if kind == "file":
        if isec["path"] is None or not os.path.exists(str(isec["path"])):
            raise ScenarioError("initial.path must name an existing field file")
    elif maxw is None:
        raise ScenarioError("initial requires key 'a' for Maxwellian kinds")
    initial = InitialCondition(kind=kind, maxwellian=maxw,
                               scale=float(isec["scale"]), second=second,
                               path=isec["path"])

    tsec = _section(raw, "time",
                    {"steps": 100, "dt": None, "dt_nu": 0.25, "cadence": 1,
                     "project": True, "k_max": 6.0, "b_norm": 0.5,
                     "n_z": 4, "n_phi": 4})

    binputs = None
    if "barrier" in raw:
        bsec = _section(raw, "barrier",
                        {"a0": None, "c0": 0.0, "a1": None, "c1": 0.0,
                         "C1": None, "rho0": None, "C0": None, "a": None},
                        required=("a0", "a1", "C1", "rho0", "C0", "a"))
        binputs = BarrierInputs(a0=float(bsec["a0"]), c0=float(bsec["c0"]),
                                a1=float(bsec["a1"]), c1=float(bsec["c1"]),
                                C1=float(bsec["C1"]), rho0=float(bsec["rho0"]),
                                C0=float(bsec["C0"]), a=float(bsec["a"]))

    vsec = _section(raw, "verify",
                    {"seed": 0, "k_star": None, "delta": 0.02,
                     "representation": "both", "k_table_max": 50})

    scenario = Scenario(kernel=spec, grid=grid, initial=initial,
                        steps=int(tsec["steps"]),
                        dt=None if tsec["dt"] is None else float(tsec["dt"]),
                        dt_nu=float(tsec["dt_nu"]),
                        project=bool(tsec["project"]),
                        cadence=int(tsec["cadence"]),
                        k_max=float(tsec["k_max"]),
                        b_norm=float(tsec["b_norm"]),
                        barrier=binputs, n_z=int(tsec["n_z"]),
                        n_phi=int(tsec["n_phi"]))
    echo = {"kernel": ker, "grid": gsec, "initial": isec, "time": tsec,
            "barrier": raw.get("barrier"), "verify": vsec}
    return scenario, binputs, vsec, echo


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _json_ready(dataclasses.asdict(obj))
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_json_ready(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(out_dir, echo, args, extra):
    payload = {
        "version": __version__,
        "numpy": np.__version__,
        "scenario": echo,
        "seed": args.seed,
        "tolerance_scale": args.tolerance_scale,
        "workers": args.workers,
    }
    payload.update(extra)
    _write_json(os.path.join(out_dir, "manifest.json"), payload)


def _cmd_run(scenario, echo, args, out_dir) -> int:
    tol = 1e-12 * args.tolerance_scale
    try:
        result = run_scenario(scenario)
    except SolverAbort as exc:
        _manifest(out_dir, echo, args, {"status": "numeric-abort",
                                        "message": str(exc)})
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    ks = sorted(result.records[0].z)
    header = (["t", "m0", "m1", "H", "sup_ratio", "min_f"]
              + [f"z_{k:g}" for k in ks])
    with open(os.path.join(out_dir, "diagnostics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in result.records:
            writer.writerow([rec.t, rec.m0, rec.m1, rec.h, rec.sup_ratio,
                             rec.min_f] + [rec.z[k] for k in ks])
    save_field(os.path.join(out_dir, "field.bin"), scenario.grid,
               result.state.f)
    drift_ok = (not scenario.project
                or (result.state.mass_drift <= tol
                    and result.state.energy_drift <= tol))
    _manifest(out_dir, echo, args, {
        "status": "ok",
        "elapsed_s": result.elapsed,
        "steps": result.state.step_index,
        "mass_drift": result.state.mass_drift,
        "energy_drift": result.state.energy_drift,
        "drift_tolerance": tol,
        "clamp_count": result.state.clamp_count,
        "conservation_ok": drift_ok,
    })
    print(f"run: {result.state.step_index} steps in {result.elapsed:.1f}s, "
          f"mass drift {result.state.mass_drift:.2e}, "
          f"clamps {result.state.clamp_count}")
    return EXIT_PASS if drift_ok else EXIT_FAIL


def _cmd_barrier(scenario, binputs, echo, args, out_dir) -> int:
    if binputs is None:
        raise ScenarioError("barrier subcommand requires a 'barrier' section")
    kernel = normalize_kernel(scenario.kernel)
    f0 = scenario.initial.realize(scenario.grid)
    cert = build_barrier(binputs, kernel, f=f0, grid=scenario.grid)
    report = check_barrier_inequality(f0, cert, kernel, scenario.grid)
    payload = {
        "certificate": cert,
        "report": report,
        "tolerances": {"tail_delta": 0.02 * args.tolerance_scale,
                       "tail_eta_scale": 1e-10},
        "passed": report.passed,
    }
    _write_json(os.path.join(out_dir, "certificate.json"), payload)
    _manifest(out_dir, echo, args, {"status": "ok", "passed": report.passed})
    print(f"barrier: R={cert.R:.4g} c={cert.c:.4g} "
          f"fitted R={cert.r_fitted} passed={report.passed}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def _cmd_moments_verify(scenario, vsec, echo, args, out_dir,
                        diagnostics: Optional[str]) -> int:
    path = diagnostics or os.path.join(out_dir, "diagnostics.csv")
    if not os.path.exists(path):
        raise ScenarioError(f"diagnostics file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ScenarioError("diagnostics file has no rows")
    z_cols = [c for c in rows[0] if c.startswith("z_")]
    times = np.array([float(r["t"]) for r in rows])
    series = {float(c[2:]): np.array([float(r[c]) for r in rows])
              for c in z_cols}
    kernel = normalize_kernel(scenario.kernel)
    f0 = scenario.initial.realize(scenario.grid)
    consts = system_constants(kernel, f0, scenario.grid,
                              b_norm=scenario.b_norm, k_max=scenario.k_max,
                              k_star=vsec.get("k_star"))
    z0 = {k: v[0] for k, v in series.items()}
    C, q = choose_certificate_constants(z0, consts)
    cert = verify_geometric_bound(times, series, consts, C, q)
    _write_json(os.path.join(out_dir, "certificate.json"),
                {"certificate": cert,
                 "constants": consts,
                 "passed": cert.passed})
    _manifest(out_dir, echo, args, {"status": "ok", "passed": cert.passed})
    print(f"moments-verify: C={cert.C:.4g} q={cert.q:.4g} "
          f"passed={cert.passed} first_failure={cert.first_failure}")
    return EXIT_PASS if cert.passed else EXIT_FAIL


def _cmd_collision_check(scenario, vsec, echo, args, out_dir) -> int:
    kernel = normalize_kernel(scenario.kernel)
    grid = scenario.grid
    f = scenario.initial.realize(grid)
    rep = str(vsec["representation"])
    if rep not in ("sigma", "carleman", "both"):
        raise ScenarioError("verify.representation must be sigma, carleman, or both")
    report = {"representation": rep, "n": grid.n,
              "n_z": scenario.n_z, "n_phi": scenario.n_phi}
    nu = collision_frequency(f, kernel, grid)
    qm_mass = float(np.sum(nu * f)) * grid.cell_volume
    qp_sigma = qp_carl = None
    skips = 0
    if rep in ("sigma", "both"):
        angq = make_angular_quadrature(kernel, n_z=scenario.n_z,
                                       n_phi=scenario.n_phi)
        qp_sigma = q_plus_sigma(f, f, kernel, grid, angq=angq)
        report["sigma_mass_residual"] = abs(
            float(np.sum(qp_sigma)) * grid.cell_volume - qm_mass) / qm_mass
    if rep in ("carleman", "both"):
        planq = make_plane_quadrature(kernel, n_r=2 * scenario.n_z,
                                      n_psi=scenario.n_phi)
        qp_carl, skips = q_plus_carleman(f, f, kernel, grid, planq=planq)
        report["carleman_mass_residual"] = abs(
            float(np.sum(qp_carl)) * grid.cell_volume - qm_mass) / qm_mass
    tol = 0.05 * args.tolerance_scale
    passed = True
    if qp_sigma is not None and qp_carl is not None:
        diff = float(np.sum(np.abs(qp_sigma - qp_carl))
                     / max(np.sum(np.abs(qp_sigma)), 1e-300))
        report["representation_residual"] = diff
        passed = diff <= tol
    report["skip_count"] = int(skips)
    report["tolerance"] = tol
    report["passed"] = passed
    _write_json(os.path.join(out_dir, "certificate.json"), report)
    _manifest(out_dir, echo, args, {"status": "ok", "passed": passed})
    print(f"collision-check: {report}")
    return EXIT_PASS if passed else EXIT_FAIL


def _cmd_kernel_table(scenario, vsec, echo, args, out_dir) -> int:
    kernel = normalize_kernel(scenario.kernel)
    k_max = int(vsec["k_table_max"])
    rows = []
    worst = 0.0
    for k in range(0, k_max + 1):
        a_k = compute_ak(kernel, float(k))
        try:
            closed = ak_closed_form(kernel, float(k))
            rel = abs(a_k - closed) / max(abs(closed), 1e-300)
            worst = max(worst, rel)
        except KernelError:
            closed, rel = float("nan"), float("nan")
        rows.append((k, a_k, closed, rel))
    with open(os.path.join(out_dir, "kernel_table.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "a_k", "closed_form", "rel_err"])
        writer.writerows(rows)
    tol = 1e-10 * args.tolerance_scale
    passed = not np.isfinite(worst) or worst <= tol
    _manifest(out_dir, echo, args,
              {"status": "ok", "passed": passed, "worst_rel_err": worst})
    print(f"kernel-table: {len(rows)} rows, worst rel err {worst:.2e}")
    return EXIT_PASS if passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="boltzkit",
        description="Velocity-grid toolkit for the homogeneous collisional "
                    "kinetic equation with Maxwellian-bound certification")
    parser.add_argument("subcommand",
                        choices=["run", "barrier", "moments-verify",
                                 "collision-check", "kernel-table"])
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--workers", type=int,
                        default=int(os.environ.get("BOLTZ_WORKERS", "0")),
                        help="thread cap (0 = library default)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tolerance-scale", type=float, default=1.0,
                        dest="tolerance_scale")
    parser.add_argument("--diagnostics", default=None,
                        help="moment series CSV for moments-verify")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    if args.workers > 0:
        import numba
        numba.set_num_threads(max(1, min(args.workers,
                                         numba.config.NUMBA_NUM_THREADS)))
    try:
        scenario, binputs, vsec, echo = parse_scenario(args.scenario)
        os.makedirs(args.out, exist_ok=True)
        if args.subcommand == "run":
            return _cmd_run(scenario, echo, args, args.out)
        if args.subcommand == "barrier":
            return _cmd_barrier(scenario, binputs, echo, args, args.out)
        if args.subcommand == "moments-verify":
            return _cmd_moments_verify(scenario, vsec, echo, args, args.out,
                                       args.diagnostics)
        if args.subcommand == "collision-check":
            return _cmd_collision_check(scenario, vsec, echo, args, args.out)
        return _cmd_kernel_table(scenario, vsec, echo, args, args.out)
    except (ScenarioError, KernelError, FieldError, CollisionError,
            MomentError, BarrierError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
