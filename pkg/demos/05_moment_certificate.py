"""Geometric growth certificate for the normalized moments.

Runs a short relaxation, extracts the z_k series from the diagnostics,
assembles the moment-system constants (angular averages, frequency
floor, binomial-sum calibration), and verifies the differential
inequalities and the geometric bound z_k <= C q^k along the series.
"""

import numpy as np

from boltzkit.fields import MaxwellianParams, build_grid
from boltzkit.kernel import KernelSpec, normalize_kernel
from boltzkit.moments import (choose_certificate_constants, system_constants,
                              verify_geometric_bound)
from boltzkit.solver import InitialCondition, Scenario, run


def main():
    spec = KernelSpec(dimension=3, beta=1.0, profile="isotropic")
    grid = build_grid(3, 4.0, 9)
    scenario = Scenario(kernel=spec, grid=grid,
                        initial=InitialCondition(
                            kind="scaled-maxwellian",
                            maxwellian=MaxwellianParams(a=1.0), scale=0.5),
                        steps=40, cadence=1)
    result = run(scenario)

    kernel = normalize_kernel(spec)
    f0 = scenario.initial.realize(grid)
    consts = system_constants(kernel, f0, grid, b_norm=scenario.b_norm,
                              k_max=scenario.k_max)
    print(f"frequency floor nu0 = {consts.nu0:.4f}, binomial constant "
          f"C_b = {consts.c_b:.4f}, ratio floor c0 = {consts.c0:.4f}")

    times = np.array([rec.t for rec in result.records])
    orders = sorted(result.records[0].z)
    series = {k: np.array([rec.z[k] for rec in result.records])
              for k in orders}
    C, q = choose_certificate_constants({k: series[k][0] for k in orders},
                                        consts)
    cert = verify_geometric_bound(times, series, consts, C, q)
    print(f"certificate C = {C:.4g}, q = {q:.4g}")
    print(f"passed: {cert.passed}  first failure: {cert.first_failure}")
    for k in orders:
        print(f"  k={k:>4}: z(0) = {series[k][0]:.4e}  bound C q^k = "
              f"{C * q ** k:.4e}  verdict {cert.verdicts[k]}")


if __name__ == "__main__":
    main()
