"""Building and checking a Maxwellian upper barrier.

From hypothesis constants (mass floor, sup bound, weighted-integral
bound) an explicit barrier exp(-a|v|^2 + c) is assembled a-priori; the
demo prints every intermediate constant, then verifies the tail
inequality and the in-ball bound on a half-Maxwellian field, and runs
the frozen-coefficient order-preservation check.
"""

import numpy as np

from boltzkit.barrier import (BarrierInputs, build_barrier,
                              check_barrier_inequality,
                              evolve_linear_order_check)
from boltzkit.collision import collision_frequency
from boltzkit.fields import MaxwellianParams, build_grid, sample_maxwellian
from boltzkit.kernel import hard_sphere


def main():
    ker = hard_sphere(3)
    grid = build_grid(3, 4.0, 9)
    f0 = 0.5 * sample_maxwellian(MaxwellianParams(a=1.0), grid)
    mass = float(np.sum(f0)) * grid.cell_volume

    inputs = BarrierInputs(a0=1.0, c0=np.log(0.5), a1=0.5, c1=0.0,
                           C1=0.55 * (2 * np.pi) ** 1.5, rho0=0.9 * mass,
                           C0=0.5, a=0.25)
    cert = build_barrier(inputs, ker, f=f0, grid=grid)
    print(f"weight decay eps = {cert.eps}")
    print(f"loss floor constant L = {cert.L:.6f}")
    print(f"a-priori gain constant C = {cert.C_gain:.4g}")
    print(f"a-priori radius R = {cert.R:.4g}  offset c = {cert.c:.4g}")
    print(f"diagnostic fitted radius = {cert.r_fitted:.4g}")

    report = check_barrier_inequality(f0, cert, ker, grid)
    print(f"hypotheses hold: {report.applicable}")
    print(f"tail cells {report.n_tail}, failures {report.n_tail_fail}, "
          f"in-ball ok {report.inball_passed}")

    nu_max = float(np.max(collision_frequency(f0, ker, grid)))
    verdict = evolve_linear_order_check(
        f0, -sample_maxwellian(MaxwellianParams(a=0.25), grid),
        dt=0.25 / nu_max, steps=50, kernel=ker, grid=grid)
    print(f"linear order preservation over {verdict.steps} steps: "
          f"max u = {verdict.max_u:.3e} (threshold {verdict.threshold:.3e})")


if __name__ == "__main__":
    main()
