import numpy as np
import pytest

from boltzkit.barrier import BarrierInputs
from boltzkit.fields import MaxwellianParams, build_grid, sample_maxwellian
from boltzkit.kernel import KernelSpec, hard_sphere, normalize_kernel
from boltzkit.solver import InitialCondition, Scenario, run


@pytest.fixture(scope="session")
def hs3():
    return hard_sphere(3)


@pytest.fixture(scope="session")
def singular3():
    return normalize_kernel(
        KernelSpec(dimension=3, beta=1.0, profile="power_singular", alpha=1.0))


@pytest.fixture(scope="session")
def grid9():
    return build_grid(3, 4.0, 9)


@pytest.fixture(scope="session")
def grid11():
    return build_grid(3, 6.0, 11)


@pytest.fixture(scope="session")
def reference_run():
    """Shared 200-step hard-sphere run from the half-Maxwellian initial
    datum on a resolved box; reused by several acceptance criteria."""
    scenario = Scenario(
        kernel=KernelSpec(dimension=3, beta=1.0, profile="isotropic"),
        grid=build_grid(3, 4.0, 9),
        initial=InitialCondition(kind="scaled-maxwellian",
                                 maxwellian=MaxwellianParams(a=1.0),
                                 scale=0.5),
        steps=200, cadence=5,
        barrier=BarrierInputs(a0=1.0, c0=float(np.log(0.5)), a1=0.5, c1=0.0,
                              C1=8.27, rho0=2.5, C0=0.5, a=0.25))
    return run(scenario)


@pytest.fixture(scope="session")
def mixture_field(grid11):
    f = (sample_maxwellian(MaxwellianParams(a=0.125, b=(0.32, 0, 0), c=-0.5),
                           grid11)
         + sample_maxwellian(MaxwellianParams(a=0.1, b=(-0.25, 0.18, 0),
                                              c=-0.9), grid11))
    return f
