"""Maxwellian barrier construction and comparison-principle checks.

Given a solution obeying a mass floor rho_0, a sup bound C_0, and a
weighted-integral bound C_1 against a reference Maxwellian M_1, an
explicit barrier M(v) = exp(-a|v|^2 + c) dominates the solution: the
gain term is beaten by the loss term outside a computable radius R, and
inside the ball the offset c lifts M above C_0.  All barrier arithmetic
runs in log space because c grows like a R^2.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .fields import (MaxwellianParams, VelocityGrid, moment,
                     weighted_ratio_integral)
from .kernel import KernelModel
from .collision import (AngularQuadrature, collision_frequency,
                        gain_bound_constant, q_plus_maxwellian, q_plus_sigma)

__all__ = [
    "BarrierError",
    "BarrierInputs",
    "BarrierCertificate",
    "BarrierReport",
    "LinearOrderVerdict",
    "compute_L",
    "compute_R",
    "build_barrier",
    "fit_barrier_radius",
    "check_barrier_inequality",
    "evolve_linear_order_check",
]


class BarrierError(ValueError):
    """Raised for invalid barrier arguments."""


@dataclass(frozen=True)
class BarrierInputs:
    """Hypothesis constants: initial bound exp(-a0|v|^2+c0), reference
    Maxwellian (a1, c1) with integral bound C1, mass floor rho0, sup bound
    C0, and the target barrier exponent a."""

    a0: float
    c0: float
    a1: float
    c1: float
    C1: float
    rho0: float
    C0: float
    a: float

    def __post_init__(self):
        if not 0.0 < self.a < self.a1 < self.a0:
            raise BarrierError(
                f"need 0 < a < a1 < a0, got a={self.a}, a1={self.a1}, a0={self.a0}")
        if self.rho0 <= 0:
            raise BarrierError(f"mass floor rho0 must be positive, got {self.rho0}")
        if self.C0 <= 0 or self.C1 <= 0:
            raise BarrierError("C0 and C1 must be positive")


@dataclass(frozen=True)
class BarrierCertificate:
    """The barrier exp(-a|v|^2+c) with every constant used to build it."""

    inputs: BarrierInputs
    eps: float
    L: float
    C_gain: float
    R: float
    c: float
    r_fitted: Optional[float] = None
    tail_passed: Optional[bool] = None
    inball_passed: Optional[bool] = None

    @property
    def a(self) -> float:
        return self.inputs.a

    def log_barrier(self, speed_sq: np.ndarray) -> np.ndarray:
        return -self.a * speed_sq + self.c


def compute_L(a1: float, c1: float, beta: float,
              crosscheck: bool = True) -> float:
    """max over y >= 0 of y^beta exp(-a1 y^2 + c1), in closed form.

    The maximizer is y^2 = beta/(2 a1); a grid search cross-checks the
    calculus when requested.
    """
    if a1 <= 0:
        raise BarrierError(f"a1 must be positive, got {a1}")
    if beta <= 0:
        raise BarrierError(f"beta must be positive, got {beta}")
    L = (beta / (2.0 * a1)) ** (beta / 2.0) * np.exp(c1 - beta / 2.0)
    if crosscheck:
        y_star = np.sqrt(beta / (2.0 * a1))
        y = np.linspace(0.0, 4.0 * y_star, 20001)
        grid_max = float(np.max(y ** beta * np.exp(-a1 * y * y + c1)))
        if not np.isclose(L, grid_max, rtol=1e-6):
            raise BarrierError(
                f"closed form L={L} disagrees with grid search {grid_max}")
    return float(L)


def compute_R(C: float, L: float, C1: float, rho0: float,
              beta: float, eps: float) -> float:
    """Largest root of C + L C1 + C y^(beta-eps) - rho0 y^beta = 0.

    For eps = beta the weight power vanishes and the root is explicit;
    otherwise the equation is bracketed beyond the maximum of the left side
    and solved by scalar root-finding.
    """
    if rho0 <= 0:
        raise BarrierError(f"rho0 must be positive, got {rho0}")
    if not 0.0 < eps <= beta:
        raise BarrierError(f"need 0 < eps <= beta, got eps={eps}, beta={beta}")
    if C < 0 or L < 0 or C1 < 0:
        raise BarrierError("C, L, C1 must be nonnegative")
    if eps == beta:
        return float(((2.0 * C + L * C1) / rho0) ** (1.0 / beta))

    def g(y):
        return C + L * C1 + C * y ** (beta - eps) - rho0 * y ** beta

    # g increases then decreases; bracket past its critical point
    y_crit = (C * (beta - eps) / (rho0 * beta)) ** (1.0 / eps) if C > 0 else 0.0
    lo = max(y_crit, 1e-12)
    hi = max(2.0 * lo, 1.0)
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise BarrierError("no positive root found for the radius equation")
    root = float(brentq(g, lo, hi, xtol=1e-14, rtol=1e-14))
    scale = C + L * C1 + rho0 * root ** beta
    if abs(g(root)) > 1e-10 * scale:
        raise BarrierError("radius root failed its residual check")
    return root


def _weight_sup_factor(beta: float, eps: float, gap: float) -> float:
    """sup over y of (1 + y^(beta-eps)) exp(-gap y^2)."""
    p = beta - eps
    if p <= 0:
        return 2.0
    return 1.0 + (p / (2.0 * gap)) ** (p / 2.0) * np.exp(-p / 2.0)


def build_barrier(inputs: BarrierInputs, kernel: KernelModel,
                  f: Optional[np.ndarray] = None,
                  grid: Optional[VelocityGrid] = None) -> BarrierCertificate:
    """Assemble the barrier certificate from the hypothesis constants.

    The gain constant is fully a-priori: the weighted gain estimate gives
    Q+(f,M) <= C_lem |f w_eps / M|_1 w_eps M, and the weighted integral is
    bounded through C1 with the worst admissible offset c = c0 (larger c
    only shrinks it).  A diagnostic radius fitted from observed operator
    values is attached when a field is supplied.
    """
    beta = kernel.beta
    eps = kernel.epsilon
    consts = gain_bound_constant(kernel, inputs.a)
    k_w = _weight_sup_factor(beta, eps, inputs.a1 - inputs.a)
    c_gain = consts["C"] * inputs.C1 * k_w * np.exp(inputs.c1 - inputs.c0)
    L = compute_L(inputs.a1, inputs.c1, beta)
    R = compute_R(c_gain, L, inputs.C1, inputs.rho0, beta, eps)
    c = max(inputs.a * R * R + np.log(inputs.C0), inputs.c0)
    r_fit = None
    if f is not None:
        if grid is None:
            raise BarrierError("a grid is required to fit the diagnostic radius")
        r_fit = fit_barrier_radius(f, kernel, grid, inputs.a)
    return BarrierCertificate(inputs=inputs, eps=float(eps), L=float(L),
                              C_gain=float(c_gain), R=float(R), c=float(c),
                              r_fitted=r_fit)


def fit_barrier_radius(f: np.ndarray, kernel: KernelModel, grid: VelocityGrid,
                       a: float, delta: float = 0.02,
                       angq: Optional[AngularQuadrature] = None
                       ) -> Optional[float]:
    """Smallest radius beyond which Q+(f,M) <= Q-(f,M)(1+delta)+eta holds
    cellwise, with the barrier amplitude normalized to c = 0.

    Returns None when even the outermost cells fail.
    """
    M0 = MaxwellianParams(a=a, c=0.0)
    qp = q_plus_maxwellian(f, M0, kernel, grid, angq=angq)
    nu = collision_frequency(f, kernel, grid)
    qm = nu * np.exp(M0.log_density(grid))
    eta = 1e-10 * float(np.max(qm))
    ok = qp <= qm * (1.0 + delta) + eta
    speed = np.sqrt(grid.speed_sq())
    bad = speed[~ok]
    if bad.size == 0:
        return 0.0
    r_fit = float(np.max(bad))
    if r_fit >= float(np.max(speed)):
        return None
    return r_fit


@dataclass(frozen=True)
class BarrierReport:
    """Outcome of the tail inequality and in-ball checks for one field."""

    applicable: bool
    hypothesis: dict
    n_tail: int
    n_tail_fail: int
    worst_tail_ratio: float
    tail_passed: bool
    inball_passed: bool
    r_fitted: Optional[float]

    @property
    def passed(self) -> bool:
        return self.applicable and self.tail_passed and self.inball_passed


def check_barrier_inequality(f: np.ndarray, cert: BarrierCertificate,
                             kernel: KernelModel, grid: VelocityGrid,
                             angq: Optional[AngularQuadrature] = None,
                             delta: float = 0.02) -> BarrierReport:
    """Verify Q+(f,M) <= Q-(f,M) on cells |v| > R and f <= C0 <= M on the
    ball, within discretization slack.

    Both collision terms scale with the barrier amplitude e^c, so they are
    evaluated at c = 0; the in-ball comparison uses the true offset in log
    space.  Hypothesis failures (mass below rho0, sup above C0, weighted
    integral above C1) mark the report inapplicable rather than failed.
    """
    if np.any(f < 0):
        raise BarrierError("field must be nonnegative")
    ins = cert.inputs
    mass = moment(grid, f, 0.0)
    sup_f = float(np.max(f))
    m1 = MaxwellianParams(a=ins.a1, c=ins.c1)
    w_int = weighted_ratio_integral(grid, f, m1, weight="one")
    tol = 1.0 + 1e-9
    hyp = {
        "mass": mass, "rho0": ins.rho0, "mass_ok": bool(mass * tol >= ins.rho0),
        "sup": sup_f, "C0": ins.C0, "sup_ok": bool(sup_f <= ins.C0 * tol),
        "weighted_integral": w_int, "C1": ins.C1,
        "weighted_ok": bool(w_int <= ins.C1 * tol),
    }
    applicable = hyp["mass_ok"] and hyp["sup_ok"] and hyp["weighted_ok"]

    M0 = MaxwellianParams(a=cert.a, c=0.0)
    qp = q_plus_maxwellian(f, M0, kernel, grid, angq=angq)
    nu = collision_frequency(f, kernel, grid)
    qm = nu * np.exp(M0.log_density(grid))
    eta = 1e-10 * float(np.max(qm))
    speed = np.sqrt(grid.speed_sq())
    tail = speed > cert.R
    n_tail = int(np.count_nonzero(tail))
    allowed = qm * (1.0 + delta) + eta
    fails = tail & (qp > allowed)
    n_fail = int(np.count_nonzero(fails))
    worst = float(np.max(qp[tail] / allowed[tail])) if n_tail else 0.0

    ball = ~tail
    log_m = cert.log_barrier(grid.speed_sq())
    inball = bool(np.all(f[ball] <= ins.C0 * tol)
                  and np.all(log_m[ball] >= np.log(ins.C0) - 1e-9))

    ok = qp <= allowed
    bad = speed[~ok]
    if bad.size == 0:
        r_fit: Optional[float] = 0.0
    else:
        r_fit = float(np.max(bad))
        if r_fit >= float(np.max(speed)):
            r_fit = None
    return BarrierReport(applicable=applicable, hypothesis=hyp, n_tail=n_tail,
                         n_tail_fail=n_fail, worst_tail_ratio=worst,
                         tail_passed=n_fail == 0, inball_passed=inball,
                         r_fitted=r_fit)


@dataclass(frozen=True)
class LinearOrderVerdict:
    passed: bool
    max_u: float
    threshold: float
    mass_drift_per_step: float
    steps: int


def evolve_linear_order_check(f_frozen: np.ndarray, u0: np.ndarray,
                              dt: float, steps: int, kernel: KernelModel,
                              grid: VelocityGrid,
                              angq: Optional[AngularQuadrature] = None,
                              project_mass: bool = False) -> LinearOrderVerdict:
    """March du/dt = Q+(f,u) - nu u by explicit Euler from u0 <= 0 and
    verify nonpositivity is preserved.

    The update dt Q+(f,u) + (1 - dt nu) u is order-preserving when
    dt max(nu) <= 1: the gain is a nonnegative combination of u values and
    the loss factor stays nonnegative.  Optional mass projection removes
    the quadrature residual of the (mass-conserving) linear operator, at
    the price of a uniform shift that can lift cells marginally above
    zero; leave it off when asserting strict order preservation.
    """
    if np.any(f_frozen < 0):
        raise BarrierError("frozen field must be nonnegative")
    if np.any(u0 > 0):
        raise BarrierError("u0 must be nonpositive")
    if steps < 1 or dt <= 0:
        raise BarrierError("need dt > 0 and steps >= 1")
    nu = collision_frequency(f_frozen, kernel, grid)
    nu_max = float(np.max(nu))
    if dt * nu_max > 1.0:
        raise BarrierError(
            f"dt * max collision frequency = {dt * nu_max:.4g} exceeds 1;"
            " the discrete scheme is not order-preserving")
    u = np.array(u0, dtype=float)
    norm0 = float(np.max(np.abs(u0)))
    threshold = 1e-12 * norm0
    max_u = float(np.max(u))
    mass_drift = 0.0
    for _ in range(steps):
        du = q_plus_sigma(f_frozen, u, kernel, grid, angq=angq) - nu * u
        if project_mass:
            du = du - np.sum(du) / du.size
        mass_before = np.sum(u)
        u = u + dt * du
        mass_drift = max(mass_drift,
                         abs(np.sum(u) - mass_before) * grid.cell_volume)
        max_u = max(max_u, float(np.max(u)))
    return LinearOrderVerdict(passed=max_u <= threshold, max_u=max_u,
                              threshold=threshold,
                              mass_drift_per_step=mass_drift, steps=steps)
