"""Moment machinery: angular averages of convex test functions, the
binomial Povzner sum, the coefficients of the moment differential
inequalities, the Bernoulli comparison cap, the geometric-growth
certificate, and the lower moment constants.

Normalized moments z_k = m_k / Gamma(k + b) satisfy, along solutions,

    z_k' <= -A_k z_k^(1 + beta/2k) + B_k Z_k,

with A_k, B_k assembled from the angular averages a_k, the collision
frequency floor nu_0, and the binomial-sum constant C_b.  The certificate
checker verifies these inequalities and the resulting bound z_k <= C q^k
directly on a computed time series.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import gammaln

from .fields import MomentLedger, VelocityGrid, moment, moment_index_set
from .kernel import KernelModel, compute_ak
from .collision import collision_frequency, make_angular_quadrature

__all__ = [
    "MomentError",
    "MomentSystemConstants",
    "GrowthCertificate",
    "gain_average_bound",
    "povzner_sum",
    "povzner_terms",
    "calibrate_cb",
    "compute_system_coefficients",
    "system_constants",
    "bernoulli_cap",
    "choose_certificate_constants",
    "verify_geometric_bound",
    "lower_moment_constants",
]


class MomentError(ValueError):
    """Raised for invalid moment-system arguments."""


# ----------------------------------------------------------------------
# angular average of convex test functions


def gain_average_bound(v, v_star, kernel: KernelModel, k: float,
                       n_z: int = 32, n_phi: int = 32):
    """Sphere average G of (psi(|v'*|^2)+psi(|v'|^2))/2 for psi(x) = x^k,
    and its one-dimensional upper bound (a_k/2) (|v|^2+|v*|^2)^k.

    Returns (G, bound); the bound is an identity at k = 1 (energy
    conservation) and at k = 0 (normalization).
    """
    if k < 0:
        raise MomentError(f"k must be >= 0, got {k}")
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    d = kernel.dimension
    if v.shape != (d,) or v_star.shape != (d,):
        raise MomentError("v, v_star must be d-vectors")
    angq = make_angular_quadrature(kernel, n_z=n_z,
                                   n_phi=n_phi if d == 3 else 2)
    u = v - v_star
    umag = float(np.linalg.norm(u))
    energy = float(v @ v + v_star @ v_star)
    if umag == 0.0:
        g_val = energy ** k if k > 0 else 1.0
    else:
        uh = u / umag
        if d == 3:
            a = np.array([1.0, 0, 0]) if abs(uh[0]) <= 0.9 else np.array([0.0, 1, 0])
            e1 = a - (a @ uh) * uh
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(uh, e1)
            ortho = (np.cos(angq.phi)[:, None] * e1[None, :]
                     + np.sin(angq.phi)[:, None] * e2[None, :])
        else:
            e1 = np.array([-uh[1], uh[0]])
            ortho = angq.phi[:, None] * e1[None, :]
        m = 0.5 * (v + v_star)
        zz = angq.z[:, None, None]
        rt = np.sqrt(np.maximum(0.0, 1.0 - zz * zz))
        sig = zz * uh[None, None, :] + rt * ortho[None, :, :]
        vp = m[None, None, :] + 0.5 * umag * sig
        vs = m[None, None, :] - 0.5 * umag * sig
        psi = 0.5 * (np.sum(vp * vp, axis=-1) ** k
                     + np.sum(vs * vs, axis=-1) ** k)
        g_val = float(np.sum(angq.c[:, None] * psi) / angq.phi.shape[0])
    a_k = compute_ak(kernel, k)
    return g_val, 0.5 * a_k * energy ** k


# ----------------------------------------------------------------------
# Povzner sum and its Gamma bound


def _ledger_lookup(z_map, k: float) -> float:
    if isinstance(z_map, MomentLedger):
        return z_map.z_of(k)
    for key, val in z_map.items():
        if abs(float(key) - k) <= 1e-12:
            return float(val)
    raise MomentError(f"normalized moment of order {k} missing from input")


def povzner_sum(k: float, beta: float, m_of) -> float:
    """S_k = sum_{j=1}^{[(k+1)/2]} C(k,j) (m_{j+b/2} m_{k-j} + m_{k-j+b/2} m_j)."""
    jmax = int(np.floor((k + 1.0) / 2.0))
    total = 0.0
    for j in range(1, jmax + 1):
        binom = np.exp(gammaln(k + 1.0) - gammaln(j + 1.0) - gammaln(k - j + 1.0))
        total += binom * (m_of(j + beta / 2.0) * m_of(k - j)
                          + m_of(k - j + beta / 2.0) * m_of(j))
    return float(total)


def povzner_terms(k: float, beta: float, z_map, b_norm: float,
                  c_b: Optional[float] = None):
    """Binomial sum S_k, the max Z_k of normalized-moment products, and the
    bound C_b Gamma(k + beta/2 + 2b) Z_k.

    z_map supplies normalized moments (MomentLedger or {order: z}); raw
    moments are reconstructed as m = z * Gamma(order + b).  Returns
    (S_k, Z_k, bound).
    """
    if k < 1:
        raise MomentError(f"k must be >= 1, got {k}")
    if b_norm <= 0:
        raise MomentError("b_norm must be positive")
    if c_b is None:
        c_b = calibrate_cb(beta, b_norm, k_max=max(8.0, k))

    def m_of(order):
        return _ledger_lookup(z_map, order) * float(np.exp(gammaln(order + b_norm)))

    s_k = povzner_sum(k, beta, m_of)
    jmax = int(np.floor((k + 1.0) / 2.0))
    z_k = 0.0
    for j in range(1, jmax + 1):
        z_k = max(z_k,
                  _ledger_lookup(z_map, j + beta / 2.0) * _ledger_lookup(z_map, k - j),
                  _ledger_lookup(z_map, j) * _ledger_lookup(z_map, k - j + beta / 2.0))
    bound = c_b * float(np.exp(gammaln(k + beta / 2.0 + 2.0 * b_norm))) * z_k
    return s_k, z_k, bound


def _gaussian_z(order: float, a: float, d: int, b_norm: float) -> float:
    """Normalized moment of e^{-a|v|^2} in R^d, via the Gamma closed form."""
    log_m = (d / 2.0) * np.log(np.pi / a) + gammaln(order + d / 2.0) \
        - gammaln(d / 2.0) - order * np.log(a)
    return float(np.exp(log_m - gammaln(order + b_norm)))


def calibrate_cb(beta: float, b_norm: float, k_max: float = 8.0,
                 d: int = 3, margin: float = 1.05) -> float:
    """Empirical constant of the S_k bound: margin times the largest ratio
    S_k / (Gamma(k+beta/2+2b) Z_k) over Gaussian ledgers, k <= 2 k_max.

    The ratio is invariant under rescaling z_k -> lam mu^k z_k, so a single
    Gaussian shape per dimension suffices for the sweep.
    """
    ks = [float(k) for k in moment_index_set(beta, 2.0 * k_max) if k >= 1.0]
    orders = moment_index_set(beta, 2.0 * k_max + 1.0)
    z_map = {float(o): _gaussian_z(float(o), 1.0, d, b_norm) for o in orders}
    z_map[0.0] = _gaussian_z(0.0, 1.0, d, b_norm)
    worst = 0.0
    for k in ks:
        s_k, z_k, _ = povzner_terms(k, beta, z_map, b_norm, c_b=1.0)
        denom = float(np.exp(gammaln(k + beta / 2.0 + 2.0 * b_norm))) * z_k
        if denom > 0:
            worst = max(worst, s_k / denom)
    if worst <= 0:
        raise MomentError("calibration sweep produced no positive ratios")
    return margin * worst


# ----------------------------------------------------------------------
# system coefficients


@dataclass(frozen=True)
class MomentSystemConstants:
    """Coefficients of the normalized-moment differential inequalities."""

    beta: float
    eps: float
    b_norm: float
    c_b: float
    nu0: float
    m0: float
    k_star: float
    ks: np.ndarray
    a_k: np.ndarray
    A_k: np.ndarray
    B_k: np.ndarray
    a_bar: float
    b_bar: float
    c0: float

    def index(self, k: float) -> int:
        i = int(np.argmin(np.abs(self.ks - k)))
        if abs(self.ks[i] - k) > 1e-12:
            raise MomentError(f"order {k} not tracked by the constants")
        return i


def compute_system_coefficients(a_k: float, nu0: float, m0: float,
                                b_norm: float, beta: float, k: float,
                                c_b: float):
    """A_k and B_k from the angular average and the frequency floor."""
    log_gkb = gammaln(k + b_norm)
    A = (1.0 - a_k) * nu0 * m0 ** (-beta / (2.0 * k)) \
        * float(np.exp(log_gkb * (beta / (2.0 * k))))
    B = a_k * c_b * float(np.exp(gammaln(k + beta / 2.0 + 2.0 * b_norm) - log_gkb))
    return A, B


def system_constants(kernel: KernelModel, f0: np.ndarray, grid: VelocityGrid,
                     b_norm: Optional[float] = None, k_max: float = 8.0,
                     k_star: Optional[float] = None,
                     c_b: Optional[float] = None) -> MomentSystemConstants:
    """Assemble every constant of the moment inequality system from the
    kernel and the initial field."""
    beta = kernel.beta
    # angular decay rate: a_k ~ k^(-eps/2); this is d-1-alpha, not the
    # (generally smaller) weight exponent min(beta, d-1-alpha)
    eps = kernel.dimension - 1.0 - kernel.alpha
    if b_norm is None:
        b_norm = eps / 4.0
    if not 0.0 < b_norm < eps / 2.0:
        raise MomentError(f"need 0 < b < eps/2 = {eps / 2.0}, got {b_norm}")
    if np.any(f0 < 0):
        raise MomentError("initial field must be nonnegative")
    m0 = moment(grid, f0, 0.0)
    if m0 <= 0:
        raise MomentError("initial field must have positive mass")
    if k_star is None:
        k_star = 1.0 + beta / 2.0 + beta / 2.0
    if k_star <= 1.0 + beta / 2.0:
        raise MomentError(f"k_star must exceed 1 + beta/2, got {k_star}")
    if c_b is None:
        c_b = calibrate_cb(beta, b_norm, k_max=k_max, d=grid.d)

    c_map = lower_moment_constants(kernel, beta)
    c_beta = c_map[min(c_map, key=lambda a: abs(a - beta))]
    nu_field = collision_frequency(f0, kernel, grid)
    w = 1.0 + grid.speed_sq() ** (beta / 2.0)
    nu0 = c_beta * float(np.min(nu_field / w))

    ks = np.array([k for k in moment_index_set(beta, k_max) if k >= 1.0])
    a_vals = np.array([compute_ak(kernel, float(k)) for k in ks])
    AB = [compute_system_coefficients(a, nu0, m0, b_norm, beta, float(k), c_b)
          for a, k in zip(a_vals, ks)]
    A_k = np.array([x[0] for x in AB])
    B_k = np.array([x[1] for x in AB])
    sel = ks >= k_star
    if not np.any(sel):
        raise MomentError(f"no tracked orders at or above k_star = {k_star}")
    a_bar = float(np.min(A_k[sel] / ks[sel] ** (beta / 2.0)))
    b_bar = float(np.max(B_k[sel] / ks[sel] ** (beta / 2.0 + b_norm - eps / 2.0)))
    c0 = a_bar / b_bar * k_star ** (eps / 2.0 - b_norm)
    return MomentSystemConstants(beta=beta, eps=eps, b_norm=b_norm, c_b=c_b,
                                 nu0=nu0, m0=m0, k_star=float(k_star), ks=ks,
                                 a_k=a_vals, A_k=A_k, B_k=B_k, a_bar=a_bar,
                                 b_bar=b_bar, c0=c0)


# ----------------------------------------------------------------------
# Bernoulli comparison


def bernoulli_cap(A: float, B: float, C: float, q: float, k: float,
                  beta: float, z0: float):
    """Stationary point z* of z' = -A z^(1+beta/2k) + B C^2 q^(k+beta/2)
    and the resulting bound max(z0, z*) on the solution.

    Also reports whether z* <= C q^k, which holds whenever
    A/B >= C^(1-beta/2k).
    """
    if min(A, B, C, q) <= 0:
        raise MomentError("A, B, C, q must be positive")
    if k <= beta / 2.0:
        raise MomentError(f"k must exceed beta/2, got {k}")
    expo = 1.0 + beta / (2.0 * k)
    z_star = (B * C * C * q ** (k + beta / 2.0) / A) ** (1.0 / expo)
    cap = max(z0, z_star)
    within = bool(z_star <= C * q ** k * (1.0 + 1e-12))
    return z_star, cap, within


# ----------------------------------------------------------------------
# geometric-growth certificate


@dataclass(frozen=True)
class GrowthCertificate:
    C: float
    q: float
    passed: bool
    verdicts: Dict[float, bool] = field(default_factory=dict)
    first_failure: Optional[tuple] = None
    details: Dict[str, float] = field(default_factory=dict)


def choose_certificate_constants(z0_map, consts: MomentSystemConstants,
                                 safety: float = 1.2):
    """(C, q) from the initial ledger: C as large as the coefficient
    condition A_k/B_k >= C^(1-beta/2k) allows, then q so the initial
    normalized moments sit below C q^k with a safety factor."""
    caps = [(consts.A_k[i] / consts.B_k[i]) ** (1.0 / (1.0 - consts.beta / (2.0 * k)))
            for i, k in enumerate(consts.ks) if k >= consts.k_star]
    C = min(caps) / safety
    if isinstance(z0_map, MomentLedger):
        orders = [float(k) for k in z0_map.ks if k > 0]
    else:
        orders = [float(k) for k in z0_map if float(k) > 0]
    q = 1.0
    for k in orders:
        z0 = _ledger_lookup(z0_map, k)
        if z0 > 0:
            q = max(q, (safety * z0 / C) ** (1.0 / k))
    return float(C), float(q)


def verify_geometric_bound(times, z_series: Dict[float, np.ndarray],
                           consts: MomentSystemConstants, C: float,
                           q: float) -> GrowthCertificate:
    """Certificate that z_k(t) <= C q^k along a computed series.

    Checks, in increasing k: the initial bound for every order; the uniform
    bound for orders below k_star; and for k >= k_star both the
    differential inequality z' <= -A_k z^(1+beta/2k) + B_k Z_k (central
    differences, curvature-scaled slack) and the geometric bound at every
    time.  Records the first violation.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 10:
        raise MomentError(f"need at least 10 time samples, got {times.size}")
    if C <= 0 or q <= 0:
        raise MomentError("C and q must be positive")
    dt = float(times[1] - times[0])
    if not np.allclose(np.diff(times), dt, rtol=1e-8):
        raise MomentError("time mesh must be uniform")
    ks = sorted(z_series.keys())
    verdicts: Dict[float, bool] = {}
    first_failure = None

    def record(k, t):
        nonlocal first_failure
        if first_failure is None:
            first_failure = (float(k), float(t))

    beta = consts.beta
    for k in ks:
        z = np.asarray(z_series[k], dtype=float)
        ok = True
        # initial geometric bound (all orders)
        if z[0] > C * q ** k * (1.0 + 1e-9):
            ok = False
            record(k, times[0])
        bound = C * q ** k
        viol = np.nonzero(z > bound * (1.0 + 1e-9))[0]
        if k < consts.k_star:
            if viol.size:
                ok = False
                record(k, times[viol[0]])
            verdicts[float(k)] = ok
            continue
        # differential inequality along the series
        i = consts.index(float(k))
        A, B = consts.A_k[i], consts.B_k[i]
        dz = (z[2:] - z[:-2]) / (2.0 * dt)
        z_mid = z[1:-1]
        zdd = np.abs(np.diff(z, 2)) / dt ** 2
        slack = 10.0 * dt ** 2 * float(np.max(zdd)) if zdd.size else 0.0
        jmax = int(np.floor((k + 1.0) / 2.0))
        Zk = np.zeros_like(z_mid)
        for j in range(1, jmax + 1):
            for lo, hi in ((j + beta / 2.0, k - j), (j, k - j + beta / 2.0)):
                z_lo = np.asarray(z_series[_nearest(ks, lo)], dtype=float)[1:-1]
                z_hi = np.asarray(z_series[_nearest(ks, hi)], dtype=float)[1:-1]
                Zk = np.maximum(Zk, z_lo * z_hi)
        rhs = -A * z_mid ** (1.0 + beta / (2.0 * k)) + B * Zk + slack
        bad = np.nonzero(dz > rhs + 1e-12 * np.abs(rhs).max())[0]
        if bad.size:
            ok = False
            record(k, times[1 + bad[0]])
        if viol.size:
            ok = False
            record(k, times[viol[0]])
        verdicts[float(k)] = ok
    passed = all(verdicts.values())
    return GrowthCertificate(C=float(C), q=float(q), passed=passed,
                             verdicts=verdicts, first_failure=first_failure,
                             details={"k_star": consts.k_star,
                                      "c0": consts.c0, "nu0": consts.nu0})


def _nearest(ks, target):
    best = min(ks, key=lambda k: abs(k - target))
    if abs(best - target) > 1e-9:
        raise MomentError(f"series lacks the order {target} needed by Z_k")
    return best


# ----------------------------------------------------------------------
# lower moment constants


def lower_moment_constants(kernel: KernelModel, beta: Optional[float] = None
                           ) -> Dict[float, float]:
    """Constants c_alpha with m_alpha(t) >= c_alpha m_alpha(0).

    Built from the downward recursion over alpha_i = alpha_0 - i beta/2,
    where alpha_0 = j beta/2 is the largest such multiple below 1; each
    step multiplies powers of (a_alpha - 1)/(a_alpha + 1).  The conserved
    order alpha = 1 gets c_1 = 1.
    """
    if beta is None:
        beta = kernel.beta
    if not 0.0 < beta <= 1.0:
        raise MomentError(f"beta must lie in (0,1], got {beta}")
    half = beta / 2.0
    j0 = int(np.ceil(1.0 / half)) - 1
    alpha0 = j0 * half
    if not (alpha0 < 1.0 <= alpha0 + half + 1e-15):
        raise MomentError("internal: terminal order selection failed")
    chain = [alpha0 - i * half for i in range(j0)]
    ratios = {}
    for a in chain:
        ak = compute_ak(kernel, a)
        if ak <= 1.0:
            raise MomentError(
                f"degenerate kernel: a_{a} = {ak} <= 1, no lower bound")
        ratios[a] = (ak - 1.0) / (ak + 1.0)
    out: Dict[float, float] = {1.0: 1.0}
    for i, a_i in enumerate(chain):
        log_c = 0.0
        for m in range(i + 1):
            a_m = chain[m]
            log_c += (a_i / (a_m + half)) * np.log(ratios[a_m])
        out[a_i] = float(min(1.0, np.exp(log_c)))
    return out
