"""Collision kernels B(u, sigma) = |u|^beta h(cos theta) for hard potentials
with angular cutoff, their normalization, and the angular averages a_k.

The angular profile h is normalized so that its sphere integral is one.  The
averages a_k carry an explicit factor 2 so that a_1 = 1 exactly for every
normalized kernel; see the module notes in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln, roots_jacobi

__all__ = [
    "KernelSpec",
    "KernelModel",
    "KernelError",
    "normalize_kernel",
    "eval_kernel",
    "compute_ak",
    "ak_closed_form",
    "fit_ak_exponent",
    "sphere_measure",
    "hard_sphere",
]

PROFILES = ("isotropic", "power_singular", "table")


class KernelError(ValueError):
    """Raised for kernel specifications outside the admissible class."""


def sphere_measure(m: int) -> float:
    """Measure of the unit m-sphere S^m embedded in R^{m+1}.

    S^0 is two points (measure 2), S^1 the circle (2*pi), S^2 the usual
    sphere (4*pi).
    """
    if m < 0:
        raise ValueError(f"sphere dimension must be >= 0, got {m}")
    return float(2.0 * np.pi ** ((m + 1) / 2.0) / np.exp(gammaln((m + 1) / 2.0)))


@dataclass(frozen=True)
class KernelSpec:
    """Unnormalized kernel description.

    dimension   velocity-space dimension d >= 2
    beta        homogeneity exponent, 0 < beta <= 1
    profile     one of 'isotropic', 'power_singular', 'table'
    alpha       angular singularity exponent (power_singular), alpha < d-1
    table_z / table_h   samples of h on (-1, 1) for 'table' profiles
    amplitude   optional explicit profile amplitude (skips normalization)
    """

    dimension: int
    beta: float
    profile: str = "isotropic"
    alpha: float = 0.0
    table_z: Optional[np.ndarray] = None
    table_h: Optional[np.ndarray] = None
    amplitude: Optional[float] = None

    def validate(self) -> None:
        if self.dimension < 2:
            raise KernelError(f"dimension must be >= 2, got {self.dimension}")
        if not 0.0 < self.beta <= 1.0:
            raise KernelError(f"beta must lie in (0,1], got {self.beta}")
        if self.profile not in PROFILES:
            raise KernelError(f"unknown profile {self.profile!r}")
        if self.profile == "power_singular":
            if not self.alpha < self.dimension - 1:
                raise KernelError(
                    f"alpha < d-1 required, got alpha={self.alpha}, d={self.dimension}"
                )
        if self.profile == "table":
            if self.table_z is None or self.table_h is None:
                raise KernelError("table profile requires table_z and table_h")
            z = np.asarray(self.table_z, dtype=float)
            h = np.asarray(self.table_h, dtype=float)
            if z.ndim != 1 or z.shape != h.shape or z.size < 4:
                raise KernelError("table_z/table_h must be matching 1-D arrays, >= 4 points")
            if np.any(np.diff(z) <= 0) or z[0] <= -1.0 or z[-1] >= 1.0:
                raise KernelError("table_z must be strictly increasing inside (-1,1)")
            if np.any(h < 0):
                raise KernelError("tabulated profile must be nonnegative")

    @property
    def epsilon(self) -> float:
        """epsilon = min(beta, d-1-alpha), the decay rate of a_k is eps/2."""
        return min(self.beta, self.dimension - 1 - self.alpha)


@dataclass(frozen=True)
class KernelModel:
    """Normalized kernel: sphere integral of h equals one."""

    spec: KernelSpec
    amplitude: float
    omega: float  # measure of S^{d-2}
    _table_interp: object = field(default=None, repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def beta(self) -> float:
        return self.spec.beta

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    def profile_shape(self, z):
        """Unit-amplitude angular profile evaluated at z = cos(theta)."""
        z = np.asarray(z, dtype=float)
        if self.spec.profile == "isotropic":
            return np.ones_like(z)
        if self.spec.profile == "power_singular":
            return (1.0 - z * z) ** (-self.spec.alpha / 2.0)
        return np.maximum(self._table_interp(z), 0.0)

    def h(self, z):
        """Normalized angular profile h(z)."""
        return self.amplitude * self.profile_shape(z)

    def h_sym(self, z):
        """Symmetrized profile h_bar(z) = (h(z) + h(-z)) / 2."""
        z = np.asarray(z, dtype=float)
        return 0.5 * (self.h(z) + self.h(-z))

    def h_fold(self, z):
        """Folded profile h(z) + h(-z) entering the half-sphere kernel."""
        z = np.asarray(z, dtype=float)
        return self.h(z) + self.h(-z)

    def profile_bound(self) -> float:
        """Smallest C with B(u,sigma) <= C (1+|u|^beta) |sin theta|^(-alpha),
        estimated as sup_z (h(z)+h(-z)) (1-z^2)^(alpha/2)."""
        if self.spec.profile in ("isotropic", "power_singular"):
            return 2.0 * self.amplitude
        z = np.linspace(-1.0, 1.0, 20001)[1:-1]
        vals = self.h_fold(z) * (1.0 - z * z) ** (self.spec.alpha / 2.0)
        return float(np.max(vals))


def _angular_jacobi_rule(spec: KernelSpec, n: int):
    """Nodes/weights t_i, W_i on (-1,1) for the weight (1-t^2)^q with
    q = (d-3-alpha)/2, absorbing the sphere factor and any power singularity
    of the profile.  Returns (t, W, q)."""
    alpha = spec.alpha if spec.profile == "power_singular" else 0.0
    q = (spec.dimension - 3.0 - alpha) / 2.0
    if q <= -1.0:
        raise KernelError(
            f"non-integrable angular weight: alpha={alpha} >= d-1={spec.dimension - 1}"
        )
    t, w = roots_jacobi(n, q, q)
    return t, w, q


def _profile_smooth_part(model_or_spec, amplitude: float, z, q_absorbed: float,
                         table_interp=None, symmetrized: bool = False):
    """h(z) (or h_bar(z)) with the absorbed (1-z^2)^(-alpha/2) factor divided
    out, so that the remaining factor is smooth for Gauss-Jacobi integration."""
    spec = model_or_spec
    z = np.asarray(z, dtype=float)
    if spec.profile in ("isotropic", "power_singular"):
        # both are even in z, so h_bar == h; the singular factor is fully
        # absorbed into the Jacobi weight
        return amplitude * np.ones_like(z)
    vals = np.maximum(table_interp(z), 0.0)
    if symmetrized:
        vals = 0.5 * (vals + np.maximum(table_interp(-z), 0.0))
    return amplitude * vals


def normalize_kernel(spec: KernelSpec, n_quad: int = 256,
                     monotonicity_samples: int = 512) -> KernelModel:
    """Normalize the angular profile so the sphere integral of h is one.

    The normalization integral omega_{d-2} * int h (1-z^2)^((d-3)/2) dz is
    computed with a Gauss-Jacobi rule whose weight absorbs both the sphere
    factor and, for power profiles, the endpoint singularity.
    """
    spec.validate()
    omega = sphere_measure(spec.dimension - 2)
    interp = None
    if spec.profile == "table":
        interp = PchipInterpolator(np.asarray(spec.table_z, dtype=float),
                                   np.asarray(spec.table_h, dtype=float),
                                   extrapolate=True)

    if spec.amplitude is not None:
        amp = float(spec.amplitude)
    else:
        t, w, _q = _angular_jacobi_rule(spec, n_quad)
        shape = _profile_smooth_part(spec, 1.0, t, _q, table_interp=interp)
        integral = omega * float(np.dot(w, shape))
        if not np.isfinite(integral) or integral <= 0:
            raise KernelError("profile normalization integral is not positive/finite")
        amp = 1.0 / integral

    model = KernelModel(spec=spec, amplitude=amp, omega=omega, _table_interp=interp)

    # h(z)+h(-z) must be nondecreasing on (0,1); checked by sampling.
    z = np.linspace(0.0, 1.0, monotonicity_samples + 2)[1:-1]
    folded = model.h_fold(z)
    if np.any(np.diff(folded) < -1e-12 * max(1.0, float(np.max(folded[np.isfinite(folded)])))):
        raise KernelError("symmetrized profile is not nondecreasing on (0,1)")
    return model


def hard_sphere(dimension: int = 3) -> KernelModel:
    """The classical hard-sphere kernel: beta = 1, isotropic profile."""
    return normalize_kernel(KernelSpec(dimension=dimension, beta=1.0, profile="isotropic"))


def sphere_integral(model: KernelModel, n_quad: int = 256) -> float:
    """Quadrature value of the sphere integral of h (should be one)."""
    t, w, _q = _angular_jacobi_rule(model.spec, n_quad)
    shape = _profile_smooth_part(model.spec, model.amplitude, t, _q,
                                 table_interp=model._table_interp)
    return model.omega * float(np.dot(w, shape))


def eval_kernel(model: KernelModel, u, sigma, folded: bool = False):
    """B(u, sigma) = |u|^beta h(cos theta), or the folded variant
    (h(z)+h(-z)) |u|^beta 1_{cos theta > 0}.

    u may be a single vector or an (n, d) batch; sigma must be unit length.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if u.shape[-1] != model.dimension or sigma.shape[-1] != model.dimension:
        raise KernelError("u/sigma dimension mismatch with kernel")
    norms = np.linalg.norm(sigma, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise KernelError("sigma must be a unit vector")
    speed = np.linalg.norm(u, axis=-1)
    out = np.zeros(np.broadcast(speed, norms).shape)
    nz = speed > 0
    if np.any(nz):
        z = np.einsum("...i,...i->...", u, sigma)[nz] / speed[nz]
        z = np.clip(z, -1.0, 1.0)
        if folded:
            vals = np.where(z > 0, model.h_fold(z), 0.0)
        else:
            vals = model.h(z)
        out[nz] = speed[nz] ** model.beta * vals
    if out.size == 1:
        return float(out.reshape(-1)[0])
    return out


def compute_ak(model: KernelModel, k: float, n_quad: Optional[int] = None) -> float:
    """Angular average a_k = 2 omega_{d-2} int ((1+z)/2)^k h_bar(z)
    (1-z^2)^((d-3)/2) dz (factor-2 convention, a_1 = 1 for normalized h).

    The fractional part of k is absorbed into the Jacobi weight at z = -1 so
    the remaining integrand is a polynomial and the rule is exact for
    isotropic and power profiles.
    """
    if k < 0:
        raise KernelError(f"moment order k must be >= 0, got {k}")
    spec = model.spec
    alpha = spec.alpha if spec.profile == "power_singular" else 0.0
    q = (spec.dimension - 3.0 - alpha) / 2.0
    k_int = int(np.floor(k))
    k_frac = k - k_int
    if n_quad is None:
        n_quad = max(48, k_int // 2 + 8)
    # weight (1-t)^q (1+t)^(q + k_frac); ((1+t)/2)^k_frac goes into the weight
    t, w = roots_jacobi(n_quad, q, q + k_frac)
    smooth = _profile_smooth_part(spec, model.amplitude, t, q,
                                  table_interp=model._table_interp,
                                  symmetrized=True)
    poly = ((1.0 + t) / 2.0) ** k_int
    integral = float(np.dot(w, smooth * poly)) * 2.0 ** (-k_frac)
    return 2.0 * model.omega * integral


def ak_closed_form(model: KernelModel, k: float) -> float:
    """Beta-function closed form for isotropic/power profiles:
    a_k = 2 B(k + eps/2, eps/2) / B(eps/2, eps/2), eps = d-1-alpha.

    Raises for tabulated profiles, which have no closed form.
    """
    spec = model.spec
    if spec.profile == "table":
        raise KernelError("closed form only exists for isotropic/power profiles")
    alpha = spec.alpha if spec.profile == "power_singular" else 0.0
    eps = spec.dimension - 1.0 - alpha
    log_bk = gammaln(k + eps / 2.0) + gammaln(eps / 2.0) - gammaln(k + eps)
    log_b0 = 2.0 * gammaln(eps / 2.0) - gammaln(eps)
    return 2.0 * float(np.exp(log_bk - log_b0))


def fit_ak_exponent(model: KernelModel, k_range, n_samples: int = 25) -> float:
    """Least-squares slope of log a_k versus log k over [k1, k2].

    The slope approaches -eps/2 with eps = d-1-alpha as k grows.
    """
    k1, k2 = float(k_range[0]), float(k_range[1])
    if not (k2 >= 2.0 * k1 and k1 >= 10.0):
        raise KernelError(f"require k2 >= 2*k1 >= 20, got [{k1}, {k2}]")
    if n_samples < 8:
        raise KernelError(f"need at least 8 sample points, got {n_samples}")
    ks = np.geomspace(k1, k2, n_samples)
    aks = np.array([compute_ak(model, float(k)) for k in ks])
    slope = np.polyfit(np.log(ks), np.log(aks), 1)[0]
    return float(slope)
