"""Loss and gain collision operators on velocity grids.

The gain term is evaluated in two independent representations: the sphere
(sigma) form with Gauss-Jacobi angular nodes, and the Carleman form as an
outer sum over grid points and an inner quadrature over the orthogonal
hyperplane.  Both use the symmetrized angular profile, so for equal
arguments they discretize the same bilinear form and can cross-validate
each other.  Off-grid values are obtained by multilinear interpolation with
zero extension outside the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit, prange
from scipy.signal import fftconvolve
from scipy.special import roots_jacobi

from .fields import FieldError, MaxwellianParams, VelocityGrid, moment
from .kernel import KernelModel, sphere_measure

__all__ = [
    "CollisionError",
    "AngularQuadrature",
    "PlaneQuadrature",
    "WeightFunction",
    "make_angular_quadrature",
    "make_plane_quadrature",
    "collision_frequency",
    "q_minus",
    "q_plus_sigma",
    "q_plus_maxwellian",
    "q_plus_carleman",
    "carleman_kernel",
    "project_conservation",
    "gain_bound_constant",
    "verify_weighted_gain_bound",
    "dissipativity_functional",
    "holder_gap",
]


class CollisionError(ValueError):
    """Raised for inadmissible operator arguments."""


# ----------------------------------------------------------------------
# quadrature containers


@dataclass(frozen=True)
class AngularQuadrature:
    """Sphere quadrature for the folded gain term.

    z holds cos(theta) nodes on (0,1); c the combined per-node coefficients
    (profile value, sphere factor and Jacobi weight included), rescaled so
    their sum equals the exact sphere integral of the folded profile.  For
    d=3 the azimuth is uniform with equal weights 1/n_phi; for d=2 the two
    branches +/- carry weight 1/2 each.
    """

    d: int
    n_z: int
    n_phi: int
    z: np.ndarray
    c: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class PlaneQuadrature:
    """Quadrature over the hyperplane through v orthogonal to v - v'*.

    The radial coordinate r = |v' - v| is mapped to z = cos(theta) through
    r = s * sqrt((1-z)/(1+z)) with s = |v - v'*|, so nodes adapt to the pair
    separation and the angular singularity is absorbed by a Jacobi weight.
    t/w_full cover the full plane (z in (-1,1), symmetrized profile);
    t_disk/w_disk cover the disk r <= s (z in (0,1), folded profile) used by
    the ratio kernel.
    """

    d: int
    n_r: int
    n_psi: int
    t: np.ndarray
    w_full: np.ndarray
    t_disk: np.ndarray
    w_disk: np.ndarray
    psi: np.ndarray
    psi_weight: float


@dataclass(frozen=True)
class WeightFunction:
    """w_eps(v) = 1 + |v|^(beta - eps) with eps = min(beta, d-1-alpha)."""

    beta: float
    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise CollisionError(f"eps must be positive, got {self.eps}")

    def on_grid(self, grid: VelocityGrid) -> np.ndarray:
        if self.beta == self.eps:
            return np.full(grid.shape, 2.0)
        return 1.0 + grid.speed_sq() ** ((self.beta - self.eps) / 2.0)


def _kernel_alpha(kernel: KernelModel) -> float:
    return kernel.alpha if kernel.spec.profile == "power_singular" else 0.0


def make_angular_quadrature(kernel: KernelModel, n_z: int = 4,
                            n_phi: int = 4) -> AngularQuadrature:
    """Gauss-Jacobi rule in z = cos(theta) on (0,1) for the folded profile.

    The coefficients are rescaled so that their sum matches a 256-node
    reference value of the folded sphere integral; this makes the discrete
    gain and loss terms share exactly the same total angular weight.
    """
    d = kernel.dimension
    if n_z < 4:
        raise CollisionError(f"angular rule too coarse: n_z = {n_z} < 4")
    if d == 3 and n_phi < 2:
        raise CollisionError(f"need at least 2 azimuthal nodes, got {n_phi}")

    def build(n):
        alpha = _kernel_alpha(kernel)
        if d == 3:
            a_exp = -alpha / 2.0
            x, w = roots_jacobi(n, a_exp, 0.0)
            z = (x + 1.0) / 2.0
            smooth = _folded_smooth(kernel, z) * (1.0 + z) ** (-alpha / 2.0)
            return z, kernel.omega * 2.0 ** (-a_exp - 1.0) * w * smooth
        a_exp = -(alpha + 1.0) / 2.0
        x, w = roots_jacobi(n, a_exp, 0.0)
        z = (x + 1.0) / 2.0
        smooth = (_folded_smooth(kernel, z)
                  * (1.0 + z) ** (-(alpha + 1.0) / 2.0))
        return z, kernel.omega * 2.0 ** (-a_exp - 1.0) * w * smooth

    z, c = build(n_z)
    _, c_ref = build(256)
    total = float(np.sum(c_ref))
    c = c * (total / float(np.sum(c)))
    if d == 3:
        phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    else:
        phi = np.array([1.0, -1.0])
        n_phi = 2
    return AngularQuadrature(d=d, n_z=n_z, n_phi=n_phi, z=z, c=c, phi=phi)


def _folded_smooth(kernel: KernelModel, z: np.ndarray) -> np.ndarray:
    """h(z)+h(-z) with the (1-z)^(-alpha/2) singular factor divided out
    (power profiles only; their (1+z) part is returned by the caller)."""
    if kernel.spec.profile == "table":
        return np.asarray(kernel.h_fold(z), dtype=float)
    if kernel.spec.profile == "power_singular":
        # full (1-z^2)^(-alpha/2) handled by caller exponents
        return 2.0 * kernel.amplitude * np.ones_like(z)
    return 2.0 * kernel.amplitude * np.ones_like(z)


def make_plane_quadrature(kernel: KernelModel, n_r: int = 8,
                          n_psi: int = 4) -> PlaneQuadrature:
    """Radial/azimuthal rule on the Carleman hyperplane.

    Weights already contain the profile, the |u|^(beta-d+2) factor and the
    measure Jacobian in z, so a pair (v, v'*) at separation s contributes
    s^beta * sum_i w_i * value(v + s t_i omega).
    """
    d = kernel.dimension
    if d not in (2, 3):
        raise CollisionError(f"plane quadrature supports d in {{2,3}}, got {d}")
    if n_r < 4:
        raise CollisionError(f"radial rule too coarse: n_r = {n_r} < 4")
    alpha = _kernel_alpha(kernel)
    beta = kernel.beta
    gam = (beta - d + 2.0) / 2.0

    def sym_smooth(z):
        if kernel.spec.profile == "table":
            return np.asarray(kernel.h_sym(z), dtype=float)
        return kernel.amplitude * np.ones_like(z)

    if d == 3:
        x, w = roots_jacobi(n_r, -alpha / 2.0, -alpha / 2.0)
        z = x
        w_full = (w * sym_smooth(z) * 2.0 ** gam
                  * (1.0 + z) ** (-gam - 2.0))
        xd, wd = roots_jacobi(n_r, -alpha / 2.0, 0.0)
        zd = (xd + 1.0) / 2.0
        w_disk = (2.0 ** (alpha / 2.0 - 1.0) * wd
                  * 2.0 * sym_smooth(zd) * (1.0 + zd) ** (-alpha / 2.0)
                  * 2.0 ** gam * (1.0 + zd) ** (-gam - 2.0))
        psi = 2.0 * np.pi * (np.arange(n_psi) + 0.5) / n_psi
        psi_weight = 2.0 * np.pi / n_psi
    else:
        x, w = roots_jacobi(n_r, -(alpha + 1.0) / 2.0, -alpha / 2.0)
        z = x
        w_full = (w * sym_smooth(z) * 2.0 ** gam
                  * (1.0 + z) ** (-gam - 1.5))
        xd, wd = roots_jacobi(n_r, -(alpha + 1.0) / 2.0, 0.0)
        zd = (xd + 1.0) / 2.0
        w_disk = (2.0 ** ((alpha + 1.0) / 2.0 - 1.0) * wd
                  * 2.0 * sym_smooth(zd) * (1.0 + zd) ** (-alpha / 2.0)
                  * 2.0 ** gam * (1.0 + zd) ** (-gam - 1.5))
        psi = np.array([1.0, -1.0])
        n_psi = 2
        psi_weight = 1.0
    t = np.sqrt((1.0 - z) / (1.0 + z))
    t_disk = np.sqrt((1.0 - zd) / (1.0 + zd))
    return PlaneQuadrature(d=d, n_r=n_r, n_psi=n_psi, t=t, w_full=w_full,
                           t_disk=t_disk, w_disk=w_disk, psi=psi,
                           psi_weight=psi_weight)


# ----------------------------------------------------------------------
# loss term


def _check_shapes(grid: VelocityGrid, *fs):
    for f in fs:
        if np.shape(f) != grid.shape:
            raise CollisionError("field shape does not match grid")


def collision_frequency(f: np.ndarray, kernel: KernelModel,
                        grid: VelocityGrid) -> np.ndarray:
    """nu(v) = sum_w f(w) |v-w|^beta delta^d, via FFT convolution."""
    _check_shapes(grid, f)
    n = grid.n
    offs = np.arange(-(n - 1), n) * grid.delta
    s2 = offs ** 2
    out = s2
    for _ in range(grid.d - 1):
        out = out[..., None] + s2
    conv_kernel = out ** (kernel.beta / 2.0)
    nu = fftconvolve(f, conv_kernel, mode="same") * grid.cell_volume
    return np.maximum(nu, 0.0)


def q_minus(f: np.ndarray, g: np.ndarray, kernel: KernelModel,
            grid: VelocityGrid):
    """Loss term (f * |v|^beta) g; returns (Q_minus, nu)."""
    _check_shapes(grid, f, g)
    nu = collision_frequency(f, kernel, grid)
    return nu * g, nu


# ----------------------------------------------------------------------
# numba interpolation + pair loops


@njit(cache=True, inline="always")
def _interp3(f, vmax, delta, n, x, y, z):
    fx = (x + vmax) / delta - 0.5
    fy = (y + vmax) / delta - 0.5
    fz = (z + vmax) / delta - 0.5
    i0 = int(np.floor(fx))
    j0 = int(np.floor(fy))
    k0 = int(np.floor(fz))
    ax = fx - i0
    ay = fy - j0
    az = fz - k0
    acc = 0.0
    for di in range(2):
        ii = i0 + di
        if ii < 0 or ii >= n:
            continue
        wx = ax if di == 1 else 1.0 - ax
        for dj in range(2):
            jj = j0 + dj
            if jj < 0 or jj >= n:
                continue
            wy = ay if dj == 1 else 1.0 - ay
            for dk in range(2):
                kk = k0 + dk
                if kk < 0 or kk >= n:
                    continue
                wz = az if dk == 1 else 1.0 - az
                acc += wx * wy * wz * f[ii, jj, kk]
    return acc


@njit(cache=True, inline="always")
def _interp2(f, vmax, delta, n, x, y):
    fx = (x + vmax) / delta - 0.5
    fy = (y + vmax) / delta - 0.5
    i0 = int(np.floor(fx))
    j0 = int(np.floor(fy))
    ax = fx - i0
    ay = fy - j0
    acc = 0.0
    for di in range(2):
        ii = i0 + di
        if ii < 0 or ii >= n:
            continue
        wx = ax if di == 1 else 1.0 - ax
        for dj in range(2):
            jj = j0 + dj
            if jj < 0 or jj >= n:
                continue
            wy = ay if dj == 1 else 1.0 - ay
            acc += wx * wy * f[ii, jj]
    return acc


@njit(cache=True, parallel=True)
def _qplus_sigma_3d(f, g, axis, vmax, delta, beta, zn, zc, cphi, sphi, out):
    n = axis.shape[0]
    nz = zn.shape[0]
    nphi = cphi.shape[0]
    wphi = 1.0 / nphi
    for ii in prange(n * n * n):
        i0 = ii // (n * n)
        rem = ii % (n * n)
        i1 = rem // n
        i2 = rem % n
        v0 = axis[i0]
        v1 = axis[i1]
        v2 = axis[i2]
        acc = 0.0
        for j0 in range(n):
            w0 = axis[j0]
            for j1 in range(n):
                w1 = axis[j1]
                for j2 in range(n):
                    w2 = axis[j2]
                    u0 = v0 - w0
                    u1 = v1 - w1
                    u2 = v2 - w2
                    um2 = u0 * u0 + u1 * u1 + u2 * u2
                    if um2 <= 0.0:
                        continue
                    um = np.sqrt(um2)
                    ub = um ** beta
                    h0 = u0 / um
                    h1 = u1 / um
                    h2 = u2 / um
                    # orthonormal frame perpendicular to h
                    if abs(h0) <= 0.9:
                        a0, a1, a2 = 1.0, 0.0, 0.0
                    else:
                        a0, a1, a2 = 0.0, 1.0, 0.0
                    p = a0 * h0 + a1 * h1 + a2 * h2
                    e10 = a0 - p * h0
                    e11 = a1 - p * h1
                    e12 = a2 - p * h2
                    en = np.sqrt(e10 * e10 + e11 * e11 + e12 * e12)
                    e10 /= en
                    e11 /= en
                    e12 /= en
                    e20 = h1 * e12 - h2 * e11
                    e21 = h2 * e10 - h0 * e12
                    e22 = h0 * e11 - h1 * e10
                    m0 = 0.5 * (v0 + w0)
                    m1 = 0.5 * (v1 + w1)
                    m2 = 0.5 * (v2 + w2)
                    hw = 0.5 * um
                    pair = 0.0
                    for jz in range(nz):
                        zz = zn[jz]
                        rt = np.sqrt(max(0.0, 1.0 - zz * zz))
                        zacc = 0.0
                        for jp in range(nphi):
                            s0 = zz * h0 + rt * (cphi[jp] * e10 + sphi[jp] * e20)
                            s1 = zz * h1 + rt * (cphi[jp] * e11 + sphi[jp] * e21)
                            s2 = zz * h2 + rt * (cphi[jp] * e12 + sphi[jp] * e22)
                            vp0 = m0 + hw * s0
                            vp1 = m1 + hw * s1
                            vp2 = m2 + hw * s2
                            vs0 = m0 - hw * s0
                            vs1 = m1 - hw * s1
                            vs2 = m2 - hw * s2
                            fa = _interp3(f, vmax, delta, n, vs0, vs1, vs2)
                            if fa != 0.0:
                                fa *= _interp3(g, vmax, delta, n, vp0, vp1, vp2)
                                zacc += fa
                        pair += zc[jz] * zacc * wphi
                    acc += ub * pair
        out[i0, i1, i2] = acc * delta * delta * delta


@njit(cache=True, parallel=True)
def _qplus_sigma_2d(f, g, axis, vmax, delta, beta, zn, zc, out):
    n = axis.shape[0]
    nz = zn.shape[0]
    for ii in prange(n * n):
        i0 = ii // n
        i1 = ii % n
        v0 = axis[i0]
        v1 = axis[i1]
        acc = 0.0
        for j0 in range(n):
            w0 = axis[j0]
            for j1 in range(n):
                w1 = axis[j1]
                u0 = v0 - w0
                u1 = v1 - w1
                um2 = u0 * u0 + u1 * u1
                if um2 <= 0.0:
                    continue
                um = np.sqrt(um2)
                ub = um ** beta
                h0 = u0 / um
                h1 = u1 / um
                e10 = -h1
                e11 = h0
                m0 = 0.5 * (v0 + w0)
                m1 = 0.5 * (v1 + w1)
                hw = 0.5 * um
                pair = 0.0
                for jz in range(nz):
                    zz = zn[jz]
                    rt = np.sqrt(max(0.0, 1.0 - zz * zz))
                    zacc = 0.0
                    for branch in range(2):
                        sgn = 1.0 if branch == 0 else -1.0
                        s0 = zz * h0 + sgn * rt * e10
                        s1 = zz * h1 + sgn * rt * e11
                        fa = _interp2(f, vmax, delta, n, m0 - hw * s0, m1 - hw * s1)
                        if fa != 0.0:
                            fa *= _interp2(g, vmax, delta, n, m0 + hw * s0, m1 + hw * s1)
                            zacc += fa
                    pair += zc[jz] * zacc * 0.5
                acc += ub * pair
        out[i0, i1] = acc * delta * delta


@njit(cache=True, parallel=True)
def _qplus_sigma_maxw_3d(f, a_coef, c_coef, axis, vmax, delta, beta, zn, zc,
                         cphi, sphi, out):
    n = axis.shape[0]
    nz = zn.shape[0]
    nphi = cphi.shape[0]
    wphi = 1.0 / nphi
    for ii in prange(n * n * n):
        i0 = ii // (n * n)
        rem = ii % (n * n)
        i1 = rem // n
        i2 = rem % n
        v0 = axis[i0]
        v1 = axis[i1]
        v2 = axis[i2]
        acc = 0.0
        for j0 in range(n):
            w0 = axis[j0]
            for j1 in range(n):
                w1 = axis[j1]
                for j2 in range(n):
                    w2 = axis[j2]
                    u0 = v0 - w0
                    u1 = v1 - w1
                    u2 = v2 - w2
                    um2 = u0 * u0 + u1 * u1 + u2 * u2
                    if um2 <= 0.0:
                        continue
                    um = np.sqrt(um2)
                    ub = um ** beta
                    h0 = u0 / um
                    h1 = u1 / um
                    h2 = u2 / um
                    if abs(h0) <= 0.9:
                        a0, a1, a2 = 1.0, 0.0, 0.0
                    else:
                        a0, a1, a2 = 0.0, 1.0, 0.0
                    p = a0 * h0 + a1 * h1 + a2 * h2
                    e10 = a0 - p * h0
                    e11 = a1 - p * h1
                    e12 = a2 - p * h2
                    en = np.sqrt(e10 * e10 + e11 * e11 + e12 * e12)
                    e10 /= en
                    e11 /= en
                    e12 /= en
                    e20 = h1 * e12 - h2 * e11
                    e21 = h2 * e10 - h0 * e12
                    e22 = h0 * e11 - h1 * e10
                    m0 = 0.5 * (v0 + w0)
                    m1 = 0.5 * (v1 + w1)
                    m2 = 0.5 * (v2 + w2)
                    hw = 0.5 * um
                    pair = 0.0
                    for jz in range(nz):
                        zz = zn[jz]
                        rt = np.sqrt(max(0.0, 1.0 - zz * zz))
                        zacc = 0.0
                        for jp in range(nphi):
                            s0 = zz * h0 + rt * (cphi[jp] * e10 + sphi[jp] * e20)
                            s1 = zz * h1 + rt * (cphi[jp] * e11 + sphi[jp] * e21)
                            s2 = zz * h2 + rt * (cphi[jp] * e12 + sphi[jp] * e22)
                            vs0 = m0 - hw * s0
                            vs1 = m1 - hw * s1
                            vs2 = m2 - hw * s2
                            fa = _interp3(f, vmax, delta, n, vs0, vs1, vs2)
                            if fa != 0.0:
                                vp0 = m0 + hw * s0
                                vp1 = m1 + hw * s1
                                vp2 = m2 + hw * s2
                                q2 = vp0 * vp0 + vp1 * vp1 + vp2 * vp2
                                zacc += fa * np.exp(-a_coef * q2 + c_coef)
                        pair += zc[jz] * zacc * wphi
                    acc += ub * pair
        out[i0, i1, i2] = acc * delta * delta * delta


@njit(cache=True, parallel=True)
def _qplus_sigma_maxw_2d(f, a_coef, c_coef, axis, vmax, delta, beta, zn, zc,
                         out):
    n = axis.shape[0]
    nz = zn.shape[0]
    for ii in prange(n * n):
        i0 = ii // n
        i1 = ii % n
        v0 = axis[i0]
        v1 = axis[i1]
        acc = 0.0
        for j0 in range(n):
            w0 = axis[j0]
            for j1 in range(n):
                w1 = axis[j1]
                u0 = v0 - w0
                u1 = v1 - w1
                um2 = u0 * u0 + u1 * u1
                if um2 <= 0.0:
                    continue
                um = np.sqrt(um2)
                ub = um ** beta
                h0 = u0 / um
                h1 = u1 / um
                e10 = -h1
                e11 = h0
                m0 = 0.5 * (v0 + w0)
                m1 = 0.5 * (v1 + w1)
                hw = 0.5 * um
                pair = 0.0
                for jz in range(nz):
                    zz = zn[jz]
                    rt = np.sqrt(max(0.0, 1.0 - zz * zz))
                    zacc = 0.0
                    for branch in range(2):
                        sgn = 1.0 if branch == 0 else -1.0
                        s0 = zz * h0 + sgn * rt * e10
                        s1 = zz * h1 + sgn * rt * e11
                        fa = _interp2(f, vmax, delta, n, m0 - hw * s0, m1 - hw * s1)
                        if fa != 0.0:
                            vp0 = m0 + hw * s0
                            vp1 = m1 + hw * s1
                            zacc += fa * np.exp(-a_coef * (vp0 * vp0 + vp1 * vp1)
                                                + c_coef)
                    pair += zc[jz] * zacc * 0.5
                acc += ub * pair
        out[i0, i1] = acc * delta * delta


@njit(cache=True, parallel=True)
def _qplus_carleman_3d(f, g, axis, vmax, delta, beta, tn, wn, cpsi, spsi,
                       wpsi, out, skips):
    n = axis.shape[0]
    nr = tn.shape[0]
    npsi = cpsi.shape[0]
    for ii in prange(n * n * n):
        i0 = ii // (n * n)
        rem = ii % (n * n)
        i1 = rem // n
        i2 = rem % n
        v0 = axis[i0]
        v1 = axis[i1]
        v2 = axis[i2]
        acc = 0.0
        nskip = 0
        for j0 in range(n):
            for j1 in range(n):
                for j2 in range(n):
                    d0 = axis[j0] - v0
                    d1 = axis[j1] - v1
                    d2 = axis[j2] - v2
                    s2 = d0 * d0 + d1 * d1 + d2 * d2
                    s = np.sqrt(s2)
                    if s < 0.5 * delta:
                        nskip += 1
                        continue
                    fv = f[j0, j1, j2]
                    if fv == 0.0:
                        continue
                    h0 = d0 / s
                    h1 = d1 / s
                    h2 = d2 / s
                    if abs(h0) <= 0.9:
                        a0, a1, a2 = 1.0, 0.0, 0.0
                    else:
                        a0, a1, a2 = 0.0, 1.0, 0.0
                    p = a0 * h0 + a1 * h1 + a2 * h2
                    e10 = a0 - p * h0
                    e11 = a1 - p * h1
                    e12 = a2 - p * h2
                    en = np.sqrt(e10 * e10 + e11 * e11 + e12 * e12)
                    e10 /= en
                    e11 /= en
                    e12 /= en
                    e20 = h1 * e12 - h2 * e11
                    e21 = h2 * e10 - h0 * e12
                    e22 = h0 * e11 - h1 * e10
                    pair = 0.0
                    for jp in range(npsi):
                        o0 = cpsi[jp] * e10 + spsi[jp] * e20
                        o1 = cpsi[jp] * e11 + spsi[jp] * e21
                        o2 = cpsi[jp] * e12 + spsi[jp] * e22
                        inner = 0.0
                        for jr in range(nr):
                            rr = s * tn[jr]
                            gv = _interp3(g, vmax, delta, n,
                                          v0 + rr * o0, v1 + rr * o1,
                                          v2 + rr * o2)
                            inner += wn[jr] * gv
                        pair += inner
                    acc += fv * s ** beta * pair
        out[i0, i1, i2] = acc * 4.0 * wpsi * delta * delta * delta
        skips[ii] = nskip


@njit(cache=True, parallel=True)
def _qplus_carleman_2d(f, g, axis, vmax, delta, beta, tn, wn, out, skips):
    n = axis.shape[0]
    nr = tn.shape[0]
    for ii in prange(n * n):
        i0 = ii // n
        i1 = ii % n
        v0 = axis[i0]
        v1 = axis[i1]
        acc = 0.0
        nskip = 0
        for j0 in range(n):
            for j1 in range(n):
                d0 = axis[j0] - v0
                d1 = axis[j1] - v1
                s2 = d0 * d0 + d1 * d1
                s = np.sqrt(s2)
                if s < 0.5 * delta:
                    nskip += 1
                    continue
                fv = f[j0, j1]
                if fv == 0.0:
                    continue
                h0 = d0 / s
                h1 = d1 / s
                e10 = -h1
                e11 = h0
                pair = 0.0
                for branch in range(2):
                    sgn = 1.0 if branch == 0 else -1.0
                    o0 = sgn * e10
                    o1 = sgn * e11
                    inner = 0.0
                    for jr in range(nr):
                        rr = s * tn[jr]
                        inner += wn[jr] * _interp2(g, vmax, delta, n,
                                                   v0 + rr * o0, v1 + rr * o1)
                    pair += inner
                acc += fv * s ** beta * pair
        out[i0, i1] = acc * 2.0 * delta * delta
        skips[ii] = nskip


# ----------------------------------------------------------------------
# gain term wrappers


def q_plus_sigma(f: np.ndarray, g: np.ndarray, kernel: KernelModel,
                 grid: VelocityGrid,
                 angq: Optional[AngularQuadrature] = None) -> np.ndarray:
    """Gain term via sphere quadrature of f(v'*) g(v') B-bar."""
    _check_shapes(grid, f, g)
    if kernel.dimension != grid.d:
        raise CollisionError("kernel/grid dimension mismatch")
    if angq is None:
        angq = make_angular_quadrature(kernel)
    if angq.d != grid.d:
        raise CollisionError("angular quadrature dimension mismatch")
    out = grid.zeros()
    f = np.ascontiguousarray(f, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if grid.d == 3:
        _qplus_sigma_3d(f, g, grid.axis, grid.vmax, grid.delta, kernel.beta,
                        angq.z, angq.c, np.cos(angq.phi), np.sin(angq.phi),
                        out)
    else:
        _qplus_sigma_2d(f, g, grid.axis, grid.vmax, grid.delta, kernel.beta,
                        angq.z, angq.c, out)
    return out


def q_plus_maxwellian(f: np.ndarray, M: MaxwellianParams, kernel: KernelModel,
                      grid: VelocityGrid,
                      angq: Optional[AngularQuadrature] = None) -> np.ndarray:
    """Gain term Q+(f, M) with the centered Maxwellian argument evaluated
    analytically at the post-collision points.

    Interpolating an exponential across tail cells overshoots its true value
    by large factors, which would wreck ratio diagnostics against M; this
    variant removes that error entirely.
    """
    _check_shapes(grid, f)
    if any(M.b):
        raise CollisionError("analytic gain path requires a centered Maxwellian")
    if kernel.dimension != grid.d:
        raise CollisionError("kernel/grid dimension mismatch")
    if angq is None:
        angq = make_angular_quadrature(kernel)
    out = grid.zeros()
    f = np.ascontiguousarray(f, dtype=np.float64)
    if grid.d == 3:
        _qplus_sigma_maxw_3d(f, M.a, M.c, grid.axis, grid.vmax, grid.delta,
                             kernel.beta, angq.z, angq.c, np.cos(angq.phi),
                             np.sin(angq.phi), out)
    else:
        _qplus_sigma_maxw_2d(f, M.a, M.c, grid.axis, grid.vmax, grid.delta,
                             kernel.beta, angq.z, angq.c, out)
    return out


def q_plus_carleman(f: np.ndarray, g: np.ndarray, kernel: KernelModel,
                    grid: VelocityGrid,
                    planq: Optional[PlaneQuadrature] = None):
    """Gain term via the hyperplane representation; returns (field, skips).

    skips counts coincident (v, v'*) pairs dropped as a measure-zero
    surrogate (separation below half a cell).
    """
    _check_shapes(grid, f, g)
    if kernel.dimension != grid.d:
        raise CollisionError("kernel/grid dimension mismatch")
    if planq is None:
        planq = make_plane_quadrature(kernel)
    if planq.d != grid.d:
        raise CollisionError("plane quadrature dimension mismatch")
    out = grid.zeros()
    skips = np.zeros(grid.n_cells, dtype=np.int64)
    f = np.ascontiguousarray(f, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if grid.d == 3:
        _qplus_carleman_3d(f, g, grid.axis, grid.vmax, grid.delta,
                           kernel.beta, planq.t, planq.w_full,
                           np.cos(planq.psi), np.sin(planq.psi),
                           planq.psi_weight, out, skips)
    else:
        _qplus_carleman_2d(f, g, grid.axis, grid.vmax, grid.delta,
                           kernel.beta, planq.t, planq.w_full, out, skips)
    return out, int(skips.sum())


def _plane_frame(nhat: np.ndarray):
    d = nhat.shape[0]
    if d == 2:
        return np.array([[-nhat[1], nhat[0]]])
    a = np.array([1.0, 0.0, 0.0]) if abs(nhat[0]) <= 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - np.dot(a, nhat) * nhat
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nhat, e1)
    return np.array([e1, e2])


def carleman_kernel(v, vps, M: MaxwellianParams, kernel: KernelModel,
                    planq: Optional[PlaneQuadrature] = None,
                    min_sep: float = 0.0) -> float:
    """Ratio kernel K(v, v'*): plane integral of M(v*) against the folded
    kernel, restricted to the disk |v'-v| <= |v-v'*| where its support lies.
    """
    if any(M.b):
        raise CollisionError("ratio kernel requires a centered Maxwellian")
    v = np.asarray(v, dtype=float)
    vps = np.asarray(vps, dtype=float)
    if planq is None:
        planq = make_plane_quadrature(kernel, n_r=32, n_psi=16)
    diff = vps - v
    s = float(np.linalg.norm(diff))
    if s <= min_sep or s == 0.0:
        raise CollisionError(
            f"pair separation {s} below the resolvable minimum {min_sep}")
    nhat = diff / s
    frame = _plane_frame(nhat)
    d = kernel.dimension
    if d == 3:
        cs = np.cos(planq.psi)[:, None, None] * frame[0][None, None, :]
        sn = np.sin(planq.psi)[:, None, None] * frame[1][None, None, :]
        omegas = cs + sn  # (n_psi, 1, d)
        pts = vps[None, None, :] + s * planq.t_disk[None, :, None] * omegas
        vals = np.exp(M.log_at(pts))
        inner = float(np.sum(vals * planq.w_disk[None, :])) * planq.psi_weight
    else:
        pts = (vps[None, None, :]
               + s * planq.t_disk[None, :, None]
               * (planq.psi[:, None, None] * frame[0][None, None, :]))
        vals = np.exp(M.log_at(pts))
        inner = float(np.sum(vals * planq.w_disk[None, :])) * planq.psi_weight
    return 2.0 ** (d - 1) * s ** kernel.beta * inner


# ----------------------------------------------------------------------
# conservation projection


def project_conservation(grid: VelocityGrid, q: np.ndarray,
                         weight: Optional[np.ndarray] = None) -> np.ndarray:
    """Remove the components of q along the collision invariants
    {1, v_1..v_d, |v|^2} in the grid quadrature inner product.

    With a nonnegative weight field the correction is weight * (invariant
    span element) instead of a span element: the same moments are
    annihilated exactly, but cells where the weight vanishes are left
    untouched, which keeps corrections away from empty tail cells.  Falls
    back to the unweighted projection when the weighted normal equations
    are numerically singular.
    """
    _check_shapes(grid, q)
    coords = grid.coords().reshape(-1, grid.d)
    cols = [np.ones(grid.n_cells)]
    cols.extend(coords[:, i] for i in range(grid.d))
    cols.append(np.sum(coords * coords, axis=1))
    phi = np.column_stack(cols)
    rhs = phi.T @ q.reshape(-1)
    if weight is None:
        w_phi = phi
    else:
        _check_shapes(grid, weight)
        if np.any(weight < 0):
            raise CollisionError("projection weight must be nonnegative")
        w_phi = weight.reshape(-1, 1) * phi
    gram = phi.T @ w_phi
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        if weight is None:
            raise
        return project_conservation(grid, q)
    if weight is not None and not np.all(np.isfinite(coef)):
        return project_conservation(grid, q)
    return q - (w_phi @ coef).reshape(grid.shape)


# ----------------------------------------------------------------------
# quantitative estimates


def gain_bound_constant(kernel: KernelModel, a: float) -> dict:
    """Assembled constant of the weighted gain estimate.

    The folded kernel satisfies B-bar <= C_B (1+|u|^beta)|sin theta|^(-alpha),
    and the ratio kernel obeys K <= C_B * max(T_a, T_b) * (1+s^(beta-eps))
    with the near-pair constant T_a and the far-pair constant T_b.
    """
    if a <= 0:
        raise CollisionError(f"Maxwellian exponent a must be positive, got {a}")
    d = kernel.dimension
    alpha = _kernel_alpha(kernel)
    beta = kernel.beta
    om = sphere_measure(d - 2)
    c_b = kernel.profile_bound()
    t_a = 2.0 ** (d - 1 - alpha) * (1.0 + 2.0 ** (beta / 2.0)) * om / (d - 1 - alpha)
    t_b = 2.0 ** (d - alpha + beta / 2.0) * (om / (d - 1 - alpha)
                                             + (np.pi / a) ** ((d - 1) / 2.0))
    return {
        "C_B": float(c_b),
        "case_a": float(t_a),
        "case_b": float(t_b),
        "C": float(c_b * max(t_a, t_b)),
        "eps": float(kernel.epsilon),
    }


def verify_weighted_gain_bound(f: np.ndarray, M: MaxwellianParams,
                               kernel: KernelModel, grid: VelocityGrid,
                               angq: Optional[AngularQuadrature] = None) -> dict:
    """Check max Q+(f,M)/(w_eps M) <= C * int f w_eps / M.

    Returns both sides, the margin, and every constant entering C.
    """
    from .fields import weighted_ratio_integral

    _check_shapes(grid, f)
    if np.any(f < 0):
        raise CollisionError("field must be nonnegative")
    if any(M.b):
        raise CollisionError("gain estimate requires a centered Maxwellian")
    consts = gain_bound_constant(kernel, M.a)
    eps = consts["eps"]
    wf = WeightFunction(beta=kernel.beta, eps=eps)
    qp = q_plus_maxwellian(f, M, kernel, grid, angq)
    log_inv_m = -M.log_density(grid)
    w = wf.on_grid(grid)
    ratio = np.zeros(grid.shape)
    pos = qp > 0
    ratio[pos] = np.exp(np.log(qp[pos]) + log_inv_m[pos] - np.log(w[pos]))
    lhs = float(np.max(ratio)) if np.any(pos) else 0.0
    integral = weighted_ratio_integral(grid, f, M, weight="w_eps",
                                       eps=eps, beta=kernel.beta)
    rhs = consts["C"] * integral
    return {
        "lhs": lhs,
        "rhs": rhs,
        "margin": rhs - lhs,
        "passed": bool(lhs <= rhs),
        **consts,
    }


def dissipativity_functional(f: np.ndarray, u: np.ndarray,
                             kernel: KernelModel, grid: VelocityGrid,
                             angq: Optional[AngularQuadrature] = None,
                             sign_at_zero: float = -1.0):
    """int Q(f,u) sign(u) dv and the (sign(u)+1)/2 variant."""
    _check_shapes(grid, f, u)
    if np.any(f < 0):
        raise CollisionError("first argument must be nonnegative")
    if not -1.0 <= sign_at_zero <= 1.0:
        raise CollisionError("sign_at_zero must lie in [-1,1]")
    qp = q_plus_sigma(f, u, kernel, grid, angq)
    qm, _nu = q_minus(f, u, kernel, grid)
    q = qp - qm
    sgn = np.where(u > 0, 1.0, np.where(u < 0, -1.0, sign_at_zero))
    full = float(np.sum(q * sgn)) * grid.cell_volume
    half = float(np.sum(q * (sgn + 1.0) / 2.0)) * grid.cell_volume
    return full, half


def holder_gap(f: np.ndarray, g: np.ndarray, p: float, k: float,
               kernel: KernelModel, grid: VelocityGrid,
               angq: Optional[AngularQuadrature] = None):
    """Continuity estimate for the quadratic operator between weighted
    L1 spaces (weight (1+|v|^2)^p); returns (lhs, rhs) with lhs <= rhs."""
    _check_shapes(grid, f, g)
    beta = kernel.beta
    if k <= p + beta / 2.0:
        raise CollisionError(f"require k > p + beta/2, got k={k}, p={p}")
    if np.any(f < 0) or np.any(g < 0):
        raise CollisionError("fields must be nonnegative")

    def weighted_l1(h, power):
        w = (1.0 + grid.speed_sq()) ** power
        return float(np.sum(np.abs(h) * w)) * grid.cell_volume

    qf = q_plus_sigma(f, f, kernel, grid, angq) - q_minus(f, f, kernel, grid)[0]
    qg = q_plus_sigma(g, g, kernel, grid, angq) - q_minus(g, g, kernel, grid)[0]
    lhs = weighted_l1(qf - qg, p)
    norm_fk = weighted_l1(f, k)
    norm_gk = weighted_l1(g, k)
    norm_sum = weighted_l1(f + g, k)
    diff_l1 = weighted_l1(f - g, 0.0)
    theta = (p + beta / 2.0) / k
    c_p = 2.0 ** (p + 3.0) * norm_sum * (1.0 + (norm_fk + norm_gk) ** theta)
    rhs = c_p * (diff_l1 ** (1.0 - theta) + diff_l1)
    return lhs, rhs
