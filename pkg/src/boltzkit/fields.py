"""Velocity grids, distribution fields, Maxwellians and velocity moments.

Grids are uniform and cell-centered so that no node sits exactly at v = 0
and every cell carries the same quadrature weight delta^d.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "VelocityGrid",
    "MaxwellianParams",
    "MomentLedger",
    "InterpolationReport",
    "FieldError",
    "build_grid",
    "sample_maxwellian",
    "moment",
    "normalized_moments",
    "weighted_ratio_integral",
    "exponential_partial_sums",
    "verify_moment_interpolation",
    "moment_index_set",
    "save_field",
    "load_field",
    "field_to_csv",
]

_MAGIC = b"BFLD"
_HEADER = struct.Struct("<4sii d")  # magic, d, N, vmax
_HEADER_LEN = 32


class FieldError(ValueError):
    """Raised for invalid grid/field arguments."""


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centered grid on [-vmax, vmax]^d."""

    d: int
    vmax: float
    n: int

    @property
    def delta(self) -> float:
        return 2.0 * self.vmax / self.n

    @property
    def cell_volume(self) -> float:
        return self.delta ** self.d

    @property
    def axis(self) -> np.ndarray:
        i = np.arange(self.n)
        return -self.vmax + (i + 0.5) * self.delta

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def n_cells(self) -> int:
        return self.n ** self.d

    def coords(self) -> np.ndarray:
        """Cell centers, shape (n,)*d + (d,)."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def speed_sq(self) -> np.ndarray:
        """|v|^2 per cell, shape (n,)*d."""
        ax2 = self.axis ** 2
        out = ax2
        for _ in range(self.d - 1):
            out = out[..., None] + ax2
        return out

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def build_grid(d: int, vmax: float, n: int, max_cells: int = 8_000_000) -> VelocityGrid:
    """Construct a grid; rejects d outside {2,3}, tiny n, or oversized grids."""
    if d not in (2, 3):
        raise FieldError(f"dimension must be 2 or 3, got {d}")
    if n < 2:
        raise FieldError(f"points per axis must be >= 2, got {n}")
    if vmax <= 0:
        raise FieldError(f"vmax must be positive, got {vmax}")
    if n ** d > max_cells:
        raise FieldError(
            f"grid of {n}**{d} = {n ** d} cells exceeds the cap of {max_cells};"
            f" raise max_cells to allocate it"
        )
    return VelocityGrid(d=d, vmax=float(vmax), n=int(n))


@dataclass(frozen=True)
class MaxwellianParams:
    """M(v) = exp(-a |v|^2 + b . v + c)."""

    a: float
    b: tuple = ()
    c: float = 0.0

    def __post_init__(self):
        if self.a <= 0:
            raise FieldError(f"Maxwellian exponent a must be positive, got {self.a}")
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))

    def log_density(self, grid: VelocityGrid) -> np.ndarray:
        out = -self.a * grid.speed_sq() + self.c
        if any(self.b):
            coords = grid.coords()
            out = out + coords @ np.asarray(self.b + (0.0,) * (grid.d - len(self.b)))[: grid.d]
        return out

    def log_at(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        s2 = np.sum(v * v, axis=-1)
        out = -self.a * s2 + self.c
        if any(self.b):
            b = np.asarray(self.b + (0.0,) * (v.shape[-1] - len(self.b)))[: v.shape[-1]]
            out = out + v @ b
        return out


def sample_maxwellian(params: MaxwellianParams, grid: VelocityGrid) -> np.ndarray:
    """Pointwise Maxwellian values on the grid; strictly positive."""
    return np.exp(params.log_density(grid))


def moment(grid: VelocityGrid, f: np.ndarray, k: float) -> float:
    """m_k = int f |v|^{2k} dv under the midpoint rule."""
    if k < 0:
        raise FieldError(f"moment order must be >= 0, got {k}")
    s2 = grid.speed_sq()
    if k == 0:
        return float(np.sum(f)) * grid.cell_volume
    return float(np.sum(f * s2 ** k)) * grid.cell_volume


@dataclass(frozen=True)
class MomentLedger:
    """Raw moments m_k and normalized moments z_k = m_k / Gamma(k + b)."""

    b_norm: float
    ks: np.ndarray
    m: np.ndarray
    z: np.ndarray

    def index(self, k: float) -> int:
        i = int(np.argmin(np.abs(self.ks - k)))
        if abs(self.ks[i] - k) > 1e-12:
            raise FieldError(f"order {k} not present in the ledger")
        return i

    def m_of(self, k: float) -> float:
        return float(self.m[self.index(k)])

    def z_of(self, k: float) -> float:
        return float(self.z[self.index(k)])


def normalized_moments(grid: VelocityGrid, f: np.ndarray, ks: Iterable[float],
                       b_norm: float) -> MomentLedger:
    """Ledger of m_k and z_k = m_k / Gamma(k + b_norm) over the given orders.

    The Gamma normalization is applied in log space for large k to avoid
    overflow in the intermediate Gamma value.
    """
    if b_norm <= 0:
        raise FieldError(f"normalization parameter b must be positive, got {b_norm}")
    ks = np.array(sorted(set(float(k) for k in ks)))
    m = np.array([moment(grid, f, k) for k in ks])
    z = np.zeros_like(m)
    pos = m > 0
    z[pos] = np.exp(np.log(m[pos]) - gammaln(ks[pos] + b_norm))
    z[~pos] = m[~pos] * np.exp(-gammaln(ks[~pos] + b_norm))
    return MomentLedger(b_norm=float(b_norm), ks=ks, m=m, z=z)


def moment_index_set(beta: float, k_max: float = 8.0) -> np.ndarray:
    """Index set J = {j + (beta/2) l : j, l >= 0 integers} \\ {0}, truncated."""
    half = beta / 2.0
    vals = set()
    j = 0
    while j <= k_max:
        l = 0
        while j + half * l <= k_max + 1e-12:
            vals.add(round(j + half * l, 12))
            l += 1
        j += 1
    vals.discard(0.0)
    return np.array(sorted(vals))


def weighted_ratio_integral(grid: VelocityGrid, f: np.ndarray, M: MaxwellianParams,
                            weight: str = "one", eps: Optional[float] = None,
                            beta: Optional[float] = None) -> float:
    """int f(v) w(v) / M(v) dv with w = 1 or w_eps(v) = 1 + |v|^(beta-eps).

    1/M is evaluated in log space to avoid overflow for wide boxes.
    """
    log_inv_m = -M.log_density(grid)
    if weight == "one":
        log_w = 0.0
    elif weight == "w_eps":
        if eps is None or beta is None:
            raise FieldError("w_eps weight requires eps and beta")
        log_w = np.log1p(grid.speed_sq() ** ((beta - eps) / 2.0))
    else:
        raise FieldError(f"unknown weight {weight!r}")
    vals = np.zeros(grid.shape)
    pos = f > 0
    vals[pos] = np.exp(np.log(f[pos]) + log_inv_m[pos]
                       + (log_w[pos] if isinstance(log_w, np.ndarray) else log_w))
    return float(np.sum(vals)) * grid.cell_volume


def exponential_partial_sums(grid: VelocityGrid, f: np.ndarray, a: float,
                             k_terms: int = 12) -> np.ndarray:
    """Partial sums sum_{k<=K} m_k a^k / k! of the formal expansion of
    int f/M dv for M = exp(-a|v|^2) (zero drift)."""
    sums = np.zeros(k_terms + 1)
    total = 0.0
    for k in range(k_terms + 1):
        total += moment(grid, f, k) * a ** k / float(np.exp(gammaln(k + 1)))
        sums[k] = total
    return sums


@dataclass(frozen=True)
class InterpolationReport:
    k1: float
    k: float
    k2: float
    lower: float   # (m_k1/m_0)^(1/k1)
    middle: float  # (m_k/m_0)^(1/k)
    upper: float   # (m_k2/m_0)^(1/k2)

    @property
    def slack_low(self) -> float:
        return self.middle - self.lower

    @property
    def slack_high(self) -> float:
        return self.upper - self.middle

    @property
    def ok(self) -> bool:
        tol = 1e-12 * max(1.0, abs(self.middle))
        return self.slack_low >= -tol and self.slack_high >= -tol


def verify_moment_interpolation(grid: VelocityGrid, f: np.ndarray,
                                k1: float, k: float, k2: float) -> InterpolationReport:
    """Check (m_k1/m_0)^(1/k1) <= (m_k/m_0)^(1/k) <= (m_k2/m_0)^(1/k2)."""
    if not (0 < k1 <= k <= k2):
        raise FieldError(f"require 0 < k1 <= k <= k2, got {(k1, k, k2)}")
    if np.any(f < 0):
        raise FieldError("field must be nonnegative")
    m0 = moment(grid, f, 0.0)
    if m0 <= 0:
        raise FieldError("field must have positive mass")
    vals = [(moment(grid, f, kk) / m0) ** (1.0 / kk) for kk in (k1, k, k2)]
    return InterpolationReport(k1=k1, k=k, k2=k2,
                               lower=vals[0], middle=vals[1], upper=vals[2])


def save_field(path, grid: VelocityGrid, f: np.ndarray) -> None:
    """Write the field as little-endian float64, row-major, after a 32-byte
    header (magic 'BFLD', d, N, vmax)."""
    if f.shape != grid.shape:
        raise FieldError("field shape does not match grid")
    header = _HEADER.pack(_MAGIC, grid.d, grid.n, grid.vmax)
    header += b"\x00" * (_HEADER_LEN - len(header))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def load_field(path):
    """Read a field container written by save_field; returns (grid, values)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_LEN)
        if len(header) < _HEADER_LEN:
            raise FieldError("truncated field container header")
        magic, d, n, vmax = _HEADER.unpack(header[: _HEADER.size])
        if magic != _MAGIC:
            raise FieldError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        grid = VelocityGrid(d=d, vmax=vmax, n=n)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != grid.n_cells:
        raise FieldError(f"expected {grid.n_cells} values, found {data.size}")
    return grid, data.reshape(grid.shape).copy()


def field_to_csv(path, grid: VelocityGrid, f: np.ndarray) -> None:
    """CSV dump (one row per cell: coordinates then value); small grids only."""
    coords = grid.coords().reshape(-1, grid.d)
    vals = np.asarray(f).reshape(-1, 1)
    header = ",".join(f"v{i}" for i in range(grid.d)) + ",f"
    np.savetxt(path, np.hstack([coords, vals]), delimiter=",",
               header=header, comments="")
