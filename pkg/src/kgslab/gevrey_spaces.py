"""Gevrey norms G^{sigma,s}, the embedding constant, and lattice Bourgain norms.

All norms are weighted l^2 sums over coefficients in the normalization of
:mod:`kgslab.spectral_core`. When ``sigma * max ||xi||_1`` exceeds
``LOG_DOMAIN_THRESHOLD`` the sum is accumulated in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from .spectral_core import SpectralField, TorusGrid, bracket, ell1

__all__ = [
    "GevreyParams",
    "BourgainParams",
    "SpaceTimeField",
    "Dispersion",
    "DISPERSIONS",
    "dispersion_surface",
    "gevrey_norm",
    "sobolev_norm",
    "embedding_constant",
    "bourgain_norm",
    "LOG_DOMAIN_THRESHOLD",
]

LOG_DOMAIN_THRESHOLD = 500.0
_LOG_MAX = math.log(np.finfo(float).max)

Dispersion = Literal["schrodinger", "wave_plus", "wave_minus"]
DISPERSIONS: tuple[str, ...] = ("schrodinger", "wave_plus", "wave_minus")


def dispersion_surface(tag: str, xi: np.ndarray) -> np.ndarray:
    """h(xi) for a dispersion tag; xi has the component axis first.

    schrodinger: -|xi|^2, wave_plus: -|xi|, wave_minus: +|xi|.
    """
    sq = np.sum(np.asarray(xi, dtype=float) ** 2, axis=0)
    if tag == "schrodinger":
        return -sq
    if tag == "wave_plus":
        return -np.sqrt(sq)
    if tag == "wave_minus":
        return np.sqrt(sq)
    raise ValueError(f"unknown dispersion tag {tag!r}; expected one of {DISPERSIONS}")


@dataclass(frozen=True)
class GevreyParams:
    sigma: float
    s: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not math.isfinite(self.s):
            raise ValueError(f"s must be finite, got {self.s}")


@dataclass(frozen=True)
class BourgainParams:
    sigma: float
    s: float
    b: float
    h: str = "schrodinger"

    def __post_init__(self) -> None:
        GevreyParams(self.sigma, self.s)
        if not math.isfinite(self.b):
            raise ValueError(f"b must be finite, got {self.b}")
        if self.h not in DISPERSIONS:
            raise ValueError(f"unknown dispersion tag {self.h!r}; expected one of {DISPERSIONS}")


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Coefficients on a (xi, tau) lattice.

    Unlike :class:`SpectralField` the arrays here are stored *centered*:
    spatial index ``k`` in ``[-N/2, N/2-1]`` sits at slot ``k + N/2``, and
    temporal index ``j`` in ``[-M/2, M/2-1]`` (tau_j = 2*pi*j / T_w) at slot
    ``j + M/2``. The time axis is last. Centered storage keeps the zero-padded
    lattice convolutions of :mod:`kgslab.estimate_probe` a plain ``fftconvolve``.
    """

    grid: TorusGrid
    n_time: int
    window: float
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if self.n_time < 1 or self.n_time & (self.n_time - 1):
            raise ValueError(f"temporal modes must be a power of two, got {self.n_time}")
        if not self.window > 0:
            raise ValueError(f"time window must be positive, got {self.window}")
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        expected = self.grid.shape + (self.n_time,)
        if coeffs.shape != expected:
            raise ValueError(f"coefficient shape {coeffs.shape} != {expected}")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, grid: TorusGrid, n_time: int, window: float = 2 * math.pi) -> SpaceTimeField:
        return cls(grid, n_time, window, np.zeros(grid.shape + (n_time,), dtype=np.complex128))

    @property
    def spatial_indices(self) -> np.ndarray:
        """Integer k, shape (d, N, ..., N, 1), centered order."""
        k1 = np.arange(self.grid.n) - self.grid.n // 2
        k = np.stack(np.meshgrid(*([k1] * self.grid.dim), indexing="ij"))
        return k[..., None]

    @property
    def xi(self) -> np.ndarray:
        return self.spatial_indices / self.grid.length

    @property
    def tau(self) -> np.ndarray:
        """tau_j, broadcastable against coefficient arrays."""
        j = np.arange(self.n_time) - self.n_time // 2
        return (2 * math.pi / self.window) * j.reshape((1,) * self.grid.dim + (-1,))

    def slot(self, k, j: int) -> tuple[int, ...]:
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        half_n, half_m = self.grid.n // 2, self.n_time // 2
        if k.shape != (self.grid.dim,) or np.any(np.abs(k + 0.5) > half_n) or not -half_m <= j < half_m:
            raise ValueError(f"space-time index ({k.tolist()}, {j}) outside the lattice")
        return tuple(int(v) + half_n for v in k) + (int(j) + half_m,)

    def with_coeffs(self, coeffs: np.ndarray) -> SpaceTimeField:
        return SpaceTimeField(self.grid, self.n_time, self.window, coeffs)


def _weighted_l2(log_weight: np.ndarray, coeffs: np.ndarray, use_log: bool) -> float:
    mag = np.abs(coeffs)
    if not use_log:
        with np.errstate(over="raise", invalid="raise"):
            try:
                return float(np.sqrt(np.sum((np.exp(log_weight) * mag) ** 2)))
            except FloatingPointError:
                pass
    nz = mag > 0
    if not np.any(nz):
        return 0.0
    half_log = 0.5 * logsumexp(2.0 * (log_weight[nz] + np.log(mag[nz])))
    if half_log >= _LOG_MAX:
        raise OverflowError(
            f"weighted norm overflows double precision (log value {half_log:.1f}); "
            "use a smaller sigma or a coarser grid"
        )
    return float(math.exp(half_log))


def _gevrey_log_weight(xi: np.ndarray, sigma: float, s: float) -> np.ndarray:
    return sigma * ell1(xi) + s * np.log(bracket(xi))


def gevrey_norm(f: SpectralField, p: GevreyParams) -> float:
    """|| exp(sigma ||D||_1) <D>^s f ||_{L^2}."""
    grid = f.grid
    use_log = p.sigma * grid.max_l1() > LOG_DOMAIN_THRESHOLD
    return _weighted_l2(_gevrey_log_weight(grid.xi, p.sigma, p.s), f.coeffs, use_log)


def sobolev_norm(f: SpectralField, s: float) -> float:
    return gevrey_norm(f, GevreyParams(0.0, s))


def embedding_constant(sigma: float, sigma_prime: float, s: float, s_prime: float, grid: TorusGrid) -> float:
    """sup over lattice xi of exp((sigma' - sigma)||xi||_1) <xi>^(s' - s).

    For every field on ``grid``,
    ``gevrey_norm(f, (sigma', s')) <= C * gevrey_norm(f, (sigma, s))``.
    """
    if not 0 <= sigma_prime < sigma:
        raise ValueError(f"embedding needs 0 <= sigma' < sigma, got sigma'={sigma_prime}, sigma={sigma}")
    log_ratio = (sigma_prime - sigma) * grid.xi_l1 + (s_prime - s) * np.log(grid.xi_bracket)
    return float(np.exp(np.max(log_ratio)))


def bourgain_norm(F: SpaceTimeField, p: BourgainParams) -> float:
    """sqrt(sum exp(2 sigma ||xi||_1) <xi>^2s <tau - h(xi)>^2b |coeff|^2)."""
    xi = F.xi
    modulation = np.sqrt(1.0 + (F.tau - dispersion_surface(p.h, xi)) ** 2)
    log_weight = _gevrey_log_weight(xi, p.sigma, p.s) + p.b * np.log(modulation)
    use_log = p.sigma * F.grid.max_l1() > LOG_DOMAIN_THRESHOLD
    return _weighted_l2(log_weight, F.coeffs, use_log)
