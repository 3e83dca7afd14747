"""The Klein-Gordon-Schroedinger system in first-order form.

Second-order form::

    i u_t + Lap u = -u n,         n_tt + (1 - Lap) n = |u|^2

With ``n_pm = n +- i <D>^-1 n_t`` this is equivalent to::

    i u_t + Lap u      = -u (n_+ + n_-) / 2
    i n+_t - <D> n_+   = -<D>^-1 |u|^2
    i n-_t + <D> n_-   =  <D>^-1 |u|^2

The meson mass is fixed to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .spectral_core import (
    SpectralField,
    TorusGrid,
    dealiased_product,
    forward_transform,
    inverse_transform,
    reflect,
    symmetrize_hermitian,
)

__all__ = [
    "KgsState",
    "InitialDataSpec",
    "to_first_order",
    "from_first_order",
    "rhs",
    "nonlinear_rhs",
    "coupling_terms",
    "commutator_F",
    "make_initial_data",
    "initial_state",
    "conjugate_pair_defect",
    "meson_field",
]


@dataclass(frozen=True, eq=False)
class KgsState:
    u: SpectralField
    n_plus: SpectralField
    n_minus: SpectralField
    t: float = 0.0

    def __post_init__(self) -> None:
        if not (self.u.grid == self.n_plus.grid == self.n_minus.grid):
            raise ValueError("u, n_plus and n_minus must share one grid")

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid

    def fields(self) -> tuple[SpectralField, SpectralField, SpectralField]:
        return self.u, self.n_plus, self.n_minus

    def stack(self) -> np.ndarray:
        """Coefficients as one array of shape (3, N, ..., N)."""
        return np.stack([self.u.coeffs, self.n_plus.coeffs, self.n_minus.coeffs])

    @classmethod
    def from_stack(cls, grid: TorusGrid, arr: np.ndarray, t: float = 0.0) -> KgsState:
        return cls(
            SpectralField(grid, arr[0]),
            SpectralField(grid, arr[1]),
            SpectralField(grid, arr[2]),
            t,
        )

    def at(self, t: float) -> KgsState:
        return replace(self, t=t)


def conjugate_pair_defect(state: KgsState) -> float:
    """max |n_-(k) - conj n_+(-k)| relative to max |n_+|."""
    a = state.n_plus.coeffs
    scale = float(np.max(np.abs(a)))
    diff = float(np.max(np.abs(state.n_minus.coeffs - np.conj(reflect(a)))))
    return diff / scale if scale > 0 else diff


def _check_grid(*fields: SpectralField) -> TorusGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


def to_first_order(n: SpectralField, nt: SpectralField) -> tuple[SpectralField, SpectralField]:
    """(n, n_t) -> (n + i<D>^-1 n_t, n - i<D>^-1 n_t)."""
    grid = _check_grid(n, nt)
    w = 1j * nt.coeffs / grid.xi_bracket
    return SpectralField(grid, n.coeffs + w), SpectralField(grid, n.coeffs - w)


def from_first_order(n_plus: SpectralField, n_minus: SpectralField) -> tuple[SpectralField, SpectralField]:
    """(n_+, n_-) -> ((n_+ + n_-)/2, <D>(n_+ - n_-)/(2i)).

    Both outputs are real-flagged exactly when the conjugate-pair relation
    n_-(k) = conj n_+(-k) holds to 1e-10.
    """
    grid = _check_grid(n_plus, n_minus)
    n = 0.5 * (n_plus.coeffs + n_minus.coeffs)
    nt = grid.xi_bracket * (n_plus.coeffs - n_minus.coeffs) / 2j
    probe = KgsState(SpectralField.zeros(grid), n_plus, n_minus)
    real = conjugate_pair_defect(probe) <= 1e-10
    return SpectralField(grid, n, real), SpectralField(grid, nt, real)


def meson_field(state: KgsState) -> SpectralField:
    """The real meson field n = (n_+ + n_-)/2 with round-off imaginary part dropped."""
    grid = state.grid
    n = SpectralField(grid, 0.5 * (state.n_plus.coeffs + state.n_minus.coeffs))
    return forward_transform(inverse_transform(n).real, grid, real=True)


def coupling_terms(grid: TorusGrid, y: np.ndarray) -> np.ndarray:
    """Array form of :func:`nonlinear_rhs` on stacked coefficients (3, N, ..., N).

    Same arithmetic as ``dealiased_product(u, n)`` and ``dealiased_abs2(u)``
    with the transforms shared; the integrators call this in their inner loop.
    """
    mask = grid.dealias_mask
    to_phys = grid.size / math.sqrt(grid.volume)
    to_coef = math.sqrt(grid.volume) / grid.size
    u = np.fft.ifftn(np.where(mask, y[0], 0.0)) * to_phys
    n = (np.fft.ifftn(np.where(mask, 0.5 * (y[1] + y[2]), 0.0)) * to_phys).real
    un = np.where(mask, np.fft.fftn(u * n), 0.0) * to_coef
    abs2 = np.where(mask, symmetrize_hermitian(np.fft.fftn((u * np.conj(u)).real)), 0.0) * to_coef
    src = 1j * abs2 / grid.xi_bracket
    return np.stack([1j * un, src, -src])


def nonlinear_rhs(state: KgsState) -> KgsState:
    """Coupling terms only: (i u n, i<D>^-1|u|^2, -i<D>^-1|u|^2)."""
    return KgsState.from_stack(state.grid, coupling_terms(state.grid, state.stack()), state.t)


def rhs(state: KgsState) -> KgsState:
    """Time derivative (u_t, n+_t, n-_t) of the first-order system."""
    grid = state.grid
    nl = nonlinear_rhs(state)
    xi2 = grid.xi_abs**2
    br = grid.xi_bracket
    return KgsState(
        SpectralField(grid, -1j * xi2 * state.u.coeffs + nl.u.coeffs),
        SpectralField(grid, -1j * br * state.n_plus.coeffs + nl.n_plus.coeffs),
        SpectralField(grid, 1j * br * state.n_minus.coeffs + nl.n_minus.coeffs),
        state.t,
    )


def commutator_F(v: SpectralField, m: SpectralField, sigma: float) -> SpectralField:
    """F(v, m) = v m - exp(sigma||D||)(m exp(-sigma||D||) v), dealiased products.

    For single modes v = e_{k1}, m = e_{k2} the result is the single mode
    k1 + k2 with coefficient
    (1 - exp(sigma(||xi||_1 - ||xi_1||_1))) v m / sqrt(V), xi = (k1+k2)/L,
    xi_1 = k1/L.
    """
    grid = _check_grid(v, m)
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma * grid.max_l1() > 700:
        raise OverflowError(f"exp(sigma ||xi||_1) overflows on this grid for sigma={sigma}")
    if sigma == 0:
        return SpectralField.zeros(grid, real=v.real and m.real)
    weight = np.exp(sigma * grid.xi_l1)
    direct = dealiased_product(v, m)
    damped = SpectralField(grid, v.coeffs / weight, v.real)
    twisted = dealiased_product(damped, m)
    return SpectralField(grid, direct.coeffs - weight * twisted.coeffs, direct.real)


@dataclass(frozen=True)
class InitialDataSpec:
    """Analytic initial data with a planted radius.

    Amplitudes bound the physical sup norm of u0, n0 and n1. ``shape``:

    * ``exponential``: |coeff(xi)| proportional to exp(-sigma0 ||xi||_1)
    * ``squared_lorentzian``: exp(-sigma0 ||xi||_1) * prod_i (1 + sigma0 |xi_i|),
      the spectrum of prod_i sigma0^4 / (x_i^2 + sigma0^2)^2 whose poles sit
      exactly at distance sigma0 from the real axis.
    """

    sigma0: float = 0.3
    amp_u: float = 1.0
    amp_n0: float = 0.5
    amp_n1: float = 0.5
    shape: Literal["exponential", "squared_lorentzian"] = "exponential"
    seed: int = 0

    def __post_init__(self) -> None:
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        for name in ("amp_u", "amp_n0", "amp_n1"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.shape not in ("exponential", "squared_lorentzian"):
            raise ValueError(f"unknown spectrum shape {self.shape!r}")


def _spectral_profile(spec: InitialDataSpec, grid: TorusGrid) -> np.ndarray:
    xi = grid.xi
    profile = np.exp(-spec.sigma0 * grid.xi_l1)
    if spec.shape == "squared_lorentzian":
        profile = profile * np.prod(1.0 + spec.sigma0 * np.abs(xi), axis=0)
    nyquist = np.any(grid.indices == -(grid.n // 2), axis=0)
    return np.where(nyquist, 0.0, profile)


def _planted(profile: np.ndarray, amp: float, phases: np.ndarray, grid: TorusGrid, real: bool) -> SpectralField:
    if real:
        # Hermitian phases: theta(-k) = -theta(k), zero phase at k = 0
        phases = 0.5 * (phases - reflect(phases))
    scale = amp * math.sqrt(grid.volume) / float(np.sum(profile))
    return SpectralField(grid, scale * profile * np.exp(1j * phases), real)


def make_initial_data(spec: InitialDataSpec, grid: TorusGrid) -> tuple[SpectralField, SpectralField, SpectralField]:
    """(u0, phi_+, phi_-) with |coeff| = amplitude * profile.

    Coefficients are scaled so the physical function is
    ``amp * sum_k profile(k) e^{i theta_k} e^{i k.x/L} / sum_k profile(k)``,
    hence ``sup |f| <= amp``. Nyquist modes are zero.
    """
    if spec.sigma0 * (grid.n / 2) / grid.length > 500:
        raise ValueError(
            f"sigma0={spec.sigma0} is not representable on this grid: "
            f"sigma0 * (N/2) / L = {spec.sigma0 * grid.n / 2 / grid.length:.1f} > 500"
        )
    rng = np.random.default_rng(spec.seed)
    profile = _spectral_profile(spec, grid)
    theta_u, theta_n0, theta_n1 = (rng.uniform(-math.pi, math.pi, grid.shape) for _ in range(3))
    u0 = _planted(profile, spec.amp_u, theta_u, grid, real=False)
    n0 = _planted(profile, spec.amp_n0, theta_n0, grid, real=True)
    n1 = _planted(profile, spec.amp_n1, theta_n1, grid, real=True)
    phi_plus, phi_minus = to_first_order(n0, n1)
    return u0, phi_plus, phi_minus


def initial_state(spec: InitialDataSpec, grid: TorusGrid) -> KgsState:
    return KgsState(*make_initial_data(spec, grid), t=0.0)
