"""Radius-of-analyticity estimation, charge, and the M_sigma / N_sigma monitors.

A field in G^{sigma,0} extends holomorphically to the strip |Im z| < sigma,
and its coefficients then decay like exp(-sigma ||xi||_1). The estimator
reads the decay rate off the upper envelope of |f_hat| on l^1 shells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .evolution import Trajectory
from .gevrey_spaces import GevreyParams, gevrey_norm
from .kgs_model import KgsState
from .spectral_core import SpectralField

__all__ = [
    "InsufficientDataError",
    "RadiusEstimate",
    "ConservationReport",
    "AlmostConservationVerdict",
    "SweepVerdict",
    "default_band",
    "estimate_radius",
    "charge",
    "monitor",
    "decay_exponent",
    "fit_decay_exponent",
    "almost_conservation_check",
    "almost_conservation_sweep",
    "MIN_SHELLS",
    "DEFAULT_FLOOR",
]

MIN_SHELLS = 8
DEFAULT_FLOOR = 1e-13


class InsufficientDataError(ValueError):
    """Too few usable shells or rows for a fit."""


@dataclass(frozen=True)
class RadiusEstimate:
    """Result of a shell-envelope fit.

    ``r_lo``/``r_hi`` are the fitted range in ||xi||_1; ``band`` is the same
    range in integer l^1 layers ||k||_1. ``mode_count`` counts the shells
    that entered the fit.
    """

    sigma_hat: float
    r_lo: float
    r_hi: float
    residual: float
    mode_count: int
    floor_clipped: bool
    band: tuple[int, int] = (0, 0)

    def to_dict(self) -> dict:
        return {
            "sigma_hat": self.sigma_hat,
            "r_lo": self.r_lo,
            "r_hi": self.r_hi,
            "residual": self.residual,
            "mode_count": self.mode_count,
            "floor_clipped": self.floor_clipped,
            "band": list(self.band),
        }


def default_band(n: int) -> tuple[int, int]:
    """[N/8, N/3] in l^1 layers; the upper end stays inside the dealiased box."""
    return n // 8, n // 3


def _shell_maxima(f: SpectralField) -> np.ndarray:
    layer = np.sum(np.abs(f.grid.indices), axis=0).ravel()
    out = np.zeros(int(layer.max()) + 1)
    np.maximum.at(out, layer, np.abs(f.coeffs).ravel())
    return out


def estimate_radius(
    f: SpectralField,
    band: tuple[int, int] | None = None,
    floor: float = DEFAULT_FLOOR,
) -> RadiusEstimate:
    """Fit log(shell max of |f_hat|) against ||xi||_1 over the band; sigma_hat = -slope.

    Shells are the lattice layers ||k||_1 = r (||xi||_1 = r / L). ``floor`` is
    relative to max |f_hat|, so the estimate does not depend on the overall
    scale of f. Shells whose maximum falls below the floor are dropped and
    ``floor_clipped`` is set; fewer than ``MIN_SHELLS`` remaining shells raise
    :class:`InsufficientDataError`. A negative slope estimate (growing
    spectrum) is reported as 0.
    """
    grid = f.grid
    lo, hi = default_band(grid.n) if band is None else (int(band[0]), int(band[1]))
    top = grid.dim * (grid.n // 2)
    if not 0 <= lo < hi <= top:
        raise ValueError(f"band [{lo}, {hi}] outside the lattice range [0, {top}]")
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor}")

    maxima = _shell_maxima(f)
    peak = float(maxima.max())
    r = np.arange(lo, hi + 1)
    vals = maxima[lo : hi + 1]
    keep = vals > floor * peak if peak > 0 else np.zeros(len(r), dtype=bool)
    clipped = bool(not np.all(keep))
    if np.count_nonzero(keep) < MIN_SHELLS:
        raise InsufficientDataError(
            f"only {np.count_nonzero(keep)} shells above the floor in band [{lo}, {hi}]; need {MIN_SHELLS}"
        )
    x = r[keep] / grid.length
    y = np.log(vals[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RadiusEstimate(
        sigma_hat=max(-float(slope), 0.0),
        r_lo=float(x[0]),
        r_hi=float(x[-1]),
        residual=float(np.sqrt(np.mean(resid**2))),
        mode_count=int(np.count_nonzero(keep)),
        floor_clipped=clipped,
        band=(lo, hi),
    )


def charge(state: KgsState) -> float:
    """||u||_{L^2}^2; a unit mode has charge 1."""
    return float(np.sum(np.abs(state.u.coeffs) ** 2))


@dataclass
class ConservationReport:
    sigma: float
    times: list[float]
    charge: list[float]
    M: list[float]
    N: list[float]

    def __post_init__(self) -> None:
        n = len(self.times)
        if not (len(self.charge) == len(self.M) == len(self.N) == n):
            raise ValueError("series lengths must match the snapshot count")

    @property
    def dM(self) -> list[float]:
        return [m - self.M[0] for m in self.M]

    @property
    def dN(self) -> list[float]:
        return [v - self.N[0] for v in self.N]

    def restrict(self, t_max: float) -> ConservationReport:
        idx = [i for i, t in enumerate(self.times) if t <= t_max * (1 + 1e-12)]
        pick = lambda xs: [xs[i] for i in idx]  # noqa: E731
        return ConservationReport(self.sigma, pick(self.times), pick(self.charge), pick(self.M), pick(self.N))


def _m_sigma(state: KgsState, sigma: float) -> float:
    return gevrey_norm(state.u, GevreyParams(sigma, 0.0)) ** 2


def _n_sigma(state: KgsState, sigma: float) -> float:
    p = GevreyParams(sigma, 1.0)
    return gevrey_norm(state.n_plus, p) + gevrey_norm(state.n_minus, p)


def monitor(traj: Trajectory, sigma: float) -> ConservationReport:
    """charge, M_sigma = ||u||^2_{G^{sigma,0}} and N_sigma = sum ||n_pm||_{G^{sigma,1}} per snapshot."""
    GevreyParams(sigma, 0.0)
    return ConservationReport(
        sigma=sigma,
        times=list(traj.times),
        charge=[charge(s) for s in traj.states],
        M=[_m_sigma(s, sigma) for s in traj.states],
        N=[_n_sigma(s, sigma) for s in traj.states],
    )


def decay_exponent(d: int) -> float:
    """p = max(8 / (4 - d), 4): 4 for d = 1, 2 and 8 for d = 3."""
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    return max(8.0 / (4 - d), 4.0)


def fit_decay_exponent(times: Sequence[float], sigmas: Sequence[float]) -> float:
    """p_hat = -slope of the least-squares line through (log t, log sigma)."""
    t = np.asarray(times, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    if t.shape != s.shape or t.ndim != 1:
        raise ValueError("times and sigmas must be 1-d sequences of equal length")
    if len(t) < 4:
        raise InsufficientDataError(f"need at least 4 points, got {len(t)}")
    if np.any(t <= 0) or np.any(s <= 0) or not np.all(np.isfinite(t) & np.isfinite(s)):
        raise ValueError("times and sigmas must be positive and finite")
    slope, _ = np.polyfit(np.log(t), np.log(s), 1)
    return -float(slope)


@dataclass
class AlmostConservationVerdict:
    """Implied constants of the M_sigma and N_sigma growth bounds over [0, delta].

    ``C_hat = sup|dM| / (sigma delta^(1/q) M(0) (M(0)^(1/2) + N(0)))`` and
    ``C_hat_N = sup|dN| / (delta^(1/q) M(0))``.
    """

    sigma: float
    delta: float
    q: float
    sup_dM: float
    sup_dN: float
    C_hat: float | None
    C_hat_N: float | None
    applicable: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return dict(vars(self))


def almost_conservation_check(report: ConservationReport, delta: float, q: float) -> AlmostConservationVerdict:
    if not delta > 0 or not q > 0:
        raise ValueError(f"delta and q must be positive, got delta={delta}, q={q}")
    if not report.times or report.times[0] != 0.0 or report.times[-1] < delta * (1 - 1e-9):
        raise ValueError(f"report must cover [0, {delta}]")
    window = report.restrict(delta)
    sup_dM = max(abs(v) for v in window.dM)
    sup_dN = max(abs(v) for v in window.dN)
    M0, N0 = window.M[0], window.N[0]
    scale = delta ** (1.0 / q)
    denom = report.sigma * scale * M0 * (math.sqrt(M0) + N0)
    denom_N = scale * M0
    if denom == 0 or denom_N == 0:
        reason = "zero data" if M0 == 0 else "sigma = 0"
        return AlmostConservationVerdict(report.sigma, delta, q, sup_dM, sup_dN, None, None, False, reason)
    return AlmostConservationVerdict(report.sigma, delta, q, sup_dM, sup_dN, sup_dM / denom, sup_dN / denom_N, True)


@dataclass
class SweepVerdict:
    verdicts: list[AlmostConservationVerdict]
    discrepancy_ratios: list[float] = field(default_factory=list)
    C_hat_spread: float | None = None
    stable: bool = False

    def to_dict(self) -> dict:
        return {
            "verdicts": [v.to_dict() for v in self.verdicts],
            "discrepancy_ratios": self.discrepancy_ratios,
            "C_hat_spread": self.C_hat_spread,
            "stable": self.stable,
        }


def almost_conservation_sweep(traj: Trajectory, sigmas: Sequence[float], delta: float, q: float) -> SweepVerdict:
    """Checks along a decreasing sigma list on one trajectory.

    ``discrepancy_ratios[i]`` is sup|dM| at sigmas[i] over sup|dM| at
    sigmas[i+1]; ``stable`` means every verdict applies and max C_hat is
    within 2x of min C_hat.
    """
    verdicts = [almost_conservation_check(monitor(traj, s), delta, q) for s in sigmas]
    ratios = [
        a.sup_dM / b.sup_dM if b.sup_dM > 0 else math.inf for a, b in zip(verdicts, verdicts[1:])
    ]
    if not all(v.applicable for v in verdicts):
        return SweepVerdict(verdicts, ratios, None, False)
    cs = [v.C_hat for v in verdicts]
    spread = max(cs) / min(cs) if min(cs) > 0 else math.inf
    return SweepVerdict(verdicts, ratios, spread, spread <= 2.0)
