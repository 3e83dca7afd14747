"""Time integration of the first-order KGS system.

Linear flows are exact Fourier multipliers ``exp(-i t omega(xi))`` with

=============  =================  ===========================
component      dispersion tag     omega(xi)
=============  =================  ===========================
u              ``schrodinger``    |xi|^2
n_+            ``wave_plus``      <xi>
n_-            ``wave_minus``     -<xi>
=============  =================  ===========================

so a free wave sits on the surface ``tau = -omega(xi)``, which is the
Bourgain surface ``h(xi)`` of :mod:`kgslab.gevrey_spaces` up to the
massless approximation ``<xi> ~ |xi|``.

The Duhamel formula used throughout is, for ``(i d_t - omega(D)) y = F``::

    y(t) = P(t) f - i int_0^t P(t - s) F(s) ds,   P(t) = exp(-i t omega(D)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .gevrey_spaces import DISPERSIONS, GevreyParams, gevrey_norm
from .kgs_model import KgsState, coupling_terms
from .spectral_core import SpectralField, TorusGrid

__all__ = [
    "DivergenceError",
    "Trajectory",
    "PicardReport",
    "frequency",
    "linear_propagator",
    "strang_step",
    "evolve",
    "duhamel",
    "picard_solve",
    "lifespan",
    "lifespan_exponent",
    "data_norm",
    "CalibrationCase",
    "Calibration",
    "CALIBRATION_SUITE",
    "CONTRACTION_BOUND",
    "calibrate_lifespan_constant",
    "worst_contraction",
    "local_bound_ratios",
]

logger = logging.getLogger(__name__)

_COMPONENT_TAGS = ("schrodinger", "wave_plus", "wave_minus")


class DivergenceError(RuntimeError):
    """Raised when a time step produces non-finite coefficients."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state at step {step} (t = {t:.6g})")
        self.step = step
        self.t = t


def frequency(tag: str, grid: TorusGrid) -> np.ndarray:
    """omega(xi) on the lattice for a dispersion tag."""
    if tag == "schrodinger":
        return grid.xi_abs**2
    if tag == "wave_plus":
        return grid.xi_bracket
    if tag == "wave_minus":
        return -grid.xi_bracket
    raise ValueError(f"unknown dispersion tag {tag!r}; expected one of {DISPERSIONS}")


@lru_cache(maxsize=64)
def _omega_stack(grid: TorusGrid) -> np.ndarray:
    return np.stack([frequency(tag, grid) for tag in _COMPONENT_TAGS])


@lru_cache(maxsize=64)
def _phase_stack(grid: TorusGrid, t: float) -> np.ndarray:
    return np.exp(-1j * t * _omega_stack(grid))


def linear_propagator(f: SpectralField, h: str, t: float) -> SpectralField:
    """exp(-i t omega(D)) f, the exact free flow of the component tagged h."""
    phase = np.exp(-1j * t * frequency(h, f.grid))
    return SpectralField(f.grid, phase * f.coeffs, f.real and t == 0)


def _nonlinear_midpoint(grid: TorusGrid, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = coupling_terms(grid, y)
    return y + dt * coupling_terms(grid, y + 0.5 * dt * k1)


def _strang_arrays(grid: TorusGrid, y: np.ndarray, dt: float) -> np.ndarray:
    half = _phase_stack(grid, 0.5 * dt)
    y = half * y
    y = _nonlinear_midpoint(grid, y, dt)
    return half * y


def strang_step(state: KgsState, dt: float, step_index: int = 0) -> KgsState:
    """Linear half step, explicit-midpoint coupling step, linear half step."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = _strang_arrays(state.grid, state.stack(), dt)
    if not np.all(np.isfinite(y)):
        raise DivergenceError(step_index, state.t + dt)
    return KgsState.from_stack(state.grid, y, state.t + dt)


@dataclass
class Trajectory:
    times: list[float]
    states: list[KgsState]
    dt: float
    scheme: str = "strang"
    steps: int = 0

    def __post_init__(self) -> None:
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        grids = {s.grid for s in self.states}
        if len(grids) > 1:
            raise ValueError("snapshots must share one grid")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> KgsState:
        return self.states[-1]


def _step_counts(times: Sequence[float], dt: float) -> list[int]:
    counts = []
    for t in times:
        steps = round(t / dt)
        if abs(steps * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"output time {t} is not a multiple of dt = {dt}")
        counts.append(steps)
    return counts


def evolve(
    state0: KgsState,
    T: float,
    dt: float,
    output_times: Sequence[float] | None = None,
    on_snapshot: Callable[[float, KgsState], None] | None = None,
) -> Trajectory:
    """Repeated Strang steps from state0.t = 0 to T with snapshots at output_times.

    A :class:`DivergenceError` carries the step index and time; snapshots
    collected so far are attached as ``err.partial``.
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if output_times is None:
        output_times = [0.0, T] if T > 0 else [0.0]
    output_times = sorted(set(float(t) for t in output_times))
    if output_times[0] < 0 or output_times[-1] > T + 1e-12:
        raise ValueError(f"output times must lie in [0, {T}]")
    targets = _step_counts(output_times, dt)

    grid = state0.grid
    y = state0.stack()
    times: list[float] = []
    states: list[KgsState] = []

    def record(step: int) -> None:
        t = step * dt
        snap = KgsState.from_stack(grid, y.copy(), t)
        times.append(t)
        states.append(snap)
        if on_snapshot is not None:
            on_snapshot(t, snap)

    step = 0
    for target in targets:
        while step < target:
            y = _strang_arrays(grid, y, dt)
            step += 1
            if not np.all(np.isfinite(y)):
                err = DivergenceError(step, step * dt)
                err.partial = Trajectory(times, states, dt, "strang", step)
                raise err
        record(step)
    return Trajectory(times, states, dt, "strang", step)


def duhamel(
    h: str,
    f: SpectralField,
    forcing: Callable[[float], SpectralField],
    t: float,
    quad_nodes: int,
    panels: int = 1,
) -> SpectralField:
    """P(t) f - i int_0^t P(t - s) F(s) ds by composite Gauss-Legendre quadrature.

    ``quad_nodes`` Gauss-Legendre nodes on each of ``panels`` equal panels.
    """
    if quad_nodes < 2:
        raise ValueError(f"quad_nodes must be >= 2, got {quad_nodes}")
    omega = frequency(h, f.grid)
    x, w = np.polynomial.legendre.leggauss(quad_nodes)
    edges = np.linspace(0.0, t, panels + 1)
    acc = np.zeros(f.grid.shape, dtype=np.complex128)
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        for xq, wq in zip(x, w):
            s = a + half * (xq + 1.0)
            acc += (half * wq) * np.exp(-1j * (t - s) * omega) * forcing(s).coeffs
    coeffs = np.exp(-1j * t * omega) * f.coeffs - 1j * acc
    return SpectralField(f.grid, coeffs)


def lifespan_exponent(d: int) -> float:
    """q = max(4 / (4 - d), 2)."""
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    return max(4.0 / (4 - d), 2.0)


def data_norm(u0: SpectralField, phi_plus: SpectralField, phi_minus: SpectralField, sigma: float) -> float:
    """||u0||_{G^{sigma,0}} + ||phi_+||_{G^{sigma,1}} + ||phi_-||_{G^{sigma,1}}."""
    return (
        gevrey_norm(u0, GevreyParams(sigma, 0.0))
        + gevrey_norm(phi_plus, GevreyParams(sigma, 1.0))
        + gevrey_norm(phi_minus, GevreyParams(sigma, 1.0))
    )


def lifespan(
    u0: SpectralField,
    phi_plus: SpectralField,
    phi_minus: SpectralField,
    sigma: float,
    q: float,
    C: float,
) -> float:
    """C * (1 + data norm)^(-q)."""
    return C * (1.0 + data_norm(u0, phi_plus, phi_minus, sigma)) ** (-q)


@dataclass
class PicardReport:
    iterations: int
    differences: list[float]
    contraction_factors: list[float]
    converged: bool
    delta: float
    tol: float
    nodes: int
    message: str = ""
    suggested_delta: float | None = None

    def factors_from(self, iterate: int) -> list[float]:
        """Contraction factors diff_k / diff_{k-1} for k >= iterate."""
        # contraction_factors[i] belongs to iterate k = i + 2
        return self.contraction_factors[max(iterate - 2, 0):]

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "differences": self.differences,
            "contraction_factors": self.contraction_factors,
            "converged": self.converged,
            "delta": self.delta,
            "tol": self.tol,
            "nodes": self.nodes,
            "message": self.message,
            "suggested_delta": self.suggested_delta,
        }


def _lagrange_weights(nodes: np.ndarray, s: float) -> np.ndarray:
    w = np.ones(len(nodes))
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                w[i] *= (s - xj) / (xi - xj)
    return w


def _difference_norm(grid: TorusGrid, a: np.ndarray, b: np.ndarray, sigma: float) -> float:
    diff = a - b
    return (
        gevrey_norm(SpectralField(grid, diff[0]), GevreyParams(sigma, 0.0))
        + gevrey_norm(SpectralField(grid, diff[1]), GevreyParams(sigma, 1.0))
        + gevrey_norm(SpectralField(grid, diff[2]), GevreyParams(sigma, 1.0))
    )


def picard_solve(
    u0: SpectralField,
    phi_plus: SpectralField,
    phi_minus: SpectralField,
    sigma: float,
    delta: float,
    tol: float = 1e-10,
    max_iter: int = 40,
    nodes: int = 64,
    quad_nodes: int = 4,
    stencil: int = 6,
) -> tuple[Trajectory, PicardReport]:
    """Picard iterates of the Duhamel system on a uniform grid over [0, delta].

    Iterate 0 is the free flow; iterate k feeds iterate k-1 into the
    coupling terms. Between grid nodes the previous iterate is taken from
    ``stencil``-point Lagrange interpolation of its interaction-picture values
    ``P(-t) y(t)``, which vary on the slow coupling time scale only. The
    difference of successive iterates is the sup over nodes of
    ``||du||_{G^{sigma,0}} + ||dn_+||_{G^{sigma,1}} + ||dn_-||_{G^{sigma,1}}``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if nodes < stencil or stencil < 2:
        raise ValueError(f"need 2 <= stencil <= nodes, got stencil={stencil}, nodes={nodes}")
    grid = u0.grid
    times = np.linspace(0.0, delta, nodes)
    omega = _omega_stack(grid)
    y0 = np.stack([u0.coeffs, phi_plus.coeffs, phi_minus.coeffs])
    gx, gw = np.polynomial.legendre.leggauss(quad_nodes)

    def propagate(t: float, arr: np.ndarray) -> np.ndarray:
        return np.exp(-1j * t * omega) * arr

    current = np.stack([propagate(t, y0) for t in times])
    differences: list[float] = []
    factors: list[float] = []
    converged = False
    message = ""
    k = 0
    while k < max_iter:
        k += 1
        interaction = np.stack([propagate(-t, y) for t, y in zip(times, current)])
        nxt = np.empty_like(current)
        nxt[0] = y0
        for j in range(nodes - 1):
            a, b = times[j], times[j + 1]
            lo = min(max(j - (stencil - 1) // 2, 0), nodes - stencil)
            window = slice(lo, lo + stencil)
            half = 0.5 * (b - a)
            acc = np.zeros_like(y0)
            for xq, wq in zip(gx, gw):
                s = a + half * (xq + 1.0)
                lw = _lagrange_weights(times[window], s)
                ys = propagate(s, np.tensordot(lw, interaction[window], axes=1))
                acc += (half * wq) * propagate(b - s, coupling_terms(grid, ys))
            nxt[j + 1] = propagate(b - a, nxt[j]) + acc
        diff = max(_difference_norm(grid, nxt[j], current[j], sigma) for j in range(nodes))
        current = nxt
        if differences:
            factors.append(diff / differences[-1] if differences[-1] > 0 else 0.0)
        differences.append(diff)
        logger.debug("picard iterate %d: difference %.3e", k, diff)
        if not math.isfinite(diff) or (len(differences) > 2 and diff > 1e6 * differences[0]):
            message = "iteration diverged; delta too large"
            break
        if diff <= tol:
            converged = True
            break
    else:
        message = f"no convergence within {max_iter} iterates; delta too large"

    report = PicardReport(
        iterations=k,
        differences=differences,
        contraction_factors=factors,
        converged=converged,
        delta=delta,
        tol=tol,
        nodes=nodes,
        message=message,
        suggested_delta=None if converged else 0.5 * delta,
    )
    states = [KgsState.from_stack(grid, y, float(t)) for t, y in zip(times, current)]
    traj = Trajectory([float(t) for t in times], states, float(times[1] - times[0]), "picard", k)
    return traj, report


@dataclass(frozen=True)
class CalibrationCase:
    """One member of the lifespan calibration suite."""

    dim: int = 1
    n: int = 128
    length: float = 4.0
    sigma0: float = 1.0
    amp_u: float = 2.0
    amp_n0: float = 1.0
    amp_n1: float = 1.0
    shape: str = "exponential"
    seed: int = 0
    sigma: float = 0.5

    def data(self) -> tuple[SpectralField, SpectralField, SpectralField]:
        from .kgs_model import InitialDataSpec, make_initial_data

        grid = TorusGrid(self.dim, self.n, self.length)
        spec = InitialDataSpec(self.sigma0, self.amp_u, self.amp_n0, self.amp_n1, self.shape, self.seed)
        return make_initial_data(spec, grid)


CALIBRATION_SUITE: tuple[CalibrationCase, ...] = (
    CalibrationCase(seed=0),
    CalibrationCase(seed=1),
    CalibrationCase(seed=2, shape="squared_lorentzian"),
)

CALIBRATION_CANDIDATES: tuple[float, ...] = tuple(float(2**j) for j in range(2, 11))

CONTRACTION_BOUND = 0.6


@dataclass
class Calibration:
    C_emp: float
    candidates: list[float]
    worst_factors: list[float]
    cases: list[dict]

    def to_dict(self) -> dict:
        return {
            "C_emp": self.C_emp,
            "candidates": self.candidates,
            "worst_factors": self.worst_factors,
            "cases": self.cases,
            "contraction_bound": CONTRACTION_BOUND,
        }


def worst_contraction(report: PicardReport, from_iterate: int = 3) -> float:
    """Largest contraction factor from ``from_iterate`` on; inf if not converged."""
    if not report.converged:
        return math.inf
    return max(report.factors_from(from_iterate), default=0.0)


def calibrate_lifespan_constant(
    suite: Sequence[CalibrationCase] = CALIBRATION_SUITE,
    candidates: Sequence[float] = CALIBRATION_CANDIDATES,
    nodes: int = 64,
) -> Calibration:
    """Largest candidate C whose lifespan keeps every contraction factor from
    iterate 3 on at or below CONTRACTION_BOUND across the suite.

    Candidates are scanned in increasing order and the scan stops at the first
    failure, so C_emp is the end of the initial passing run.
    """
    if not suite or not candidates:
        raise ValueError("calibration needs a nonempty suite and candidate list")
    cands = sorted(float(c) for c in candidates)
    data = [case.data() for case in suite]
    C_emp = 0.0
    tried: list[float] = []
    worst: list[float] = []
    for C in cands:
        factor = 0.0
        for case, (u0, pp, pm) in zip(suite, data):
            q = lifespan_exponent(case.dim)
            delta = lifespan(u0, pp, pm, case.sigma, q, C)
            _, report = picard_solve(u0, pp, pm, case.sigma, delta, nodes=nodes)
            factor = max(factor, worst_contraction(report))
        tried.append(C)
        worst.append(factor)
        logger.info("calibration C=%g: worst contraction %.3f", C, factor)
        if factor > CONTRACTION_BOUND:
            break
        C_emp = C
    if C_emp == 0.0:
        raise RuntimeError(f"no candidate C passes the contraction bound (smallest tried {cands[0]})")
    return Calibration(C_emp, tried, worst, [vars(c).copy() for c in suite])


def local_bound_ratios(
    traj: Trajectory,
    u0: SpectralField,
    phi_plus: SpectralField,
    phi_minus: SpectralField,
    sigma: float,
) -> dict[str, float]:
    """Sup-in-time growth of a local solution relative to its data.

    ``u``: sup ||u(t)||_{G^{sigma,0}} / ||u0||_{G^{sigma,0}};
    ``n_plus``/``n_minus``: sup ||n_pm(t)||_{G^{sigma,1}} / (||phi_pm||_{G^{sigma,1}} + ||u0||^2_{G^{sigma,0}}).
    Zero denominators give 0 when the numerator is 0 as well, else inf.
    """
    p0, p1 = GevreyParams(sigma, 0.0), GevreyParams(sigma, 1.0)
    a0 = gevrey_norm(u0, p0)

    def ratio(num: float, den: float) -> float:
        if den > 0:
            return num / den
        return 0.0 if num == 0 else math.inf

    return {
        "u": ratio(max(gevrey_norm(s.u, p0) for s in traj.states), a0),
        "n_plus": ratio(max(gevrey_norm(s.n_plus, p1) for s in traj.states), gevrey_norm(phi_plus, p1) + a0**2),
        "n_minus": ratio(max(gevrey_norm(s.n_minus, p1) for s in traj.states), gevrey_norm(phi_minus, p1) + a0**2),
    }
