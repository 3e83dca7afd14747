"""Numerical probes of the bilinear, commutator and resonance estimates.

Probe fields live on small (xi, tau) lattices in centered storage (see
:class:`kgslab.gevrey_spaces.SpaceTimeField`). Products are exact lattice
convolutions with unit weights,

    (f g)(xi, tau) = sum_{xi1 + xi2 = xi, tau1 + tau2 = tau} f(xi1, tau1) g(xi2, tau2),

computed on a lattice twice as wide so nothing wraps around. The implied
constants of the estimates are unknown, so the probes measure ratios and how
they grow when the sampling box is enlarged.

Sign convention for the wave component: ``+`` pairs with the surface
``tau = -|xi|`` (tag ``wave_plus``) and ``-`` with ``tau = +|xi|``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve

from .gevrey_spaces import BourgainParams, SpaceTimeField, bourgain_norm
from .spectral_core import TorusGrid, ell1

__all__ = [
    "ParameterWindowError",
    "DegenerateSampleError",
    "ProbeSample",
    "RatioRecord",
    "CampaignRow",
    "CampaignSummary",
    "CAMPAIGN_COLUMNS",
    "sample_field",
    "lattice_product",
    "conjugate",
    "bilinear_window",
    "commutator_window",
    "bilinear_ratio",
    "commutator_ratio",
    "commutator_field",
    "resonance_B",
    "modulation_max",
    "dyadic_shells",
    "dyadic_edges",
    "convolution_integral_bound",
    "integral_sweep",
    "ratio_campaign",
    "wave_tag",
    "TAIL_CUTOFF",
]

TAIL_CUTOFF = 1e6


class ParameterWindowError(ValueError):
    """Parameters outside the window in which an estimate is claimed."""


class DegenerateSampleError(ValueError):
    """A sample whose right-hand side vanishes."""


def wave_tag(sign: str) -> str:
    if sign in ("+", "plus"):
        return "wave_plus"
    if sign in ("-", "minus"):
        return "wave_minus"
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def _pow2_at_least(x: int) -> int:
    return 1 << max(0, (x - 1).bit_length())


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True, eq=False)
class ProbeSample:
    fields: tuple[SpaceTimeField, ...]
    cutoff_xi: int
    cutoff_tau: int
    seed: int
    shape: str = "box"


def _box_lattice(cutoff_xi: int, cutoff_tau: int, dim: int, length: float, window: float):
    grid = TorusGrid(dim, max(8, _pow2_at_least(2 * cutoff_xi)), length)
    return SpaceTimeField.zeros(grid, max(1, _pow2_at_least(2 * cutoff_tau)), window)


def _box_slices(cutoff: int, n: int) -> slice:
    # indices |k| < c (just k = 0 for c <= 1) in centered storage; symmetric,
    # so k -> -k stays on the lattice
    c = max(cutoff, 1)
    return slice(n // 2 - c + 1, n // 2 + c)


def sample_field(
    cutoff_xi: int,
    cutoff_tau: int,
    seed,
    dim: int = 1,
    length: float = 1.0,
    window: float = 2 * math.pi,
) -> SpaceTimeField:
    """I.i.d. standard complex Gaussian coefficients on the box
    ``|k_i| < c``, ``|j| < c_tau`` (the single slot 0 when a cutoff is 0 or 1).

    With the defaults xi = k and tau = j. ``seed`` is anything accepted by
    :func:`numpy.random.default_rng`.
    """
    if cutoff_xi < 0 or cutoff_tau < 0:
        raise ValueError("cutoffs must be nonnegative")
    F = _box_lattice(cutoff_xi, cutoff_tau, dim, length, window)
    sx = _box_slices(cutoff_xi, F.grid.n)
    st = _box_slices(cutoff_tau, F.n_time)
    box = (sx,) * dim + (st,)
    shape = tuple(s.stop - s.start for s in box)
    rng = np.random.default_rng(seed)
    vals = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    coeffs = F.coeffs.copy()
    coeffs[box] = vals
    return F.with_coeffs(coeffs)


# ---------------------------------------------------------------- products


def _offsets(F: SpaceTimeField) -> tuple[int, ...]:
    # index value of slot 0 along each axis
    return (-(F.grid.n // 2),) * F.grid.dim + (-(F.n_time // 2),)


def _place(full: np.ndarray, offsets: Sequence[int], F: SpaceTimeField) -> SpaceTimeField:
    grid = TorusGrid(F.grid.dim, 2 * F.grid.n, F.grid.length)
    out = SpaceTimeField.zeros(grid, 2 * F.n_time, F.window)
    target = _offsets(out)
    idx = tuple(slice(o - t, o - t + m) for o, t, m in zip(offsets, target, full.shape))
    coeffs = out.coeffs
    coeffs[idx] = full
    return out


def _check_same_lattice(f: SpaceTimeField, g: SpaceTimeField) -> None:
    if f.grid != g.grid or f.n_time != g.n_time or f.window != g.window:
        raise ValueError("probe fields must share one lattice")


def _crop(arr: np.ndarray, offsets: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    nz = np.nonzero(arr)
    if len(nz[0]) == 0:
        return arr[tuple(slice(0, 1) for _ in arr.shape)] * 0, list(offsets)
    lo = [int(ix.min()) for ix in nz]
    hi = [int(ix.max()) + 1 for ix in nz]
    return arr[tuple(slice(a, b) for a, b in zip(lo, hi))], [o + a for o, a in zip(offsets, lo)]


def lattice_product(f: SpaceTimeField, g: SpaceTimeField, conjugate_g: bool = False) -> SpaceTimeField:
    """Exact lattice convolution of f with g (or with conj g(-xi, -tau)),
    returned on the lattice of twice the size in every axis.

    Inputs are cropped to their bounding boxes first, so slots outside the
    sum of the supports are exactly zero.
    """
    _check_same_lattice(f, g)
    off = _offsets(f)
    if conjugate_g:
        gc = np.conj(np.flip(g.coeffs))
        off_g = [-(o + m - 1) for o, m in zip(off, g.coeffs.shape)]
    else:
        gc, off_g = g.coeffs, list(off)
    fa, off_f = _crop(f.coeffs, off)
    ga, off_g = _crop(gc, off_g)
    full = fftconvolve(fa, ga, mode="full")
    return _place(full, [a + b for a, b in zip(off_f, off_g)], f)


def conjugate(F: SpaceTimeField) -> SpaceTimeField:
    """conj F(-xi, -tau) on the same lattice.

    Raises if F is nonzero on the edge slot -N/2, whose mirror is off the lattice.
    """
    for axis, m in enumerate(F.coeffs.shape):
        if m % 2 == 0 and np.any(np.take(F.coeffs, 0, axis=axis)):
            raise ValueError("field is nonzero on the lattice edge; its reflection is off the lattice")
    out = np.zeros_like(F.coeffs)
    src = np.conj(np.flip(F.coeffs))
    # flip sends index k to -k - 1 for even sizes; shift back by one slot
    sl_out, sl_src = [], []
    for m in F.coeffs.shape:
        if m % 2:
            sl_out.append(slice(None))
            sl_src.append(slice(None))
        else:
            sl_out.append(slice(1, m))
            sl_src.append(slice(0, m - 1))
    out[tuple(sl_out)] = src[tuple(sl_src)]
    return F.with_coeffs(out)


# ---------------------------------------------------------------- windows


def bilinear_window(s: float, b: float, b_prime: float, d: int) -> None:
    """Raise unless 1/2 < b <= b' < min{(6 + 2s - d)/4, 1, s + 1}."""
    if not b > 0.5:
        raise ParameterWindowError(f"b > 1/2 violated (b = {b})")
    if not b <= b_prime:
        raise ParameterWindowError(f"b <= b' violated (b = {b}, b' = {b_prime})")
    for expr, bound in (("(6 + 2s - d)/4", (6 + 2 * s - d) / 4), ("1", 1.0), ("s + 1", s + 1)):
        if not b_prime < bound:
            raise ParameterWindowError(f"b' < {expr} violated (b' = {b_prime}, {expr} = {bound:g})")


def commutator_window(b: float, b_prime: float, d: int) -> None:
    """Raise unless 1/2 < b <= b' < min{(6 - d)/4, 1}."""
    if not b > 0.5:
        raise ParameterWindowError(f"b > 1/2 violated (b = {b})")
    if not b <= b_prime:
        raise ParameterWindowError(f"b <= b' violated (b = {b}, b' = {b_prime})")
    for expr, bound in (("(6 - d)/4", (6 - d) / 4), ("1", 1.0)):
        if not b_prime < bound:
            raise ParameterWindowError(f"b' < {expr} violated (b' = {b_prime}, {expr} = {bound:g})")


# ---------------------------------------------------------------- ratios


@dataclass
class RatioRecord:
    tag: str
    params: dict
    left: float
    right: float
    ratio: float
    cutoff: int
    seed: object = None

    def __post_init__(self) -> None:
        if not self.right > 0:
            raise DegenerateSampleError("right-hand side must be positive")


def bilinear_ratio(
    f: SpaceTimeField,
    g: SpaceTimeField,
    tag: str,
    sigma: float = 0.0,
    s: float = 0.0,
    b: float = 0.51,
    b_prime: float = 0.6,
    sign: str = "+",
    exploratory: bool = False,
    cutoff: int = 0,
    seed=None,
) -> RatioRecord:
    """Left over right side of one of the two bilinear estimates.

    * ``estimate1``: ||f g||_{X^{sigma,0,b'-1}} / (||f||_{X^{sigma,0,b}} ||g||_{X_pm^{sigma,s,b}})
    * ``estimate2``: ||f conj(g)||_{X_pm^{sigma,-s,b'-1}} / (||f||_{X^{sigma,0,b}} ||g||_{X^{sigma,0,b}})

    Unsubscripted spaces use the Schroedinger surface.
    """
    d = f.grid.dim
    if not exploratory:
        bilinear_window(s, b, b_prime, d)
    wave = wave_tag(sign)
    if tag == "estimate1":
        prod = lattice_product(f, g)
        left = bourgain_norm(prod, BourgainParams(sigma, 0.0, b_prime - 1, "schrodinger"))
        right = bourgain_norm(f, BourgainParams(sigma, 0.0, b, "schrodinger")) * bourgain_norm(
            g, BourgainParams(sigma, s, b, wave)
        )
    elif tag == "estimate2":
        prod = lattice_product(f, g, conjugate_g=True)
        left = bourgain_norm(prod, BourgainParams(sigma, -s, b_prime - 1, wave))
        right = bourgain_norm(f, BourgainParams(sigma, 0.0, b, "schrodinger")) * bourgain_norm(
            g, BourgainParams(sigma, 0.0, b, "schrodinger")
        )
    else:
        raise ValueError(f"unknown estimate tag {tag!r}")
    if not right > 0:
        raise DegenerateSampleError("right-hand side vanishes")
    params = {"sigma": sigma, "s": s, "b": b, "b_prime": b_prime, "d": d, "sign": sign}
    return RatioRecord(tag, params, left, right, left / right, cutoff, seed)


def commutator_field(v: SpaceTimeField, m: SpaceTimeField, sigma: float) -> SpaceTimeField:
    """F(v, m) = v m - exp(sigma||D||)(m exp(-sigma||D||) v) on the doubled lattice.

    Coefficient-wise this is sum v(xi1) m(xi2) (1 - exp(sigma(||xi||_1 - ||xi1||_1))).
    """
    direct = lattice_product(v, m)
    damped = v.with_coeffs(v.coeffs * np.exp(-sigma * ell1(v.xi)))
    twisted = lattice_product(damped, m)
    return direct.with_coeffs(direct.coeffs - np.exp(sigma * ell1(direct.xi)) * twisted.coeffs)


def commutator_ratio(
    v: SpaceTimeField,
    m: SpaceTimeField,
    sigma: float,
    b: float = 0.51,
    b_prime: float = 0.6,
    sign: str = "+",
    exploratory: bool = False,
    cutoff: int = 0,
    seed=None,
) -> RatioRecord:
    """||conj F(v, m)||_{X^{0,b'-1}} / (sigma ||v||_{X^{0,b}} ||m||_{X_pm^{sigma,1,b}})."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = v.grid.dim
    if not exploratory:
        commutator_window(b, b_prime, d)
    F = conjugate(commutator_field(v, m, sigma))
    left = bourgain_norm(F, BourgainParams(0.0, 0.0, b_prime - 1, "schrodinger"))
    right = (
        sigma
        * bourgain_norm(v, BourgainParams(0.0, 0.0, b, "schrodinger"))
        * bourgain_norm(m, BourgainParams(sigma, 1.0, b, wave_tag(sign)))
    )
    if not right > 0:
        raise DegenerateSampleError("right-hand side vanishes")
    params = {"sigma": sigma, "b": b, "b_prime": b_prime, "d": d, "sign": sign}
    return RatioRecord("commutator", params, left, right, left / right, cutoff, seed)


# ---------------------------------------------------------------- resonance


def _as_vec(xi) -> np.ndarray:
    return np.atleast_1d(np.asarray(xi, dtype=float))


def _branch(sign: str) -> float:
    if sign in ("+", "plus"):
        return 1.0
    if sign in ("-", "minus"):
        return -1.0
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def resonance_B(xi1, xi2, sign: str) -> tuple[float, float]:
    """(B, residual) with B = cos(angle) + (|xi2| -+ 1) / (2|xi1|).

    The ``minus`` branch uses ``|xi2| - 1`` and pairs with
    ``|xi1 + xi2|^2 - |xi1|^2 - |xi2| = 2|xi1||xi2| B``; the ``plus`` branch
    uses ``|xi2| + 1`` and ``... + |xi2|``. ``residual`` is the difference
    of the two sides of that identity.
    """
    a, c = _as_vec(xi1), _as_vec(xi2)
    if a.shape != c.shape:
        raise ValueError("xi1 and xi2 must have the same dimension")
    e = _branch(sign)
    na, nc = float(np.linalg.norm(a)), float(np.linalg.norm(c))
    if na == 0 or nc == 0:
        raise ValueError("resonance function needs xi1 != 0 and xi2 != 0")
    cos = float(np.dot(a, c)) / (na * nc)
    B = cos + (nc + e) / (2 * na)
    lhs = float(np.sum((a + c) ** 2)) - na**2 + e * nc
    return B, lhs - 2 * na * nc * B


def modulation_max(tau0, xi0, tau1, xi1, tau2, xi2, sign: str) -> float:
    """max{|tau0 - |xi0|^2|, |tau1 + |xi1|^2|, |tau2 -+ |xi2||} for a frequency triple
    summing to zero; ``minus`` pairs with ``|tau2 + |xi2||``.

    Raises ``RuntimeError`` if the bound M >= (2/3)|xi1||xi2||B| fails.
    """
    x0, x1, x2 = _as_vec(xi0), _as_vec(xi1), _as_vec(xi2)
    scale = max(1.0, abs(tau0), abs(tau1), abs(tau2), *np.abs(np.concatenate([x0, x1, x2])))
    if abs(tau0 + tau1 + tau2) > 1e-12 * scale or np.max(np.abs(x0 + x1 + x2)) > 1e-12 * scale:
        raise ValueError("frequencies must satisfy tau0 + tau1 + tau2 = 0 and xi0 + xi1 + xi2 = 0")
    e = _branch(sign)
    n2 = float(np.linalg.norm(x2))
    M = max(
        abs(tau0 - float(np.sum(x0**2))),
        abs(tau1 + float(np.sum(x1**2))),
        abs(tau2 - e * n2),
    )
    B, _ = resonance_B(x1, x2, sign)
    floor = (2.0 / 3.0) * float(np.linalg.norm(x1)) * n2 * abs(B)
    if M < floor * (1 - 1e-12) - 1e-12:
        raise RuntimeError(f"modulation bound violated: M = {M} < {floor}")
    return M


# ---------------------------------------------------------------- dyadic


def dyadic_edges(F: SpaceTimeField) -> list[tuple[float, float]]:
    """[0, 1), [1, 2), [2, 4), ... up to the largest |xi| on the lattice."""
    top = float(np.max(np.sqrt(np.sum(F.xi**2, axis=0))))
    edges = [(0.0, 1.0)]
    lo = 1.0
    while lo <= top:
        edges.append((lo, 2 * lo))
        lo *= 2
    return edges


def dyadic_shells(F: SpaceTimeField) -> list[SpaceTimeField]:
    """Restrictions of F to the shells of :func:`dyadic_edges`."""
    r = np.sqrt(np.sum(F.xi**2, axis=0))
    out = []
    for lo, hi in dyadic_edges(F):
        mask = (r >= lo) & (r < hi)
        out.append(F.with_coeffs(np.where(mask, F.coeffs, 0.0)))
    return out


# ---------------------------------------------------------------- integral bound


def _bracket(y):
    return np.sqrt(1.0 + np.square(y))


def convolution_integral_bound(alpha: float, beta: float, a: float, b: float) -> tuple[float, float, float]:
    """(integral, bound, ratio) for int dy / (<y - a>^alpha <y - b>^beta) and bound <a - b>^-beta.

    Adaptive quadrature on |y| <= TAIL_CUTOFF; the two tails are added from
    the expansion |y|^-(alpha+beta) (1 + (alpha a + beta b)/y), whose odd
    terms cancel between the two sides.
    """
    if not alpha > 1:
        raise ParameterWindowError(f"α > 1 violated (alpha = {alpha})")
    if not alpha >= beta:
        raise ParameterWindowError(f"α ≥ β violated (alpha = {alpha}, beta = {beta})")
    if not beta >= 0:
        raise ParameterWindowError(f"β ≥ 0 violated (beta = {beta})")
    Y = TAIL_CUTOFF
    if max(abs(a), abs(b)) > 1e-2 * Y:
        raise ValueError(f"|a|, |b| must stay below {1e-2 * Y:g}")

    def integrand(y):
        return _bracket(y - a) ** (-alpha) * _bracket(y - b) ** (-beta)

    pts = {-Y, Y, a, b, a - 1, a + 1, b - 1, b + 1}
    pts.update(sgn * 10.0**k for k in range(7) for sgn in (-1, 1))
    pts = sorted(p for p in pts if -Y <= p <= Y)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
    gamma = alpha + beta
    tail = 2.0 * Y ** (1.0 - gamma) / (gamma - 1.0)
    integral = total + tail
    bound = float(_bracket(a - b) ** (-beta))
    return integral, bound, integral / bound


def integral_sweep(alpha: float, beta: float, radius: float, points: int = 9) -> float:
    """Max ratio of :func:`convolution_integral_bound` over a, b on a uniform grid in [-radius, radius]."""
    grid = np.linspace(-radius, radius, points)
    return max(convolution_integral_bound(alpha, beta, float(a), float(b))[2] for a in grid for b in grid)


# ---------------------------------------------------------------- campaigns


@dataclass
class CampaignRow:
    tag: str
    params: dict
    cutoff: int
    max_ratio: float
    median_ratio: float
    growth_factor: float
    seed_base: int
    samples: int
    skipped: int

    def csv_fields(self) -> list:
        return [
            self.tag,
            json.dumps(self.params, sort_keys=True),
            self.cutoff,
            self.max_ratio,
            self.median_ratio,
            self.growth_factor,
            self.seed_base,
        ]


CAMPAIGN_COLUMNS = ["tag", "params", "cutoff", "max_ratio", "median_ratio", "growth_factor", "seed_base"]


@dataclass
class CampaignSummary:
    rows: list[CampaignRow] = field(default_factory=list)

    @property
    def growth_factors(self) -> list[float]:
        return [r.growth_factor for r in self.rows[1:]]

    @property
    def max_growth(self) -> float:
        return max(self.growth_factors, default=float("nan"))


def _one_ratio(tag: str, params: dict, cutoff: int, seed_base: int, i: int, tau_cutoff: int | None) -> RatioRecord:
    d = int(params.get("d", 1))
    ct = cutoff if tau_cutoff is None else tau_cutoff
    seed = [seed_base, i]
    rng_seeds = np.random.SeedSequence(seed).spawn(2)
    f = sample_field(cutoff, ct, rng_seeds[0], dim=d)
    g = sample_field(cutoff, ct, rng_seeds[1], dim=d)
    exploratory = bool(params.get("exploratory", False))
    if tag in ("estimate1", "estimate2"):
        return bilinear_ratio(
            f,
            g,
            tag,
            sigma=params.get("sigma", 0.0),
            s=params.get("s", 0.0),
            b=params["b"],
            b_prime=params["b_prime"],
            sign=params.get("sign", "+"),
            exploratory=exploratory,
            cutoff=cutoff,
            seed=i,
        )
    if tag == "commutator":
        return commutator_ratio(
            f,
            g,
            params["sigma"],
            b=params["b"],
            b_prime=params["b_prime"],
            sign=params.get("sign", "+"),
            exploratory=exploratory,
            cutoff=cutoff,
            seed=i,
        )
    raise ValueError(f"unknown campaign tag {tag!r}")


def ratio_campaign(
    tag: str,
    params: dict,
    sample_count: int,
    cutoffs: Sequence[int],
    seed_base: int = 0,
    tau_cutoff: int | None = None,
) -> CampaignSummary:
    """Max and median ratio over ``sample_count`` seeded samples per cutoff.

    Sample i draws from ``SeedSequence([seed_base, i])`` at every cutoff.
    ``growth_factor`` of a row is its max ratio over the previous row's
    (NaN on the first row). The time cutoff defaults to the space cutoff.
    """
    if sample_count < 100:
        raise ValueError(f"sample_count must be >= 100, got {sample_count}")
    if not cutoffs:
        raise ValueError("need at least one cutoff")
    d = int(params.get("d", 1))
    exploratory = bool(params.get("exploratory", False))
    if not exploratory:
        if tag == "commutator":
            commutator_window(params["b"], params["b_prime"], d)
        else:
            bilinear_window(params.get("s", 0.0), params["b"], params["b_prime"], d)
    summary = CampaignSummary()
    prev = None
    for c in cutoffs:
        ratios = []
        skipped = 0
        for i in range(sample_count):
            try:
                ratios.append(_one_ratio(tag, params, int(c), seed_base, i, tau_cutoff).ratio)
            except DegenerateSampleError:
                skipped += 1
        if not ratios:
            raise DegenerateSampleError(f"every sample at cutoff {c} was degenerate")
        mx = float(np.max(ratios))
        med = float(np.median(ratios))
        growth = mx / prev if prev else float("nan")
        summary.rows.append(CampaignRow(tag, dict(params), int(c), mx, med, growth, seed_base, len(ratios), skipped))
        prev = mx
    return summary
