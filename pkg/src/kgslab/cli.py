"""Command line: ``kgslab {simulate, probe, picard-check, fit-radius}``.

Exit codes: 0 success, 2 config or precondition error, 3 divergence,
4 failed probe or consistency assertion, 5 Picard non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .analyticity_tracker import InsufficientDataError, decay_exponent, fit_decay_exponent
from .estimate_probe import (
    CAMPAIGN_COLUMNS,
    ParameterWindowError,
    convolution_integral_bound,
    integral_sweep,
    modulation_max,
    ratio_campaign,
    resonance_B,
)
from .evolution import (
    CALIBRATION_SUITE,
    CalibrationCase,
    calibrate_lifespan_constant,
    evolve,
    lifespan,
    lifespan_exponent,
    local_bound_ratios,
    picard_solve,
    worst_contraction,
)
from .gevrey_spaces import GevreyParams, gevrey_norm
from .kgs_model import KgsState
from .spectral_core import SpectralField
from .harness import CONSISTENCY_NOTE, ConfigError, RunConfig, load_config, read_series, simulate, write_csv, write_json, write_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_ASSERTION = 4
EXIT_PICARD = 5

GROWTH_BOUND = 1.5
SIGMA_SWEEP_BOUND = 2.0
INTEGRAL_GROWTH_BOUND = 2.0
RESONANCE_TOL = 1e-12

log = logging.getLogger("kgslab")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    data = load_config(args.config) if args.config else {}
    if args.out is not None:
        data["out"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = RunConfig.from_dict(data)
    record, wall = simulate(cfg)
    write_run(record, cfg.out, wall)
    if record.status != "ok":
        print(f"diverged: {record.failure['message']}; partial record in {cfg.out}", file=sys.stderr)
        return EXIT_DIVERGED
    p_hat = "n/a" if record.p_hat is None else f"{record.p_hat:.4f}"
    print(f"{len(record.rows)} snapshots written to {cfg.out}; p_hat = {p_hat} (reference p = {record.p_bound:g})")
    return EXIT_OK


# ---------------------------------------------------------------- probes


def _campaign_rows(summary) -> list[list]:
    return [r.csv_fields() for r in summary.rows]


def cmd_probe_bilinear(args) -> int:
    params = {"d": args.d, "s": args.s, "b": args.b, "b_prime": args.bprime, "sigma": args.sigma, "sign": args.sign}
    if args.exploratory:
        params["exploratory"] = True
    summary = ratio_campaign(args.tag, params, args.samples, args.cutoffs, seed_base=args.seed or 0)
    out = _out_dir(args)
    write_csv(out / f"probe_{args.tag}.csv", CAMPAIGN_COLUMNS, _campaign_rows(summary))
    for r in summary.rows:
        print(f"cutoff {r.cutoff:4d}  max {r.max_ratio:.6g}  median {r.median_ratio:.6g}  growth {r.growth_factor:.4g}")
    if not args.exploratory and summary.rows[1:] and summary.max_growth >= GROWTH_BOUND:
        print(f"growth factor {summary.max_growth:.4g} >= {GROWTH_BOUND}", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_probe_commutator(args) -> int:
    rows, maxima = [], []
    prev = None
    for sigma in args.sigmas:
        params = {"d": args.d, "sigma": sigma, "b": args.b, "b_prime": args.bprime, "sign": args.sign}
        if args.exploratory:
            params["exploratory"] = True
        row = ratio_campaign("commutator", params, args.samples, [args.cutoff], seed_base=args.seed or 0).rows[0]
        # growth_factor here compares successive sigma values
        row.growth_factor = row.max_ratio / prev if prev else float("nan")
        prev = row.max_ratio
        maxima.append(row.max_ratio)
        rows.append(row.csv_fields())
        print(f"sigma {sigma:<8g} max {row.max_ratio:.6g}  median {row.median_ratio:.6g}")
    write_csv(_out_dir(args) / "probe_commutator.csv", CAMPAIGN_COLUMNS, rows)
    spread = max(maxima) / min(maxima) if min(maxima) > 0 else math.inf
    print(f"spread across sigma: {spread:.4g}")
    if not args.exploratory and spread > SIGMA_SWEEP_BOUND:
        print(f"sigma-normalized ratio spread {spread:.4g} > {SIGMA_SWEEP_BOUND}", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_probe_integral(args) -> int:
    rows = []
    failed = False
    for beta in args.betas:
        convolution_integral_bound(args.alpha, beta, 0.0, 0.0)
        prev = None
        for radius in (args.radius, 2 * args.radius):
            mx = integral_sweep(args.alpha, beta, radius, args.points)
            grid = np.linspace(-radius, radius, args.points)
            ratios = [convolution_integral_bound(args.alpha, beta, float(a), float(b))[2] for a in grid for b in grid]
            growth = mx / prev if prev else float("nan")
            prev = mx
            params = json.dumps({"alpha": args.alpha, "beta": beta, "points": args.points}, sort_keys=True)
            rows.append(["lemma-integral", params, radius, mx, float(np.median(ratios)), growth, 0])
            print(f"beta {beta:<5g} radius {radius:<8g} max ratio {mx:.6g}  growth {growth:.4g}")
            if not math.isnan(growth) and growth >= INTEGRAL_GROWTH_BOUND:
                failed = True
    write_csv(_out_dir(args) / "probe_lemma-integral.csv", CAMPAIGN_COLUMNS, rows)
    return EXIT_ASSERTION if failed and not args.exploratory else EXIT_OK


def cmd_probe_resonance(args) -> int:
    rng = np.random.default_rng(args.seed or 0)
    rows = []
    worst = 0.0
    for sign in ("+", "-"):
        res, slack = [], []
        for _ in range(args.samples):
            x1 = rng.normal(scale=5.0, size=args.dim)
            x2 = rng.normal(scale=5.0, size=args.dim)
            B, r = resonance_B(x1, x2, sign)
            res.append(abs(r))
            e = 1.0 if sign == "+" else -1.0
            t1 = -float(x1 @ x1) + rng.normal()
            t2 = e * float(np.linalg.norm(x2)) + rng.normal()
            M = modulation_max(-(t1 + t2), -(x1 + x2), t1, x1, t2, x2, sign)
            floor = (2 / 3) * np.linalg.norm(x1) * np.linalg.norm(x2) * abs(B)
            slack.append(M - floor)
        params = json.dumps({"dim": args.dim, "sign": sign}, sort_keys=True)
        rows.append(["resonance", params, args.samples, max(res), float(np.median(res)), min(slack), args.seed or 0])
        worst = max(worst, max(res))
        print(f"branch {sign}: max residual {max(res):.3e}, min modulation slack {min(slack):.3e}")
    write_csv(_out_dir(args) / "probe_resonance.csv", CAMPAIGN_COLUMNS, rows)
    return EXIT_ASSERTION if worst > RESONANCE_TOL else EXIT_OK


# ---------------------------------------------------------------- picard-check


def _case_from(data: dict) -> CalibrationCase:
    known = {f.name for f in fields(CalibrationCase)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown case keys: {sorted(extra)}")
    return CalibrationCase(**data)


def picard_check(cfg: dict) -> tuple[dict, int]:
    allowed = {"case", "C", "delta", "nodes", "tol", "max_iter", "strang_steps", "seed"}
    extra = set(cfg) - allowed
    if extra:
        raise ConfigError(f"unknown picard-check keys: {sorted(extra)}")
    case_data = dict(cfg.get("case", {}))
    if cfg.get("seed") is not None:
        case_data["seed"] = int(cfg["seed"])
    case = _case_from(case_data) if case_data else CALIBRATION_SUITE[0]
    nodes = int(cfg.get("nodes", 64))
    tol = float(cfg.get("tol", 1e-10))
    max_iter = int(cfg.get("max_iter", 40))
    strang_steps = int(cfg.get("strang_steps", 3200))
    if nodes < 6 or tol <= 0 or max_iter < 1 or strang_steps < 1:
        raise ConfigError("nodes >= 6, tol > 0, max_iter >= 1 and strang_steps >= 1 are required")
    try:
        u0, pp, pm = case.data()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    q = lifespan_exponent(case.dim)
    report: dict = {"case": asdict(case), "q": q}
    if cfg.get("delta") is not None:
        delta = float(cfg["delta"])
        if not delta > 0:
            raise ConfigError("delta must be positive")
        report["C"] = None
    else:
        if cfg.get("C") is not None:
            C = float(cfg["C"])
        else:
            calib = calibrate_lifespan_constant(nodes=nodes)
            report["calibration"] = calib.to_dict()
            C = calib.C_emp
        report["C"] = C
        delta = lifespan(u0, pp, pm, case.sigma, q, C)
    report["delta"] = delta
    traj, prep = picard_solve(u0, pp, pm, case.sigma, delta, tol=tol, max_iter=max_iter, nodes=nodes)
    report["picard"] = prep.to_dict()
    report["worst_contraction_from_3"] = worst_contraction(prep)
    if not prep.converged:
        return report, EXIT_PICARD
    ref = evolve(KgsState(u0, pp, pm), delta, delta / strang_steps, [0.0, delta]).final
    half = GevreyParams(case.sigma / 2, 0.0)
    fin = traj.final
    grid = u0.grid
    diffs = {
        name: gevrey_norm(SpectralField(grid, a.coeffs - b.coeffs), half)
        for name, a, b in zip(("u", "n_plus", "n_minus"), fin.fields(), ref.fields())
    }
    report["agreement"] = diffs
    report["agreement_max"] = max(diffs.values())
    report["strang_steps"] = strang_steps
    report["local_bounds"] = local_bound_ratios(traj, u0, pp, pm, case.sigma)
    return report, EXIT_OK


def cmd_picard_check(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    report, code = picard_check(cfg)
    write_json(_out_dir(args) / "picard.json", report)
    prep = report["picard"]
    print(f"delta = {report['delta']:.6g}  (C = {report['C']})")
    print(" iterate   difference      factor")
    for k, diff in enumerate(prep["differences"], start=1):
        factor = prep["contraction_factors"][k - 2] if k >= 2 else float("nan")
        print(f" {k:7d}   {diff:.4e}   {factor:.4f}")
    if code == EXIT_PICARD:
        print(f"no convergence: {prep['message']}; try delta = {prep['suggested_delta']:.6g}", file=sys.stderr)
        return code
    print(f"agreement with evolve in G^(sigma/2,0): {report['agreement_max']:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------- fit-radius


def cmd_fit_radius(args) -> int:
    rows = read_series(args.series)
    dim = args.dim
    if dim is None:
        run = Path(args.series).with_name("run.json")
        dim = json.loads(run.read_text())["config"]["dim"] if run.exists() else 1
    pts = [(r["t"], r["sigma_u"]) for r in rows if r["t"] > args.t_min]
    if len(pts) < 4:
        raise InsufficientDataError(f"need at least 4 rows with t > {args.t_min}, found {len(pts)}")
    ts, ss = zip(*pts)
    p_hat = fit_decay_exponent(ts, ss)
    p = decay_exponent(dim)
    ok = p_hat <= p + 0.5
    result = {"p_hat": p_hat, "p": p, "dim": dim, "t_min": args.t_min, "rows": len(pts), "consistent": ok, "note": CONSISTENCY_NOTE}
    if args.out is not None:
        write_json(_out_dir(args) / "fit.json", result)
    print(f"p_hat = {p_hat:.4f}  p = {p:g} (d = {dim})  one-sided check p_hat <= p + 0.5: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ASSERTION


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed overriding the config")
    common.add_argument("--exploratory", action="store_true", help="skip parameter-window checks and assertions")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="kgslab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="evolve, monitor and fit the radius")
    sim.set_defaults(func=cmd_simulate)

    probe = sub.add_parser("probe", help="estimate probes")
    psub = probe.add_subparsers(dest="probe", required=True)

    bil = psub.add_parser("bilinear", parents=[common])
    bil.add_argument("--tag", choices=["estimate1", "estimate2"], default="estimate1")
    bil.add_argument("--d", type=int, default=1)
    bil.add_argument("--s", type=float, default=0.0)
    bil.add_argument("--b", type=float, default=0.51)
    bil.add_argument("--bprime", type=float, default=0.6)
    bil.add_argument("--sigma", type=float, default=0.0)
    bil.add_argument("--sign", choices=["+", "-"], default="+")
    bil.add_argument("--samples", type=int, default=200)
    bil.add_argument("--cutoffs", type=int, nargs="+", default=[8, 16])
    bil.set_defaults(func=cmd_probe_bilinear)

    com = psub.add_parser("commutator", parents=[common])
    com.add_argument("--d", type=int, default=1)
    com.add_argument("--b", type=float, default=0.51)
    com.add_argument("--bprime", type=float, default=0.6)
    com.add_argument("--sign", choices=["+", "-"], default="+")
    com.add_argument("--sigmas", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    com.add_argument("--cutoff", type=int, default=8)
    com.add_argument("--samples", type=int, default=100)
    com.set_defaults(func=cmd_probe_commutator)

    lem = psub.add_parser("lemma-integral", parents=[common])
    lem.add_argument("--alpha", type=float, default=1.2)
    lem.add_argument("--betas", type=float, nargs="+", default=[0.0, 0.6, 1.2])
    lem.add_argument("--radius", type=float, default=100.0)
    lem.add_argument("--points", type=int, default=9)
    lem.set_defaults(func=cmd_probe_integral)

    res = psub.add_parser("resonance", parents=[common])
    res.add_argument("--samples", type=int, default=10000)
    res.add_argument("--dim", type=int, default=2, choices=[1, 2, 3])
    res.set_defaults(func=cmd_probe_resonance)

    pc = sub.add_parser("picard-check", parents=[common], help="Picard contraction and cross-solver agreement")
    pc.set_defaults(func=cmd_picard_check)

    fr = sub.add_parser("fit-radius", parents=[common], help="decay exponent of sigma_u(t) from series.csv")
    fr.add_argument("series", help="series.csv of a simulate run")
    fr.add_argument("--t-min", type=float, default=1.0, dest="t_min")
    fr.add_argument("--dim", type=int, choices=[1, 2, 3])
    fr.set_defaults(func=cmd_fit_radius)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "out", None) is None and args.command != "simulate" and args.command != "fit-radius":
        args.out = "."
    try:
        return args.func(args)
    except ParameterWindowError as exc:
        print(f"parameter window: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, InsufficientDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
