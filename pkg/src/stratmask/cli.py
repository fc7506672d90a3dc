"""Command-line harness.

Subcommands mirror the library surface: rationality tests on dataset files,
masking runs on scenario files, the Monte Carlo noise study, the radar
violation-curve experiment, plus dataset/scenario generation and validation.
Exit codes: 0 success, 1 domain error (bad file, infeasible run), 2 usage.
Every CSV starts with '#' comment lines echoing the version, seed, and the
options that produced it; reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import load_dataset, save_dataset, validate_dataset
from .errors import StratmaskError
from .functions import function_from_dict
from .generators import (
    irrational_strategy_dataset,
    irrational_utility_dataset,
    rational_strategy_dataset,
    rational_utility_dataset,
    sample_linear_scenario,
)
from .masking import (
    MaskingProblem,
    load_scenario,
    mask_strategy,
    save_scenario,
    verify_masking,
    violation_curve,
)
from .noise import NoiseModel, empirical_error_probability
from .radar import RadarConfig, masking_problem, run_fig2_experiment, sample_scenario
from .report import write_csv
from .solvers import SolverOptions
from .strategy_test import margin_strategy, strategy_feasibility_test
from .utility_test import afriat_test, garp_check, margin_utility


def _solver_options(args: argparse.Namespace) -> SolverOptions:
    return SolverOptions(
        kkt_tol=args.kkt_tol,
        max_iters=args.max_iters,
        n_starts=args.n_starts,
        grid_n=args.grid_n,
        seed=getattr(args, "seed", 0) or 0,
    )


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kkt-tol", type=float, default=1e-6, help="inner solver KKT tolerance")
    p.add_argument("--max-iters", type=int, default=5000, help="inner solver iteration cap")
    p.add_argument("--n-starts", type=int, default=8, help="multi-start count")
    p.add_argument("--grid-n", type=int, default=200, help="grid oracle resolution")


def _parse_eta_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("eta grid must look like start:stop:step")
    start, stop, step = (float(x) for x in parts)
    if step <= 0:
        raise argparse.ArgumentTypeError("eta grid step must be positive")
    grid = []
    value = start
    while value <= stop + 1e-12:
        grid.append(round(value, 12))
        value += step
    return grid


def _config_echo(args: argparse.Namespace) -> list[str]:
    skip = {"func"}
    pairs = [f"{k}={v}" for k, v in sorted(vars(args).items()) if k not in skip]
    return ["config: " + " ".join(pairs)]


def _load_function_spec(path: str):
    import json

    from .errors import SchemaError

    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON (line {exc.lineno})") from exc
    return function_from_dict(payload)


def cmd_validate(args) -> int:
    dataset = load_dataset(args.dataset)
    violations = validate_dataset(dataset, tol=args.tol)
    if not violations:
        print(f"{args.dataset}: valid (K={dataset.horizon}, m={dataset.dimension})")
        return 0
    for v in violations:
        print(f"violation[{v.kind}] t={v.index}: {v.message}", file=sys.stderr)
    return 1


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    kind = args.kind
    if kind == "utility-rational":
        dataset, _ = rational_utility_dataset(args.k, args.m, rng)
        save_dataset(dataset, args.out)
    elif kind == "utility-irrational":
        save_dataset(irrational_utility_dataset(args.k, args.m, rng), args.out)
    elif kind == "strategy-rational":
        dataset, _, _ = rational_strategy_dataset(args.k, args.m, rng)
        save_dataset(dataset, args.out)
    elif kind == "strategy-irrational":
        save_dataset(irrational_strategy_dataset(args.k, args.m, rng), args.out)
    elif kind == "scenario-linear":
        utilities, budget, thresholds = sample_linear_scenario(args.k, args.m, rng)
        problem = MaskingProblem(utilities, budget, thresholds, 0.0, args.m)
        save_scenario(problem, args.out)
    elif kind == "scenario-radar":
        config = RadarConfig(k=args.k, m=args.m)
        scenario = sample_scenario(config, rng)
        save_scenario(masking_problem(scenario, eta=0.0), args.out)
    else:  # pragma: no cover - argparse choices guard this
        raise ValueError(f"unknown kind {kind}")
    print(f"wrote {args.out}")
    return 0


def cmd_irl_utility(args) -> int:
    dataset = load_dataset(args.dataset)
    garp = garp_check(dataset)
    feasibility, reconstruction = afriat_test(dataset)
    rows: list[list] = [
        ["verdict", "garp", "", 1 if garp.passes else 0],
        ["verdict", "afriat", "", 1 if feasibility.feasible else 0],
    ]
    if garp.violating_cycle is not None:
        rows.append(["cycle", "", "", ";".join(str(i) for i in garp.violating_cycle)])
    if reconstruction is not None:
        for t in range(dataset.horizon):
            rows.append(["witness_level", t, "", float(reconstruction.levels[t])])
            rows.append(["witness_multiplier", t, "", float(reconstruction.multipliers[t])])
    if args.u_true:
        u_true = _load_function_spec(args.u_true)
        margin = margin_utility(dataset, u_true)
        rows.append(["margin", "psi_u", "", float(margin.value)])
        k = dataset.horizon
        for j in range(k):
            for kk in range(k):
                if j != kk:
                    rows.append(["pair_term", j, kk, float(margin.pair_terms[j, kk])])
    write_csv(args.out, _config_echo(args), ["record", "i", "j", "value"], rows)
    print(f"wrote {args.out} (garp={'pass' if garp.passes else 'fail'})")
    return 0


def cmd_irl_strategy(args) -> int:
    dataset = load_dataset(args.dataset)
    feasibility, reconstruction = strategy_feasibility_test(dataset)
    rows: list[list] = [["verdict", "feasibility", "", 1 if feasibility.feasible else 0]]
    if reconstruction is not None:
        for t in range(dataset.horizon):
            rows.append(["witness_threshold", t, "", float(reconstruction.thresholds[t])])
            rows.append(["witness_multiplier", t, "", float(reconstruction.multipliers[t])])
    if args.g_true:
        g_true = _load_function_spec(args.g_true)
        thresholds = np.array([g_true.value(b) for b in dataset.responses])
        margin = margin_strategy(dataset.responses, dataset.functions, thresholds, g_true)
        rows.append(["margin", "psi_g", "", float(margin.value)])
        k = dataset.horizon
        for j in range(k):
            for kk in range(k):
                if j != kk:
                    rows.append(["pair_term", j, kk, float(margin.pair_terms[j, kk])])
    write_csv(args.out, _config_echo(args), ["record", "i", "j", "value"], rows)
    print(f"wrote {args.out} (feasible={feasibility.feasible})")
    return 0


def _mask_rows(eta, thresholds_true, thresholds_masked, violation, psi_true, psi_masked, feasible):
    rows = []
    for t, (g_true, g_star) in enumerate(zip(thresholds_true, thresholds_masked)):
        rows.append(
            [eta, t, float(g_true), float(g_star), violation, psi_true, psi_masked,
             int(feasible)]
        )
    return rows


def cmd_mask(args) -> int:
    opts = _solver_options(args)
    problem = load_scenario(args.scenario, opts=opts)
    header = ["eta", "t", "gamma_true", "gamma_star", "violation_norm", "psi_true",
              "psi_masked", "feasible"]
    rows: list[list] = []
    if args.eta_grid is not None:
        base = replace(problem, eta=max(args.eta_grid[0], 1e-9) if args.eta_grid else 0.0)
        curve = violation_curve(base, args.eta_grid)
        for eta, point in zip(args.eta_grid, curve):
            if point is None:
                rows.append([eta, "", "", "", "", "", "", "gap"])
                continue
            rows.extend(
                _mask_rows(eta, problem.thresholds, point.thresholds_masked,
                           point.violation, point.psi_true, point.psi_masked, point.feasible)
            )
        series = [(e, pt.violation) for e, pt in zip(args.eta_grid, curve) if pt is not None]
    else:
        problem = replace(problem, eta=args.eta)
        result = mask_strategy(problem)
        if args.verify:
            check = verify_masking(result, problem)
            if not check.ok:
                print("verification failed: recomputed margins violate the target",
                      file=sys.stderr)
        rows.extend(
            _mask_rows(result.eta, result.thresholds_true, result.thresholds_masked,
                       result.violation, result.psi_true, result.psi_masked, result.feasible)
        )
        series = [(result.eta, result.violation)]
    write_csv(args.out, _config_echo(args), header, rows)
    print(f"wrote {args.out}")
    if args.plot:
        from .plotting import render_line_svg

        render_line_svg(
            [e for e, _ in series],
            [v for _, v in series],
            xlabel="masking extent eta",
            ylabel="constraint violation (euclidean)",
            title="Deliberate constraint violation vs masking extent",
            path=args.plot,
        )
        print(f"wrote {args.plot}")
    return 0


def cmd_bound(args) -> int:
    opts = SolverOptions(
        kkt_tol=args.kkt_tol, max_iters=args.max_iters, n_starts=args.n_starts,
        grid_n=args.grid_n, seed=args.seed,
        cs_step_min=1e-3, cs_max_passes=12,
    )
    problem = load_scenario(args.scenario, opts=opts)
    if args.eta is not None:
        problem = replace(problem, eta=args.eta)
    if problem.eta <= 0:
        raise StratmaskError("the scenario needs eta > 0 (set it in the file or pass --eta)")
    noise = NoiseModel.isotropic(args.sigma2, problem.dimension, seed=args.seed)
    study = empirical_error_probability(
        problem, noise, args.trials, eq8_literal=args.eq8_literal
    )
    header = ["record", "trial", "exceed", "margin", "p_err", "ci_low", "ci_high",
              "l_hat", "delta_max_hat", "kappa_hat", "bound", "bound_safe"]
    rows: list[list] = [
        ["trial", i, int(bool(b)), float(m), "", "", "", "", "", "", "", ""]
        for i, (b, m) in enumerate(zip(study.exceed_bits, study.margins))
    ]
    rows.append(
        ["summary", "", "", "", study.p_err, study.wilson_low, study.wilson_high,
         study.lipschitz_hat, study.delta_max_hat, study.kappa_hat, study.bound,
         study.bound_safe]
    )
    write_csv(args.out, _config_echo(args), header, rows)
    print(
        f"wrote {args.out} (p_err={study.p_err:.4f}, "
        f"wilson=({study.wilson_low:.4f},{study.wilson_high:.4f}), bound={study.bound:.4f})"
    )
    return 0


def cmd_radar_fig2(args) -> int:
    config = RadarConfig(k=args.k, m=args.m)
    opts = SolverOptions(
        kkt_tol=args.kkt_tol, max_iters=min(args.max_iters, 1500),
        n_starts=min(args.n_starts, 2), grid_n=args.grid_n, seed=args.seed,
        cs_step_min=1e-4, cs_max_passes=14,
    )
    rng = np.random.default_rng(args.seed)
    result = run_fig2_experiment(
        config, rng, eta_grid=args.eta_grid, opts=opts, out_dir=args.out_dir,
        csv_comments=_config_echo(args),
    )
    solved = sum(1 for pt in result.curve if pt is not None)
    print(
        f"wrote {result.csv_path} and {result.svg_path} "
        f"({solved}/{len(result.eta_grid)} grid points, spearman={result.spearman:.3f})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stratmask",
        description="Revealed-preference rationality tests and strategy masking",
    )
    parser.add_argument("--version", action="version", version=f"stratmask {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset file against its invariants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="write a synthetic dataset or scenario")
    p.add_argument(
        "--kind",
        required=True,
        choices=[
            "utility-rational", "utility-irrational", "strategy-rational",
            "strategy-irrational", "scenario-linear", "scenario-radar",
        ],
    )
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("irl-utility", help="utility-side rationality test on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--u-true", help="JSON function spec of the true utility")
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_irl_utility)

    p = sub.add_parser("irl-strategy", help="budget-side rationality test on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--g-true", help="JSON function spec of the true budget base")
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_irl_strategy)

    p = sub.add_parser("mask", help="compute minimally violated thresholds")
    p.add_argument("--scenario", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--eta", type=float)
    group.add_argument("--eta-grid", type=_parse_eta_grid, metavar="A:B:STEP")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="also render the violation curve as SVG")
    p.add_argument("--verify", action="store_true",
                   help="recompute margins from scratch after solving")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("bound", help="Monte Carlo error probability vs analytic bound")
    p.add_argument("--scenario", required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eta", type=float, help="override the scenario's masking extent")
    p.add_argument("--eq8-literal", action="store_true",
                   help="evaluate the noisy margin on the noiseless masked data")
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("radar-fig2", help="violation-vs-eta curve for a sampled radar scenario")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--m", type=int, default=6)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eta-grid", type=_parse_eta_grid, default=None, metavar="A:B:STEP")
    p.add_argument("--out-dir", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_radar_fig2)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except StratmaskError as exc:
        print(f"error[{type(exc).__module__}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error[{type(exc).__module__}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
