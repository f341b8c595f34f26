"""Command-line interface: design, simulate, theory, validate.

Exit codes: 0 success, 1 validation-suite failure, 2 usage or configuration
error, 3 data (file/parse) error, 4 numerical failure (singular balance
covariance, rejection sampling exhausted, insufficient acceptances).
Diagnostics are line-oriented ``key=value`` pairs on standard output.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import theory, validate
from .errors import (
    AcceptanceFailureError,
    DataFormatError,
    InsufficientSamplesError,
    ScenarioError,
    SingularCovarianceError,
)
from .populations import clip_weights, importance_weights
from .populations import GaussianPopulationPair, WeightPolicy, read_covariates_csv
from .randomization import (
    BalanceSpec,
    QuantileRule,
    ThresholdRule,
    WeightedCovariates,
    draw_balanced_assignment,
    mahalanobis_statistic,
    quantile_candidate_count,
    rerandomize_quantile,
    rerandomize_threshold,
)
from .simharness import load_scenario, run_sweep, write_results_csv

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_BALANCE_TO_CRITERION = {"cr": "none", "sb": "source", "tb": "target", "alt": "alternate"}


def _parse_mean_list(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError as err:
        raise ScenarioError(f"bad mean list {text!r}: {err}") from None


def scenario_preset_path(name: str) -> Path:
    """Path of a bundled scenario preset (fig1_linear, fig2_nonlinear, ...)."""
    return Path(str(resources.files("targetbalance") / "scenarios" / f"{name}.scenario"))


def _resolve_scenario(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    preset = scenario_preset_path(arg)
    if preset.exists():
        return preset
    raise ScenarioError(f"scenario file not found: {arg}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="targetbalance",
        description="Design and evaluate transportable randomized experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="draw a (re)randomized assignment")
    p_design.add_argument("--covariates", required=True, metavar="PATH")
    src = p_design.add_mutually_exclusive_group()
    src.add_argument(
        "--weights-column",
        action="store_true",
        help="use the w column from the covariates file",
    )
    src.add_argument("--unit-weights", action="store_true")
    src.add_argument("--source-mean", metavar="M1,...,MD")
    p_design.add_argument("--target-mean", metavar="M1,...,MD")
    p_design.add_argument(
        "--balance", required=True, choices=["cr", "sb", "tb", "alt"]
    )
    p_design.add_argument("--alpha", type=float)
    p_design.add_argument("--pool", type=int, default=100)
    p_design.add_argument("--threshold", type=float)
    p_design.add_argument("--clip", type=float)
    p_design.add_argument("--seed", type=int, default=0)
    p_design.add_argument("--out", required=True, metavar="PATH")

    p_sim = sub.add_parser("simulate", help="run a scenario sweep to CSV")
    p_sim.add_argument("--scenario", required=True, metavar="PATH|PRESET")
    p_sim.add_argument("--out", required=True, metavar="PATH")
    p_sim.add_argument("--threads", type=int, default=1)

    p_theory = sub.add_parser("theory", help="closed-form calculators")
    group = p_theory.add_mutually_exclusive_group(required=True)
    group.add_argument("--vda", nargs=2, metavar=("D", "A"))
    group.add_argument("--threshold", nargs=2, metavar=("D", "ALPHA"))
    group.add_argument("--r2", nargs=2, metavar=("COVARIATES", "OUTCOMES"))
    group.add_argument("--predict", nargs=3, metavar=("VAR", "R2", "VDA"))
    p_theory.add_argument(
        "--weights",
        choices=["auto", "column", "unit"],
        default="auto",
        help="weight handling for --r2 (default: w column when present)",
    )

    p_val = sub.add_parser("validate", help="run the oracle check suites")
    p_val.add_argument(
        "--suite", choices=["enumeration", "mc", "all"], default="all"
    )
    p_val.add_argument("--seed", type=int, default=0)

    return parser


def _design_weights(args, x, w_column):
    n = x.shape[0]
    if args.source_mean or args.target_mean:
        if not (args.source_mean and args.target_mean):
            raise ScenarioError("--source-mean and --target-mean must be given together")
        pop = GaussianPopulationPair(
            _parse_mean_list(args.source_mean), _parse_mean_list(args.target_mean)
        )
        if pop.d != x.shape[1]:
            raise ScenarioError(
                f"population means have dimension {pop.d}, covariates {x.shape[1]}"
            )
        return importance_weights(pop, x)
    if args.weights_column:
        if w_column is None:
            raise DataFormatError("covariates file has no w column")
        return w_column
    if args.unit_weights:
        return np.ones(n)
    # default: the file's weights when present, else unit weights
    return w_column if w_column is not None else np.ones(n)


def cmd_design(args) -> int:
    x, w_column = read_covariates_csv(args.covariates)
    if x.shape[0] % 2:
        raise ScenarioError(f"covariate file has odd row count {x.shape[0]}")
    weights = _design_weights(args, x, w_column)
    clipped = clip_weights(weights, WeightPolicy(args.clip))
    wc = WeightedCovariates(x, clipped)
    rng = np.random.default_rng(args.seed)

    criterion = _BALANCE_TO_CRITERION[args.balance]
    realized = math.nan
    candidates = 1
    if criterion == "none":
        z = draw_balanced_assignment(wc.n, rng)
    else:
        if args.threshold is not None and args.alpha is not None:
            raise ScenarioError("give either --threshold or --alpha, not both")
        if args.threshold is not None:
            spec = BalanceSpec(criterion, ThresholdRule(args.threshold))
            z, candidates = rerandomize_threshold(wc, spec, rng)
            realized = args.threshold
        elif args.alpha is not None:
            rule = QuantileRule(args.alpha, args.pool)
            spec = BalanceSpec(
                criterion, rule, max_draws=max(1_000_000, quantile_candidate_count(rule))
            )
            z, realized = rerandomize_quantile(wc, spec, rng)
            candidates = quantile_candidate_count(rule)
        else:
            raise ScenarioError(f"--balance {args.balance} needs --threshold or --alpha")

    try:
        stat_criterion = criterion if criterion != "none" else "target"
        stat = mahalanobis_statistic(wc, z, stat_criterion)
        m_value, cond = stat.value, stat.covariance_condition_number
    except SingularCovarianceError as err:
        if criterion != "none":
            raise
        m_value, cond = math.nan, err.condition_number  # diagnostics only for CR

    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("unit,assignment,z,weight,clipped_weight\n")
        for i in range(wc.n):
            fh.write(
                f"{i + 1},{(z.z[i] + 1) // 2},{z.z[i]},"
                f"{weights[i]:.17g},{clipped[i]:.17g}\n"
            )

    print(f"n={wc.n}")
    print(f"d={wc.d}")
    print(f"balance={args.balance}")
    print(f"m_statistic={m_value:.12g}")
    print(f"realized_threshold={realized:.12g}")
    print(f"candidates={candidates}")
    print(f"condition_number={cond:.12g}")
    print(f"out={args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_scenario(_resolve_scenario(args.scenario))
    if args.threads < 1:
        raise ScenarioError(f"--threads must be >= 1, got {args.threads}")
    rows = run_sweep(cfg, threads=args.threads)
    write_results_csv(rows, args.out)
    by_value = {}
    for row in rows:
        by_value.setdefault(row.sweep_value, []).append(row)
    for value in sorted(by_value):
        best = min(by_value[value], key=lambda r: r.mse)
        print(
            f"sweep_value={best.sweep_value:g} reps={best.reps} "
            f"best_method={best.method} best_mse={best.mse:.6g}"
        )
    print(f"out={args.out}")
    return EXIT_OK


def _read_outcomes_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["y0", "y1"]:
                raise DataFormatError(
                    f"{path}: expected header y0,y1, got "
                    f"{','.join(header) if header else '<empty>'}"
                )
            rows = [(float(a), float(b)) for a, b in reader]
    except OSError as err:
        raise DataFormatError(f"{path}: {err}") from None
    except ValueError as err:
        raise DataFormatError(f"{path}: {err}") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    arr = np.asarray(rows)
    return arr[:, 0], arr[:, 1]


def cmd_theory(args) -> int:
    if args.vda:
        d, a = int(args.vda[0]), float(args.vda[1])
        print(f"v_da={theory.variance_reduction_factor(d, a):.12g}")
    elif args.threshold:
        d, alpha = int(args.threshold[0]), float(args.threshold[1])
        print(f"threshold={theory.threshold_for_alpha(d, alpha):.12g}")
    elif args.r2:
        x, w = read_covariates_csv(args.r2[0])
        y0, y1 = _read_outcomes_csv(args.r2[1])
        if y0.shape[0] != x.shape[0]:
            raise DataFormatError(
                f"covariates have {x.shape[0]} rows, outcomes {y0.shape[0]}"
            )
        if args.weights == "unit":
            w = None
        elif args.weights == "column" and w is None:
            raise DataFormatError("covariates file has no w column")
        weights = w if w is not None else np.ones(x.shape[0])
        c_tilde = weights * (y1 + y0) / 2.0
        r2_source = theory.squared_multiple_correlation(x, c_tilde)
        r2_target = theory.squared_multiple_correlation(weights[:, None] * x, c_tilde)
        print(f"r2_source={r2_source:.12g}")
        print(f"r2_target={r2_target:.12g}")
    else:
        var_cr, r2, vda = (float(v) for v in args.predict)
        print(
            f"predicted_variance={theory.predicted_conditional_variance(var_cr, r2, vda):.12g}"
        )
    return EXIT_OK


def cmd_validate(args) -> int:
    results = validate.run_suite(args.suite, seed=args.seed)
    failed = 0
    for res in results:
        status = "pass" if res.passed else "fail"
        print(f"check={res.name} status={status} {res.detail}")
        failed += not res.passed
    print(f"suite={args.suite} checks={len(results)} failures={failed}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "design":
            return cmd_design(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "theory":
            return cmd_theory(args)
        return cmd_validate(args)
    except (ScenarioError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (
        SingularCovarianceError,
        AcceptanceFailureError,
        InsufficientSamplesError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
