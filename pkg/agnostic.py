"""
agnostic.py
Entry point: builds the command tree and routes each subcommand to its handler.

    python agnostic.py analyze --input trial.csv --outcome gpa --group arm --covariates hs_gpa
    python agnostic.py simulate --dgp lin2013 --n 1000 --p-a 0.75,0.6,0.5,0.4,0.25 --reps 40000
    python agnostic.py asymptotics --population pop.csv --p-a 0.5
    python agnostic.py enumerate --population pop.csv --n-treated 6 --estimator adjusted
    python agnostic.py bias --input trial.csv --outcome gpa --group arm --covariates hs_gpa

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.
"""

import argparse
import logging
import os
import sys
from typing import Callable

from dotenv import load_dotenv

from handlers.command_handler import (
    AnalysisConfig,
    cmd_analyze,
    cmd_asymptotics,
    cmd_bias,
    cmd_enumerate,
    render_analysis,
    render_asymptotics,
    render_bias,
    render_enumeration,
)
from handlers.simulate_handler import BUILTIN_DGPS, SimulationConfig, cmd_simulate, render_simulation
from services.errors import AgnosticError, OutOfDomain
from services.estimators import EstimatorKind
from services.variance import CiMethod, VarianceFlavor
from utils.column_parser import parse_choices, parse_contrast, parse_float_list, parse_list
from utils.report_helpers import dump_json, write_report

# ── Load environment variables ─────────────────────────────────────────────
load_dotenv()
LOG_LEVEL = os.getenv("AGNOSTIC_LOG_LEVEL", "INFO").upper()
DEFAULT_SEED = int(os.getenv("AGNOSTIC_SEED", "20130301"))
DEFAULT_SE = os.getenv("AGNOSTIC_DEFAULT_SE", "hc2")

# ── Logging ───────────────────────────────────────────────────────────────
logging.basicConfig(
    format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)

ESTIMATOR_NAMES = [k.value for k in EstimatorKind]
SE_NAMES = [f.value for f in VarianceFlavor]
CI_NAMES = [m.value for m in CiMethod]


# ── Argument tree ─────────────────────────────────────────────────────────
def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=["table", "json"], default="table")
    parser.add_argument("--out", help="also write the JSON report to this path")


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="CSV file, one row per subject")
    parser.add_argument("--outcome", required=True)
    parser.add_argument("--group", required=True)
    parser.add_argument("--covariates", default="", help="numeric covariate columns, comma-separated")
    parser.add_argument("--categorical", default="", help="categorical covariate columns, comma-separated")
    parser.add_argument("--contrast", help="'A,B': treatment and control labels")
    parser.add_argument("--se", default=DEFAULT_SE, help=f"subset of {SE_NAMES}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agnostic",
        description="Regression adjustment for completely randomized experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="ATE estimates, standard errors and intervals for a dataset")
    _add_data(analyze)
    analyze.add_argument("--estimator", default="unadjusted,adjusted,interact", help=f"subset of {ESTIMATOR_NAMES}")
    analyze.add_argument("--ci", default=CiMethod.NORMAL.value, choices=CI_NAMES)
    analyze.add_argument("--level", type=float, default=0.95)
    _add_output(analyze)

    bias = sub.add_parser("bias", help="plug-in leading bias of the adjusted and interacted estimators")
    _add_data(bias)
    _add_output(bias)

    simulate = sub.add_parser("simulate", help="Monte Carlo over random assignments")
    source = simulate.add_mutually_exclusive_group()
    source.add_argument("--dgp", choices=BUILTIN_DGPS)
    source.add_argument("--population", help="population CSV with columns a, b, z1..zK")
    simulate.add_argument("--n", type=int, default=1000, help="subjects in the built-in population")
    design = simulate.add_mutually_exclusive_group()
    design.add_argument("--n-treated", help="group A sizes, comma-separated")
    design.add_argument("--p-a", help="group A shares, comma-separated")
    simulate.add_argument("--reps", type=int, default=1000)
    simulate.add_argument("--seed", type=int, default=DEFAULT_SEED)
    simulate.add_argument("--estimator", default="unadjusted,adjusted,interact,tyranny",
                          help=f"subset of {ESTIMATOR_NAMES}")
    simulate.add_argument("--se", default=DEFAULT_SE, help=f"subset of {SE_NAMES}")
    simulate.add_argument("--ci", default=CiMethod.NORMAL.value, help=f"subset of {CI_NAMES}")
    simulate.add_argument("--level", type=float, default=0.95)
    simulate.add_argument("--constant-effect", type=float,
                          help="replace the b-arm with a − EFFECT before simulating")
    simulate.add_argument("--save-population", help="write the population used to this CSV path")
    simulate.add_argument("--workers", type=int, help="worker processes (default AGNOSTIC_WORKERS)")
    _add_output(simulate)

    asymptotics = sub.add_parser("asymptotics", help="asymptotic variances of a population")
    asymptotics.add_argument("--population", required=True)
    asymptotics.add_argument("--p-a", required=True, help="group A shares, comma-separated")
    _add_output(asymptotics)

    enumerate_ = sub.add_parser("enumerate", help="exact distribution over all assignments")
    enumerate_.add_argument("--population", required=True)
    enumerate_.add_argument("--n-treated", type=int, required=True)
    enumerate_.add_argument("--estimator", default=EstimatorKind.UNADJUSTED.value, choices=ESTIMATOR_NAMES)
    _add_output(enumerate_)

    return parser


# ── Routing ───────────────────────────────────────────────────────────────
def _check_level(level: float) -> float:
    if not 0 < level < 1:
        raise OutOfDomain(f"--level must lie in (0, 1), got {level}.")
    return level


def _analysis_config(args) -> AnalysisConfig:
    return AnalysisConfig(
        input=args.input,
        outcome=args.outcome,
        group=args.group,
        covariates=parse_list(args.covariates),
        categorical=parse_list(args.categorical),
        estimators=parse_choices(getattr(args, "estimator", "unadjusted,adjusted,interact"),
                                 ESTIMATOR_NAMES, "--estimator"),
        se_flavors=parse_choices(args.se, SE_NAMES, "--se"),
        ci_method=getattr(args, "ci", CiMethod.NORMAL.value),
        level=_check_level(getattr(args, "level", 0.95)),
        contrast=parse_contrast(args.contrast),
        format=args.format,
    )


def _simulation_config(args) -> SimulationConfig:
    return SimulationConfig(
        dgp=None if args.population else (args.dgp or BUILTIN_DGPS[0]),
        population=args.population,
        n=args.n,
        n_treated=[int(v) for v in parse_float_list(args.n_treated)] if args.n_treated else [],
        p_a=parse_float_list(args.p_a) if args.p_a else [],
        reps=args.reps,
        seed=args.seed,
        estimators=parse_choices(args.estimator, ESTIMATOR_NAMES, "--estimator"),
        se_flavors=parse_choices(args.se, SE_NAMES, "--se"),
        ci_methods=parse_choices(args.ci, CI_NAMES, "--ci"),
        level=_check_level(args.level),
        constant_effect=args.constant_effect,
        save_population=args.save_population,
        workers=args.workers,
        out=args.out,
        format=args.format,
    )


def _run(args) -> tuple[dict, Callable[[dict], str]]:
    if args.command == "analyze":
        return cmd_analyze(_analysis_config(args)), render_analysis
    if args.command == "bias":
        return cmd_bias(_analysis_config(args)), render_bias
    if args.command == "simulate":
        return cmd_simulate(_simulation_config(args)), render_simulation
    if args.command == "asymptotics":
        return cmd_asymptotics(args.population, parse_float_list(args.p_a)), render_asymptotics
    return cmd_enumerate(args.population, args.n_treated, args.estimator), render_enumeration


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        report, render = _run(args)
    except AgnosticError as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"agnostic {args.command}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception:
        logger.exception("Unexpected failure in %s", args.command)
        return 1

    payload = dump_json(report)
    write_report(payload if args.format == "json" else render(report))
    if args.out:
        write_report(payload, args.out)
        logger.info("Report written to %s", args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
