"""
handlers/command_handler.py
Handlers for the analyze, bias, asymptotics and enumerate subcommands.

Every cmd_* returns a plain report dict (the JSON payload); render_* turns
the same dict into the text table, so both outputs carry the same numbers.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

from services.asymptotics import (
    bias_estimate_from_sample,
    bias_leading_adjusted,
    bias_leading_interact,
    asymptotic_report,
)
from services.dataset import load_observed, load_population
from services.estimators import EstimatorKind, estimate, resolve_contrast
from services.simulate import enumerate_assignments
from services.variance import CiMethod, VarianceFlavor, interval_for, standard_error, welch_applies
from utils.report_helpers import render_table

logger = logging.getLogger(__name__)

# |bias estimate| / SE above this is flagged
BIAS_FLAG_RATIO = 0.1


@dataclass
class AnalysisConfig:
    input: str
    outcome: str
    group: str
    covariates: list = field(default_factory=list)
    categorical: list = field(default_factory=list)
    estimators: list = field(default_factory=lambda: ["unadjusted", "adjusted", "interact"])
    se_flavors: list = field(default_factory=lambda: ["hc2"])
    ci_method: str = "normal"
    level: float = 0.95
    contrast: Optional[tuple] = None
    format: str = "table"


# ── analyze ───────────────────────────────────────────────────────────────

def cmd_analyze(config: AnalysisConfig) -> dict:
    data, names = load_observed(config.input, config.outcome, config.group,
                                config.covariates, config.categorical)
    contrast = resolve_contrast(data, config.contrast)
    method = CiMethod(config.ci_method)
    flavors = [VarianceFlavor(f) for f in config.se_flavors]

    estimates = {}
    for kind in (EstimatorKind(e) for e in config.estimators):
        est = estimate(data, kind, contrast)
        ses, intervals = {}, {}
        for flavor in flavors:
            if flavor is VarianceFlavor.NEYMAN and kind is not EstimatorKind.UNADJUSTED:
                ses[flavor.value] = None
                intervals[flavor.value] = None
                continue
            se = standard_error(est, flavor, data)
            ses[flavor.value] = se
            if method is CiMethod.WELCH_T and not welch_applies(kind, flavor):
                intervals[flavor.value] = None
                continue
            intervals[flavor.value] = interval_for(est, data, flavor, method, config.level, se=se).to_dict()
        estimates[kind.value] = {
            "point": est.point,
            "se": ses,
            "ci": intervals,
            "details": est.details,
        }
        logger.info("%s estimate %.6g", kind.value, est.point)

    return {
        "command": "analyze",
        "input": str(config.input),
        "outcome": config.outcome,
        "contrast": list(contrast),
        "n": data.n,
        "group_sizes": {g: data.size(g) for g in data.labels},
        "covariates": names,
        "level": config.level,
        "ci_method": method.value,
        "estimates": estimates,
    }


def render_analysis(report: dict) -> str:
    a, b = report["contrast"]
    title = (f"ATE of {a} vs {b} on {report['outcome']} "
             f"(n={report['n']}, {int(report['level'] * 100)}% {report['ci_method']} intervals)")
    rows = []
    for kind, entry in report["estimates"].items():
        for flavor, se in entry["se"].items():
            ci = entry["ci"].get(flavor)
            rows.append([
                kind, entry["point"], flavor, se,
                None if ci is None else ci["lower"],
                None if ci is None else ci["upper"],
            ])
    return render_table(["estimator", "point", "se_flavor", "se", "lower", "upper"], rows, title)


# ── bias ──────────────────────────────────────────────────────────────────

def cmd_bias(config: AnalysisConfig) -> dict:
    data, names = load_observed(config.input, config.outcome, config.group,
                                config.covariates, config.categorical)
    contrast = resolve_contrast(data, config.contrast)
    bias = bias_estimate_from_sample(data, contrast)
    restricted = data.restrict(contrast)
    flavor = VarianceFlavor(config.se_flavors[0])

    entries = {}
    for kind, value in ((EstimatorKind.ADJUSTED, bias.adjusted), (EstimatorKind.INTERACT, bias.interact)):
        se = standard_error(estimate(restricted, kind, contrast), flavor, restricted)
        ratio = value / se if se > 0 else None
        entries[kind.value] = {
            "bias_estimate": value,
            "se": se,
            "ratio": ratio,
            "flagged": ratio is not None and abs(ratio) > BIAS_FLAG_RATIO,
        }
        if entries[kind.value]["flagged"]:
            logger.warning("%s: estimated bias is %.3g standard errors", kind.value, ratio)

    return {
        "command": "bias",
        "input": str(config.input),
        "contrast": list(contrast),
        "covariate": names[0] if names else None,
        "se_flavor": flavor.value,
        "flag_threshold": BIAS_FLAG_RATIO,
        "estimates": entries,
    }


def render_bias(report: dict) -> str:
    rows = [
        [kind, e["bias_estimate"], e["se"], e["ratio"], "yes" if e["flagged"] else "no"]
        for kind, e in report["estimates"].items()
    ]
    title = f"Leading-term bias estimates (SE flavor {report['se_flavor']}, flag if |bias/SE| > {report['flag_threshold']})"
    return render_table(["estimator", "bias", "se", "bias/se", "flagged"], rows, title)


# ── asymptotics ───────────────────────────────────────────────────────────

def cmd_asymptotics(population_path: str, p_a_values: list) -> dict:
    pop = load_population(population_path)
    return {
        "command": "asymptotics",
        "population": str(population_path),
        "n": pop.n,
        "K": pop.K,
        "ate": pop.ate,
        "designs": [asymptotic_report(pop, p).to_dict() for p in p_a_values],
    }


def render_asymptotics(report: dict) -> str:
    designs = report["designs"]
    headers = ["estimator", *[f"p_A={d['p_A']:g}" for d in designs]]
    kinds = list(designs[0]["sd"]) if designs else []
    blocks = [
        render_table(headers, [[k, *[1000 * d["sd"][k] for d in designs]] for k in kinds],
                     "SD (asymptotic) x 1000"),
        render_table(headers, [[k, *[d["normalized_variance"][k] for d in designs]] for k in kinds],
                     "Normalized asymptotic variance n·Var"),
        render_table(headers, [
            ["sandwich adjusted", *[d["sandwich_limits"]["adjusted"] for d in designs]],
            ["sandwich interact", *[d["sandwich_limits"]["interact"] for d in designs]],
            ["gap unadj-interact", *[d["gaps"]["unadjusted_minus_interact"] for d in designs]],
            ["gap adj-interact", *[d["gaps"]["adjusted_minus_interact"] for d in designs]],
        ], "Sandwich limits and precision gaps"),
    ]
    if designs and designs[0]["bias_leading"] is not None:
        blocks.append(render_table(headers, [
            [k, *[d["bias_leading"][k] for d in designs]] for k in designs[0]["bias_leading"]
        ], "Leading bias terms"))
    return "\n".join(blocks)


# ── enumerate ─────────────────────────────────────────────────────────────

def cmd_enumerate(population_path: str, n_treated: int, estimator: str) -> dict:
    pop = load_population(population_path)
    kind = EstimatorKind(estimator)
    summary = enumerate_assignments(pop, n_treated, kind)

    leading = None
    if pop.K == 1 and kind in (EstimatorKind.ADJUSTED, EstimatorKind.INTERACT):
        p_A = n_treated / pop.n
        leading = (bias_leading_adjusted(pop, p_A) if kind is EstimatorKind.ADJUSTED
                   else bias_leading_interact(pop, p_A))

    return {
        "command": "enumerate",
        "population": str(population_path),
        "estimator": kind.value,
        "n": pop.n,
        "n_A": n_treated,
        "ate": pop.ate,
        **summary.to_dict(),
        "bias": summary.mean - pop.ate,
        "bias_leading": leading,
    }


def render_enumeration(report: dict) -> str:
    rows = [[key, report[key]] for key in ("count", "ate", "mean", "bias", "bias_leading", "variance", "min", "max")]
    title = f"Exact distribution of {report['estimator']} over all assignments (n={report['n']}, n_A={report['n_A']})"
    return render_table(["quantity", "value"], rows, title)
