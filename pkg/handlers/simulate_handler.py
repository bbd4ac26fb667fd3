"""
handlers/simulate_handler.py
Handler for the simulate subcommand: builds or loads the population, runs
the replication engine once per design and lines the Monte Carlo results up
against the population's asymptotic predictions.

Report layout:
- "designs": one entry per n_A with the full simulation report and the
  asymptotic report for the same population and p_A = n_A / n.
- "panels": estimator × p_A grids of asymptotic SD, empirical SD and bias
  (all × 1000), ready for the table renderer.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

from services.asymptotics import asymptotic_report
from services.dataset import load_population, save_population
from services.errors import InvalidDesign, UsageError
from services.simulate import (
    POPULATION_STREAM,
    RngState,
    constant_effect_population,
    generate_lin_population,
    run_replications,
)
from utils.report_helpers import render_table

logger = logging.getLogger(__name__)

BUILTIN_DGPS = ("lin2013",)


@dataclass
class SimulationConfig:
    dgp: Optional[str] = "lin2013"
    population: Optional[str] = None
    n: int = 1000
    n_treated: list = field(default_factory=list)
    p_a: list = field(default_factory=list)
    reps: int = 1000
    seed: int = 20130301
    estimators: list = field(default_factory=lambda: ["unadjusted", "adjusted", "interact", "tyranny"])
    se_flavors: list = field(default_factory=lambda: ["hc2"])
    ci_methods: list = field(default_factory=lambda: ["normal"])
    level: float = 0.95
    constant_effect: Optional[float] = None
    save_population: Optional[str] = None
    workers: Optional[int] = None
    out: Optional[str] = None
    format: str = "table"


def _population(config: SimulationConfig):
    if config.population:
        pop = load_population(config.population)
        source = {"file": str(config.population)}
    elif config.dgp in BUILTIN_DGPS:
        if config.n < 2:
            raise InvalidDesign(f"--n must be at least 2, got {config.n}.")
        pop = generate_lin_population(config.n, RngState(config.seed, POPULATION_STREAM).generator())
        source = {"dgp": config.dgp, "n": config.n, "seed": config.seed}
    else:
        raise UsageError(f"Unknown data-generating process {config.dgp!r}; choose from {BUILTIN_DGPS}.")

    if config.constant_effect is not None:
        pop = constant_effect_population(pop, config.constant_effect)
        source["constant_effect"] = config.constant_effect
    return pop, source


def _designs(config: SimulationConfig, n: int) -> list[int]:
    if config.n_treated and config.p_a:
        raise UsageError("Give either --n-treated or --p-a, not both.")
    if config.n_treated:
        sizes = [int(v) for v in config.n_treated]
    elif config.p_a:
        sizes = [int(round(p * n)) for p in config.p_a]
    else:
        sizes = [n // 2]
    for n_A in sizes:
        if not 0 < n_A < n:
            raise InvalidDesign(f"Design n_A={n_A} is invalid for n={n}; need 0 < n_A < n.")
    return sizes


def cmd_simulate(config: SimulationConfig) -> dict:
    pop, source = _population(config)
    if config.save_population:
        save_population(pop, config.save_population)

    designs, panels = [], {"asymptotic_sd_x1000": {}, "empirical_sd_x1000": {}, "bias_x1000": {}}
    for n_A in _designs(config, pop.n):
        sim = run_replications(
            pop, n_A, config.reps, config.seed,
            config.estimators, config.se_flavors, config.ci_methods,
            level=config.level, workers=config.workers,
        )
        asym = asymptotic_report(pop, n_A / pop.n)
        column = f"{n_A / pop.n:g}"
        for kind, summary in sim.estimators.items():
            asym_sd = asym.sds.get(kind)
            panels["asymptotic_sd_x1000"].setdefault(kind, {})[column] = None if asym_sd is None else 1000 * asym_sd
            panels["empirical_sd_x1000"].setdefault(kind, {})[column] = None if summary.sd is None else 1000 * summary.sd
            panels["bias_x1000"].setdefault(kind, {})[column] = None if summary.bias is None else 1000 * summary.bias
        designs.append({"n_A": n_A, "p_A": n_A / pop.n, "simulation": sim.to_dict(), "asymptotic": asym.to_dict()})
        logger.info("Design n_A=%d finished", n_A)

    return {
        "command": "simulate",
        "population": {"source": source, "n": pop.n, "K": pop.K, "ate": pop.ate},
        "reps": config.reps,
        "seed": config.seed,
        "level": config.level,
        "designs": designs,
        "panels": panels,
    }


def render_simulation(report: dict) -> str:
    columns = [f"{d['p_A']:g}" for d in report["designs"]]
    headers = ["estimator", *[f"p_A={c}" for c in columns]]
    titles = {
        "asymptotic_sd_x1000": "SD (asymptotic) x 1000",
        "empirical_sd_x1000": "SD (empirical) x 1000",
        "bias_x1000": "Bias (estimated) x 1000",
    }
    blocks = [
        f"Simulation ({report['population']['n']} subjects; {report['reps']} replications; seed {report['seed']})\n"
    ]
    for key, title in titles.items():
        panel = report["panels"][key]
        blocks.append(render_table(headers, [[k, *[panel[k].get(c) for c in columns]] for k in panel], title))

    for design in report["designs"]:
        sim = design["simulation"]
        se_rows = [[k, s["mean"], s["sd"], s["bias"]] for k, s in sim["standard_errors"].items()]
        ci_rows = [[k, None if c["coverage"] is None else 100 * c["coverage"], c["mean_width"]]
                   for k, c in sim["intervals"].items()]
        blocks.append(render_table(["estimator/se", "mean", "sd", "bias"], se_rows,
                                   f"SE estimators at p_A={design['p_A']:g}"))
        blocks.append(render_table(["interval", "coverage %", "mean width"], ci_rows,
                                   f"Intervals at p_A={design['p_A']:g}"))
    return "\n".join(blocks)
