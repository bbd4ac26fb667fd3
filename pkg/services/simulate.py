"""
services/simulate.py
Deterministic randomization machinery: assignment sampling, the built-in
data-generating process, the Monte Carlo replication engine and exact
enumeration over all assignments.

Architecture Decision:
- RNG: numpy's PCG64 seeded through SeedSequence(seed, spawn_key=(stream,)).
  Replication r always uses stream r, so any replication can be recomputed
  alone and chunks can run in any order or process.
- Assignment: a uniform permutation of 0..n−1; the first n_A positions get A.
- Aggregation: per-replication results land in replication-indexed buffers
  that are reduced sequentially with math.fsum once every chunk is back.
  The worker count never enters the report, so reports are byte-identical
  across worker counts.
- Failed replications (rank deficiency, leverage one, ...) are excluded from
  the aggregates and counted; more than _MAX_FAILURE_RATE of reps is fatal.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from dotenv import load_dotenv

from services.asymptotics import Population
from services.errors import (
    AgnosticError,
    GroupTooSmall,
    InvalidDesign,
    SimulationFailure,
)
from services.estimators import EstimatorKind, ObservedData, estimate
from services.sampling import (
    EnumerationSummary,
    check_subset_budget,
    subset_blocks,
    summarize_values,
)
from services.variance import CiMethod, VarianceFlavor, interval_for, standard_error

load_dotenv()

logger = logging.getLogger(__name__)

_WORKERS = int(os.getenv("AGNOSTIC_WORKERS", "1"))
_CHUNK_SIZE = int(os.getenv("AGNOSTIC_CHUNK_SIZE", "2000"))
_MAX_FAILURE_RATE = 0.001
_ALGORITHM = "PCG64"
# Stream reserved for population generation; replications use 0..reps−1.
POPULATION_STREAM = 2**63 - 1

GROUP_A = "A"
GROUP_B = "B"


# ─── Randomness ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RngState:
    seed: int
    stream: int = 0
    algorithm: str = _ALGORITHM

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(sequence))


@dataclass(frozen=True)
class Assignment:
    treated: np.ndarray

    @property
    def counts(self) -> dict:
        n_a = int(np.count_nonzero(self.treated))
        return {GROUP_A: n_a, GROUP_B: int(self.treated.shape[0]) - n_a}

    @property
    def labels(self) -> np.ndarray:
        return np.where(self.treated, GROUP_A, GROUP_B)


def _check_design(n: int, n_A: int) -> None:
    if not 0 < n_A < n:
        raise InvalidDesign(f"Need 0 < n_A < n, got n_A={n_A}, n={n}.")


def draw_assignment(n: int, n_A: int, rng: np.random.Generator) -> Assignment:
    """Completely randomized design: exactly n_A of n subjects receive A."""
    _check_design(n, n_A)
    treated = np.zeros(n, dtype=bool)
    treated[rng.permutation(n)[:n_A]] = True
    return Assignment(treated=treated)


def generate_lin_population(n: int, rng: np.random.Generator) -> Population:
    """
    z ~ U[−4, 4]; a = (e^z + e^{z/2})/4 + ν; b = (−e^z + e^{z/2})/4 + ε.

    Draw order is fixed: all z, then all ν, then all ε.
    """
    if n < 2:
        raise InvalidDesign(f"A population needs at least 2 subjects, got {n}.")
    z = rng.uniform(-4.0, 4.0, size=n)
    nu = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    a = (np.exp(z) + np.exp(z / 2)) / 4 + nu
    b = (-np.exp(z) + np.exp(z / 2)) / 4 + eps
    return Population(a=a, b=b, Z=z[:, np.newaxis])


def constant_effect_population(pop: Population, effect: float = 0.0) -> Population:
    """Population whose b-arm is the a-arm shifted by −effect (constant treatment effect)."""
    return Population(a=pop.a, b=pop.a - effect, Z=pop.Z)


def observe(pop: Population, assignment: Assignment) -> ObservedData:
    """Y_i = a_i T_i + b_i (1 − T_i)."""
    y = np.where(assignment.treated, pop.a, pop.b)
    return ObservedData(y=y, group=assignment.labels, Z=pop.Z)


# ─── Replication plan ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ReplicationPlan:
    estimators: tuple
    se_flavors: tuple
    ci_methods: tuple
    level: float = 0.95

    @classmethod
    def build(cls, estimators: Iterable, se_flavors: Iterable, ci_methods: Iterable,
              level: float = 0.95) -> "ReplicationPlan":
        return cls(
            estimators=tuple(dict.fromkeys(EstimatorKind(e) for e in estimators)),
            se_flavors=tuple(dict.fromkeys(VarianceFlavor(f) for f in se_flavors)),
            ci_methods=tuple(dict.fromkeys(CiMethod(m) for m in ci_methods)),
            level=float(level),
        )

    def se_keys(self) -> list[tuple[EstimatorKind, VarianceFlavor]]:
        return [
            (e, f) for e in self.estimators for f in self.se_flavors
            if f is not VarianceFlavor.NEYMAN or e is EstimatorKind.UNADJUSTED
        ]

    def ci_keys(self) -> list[tuple[EstimatorKind, VarianceFlavor, CiMethod]]:
        keys = []
        if CiMethod.NORMAL in self.ci_methods:
            keys += [(e, f, CiMethod.NORMAL) for e, f in self.se_keys()]
        if CiMethod.WELCH_T in self.ci_methods and EstimatorKind.UNADJUSTED in self.estimators:
            keys.append((EstimatorKind.UNADJUSTED, VarianceFlavor.HC2, CiMethod.WELCH_T))
        return keys


def _key(*parts) -> str:
    return "/".join(p.value for p in parts)


# ─── Report ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class EstimatorSummary:
    mean: Optional[float]
    sd: Optional[float]
    bias: Optional[float]
    failures: int


@dataclass(frozen=True)
class StandardErrorSummary:
    mean: Optional[float]
    sd: Optional[float]
    bias: Optional[float]
    failures: int


@dataclass(frozen=True)
class IntervalSummary:
    coverage: Optional[float]
    mean_width: Optional[float]
    failures: int


@dataclass(frozen=True)
class SimulationReport:
    reps: int
    seed: int
    n: int
    n_A: int
    level: float
    ate: float
    algorithm: str
    estimators: dict = field(default_factory=dict)
    standard_errors: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def p_A(self) -> float:
        return self.n_A / self.n

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "n": self.n,
            "n_A": self.n_A,
            "p_A": self.p_A,
            "level": self.level,
            "ate": self.ate,
            "rng": {"algorithm": self.algorithm, "streams": f"0..{self.reps - 1}"},
            "estimators": {k: vars(v) for k, v in self.estimators.items()},
            "standard_errors": {k: vars(v) for k, v in self.standard_errors.items()},
            "intervals": {k: vars(v) for k, v in self.intervals.items()},
            "config": dict(self.config),
        }


# ─── Replication engine ───────────────────────────────────────────────────────

def _replicate_chunk(pop: Population, n_A: int, seed: int, start: int, stop: int,
                     plan: ReplicationPlan) -> dict:
    """Run replications start..stop−1 and return replication-indexed buffers."""
    se_keys, ci_keys = plan.se_keys(), plan.ci_keys()
    m = stop - start
    points = np.full((m, len(plan.estimators)), np.nan)
    ses = np.full((m, len(se_keys)), np.nan)
    covered = np.full((m, len(ci_keys)), np.nan)
    widths = np.full((m, len(ci_keys)), np.nan)

    for row, r in enumerate(range(start, stop)):
        assignment = draw_assignment(pop.n, n_A, RngState(seed, r).generator())
        data = observe(pop, assignment)

        estimates, se_cache = {}, {}
        for j, kind in enumerate(plan.estimators):
            try:
                estimates[kind] = estimate(data, kind, (GROUP_A, GROUP_B))
                points[row, j] = estimates[kind].point
            except AgnosticError as exc:
                logger.debug("Replication %d: %s failed (%s)", r, kind.value, exc)

        def se_of(kind, flavor):
            if (kind, flavor) not in se_cache:
                se_cache[(kind, flavor)] = standard_error(estimates[kind], flavor, data)
            return se_cache[(kind, flavor)]

        for j, (kind, flavor) in enumerate(se_keys):
            if kind in estimates:
                try:
                    ses[row, j] = se_of(kind, flavor)
                except AgnosticError as exc:
                    logger.debug("Replication %d: %s SE failed (%s)", r, _key(kind, flavor), exc)

        for j, (kind, flavor, method) in enumerate(ci_keys):
            if kind not in estimates:
                continue
            try:
                ci = interval_for(estimates[kind], data, flavor, method, plan.level,
                                  se=se_of(kind, flavor))
            except AgnosticError as exc:
                logger.debug("Replication %d: %s interval failed (%s)", r, _key(kind, flavor, method), exc)
                continue
            covered[row, j] = float(ci.covers(pop.ate))
            widths[row, j] = ci.width

    logger.debug("Replications %d..%d done", start, stop - 1)
    return {"start": start, "points": points, "ses": ses, "covered": covered, "widths": widths}


def _mean(values: np.ndarray) -> Optional[float]:
    if values.shape[0] == 0:
        return None
    return math.fsum(values.tolist()) / values.shape[0]


def _sd(values: np.ndarray) -> Optional[float]:
    if values.shape[0] < 2:
        return None
    mean = _mean(values)
    return math.sqrt(math.fsum(((values - mean) ** 2).tolist()) / (values.shape[0] - 1))


def _finite(column: np.ndarray) -> np.ndarray:
    return column[np.isfinite(column)]


def run_replications(pop: Population, n_A: int, reps: int, seed: int,
                     estimators: Iterable, se_flavors: Iterable, ci_methods: Iterable,
                     level: float = 0.95, workers: Optional[int] = None) -> SimulationReport:
    """Monte Carlo over completely randomized assignments of n_A subjects to A."""
    _check_design(pop.n, n_A)
    if reps < 1:
        raise InvalidDesign(f"Need at least one replication, got {reps}.")
    plan = ReplicationPlan.build(estimators, se_flavors, ci_methods, level)
    workers = max(1, workers or _WORKERS)

    bounds = [(s, min(s + _CHUNK_SIZE, reps)) for s in range(0, reps, _CHUNK_SIZE)]
    logger.info("Simulating %d replications (n=%d, n_A=%d, seed=%d)", reps, pop.n, n_A, seed)

    if workers == 1 or len(bounds) == 1:
        chunks = [_replicate_chunk(pop, n_A, seed, s, e, plan) for s, e in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_replicate_chunk, pop, n_A, seed, s, e, plan) for s, e in bounds]
            chunks = [f.result() for f in futures]
    chunks.sort(key=lambda c: c["start"])

    points = np.concatenate([c["points"] for c in chunks])
    ses = np.concatenate([c["ses"] for c in chunks])
    covered = np.concatenate([c["covered"] for c in chunks])
    widths = np.concatenate([c["widths"] for c in chunks])

    ate = pop.ate
    est_summary, empirical_sd = {}, {}
    for j, kind in enumerate(plan.estimators):
        values = _finite(points[:, j])
        mean, sd = _mean(values), _sd(values)
        empirical_sd[kind] = sd
        est_summary[kind.value] = EstimatorSummary(
            mean=mean,
            sd=sd,
            bias=None if mean is None else mean - ate,
            failures=reps - values.shape[0],
        )

    se_summary = {}
    for j, (kind, flavor) in enumerate(plan.se_keys()):
        values = _finite(ses[:, j])
        mean = _mean(values)
        sd_est = empirical_sd[kind]
        se_summary[_key(kind, flavor)] = StandardErrorSummary(
            mean=mean,
            sd=_sd(values),
            bias=None if mean is None or sd_est is None else mean - sd_est,
            failures=reps - values.shape[0],
        )

    ci_summary = {}
    for j, key in enumerate(plan.ci_keys()):
        hits = _finite(covered[:, j])
        ci_summary[_key(*key)] = IntervalSummary(
            coverage=_mean(hits),
            mean_width=_mean(_finite(widths[:, j])),
            failures=reps - hits.shape[0],
        )

    report = SimulationReport(
        reps=reps,
        seed=int(seed),
        n=pop.n,
        n_A=int(n_A),
        level=plan.level,
        ate=ate,
        algorithm=_ALGORITHM,
        estimators=est_summary,
        standard_errors=se_summary,
        intervals=ci_summary,
        config={
            "estimators": [e.value for e in plan.estimators],
            "se_flavors": [f.value for f in plan.se_flavors],
            "ci_methods": [m.value for m in plan.ci_methods],
        },
    )
    _check_failures(report)
    return report


def _check_failures(report: SimulationReport) -> None:
    limit = _MAX_FAILURE_RATE * report.reps
    for section in (report.estimators, report.standard_errors, report.intervals):
        for key, summary in section.items():
            if summary.failures:
                logger.warning("%s failed in %d of %d replications", key, summary.failures, report.reps)
            if summary.failures > limit:
                raise SimulationFailure(
                    f"{key} failed in {summary.failures} of {report.reps} replications "
                    f"(limit {_MAX_FAILURE_RATE:.1%}); aggregates would be biased."
                )


# ─── Exact enumeration ────────────────────────────────────────────────────────

def enumerate_assignments(pop: Population, n_A: int, estimator) -> EnumerationSummary:
    """Exact distribution of an estimator over all C(n, n_A) assignments, in lexicographic order."""
    kind = EstimatorKind(estimator)
    _check_design(pop.n, n_A)
    check_subset_budget(pop.n, n_A)

    if kind is EstimatorKind.UNADJUSTED:
        total_b = pop.b.sum()
        n_B = pop.n - n_A
        values = np.concatenate([
            pop.a[idx].mean(axis=1) - (total_b - pop.b[idx].sum(axis=1)) / n_B
            for idx in subset_blocks(pop.n, n_A)
        ])
        return summarize_values(values)

    if pop.K > 0 and min(n_A, pop.n - n_A) < pop.K + 2:
        raise GroupTooSmall(
            f"Both groups need at least {pop.K + 2} subjects for the {kind.value} estimator."
        )

    values = []
    for idx in subset_blocks(pop.n, n_A):
        for members in idx:
            treated = np.zeros(pop.n, dtype=bool)
            treated[members] = True
            data = observe(pop, Assignment(treated=treated))
            values.append(estimate(data, kind, (GROUP_A, GROUP_B)).point)
    return summarize_values(np.asarray(values))
