"""Coevolutionary dual-population solver with LLM-aided reproduction.

Two populations evolve side by side: ``pop1`` selects under the constrained
dominance principle, ``pop2`` ignores constraints. Each population produces N
offspring per generation, a small share of them by an LLM backend and the rest
by SBX and polynomial mutation. Both offspring sets go into both environmental
selections.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from cmoforge.core import (
    BudgetCounter,
    BudgetExhausted,
    FEAccounting,
    Population,
    ProblemDefinition,
    RandomSource,
    Solution,
    evaluate,
)
from cmoforge.llm.backends import LLMBackend
from cmoforge.llm.generate import LLMConfig, llm_generate
from cmoforge.llm.ledger import Ledger
from cmoforge.llm.prompt import PROMPT_VERSION
from cmoforge import metrics
from cmoforge.operators import OperatorParams, polynomial_mutation, sbx_crossover, tournament_indices
from cmoforge.problems import sample_cpf

logger = logging.getLogger(__name__)

CONSTRAINED = "constrained"
UNCONSTRAINED = "unconstrained"

_FAR = 1e150


@dataclass(frozen=True)
class EngineConfig:
    N: int = 100
    fe_max: int = 10_000
    llm_offspring_fraction: float = 0.05
    llm_input_fraction: float = 0.10
    operators: OperatorParams = field(default_factory=OperatorParams)
    llm: LLMConfig = field(default_factory=LLMConfig)
    seed: int = 0
    fe_accounting: str = FEAccounting.PER_EVAL.value
    reference_size: int = 1000
    metrics_every_generation: bool = True

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError("N must be at least 2")
        for name in ("llm_offspring_fraction", "llm_input_fraction"):
            if not 0.0 <= getattr(self, name) <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5]")
        if self.n_llm > 0 and self.pool_size < 2:
            raise ValueError("LLM input pool must hold at least two solutions")
        FEAccounting(self.fe_accounting)

    @property
    def n_llm(self) -> int:
        return round_half_up(self.llm_offspring_fraction * self.N)

    @property
    def pool_size(self) -> int:
        # Guard against 0.1 * 100 = 10.000000000000002 style rounding.
        return math.ceil(round(self.llm_input_fraction * self.N, 9))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EngineConfig:
        data = dict(data)
        if isinstance(data.get("operators"), dict):
            data["operators"] = OperatorParams(**data["operators"])
        if isinstance(data.get("llm"), dict):
            data["llm"] = LLMConfig(**data["llm"])
        return cls(**data)


def round_half_up(x: float) -> int:
    return int(math.floor(round(x, 9) + 0.5))


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    fe: int
    feasible_count: int
    best_cv: float
    igd: float = math.nan
    hv: float = math.nan
    llm_offspring: int = 0
    fallback_offspring: int = 0


@dataclass
class EngineState:
    pop1: Population
    pop2: Population
    fit1: np.ndarray
    fit2: np.ndarray
    budget: BudgetCounter
    rng: RandomSource
    ledger: Ledger
    generation: int = 0
    history: list[GenerationRecord] = field(default_factory=list)
    finished: bool = False


@dataclass
class RunResult:
    pop1: Population
    pop2: Population
    history: list[GenerationRecord]
    ledger: Ledger
    manifest: dict[str, Any]
    budget: BudgetCounter
    final: metrics.MetricReport | None = None

    @property
    def population(self) -> Population:
        """The reported population (the constraint-aware one)."""
        return self.pop1


def _objective_matrix(union: list[Solution]) -> np.ndarray:
    objs = np.array([s.objs for s in union], dtype=float)
    return np.where(np.isfinite(objs), objs, _FAR)


def dominance_matrix(union: list[Solution], mode: str) -> np.ndarray:
    """``dom[i, j]`` is True when member i dominates member j."""
    objs = _objective_matrix(union)
    le = np.all(objs[:, None, :] <= objs[None, :, :], axis=2)
    lt = np.any(objs[:, None, :] < objs[None, :, :], axis=2)
    pareto = le & lt
    if mode == UNCONSTRAINED:
        return pareto
    if mode != CONSTRAINED:
        raise ValueError(f"unknown mode {mode!r}")
    cv = np.array([s.cv for s in union])
    feasible = cv == 0.0
    both = feasible[:, None] & feasible[None, :]
    return np.where(both, pareto, cv[:, None] < cv[None, :])


def _distances(union: list[Solution]) -> np.ndarray:
    objs = _objective_matrix(union)
    diff = objs[:, None, :] - objs[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    return dist


def spea2_fitness(union: list[Solution], mode: str) -> np.ndarray:
    """Strength-based raw fitness plus k-th nearest neighbour density.

    Smaller is better; values below 1 mark nondominated members. A member
    without a k-th neighbour gets distance 0 (density 0.5).
    """
    size = len(union)
    if size == 0:
        raise ValueError("empty union")
    dom = dominance_matrix(union, mode)
    strength = dom.sum(axis=1)
    raw = dom.T.astype(float) @ strength
    k = math.isqrt(size)
    if size - 1 >= k:
        sigma = np.sort(_distances(union), axis=1)[:, k - 1]
    else:
        sigma = np.zeros(size)
    return raw + 1.0 / (sigma + 2.0)


def _truncate(union: list[Solution], candidates: np.ndarray, N: int) -> np.ndarray:
    dist = _distances([union[i] for i in candidates])
    alive = np.ones(len(candidates), dtype=bool)
    for _ in range(len(candidates) - N):
        masked = np.where(alive[None, :], dist, np.inf)
        nearest = np.where(alive, masked.min(axis=1), np.inf)
        tied = np.flatnonzero(nearest == nearest.min())
        if len(tied) > 1:
            rows = np.sort(masked[tied], axis=1)
            order = np.lexsort(rows.T[::-1])
            victim = tied[order[0]]
        else:
            victim = tied[0]
        alive[victim] = False
    return candidates[alive]


def select(union: list[Solution], N: int, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Indices chosen by environmental selection and the union's fitness."""
    if len(union) < N:
        raise ValueError(f"union of {len(union)} cannot fill a population of {N}")
    fitness = spea2_fitness(union, mode)
    front = np.flatnonzero(fitness < 1.0)
    if len(front) > N:
        chosen = _truncate(union, front, N)
    else:
        chosen = np.argsort(fitness, kind="stable")[:N]
    return np.sort(chosen), fitness


def environmental_selection(union: list[Solution], N: int, mode: str) -> Population:
    chosen, _ = select(union, N, mode)
    return Population([union[i] for i in chosen], capacity=N)


def _reproduce(
    pop: Population,
    fitness: np.ndarray,
    tag: str,
    state: EngineState,
    problem: ProblemDefinition,
    config: EngineConfig,
    backend: LLMBackend | None,
) -> list[tuple[np.ndarray, str]]:
    rng = state.rng
    n_llm = config.n_llm if backend is not None else 0
    n_ga = config.N - n_llm
    bounds = (problem.lower, problem.upper)
    children: list[tuple[np.ndarray, str]] = []
    if n_ga > 0:
        pairs = (n_ga + 1) // 2
        parents = tournament_indices(fitness, 2 * pairs, rng.stream("mating"))
        decs = pop.decs
        c1, c2 = sbx_crossover(decs[parents[0::2]], decs[parents[1::2]], config.operators, bounds, rng.stream("sbx"))
        offspring = np.vstack([c1, c2])[:n_ga]
        offspring = polynomial_mutation(offspring, config.operators, bounds, rng.stream("mutation"))
        children.extend((row, "ga") for row in offspring)
    if n_llm > 0:
        picks = rng.stream("llm-sampling").choice(len(pop), size=config.pool_size, replace=False)
        made = llm_generate(
            [pop[i] for i in picks],
            n_llm,
            backend,
            problem,
            rng.stream("llm-sampling"),
            state.ledger,
            config.llm,
            generation=state.generation + 1,
            population=tag,
        )
        children.extend((o.decs, o.provenance) for o in made)
    return children


def _record(state: EngineState, problem: ProblemDefinition, reference: np.ndarray | None, with_metrics: bool,
            llm_count: int = 0, fallback_count: int = 0) -> GenerationRecord:
    cvs = state.pop1.cvs
    igd = hv = math.nan
    if with_metrics and reference is not None:
        rep = metrics.report(state.pop1, problem, reference, rng=state.rng.stream("metrics"))
        igd, hv = rep.igd, rep.hv
    return GenerationRecord(
        generation=state.generation,
        fe=state.budget.fe,
        feasible_count=int(np.sum(cvs == 0.0)),
        best_cv=float(cvs.min()),
        igd=igd,
        hv=hv,
        llm_offspring=llm_count,
        fallback_offspring=fallback_count,
    )


def initialize(problem: ProblemDefinition, config: EngineConfig, ledger: Ledger | None = None) -> EngineState:
    """Two populations of N uniform random solutions."""
    rng = RandomSource(config.seed)
    budget = BudgetCounter(fe_max=config.fe_max, mode=FEAccounting(config.fe_accounting))
    u = rng.stream("init").random((2 * config.N, problem.n))
    decs = problem.lower + u * (problem.upper - problem.lower)
    sols = [evaluate(problem, x, budget, "init") for x in decs]
    pop1 = Population(sols[: config.N], config.N)
    pop2 = Population(sols[config.N :], config.N)
    return EngineState(
        pop1=pop1,
        pop2=pop2,
        fit1=spea2_fitness(pop1.members, CONSTRAINED),
        fit2=spea2_fitness(pop2.members, UNCONSTRAINED),
        budget=budget,
        rng=rng,
        ledger=ledger if ledger is not None else Ledger(),
    )


def run_generation(
    state: EngineState,
    problem: ProblemDefinition,
    config: EngineConfig,
    backend: LLMBackend | None = None,
    reference: np.ndarray | None = None,
) -> EngineState:
    """Advance both populations by one generation, in place.

    If the budget runs out while offspring are being evaluated, the partial
    offspring are dropped and ``state.finished`` is set.
    """
    if state.finished:
        return state
    kids1 = _reproduce(state.pop1, state.fit1, "pop1", state, problem, config, backend)
    kids2 = _reproduce(state.pop2, state.fit2, "pop2", state, problem, config, backend)
    offspring: list[Solution] = []
    try:
        for decs, tag in kids1 + kids2:
            offspring.append(evaluate(problem, decs, state.budget, tag))
    except BudgetExhausted:
        logger.info("budget exhausted mid-generation; discarding %d offspring", len(offspring))
        state.finished = True
        return state
    if state.budget.mode is FEAccounting.PER_GENERATION_N:
        state.budget.charge(config.N)

    union1 = state.pop1.members + offspring
    idx1, fit1 = select(union1, config.N, CONSTRAINED)
    union2 = state.pop2.members + offspring
    idx2, fit2 = select(union2, config.N, UNCONSTRAINED)
    state.pop1 = Population([union1[i] for i in idx1], config.N)
    state.pop2 = Population([union2[i] for i in idx2], config.N)
    state.fit1, state.fit2 = fit1[idx1], fit2[idx2]
    state.generation += 1

    llm_count = sum(1 for s in offspring if s.provenance == "llm")
    fallback_count = sum(1 for s in offspring if s.provenance == "fallback")
    state.history.append(
        _record(state, problem, reference, config.metrics_every_generation, llm_count, fallback_count)
    )
    return state


def _budget_allows(state: EngineState, config: EngineConfig) -> bool:
    if state.finished:
        return False
    if state.budget.mode is FEAccounting.PER_GENERATION_N:
        return state.budget.fe <= state.budget.fe_max
    return not state.budget.exhausted


def build_manifest(problem: ProblemDefinition, config: EngineConfig, backend: LLMBackend | None) -> dict[str, Any]:
    from cmoforge import __version__

    return {
        "package_version": __version__,
        "prompt_version": PROMPT_VERSION,
        "seed": config.seed,
        "config": config.to_dict(),
        "problem": {
            "name": problem.name,
            "n": problem.n,
            "m": problem.m,
            "q": problem.q,
            "l": problem.l,
            "delta": problem.delta,
            "params": {k: v for k, v in problem.params.items() if k != "segments"},
        },
        "backend": None if backend is None else backend.identity,
    }


def run(
    problem: ProblemDefinition,
    config: EngineConfig,
    backend: LLMBackend | None = None,
    observer: Callable[[GenerationRecord], None] | None = None,
    ledger: Ledger | None = None,
    max_generations: int | None = None,
) -> RunResult:
    """Run the solver until the evaluation budget is spent.

    With ``llm_offspring_fraction == 0`` or no backend this is plain CCMO and
    the backend is never called.
    """
    if config.n_llm == 0:
        backend = None
    reference = sample_cpf(problem, config.reference_size) if problem.cpf_sampler is not None else None
    state = initialize(problem, config, ledger)
    while _budget_allows(state, config):
        if max_generations is not None and state.generation >= max_generations:
            break
        before = state.generation
        run_generation(state, problem, config, backend, reference)
        if state.generation > before and observer is not None:
            observer(state.history[-1])
    final = None
    if reference is not None:
        final = metrics.report(state.pop1, problem, reference, rng=state.rng.stream("metrics"))
    return RunResult(
        pop1=state.pop1,
        pop2=state.pop2,
        history=state.history,
        ledger=state.ledger,
        manifest=build_manifest(problem, config, backend),
        budget=state.budget,
        final=final,
    )
