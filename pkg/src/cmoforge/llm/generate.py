"""LLM-aided offspring generation with retries and GA fallback."""

from __future__ import annotations

import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from cmoforge.core import ProblemDefinition, Solution
from cmoforge.llm.backends import LLMBackend, ReplayMiss, TransportError
from cmoforge.llm.ledger import Exchange, Ledger, prompt_hash
from cmoforge.llm.parsing import ParseError, ParsedVector, parse_all, parse_response
from cmoforge.llm.prompt import DEFAULT_PRECISION, build_prompt
from cmoforge.operators import OperatorParams, sbx_crossover


@dataclass(frozen=True)
class LLMConfig:
    retries: int = 2
    precision: int = DEFAULT_PRECISION
    in_flight: int = 1
    temperature: float = 1.0
    max_tokens: int = 256
    batch: bool = False

    def __post_init__(self) -> None:
        if self.retries < 0:
            raise ValueError("retries must be nonnegative")
        if self.in_flight < 1:
            raise ValueError("in_flight must be at least 1")


class Offspring(NamedTuple):
    decs: np.ndarray
    provenance: str


class _Attempt(NamedTuple):
    response: str | None
    parsed: list[ParsedVector]
    outcome: str
    error: str | None
    latency: float
    tokens: dict | None
    started: float


def _call(backend: LLMBackend, prompt: str, n: int, bounds, want: int) -> _Attempt:
    started = time.time()
    t0 = time.perf_counter()
    try:
        text = backend.complete(prompt)
    except TransportError as exc:
        return _Attempt(None, [], "transport_failed", str(exc), time.perf_counter() - t0, None, started)
    latency = time.perf_counter() - t0
    tokens = getattr(backend, "last_usage", None)
    if want == 1:
        try:
            parsed = [parse_response(text, n, bounds)]
        except ParseError as exc:
            return _Attempt(text, [], "parse_failed", exc.variant, latency, tokens, started)
    else:
        results = parse_all(text, n, bounds)
        parsed = [r for r in results if isinstance(r, ParsedVector)][:want]
        if not parsed:
            variant = next((r.variant for r in results if isinstance(r, ParseError)), "missing_tags")
            return _Attempt(text, [], "parse_failed", variant, latency, tokens, started)
    outcome = "repaired" if any(p.repaired for p in parsed) else "parsed"
    return _Attempt(text, parsed, outcome, None, latency, tokens, started)


def _chain(backend, prompt, n, bounds, want, attempts) -> list[_Attempt]:
    chain = []
    for _ in range(attempts):
        attempt = _call(backend, prompt, n, bounds, want)
        chain.append(attempt)
        if attempt.parsed:
            break
    return chain


def llm_generate(
    pool: Sequence[Solution],
    count: int,
    backend: LLMBackend,
    problem: ProblemDefinition,
    rng: np.random.Generator,
    ledger: Ledger,
    config: LLMConfig = LLMConfig(),
    generation: int | None = None,
    population: str | None = None,
) -> list[Offspring]:
    """Ask the backend for ``count`` new decision vectors.

    Every call is logged to ``ledger``. A failed call is retried up to
    ``config.retries`` times with the same prompt; after that the offspring is
    produced by SBX over two random pool members and tagged ``fallback``.
    Always returns exactly ``count`` in-bounds vectors. A replay miss is the
    only error that propagates.
    """
    if len(pool) < 2:
        raise ValueError("LLM pool needs at least two solutions")
    if count < 1:
        raise ValueError("count must be positive")
    feasible = [s for s in pool if s.feasible]
    infeasible = [s for s in pool if not s.feasible]
    bounds = (problem.lower, problem.upper)
    meta = {"problem": problem.name, "generation": generation, "population": population}
    attempts = config.retries + 1

    try:
        if config.batch:
            bundle = build_prompt(feasible, infeasible, problem.n, *bounds, config.precision, meta, count=count)
            chains = [_chain(backend, bundle.rendered, problem.n, bounds, count, attempts)]
            slots = [count]
        else:
            bundle = build_prompt(feasible, infeasible, problem.n, *bounds, config.precision, meta)
            workers = config.in_flight if getattr(backend, "concurrent_safe", True) else 1
            run = lambda _: _chain(backend, bundle.rendered, problem.n, bounds, 1, attempts)  # noqa: E731
            if workers > 1 and count > 1:
                # Results come back in request order, so the ledger stays deterministic.
                with ThreadPoolExecutor(max_workers=min(workers, count)) as pool_exec:
                    chains = list(pool_exec.map(run, range(count)))
            else:
                chains = [run(i) for i in range(count)]
            slots = [1] * count
    except ReplayMiss as exc:
        raise ReplayMiss(f"{exc} (generation {generation}, population {population})") from None

    identity = getattr(backend, "identity", {}) or {}
    model = identity.get("model")
    key = prompt_hash(bundle.rendered)
    out: list[Offspring] = []
    for chain, want in zip(chains, slots):
        got = chain[-1].parsed
        short = want - len(got)
        for retry, attempt in enumerate(chain):
            outcome = attempt.outcome
            if short > 0 and retry == len(chain) - 1 and not attempt.parsed:
                outcome = "fallback_used"
            ledger.append(
                Exchange(
                    prompt_hash=key,
                    prompt=bundle.rendered,
                    response=attempt.response,
                    outcome=outcome,
                    generation=generation,
                    population=population,
                    retry=retry,
                    error=attempt.error,
                    latency=attempt.latency,
                    model=model,
                    temperature=config.temperature,
                    max_tokens=config.max_tokens,
                    tokens=attempt.tokens,
                    timestamps={"start": attempt.started, "end": attempt.started + attempt.latency},
                )
            )
        out.extend(Offspring(p.decs, "llm") for p in got)
        out.extend(Offspring(fallback_offspring(pool, problem, rng), "fallback") for _ in range(short))
    return out


def fallback_offspring(pool: Sequence[Solution], problem: ProblemDefinition, rng: np.random.Generator) -> np.ndarray:
    i, j = rng.choice(len(pool), size=2, replace=False)
    child, _ = sbx_crossover(pool[i].decs, pool[j].decs, OperatorParams(), (problem.lower, problem.upper), rng)
    return child
