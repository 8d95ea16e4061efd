"""Problem model, solutions, constraint violation and dominance comparators."""

from __future__ import annotations

import enum
import logging
import math
import zlib
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-4

PROVENANCE_TAGS = frozenset({"init", "ga", "llm", "fallback"})

Evaluator = Callable[[np.ndarray], "tuple[Sequence[float], Sequence[float]]"]


class EvaluationError(ValueError):
    """Raised when an evaluator produces non-finite constraint values."""


class BudgetExhausted(RuntimeError):
    """Raised when an evaluation is requested after the budget is spent."""


class FEAccounting(str, enum.Enum):
    PER_EVAL = "per_eval"
    PER_GENERATION_N = "per_generation_N"


class Outcome(enum.Enum):
    A_BETTER = "a_better"
    B_BETTER = "b_better"
    TIE = "tie"


@dataclass(frozen=True, eq=False)
class ProblemDefinition:
    """A constrained multiobjective minimization problem.

    Constraint values returned by ``evaluator`` are ordered inequalities first
    (``q`` of them), then the ``l - q`` equalities.
    """

    name: str
    n: int
    m: int
    q: int
    l: int
    lower: np.ndarray
    upper: np.ndarray
    evaluator: Evaluator
    delta: float = DEFAULT_DELTA
    cpf_sampler: Callable[[int], np.ndarray] | None = None
    params: Mapping[str, Any] = field(default_factory=dict)
    witness: np.ndarray | None = None

    def __post_init__(self) -> None:
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if not 0 <= self.q <= self.l:
            raise ValueError("need 0 <= q <= l")
        if lower.shape != (self.n,) or upper.shape != (self.n,):
            raise ValueError("bounds must have length n")
        if not np.all(lower < upper):
            raise ValueError("lower bounds must be strictly below upper bounds")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_equality(self) -> int:
        return self.l - self.q

    def in_bounds(self, decs: np.ndarray) -> bool:
        decs = np.asarray(decs, dtype=float)
        return decs.shape == (self.n,) and bool(np.all((decs >= self.lower) & (decs <= self.upper)))

    def clamp(self, decs: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(decs, dtype=float), self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class Solution:
    decs: np.ndarray
    objs: np.ndarray
    cons: np.ndarray
    cv: float
    provenance: str = "init"

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance tag {self.provenance!r}")
        if not self.cv >= 0:
            raise ValueError("cv must be nonnegative")
        for name in ("decs", "objs", "cons"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def feasible(self) -> bool:
        return self.cv == 0.0

    def __repr__(self) -> str:
        return (
            f"Solution(decs={self.decs.tolist()}, objs={self.objs.tolist()}, "
            f"cv={self.cv!r}, provenance={self.provenance!r})"
        )


class Population(Sequence[Solution]):
    """An ordered collection of solutions with a nominal capacity."""

    def __init__(self, members: Iterable[Solution], capacity: int | None = None):
        self.members = list(members)
        self.capacity = len(self.members) if capacity is None else capacity

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, idx):  # type: ignore[override]
        if isinstance(idx, slice):
            return Population(self.members[idx], self.capacity)
        return self.members[idx]

    def __iter__(self) -> Iterator[Solution]:
        return iter(self.members)

    def __add__(self, other: Iterable[Solution]) -> list[Solution]:
        return self.members + list(other)

    def __repr__(self) -> str:
        return f"Population(size={len(self)}, capacity={self.capacity})"

    @property
    def decs(self) -> np.ndarray:
        return np.array([s.decs for s in self.members])

    @property
    def objs(self) -> np.ndarray:
        return np.array([s.objs for s in self.members])

    @property
    def cvs(self) -> np.ndarray:
        return np.array([s.cv for s in self.members])

    def feasible(self) -> list[Solution]:
        return [s for s in self.members if s.feasible]


@dataclass
class BudgetCounter:
    """Function-evaluation budget.

    In ``per_eval`` mode every evaluator call consumes one unit. In
    ``per_generation_N`` mode the engine charges the budget explicitly and
    evaluator calls are only tallied in ``calls``.
    """

    fe_max: int
    fe: int = 0
    mode: FEAccounting = FEAccounting.PER_EVAL
    calls: int = 0

    def __post_init__(self) -> None:
        self.mode = FEAccounting(self.mode)

    @property
    def remaining(self) -> int:
        return max(0, self.fe_max - self.fe)

    @property
    def exhausted(self) -> bool:
        return self.fe >= self.fe_max

    def consume(self) -> None:
        if self.mode is FEAccounting.PER_EVAL:
            if self.fe >= self.fe_max:
                raise BudgetExhausted(f"budget of {self.fe_max} evaluations spent")
            self.fe += 1
        self.calls += 1

    def charge(self, amount: int) -> None:
        if amount < 0:
            raise ValueError("cannot refund evaluations")
        self.fe += amount


# Fixed indices keep substreams stable when new names are added.
_STREAM_IDS = {
    "init": 0,
    "mating": 1,
    "sbx": 2,
    "mutation": 3,
    "llm-sampling": 4,
    "metrics": 5,
}


class RandomSource:
    """Seeded family of independent named random substreams."""

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            key = _STREAM_IDS.get(name)
            if key is None:
                key = 1000 + zlib.crc32(name.encode())
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(key,))
            gen = np.random.Generator(np.random.PCG64(seq))
            self._streams[name] = gen
        return gen

    __getitem__ = stream

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed})"


def constraint_violation(cons: Sequence[float], q: int, l: int, delta: float = DEFAULT_DELTA) -> float:
    """Aggregate constraint violation degree.

    Inequalities contribute ``max(0, g_i)``; equalities ``max(0, |h_i| - delta)``.
    Terms are accumulated left to right.

    Raises:
        EvaluationError: if any constraint value is NaN or infinite.
    """
    if len(cons) != l:
        raise ValueError(f"expected {l} constraint values, got {len(cons)}")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    total = 0.0
    for i in range(l):
        c = float(cons[i])
        if not math.isfinite(c):
            raise EvaluationError(f"constraint {i} is not finite: {c}")
        if i < q:
            total += max(0.0, c)
        else:
            total += max(0.0, abs(c) - delta)
    return total


def _constraint_violation_as_printed(cons: Sequence[float], q: int, l: int, delta: float) -> float:
    # Literal |h - delta| reading of the equality term; kept for comparison in tests only.
    total = 0.0
    for i in range(l):
        c = float(cons[i])
        total += max(0.0, c) if i < q else max(0.0, abs(c - delta))
    return total


def pareto_dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"objective length mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def cdp_compare(a: Solution, b: Solution) -> Outcome:
    """Constrained dominance principle."""
    if a.feasible and b.feasible:
        if pareto_dominates(a.objs, b.objs):
            return Outcome.A_BETTER
        if pareto_dominates(b.objs, a.objs):
            return Outcome.B_BETTER
        return Outcome.TIE
    if a.cv < b.cv:
        return Outcome.A_BETTER
    if b.cv < a.cv:
        return Outcome.B_BETTER
    return Outcome.TIE


def evaluate(
    problem: ProblemDefinition,
    decs: Sequence[float],
    budget: BudgetCounter,
    provenance: str = "init",
) -> Solution:
    """Evaluate one decision vector, charging the budget.

    Non-finite evaluator output does not raise: the solution is poisoned with
    ``cv = inf`` (and ``inf`` objectives when those are the problem) so that it
    loses every comparison.
    """
    x = np.array(decs, dtype=float).reshape(-1)
    if not problem.in_bounds(x):
        raise ValueError(f"decision vector out of bounds for {problem.name}: {x.tolist()}")
    budget.consume()
    x.setflags(write=False)
    objs, cons = problem.evaluator(x)
    objs = np.array(objs, dtype=float).reshape(-1)
    cons = np.array(cons, dtype=float).reshape(-1)
    if objs.shape != (problem.m,) or cons.shape != (problem.l,):
        raise ValueError(
            f"{problem.name} evaluator returned arity ({objs.size}, {cons.size}), "
            f"expected ({problem.m}, {problem.l})"
        )
    if not np.all(np.isfinite(objs)):
        logger.warning("non-finite objectives at %s on %s", x.tolist(), problem.name)
        objs = np.full(problem.m, np.inf)
        cv = math.inf
    else:
        try:
            cv = constraint_violation(cons, problem.q, problem.l, problem.delta)
        except EvaluationError as exc:
            logger.warning("%s at %s on %s", exc, x.tolist(), problem.name)
            cv = math.inf
    return Solution(decs=x, objs=objs, cons=cons, cv=cv, provenance=provenance)
