"""TRIC benchmark suite.

Seven constrained test problems built around three constraint archetypes:

* Type I (diversity): ``b - sin(a*pi*f1) <= 0`` cuts the front into
  disconnected arcs.
* Type II (feasibility): ``sum_{i>=2} (x_i - 0.5)^2 - rho <= 0`` shrinks the
  feasible share of the search space to a thin tube around the front.
* Type III (convergence): ``e - sum(f) <= 0`` pushes the feasible region away
  from the unconstrained front.

All problems live on ``[0, 1]^n`` and have analytic constrained Pareto fronts,
so IGD reference sets are exact. Constraint values are ordered inequalities
first, equalities last.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import replace
from itertools import combinations

import numpy as np

from cmoforge.core import DEFAULT_DELTA, BudgetCounter, ProblemDefinition, RandomSource, constraint_violation

PROBLEM_IDS = ("TRIC1", "TRIC2", "TRIC3", "TRIC4", "TRIC5", "TRIC6", "TRIC7")
DEFAULT_N = 10

TYPE1_A = 10.0
TYPE1_B = 0.5
TYPE3_E_BI = 1.2
TYPE3_E_TRI = 1.3
TYPE2_RHO_PER_DIM = 0.0025
TRIC7_R2 = 0.1

# Relative nudge applied to Type III pre-images so that rounding cannot
# leave them a hair on the infeasible side of f1 + f2 = e.
_PREIMAGE_MARGIN = 1e-10
_BAND_MARGIN = 1e-12


# Type III fronts need g up to 1.6 (bi-objective, near f1 = 0.4) or a radius
# of 1.3 (TRIC6 corners); each free variable adds at most 0.25 to g.
MIN_N = {"TRIC3": 4, "TRIC5": 4, "TRIC6": 4}


class UnknownProblem(KeyError):
    pass


def type1_bands(a: float = TYPE1_A, b: float = TYPE1_B) -> list[tuple[float, float]]:
    """Intervals of ``t`` in [0, 1] where ``sin(a*pi*t) >= b``."""
    lo = math.asin(b) / math.pi
    hi = 1.0 - lo
    bands = []
    k = 0
    while True:
        t0 = (lo + 2 * k) / a
        if t0 > 1.0:
            break
        bands.append((t0, min((hi + 2 * k) / a, 1.0)))
        k += 1
    return bands


def _type3_g(t: float, e: float) -> float:
    # Distance value g at which g - sqrt(t*g) = e - t, i.e. f1 + f2 = e.
    s = (math.sqrt(t) + math.sqrt(4.0 * e - 3.0 * t)) / 2.0
    return s * s


def _base_bi(x: np.ndarray) -> tuple[float, float, float]:
    d = x[1:] - 0.5
    g = 1.0 + float(d @ d)
    f1 = float(x[0])
    f2 = g * (1.0 - math.sqrt(f1 / g))
    return f1, f2, g


class _BiFront:
    """Piecewise bi-objective front parametrized by f1 = t."""

    def __init__(self, segments: Sequence[tuple[float, float]], curve: Callable[[np.ndarray], np.ndarray]):
        self.segments = list(segments)
        self.curve = curve

    def points(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.column_stack([t, self.curve(t)])

    def arc_lengths(self, resolution: int = 2001) -> np.ndarray:
        out = []
        for t0, t1 in self.segments:
            pts = self.points(np.linspace(t0, t1, resolution))
            out.append(float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1))))
        return np.array(out)

    def sample(self, K: int) -> np.ndarray:
        counts = _largest_remainder(self.arc_lengths(), K)
        chunks = []
        for (t0, t1), k in zip(self.segments, counts):
            if k == 1:
                chunks.append(self.points([(t0 + t1) / 2.0]))
            elif k > 1:
                chunks.append(self.points(np.linspace(t0, t1, k)))
        return np.vstack(chunks)

    def extremes(self) -> tuple[np.ndarray, np.ndarray]:
        first = self.points([self.segments[0][0]])[0]
        last = self.points([self.segments[-1][1]])[0]
        return np.array([first[0], last[1]]), np.array([last[0], first[1]])


def _largest_remainder(weights: np.ndarray, K: int) -> list[int]:
    quotas = K * weights / weights.sum()
    counts = np.floor(quotas).astype(int)
    rest = K - int(counts.sum())
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts.tolist()


def _das_dennis(H: int, m: int) -> np.ndarray:
    pts = []
    for bars in combinations(range(H + m - 1), m - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(H + m - 2 - prev)
        pts.append(parts)
    return np.array(pts, dtype=float) / H


def _tric6_sampler(e: float) -> Callable[[int], np.ndarray]:
    def sample(K: int) -> np.ndarray:
        H = 1
        while math.comb(H + 2, 2) < K:
            H += 1
        w = _das_dennis(H, 3)
        d = w / np.linalg.norm(w, axis=1, keepdims=True)
        idx = np.round(np.linspace(0, len(d) - 1, K)).astype(int)
        d = d[idx]
        scale = np.maximum(1.0, e / d.sum(axis=1))
        return d * scale[:, None]

    return sample


def _spread(n: int, excess: float, start: int) -> np.ndarray:
    """Decision vector tail whose squared deviation from 0.5 sums to ``excess``."""
    count = n - start
    if excess <= 0 or count == 0:
        return np.full(count, 0.5)
    step = math.sqrt(excess / count)
    if step > 0.5:
        raise ValueError(f"distance excess {excess:.4g} unattainable with {count} free variables")
    return np.full(count, 0.5 + step)


def make_problem(problem_id: str, n: int | None = None, delta: float = DEFAULT_DELTA) -> ProblemDefinition:
    """Build a TRIC problem.

    Args:
        problem_id: one of ``TRIC1`` .. ``TRIC7`` (case-insensitive).
        n: decision dimension; defaults to 10.
        delta: equality relaxation, only relevant to TRIC7.

    Raises:
        UnknownProblem: for an unrecognized id.
        ValueError: if ``n`` is below the problem's minimum.
    """
    pid = problem_id.upper()
    if pid not in PROBLEM_IDS:
        raise UnknownProblem(f"unknown problem {problem_id!r}; expected one of {', '.join(PROBLEM_IDS)}")
    n = DEFAULT_N if n is None else int(n)
    min_n = MIN_N.get(pid, 2)
    if n < min_n:
        raise ValueError(f"{pid} requires n >= {min_n}, got {n}")

    a, b = TYPE1_A, TYPE1_B
    rho = TYPE2_RHO_PER_DIM * (n - 1)
    e = TYPE3_E_TRI if pid == "TRIC6" else TYPE3_E_BI
    lower, upper = np.zeros(n), np.ones(n)
    params: dict = {"id": pid}

    def type1(f1: float) -> float:
        return b - math.sin(a * math.pi * f1)

    def type2(g: float) -> float:
        return (g - 1.0) - rho

    def type3(f1: float, f2: float) -> float:
        return e - (f1 + f2)

    unconstrained = lambda t: 1.0 - np.sqrt(t)  # noqa: E731
    on_line = lambda t: e - t  # noqa: E731

    if pid == "TRIC1":
        params.update(a=a, b=b, archetypes="I")

        def evaluator(x):
            f1, f2, _ = _base_bi(x)
            return (f1, f2), (type1(f1),)

        front = _BiFront(type1_bands(a, b), unconstrained)
        q = l = 1
        witness_t = 0.05
    elif pid == "TRIC2":
        params.update(rho=rho, archetypes="II")

        def evaluator(x):
            f1, f2, g = _base_bi(x)
            return (f1, f2), (type2(g),)

        front = _BiFront([(0.0, 1.0)], unconstrained)
        q = l = 1
        witness_t = 0.5
    elif pid == "TRIC3":
        params.update(e=e, archetypes="III")

        def evaluator(x):
            f1, f2, _ = _base_bi(x)
            return (f1, f2), (type3(f1, f2),)

        front = _BiFront([(0.0, 1.0)], on_line)
        q = l = 1
        witness_t = 0.5
    elif pid == "TRIC4":
        params.update(a=a, b=b, rho=rho, archetypes="I+II")

        def evaluator(x):
            f1, f2, g = _base_bi(x)
            return (f1, f2), (type1(f1), type2(g))

        front = _BiFront(type1_bands(a, b), unconstrained)
        q = l = 2
        witness_t = 0.05
    elif pid == "TRIC5":
        params.update(a=a, b=b, e=e, archetypes="I+III")

        def evaluator(x):
            f1, f2, _ = _base_bi(x)
            return (f1, f2), (type1(f1), type3(f1, f2))

        front = _BiFront(type1_bands(a, b), on_line)
        q = l = 2
        witness_t = 0.05
    elif pid == "TRIC7":
        params.update(r2=TRIC7_R2, archetypes="II (equality)")
        g_pin = 1.0 + TRIC7_R2

        def evaluator(x):
            f1, f2, g = _base_bi(x)
            return (f1, f2), ((g - 1.0) - TRIC7_R2,)

        front = _BiFront([(0.0, 1.0)], lambda t: g_pin - np.sqrt(g_pin * t))
        q, l = 0, 1
        witness_t = 0.5
    else:  # TRIC6
        params.update(e=e, archetypes="III (tri-objective)")

        def evaluator(x):
            d = x[2:] - 0.5
            r = 1.0 + float(d @ d)
            c1, s1 = math.cos(math.pi * x[0] / 2), math.sin(math.pi * x[0] / 2)
            c2, s2 = math.cos(math.pi * x[1] / 2), math.sin(math.pi * x[1] / 2)
            f = (r * c1 * c2, r * c1 * s2, r * s1)
            return f, (e - sum(f),)

        params.update(ideal=[0.0, 0.0, 0.0], nadir=[e, e, e])
        problem = ProblemDefinition(
            name=pid, n=n, m=3, q=1, l=1, lower=lower, upper=upper, evaluator=evaluator,
            delta=delta, cpf_sampler=_tric6_sampler(e), params=params,
        )
        witness = tric6_preimage(problem, np.ones(3) / math.sqrt(3.0))
        return replace(problem, witness=witness)

    ideal, nadir = front.extremes()
    params.update(ideal=ideal.tolist(), nadir=nadir.tolist(), segments=front.segments)
    problem = ProblemDefinition(
        name=pid, n=n, m=2, q=q, l=l, lower=lower, upper=upper, evaluator=evaluator,
        delta=delta, cpf_sampler=front.sample, params=params,
    )
    return replace(problem, witness=cpf_preimage(problem, witness_t))


def cpf_preimage(problem: ProblemDefinition, t: float) -> np.ndarray:
    """Decision vector mapping onto the bi-objective CPF point with ``f1 = t``.

    ``t`` must lie on a front segment; raises ``ValueError`` otherwise or when
    the required distance value cannot be reached at this dimension.
    """
    pid = problem.params.get("id")
    if pid not in PROBLEM_IDS or pid == "TRIC6":
        raise ValueError(f"no bi-objective pre-image for {problem.name}")
    segments = problem.params["segments"]
    segment = next(((t0, t1) for t0, t1 in segments if t0 - 1e-15 <= t <= t1 + 1e-15), None)
    if segment is None:
        raise ValueError(f"t={t} is not on the constrained front of {pid}")
    if "a" in problem.params:
        # sin() rounding leaves exact band endpoints ~1e-15 infeasible.
        t = min(max(t, segment[0] + _BAND_MARGIN), segment[1] - _BAND_MARGIN)
    if pid in ("TRIC3", "TRIC5"):
        excess = (_type3_g(t, problem.params["e"]) - 1.0) * (1.0 + _PREIMAGE_MARGIN)
    elif pid == "TRIC7":
        excess = problem.params["r2"]
    else:
        excess = 0.0
    return np.concatenate([[t], _spread(problem.n, excess, 1)])


def tric6_preimage(problem: ProblemDefinition, direction: Sequence[float]) -> np.ndarray:
    """Decision vector mapping onto the TRIC6 CPF point along ``direction``."""
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,) or np.any(d < 0) or not np.any(d > 0):
        raise ValueError("direction must be a nonnegative, nonzero 3-vector")
    d = d / np.linalg.norm(d)
    e = problem.params["e"]
    r = max(1.0, e / d.sum())
    if r > 1.0:
        r *= 1.0 + _PREIMAGE_MARGIN
    x1 = 2.0 / math.pi * math.asin(min(1.0, d[2]))
    x2 = 2.0 / math.pi * math.atan2(d[1], d[0])
    return np.concatenate([[x1, x2], _spread(problem.n, r - 1.0, 2)])


def sample_cpf(problem: ProblemDefinition, K: int) -> np.ndarray:
    """``K`` reference points on the analytic constrained Pareto front."""
    if K < 2:
        raise ValueError("K must be at least 2")
    if problem.cpf_sampler is None:
        raise ValueError(f"{problem.name} has no analytic front sampler")
    return problem.cpf_sampler(K)


def drop_constraints(problem: ProblemDefinition) -> ProblemDefinition:
    """Unconstrained copy of ``problem`` (same objectives, no constraints)."""
    inner = problem.evaluator

    def evaluator(x):
        objs, _ = inner(x)
        return objs, ()

    return replace(problem, name=f"{problem.name}-unconstrained", q=0, l=0, evaluator=evaluator, cpf_sampler=None)


def feasible_ratio_estimate(problem: ProblemDefinition, samples: int, rng: RandomSource | np.random.Generator) -> float:
    """Monte Carlo share of the box that is feasible.

    Uses its own evaluation counter; no run budget is touched.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    gen = rng.stream("metrics") if isinstance(rng, RandomSource) else rng
    counter = BudgetCounter(fe_max=samples)
    span = problem.upper - problem.lower
    hits = 0
    for u in gen.random((samples, problem.n)):
        counter.consume()
        _, cons = problem.evaluator(problem.lower + u * span)
        if constraint_violation(cons, problem.q, problem.l, problem.delta) == 0.0:
            hits += 1
    return hits / samples


def describe(problem: ProblemDefinition) -> dict:
    """Catalog entry: dimensions, parameters and a feasible witness."""
    params = {k: v for k, v in problem.params.items() if k not in ("id", "segments", "ideal", "nadir")}
    return {
        "id": problem.name,
        "n": problem.n,
        "m": problem.m,
        "q": problem.q,
        "l": problem.l,
        "equalities": problem.n_equality,
        "delta": problem.delta,
        "params": params,
        "witness": None if problem.witness is None else [round(float(v), 6) for v in problem.witness],
    }
