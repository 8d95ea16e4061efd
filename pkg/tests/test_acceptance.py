"""Exit criteria of the build, one test per criterion.

Each test is tagged with ``acceptance(code, title)``; the conftest hook prints
one PASS/FAIL line per criterion at the end of the session.
"""

import itertools
import math
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

from cmoforge.core import BudgetCounter, Solution, constraint_violation, evaluate
from cmoforge.engine import EngineConfig, initialize, run, run_generation
from cmoforge.experiment import execute_task, replay_verify
from cmoforge.llm import (
    FailingBackend,
    Ledger,
    LLMConfig,
    MissingTags,
    NonFinite,
    NonNumeric,
    OracleBackend,
    WrongCount,
    llm_generate,
    parse_response,
)
from cmoforge.metrics import hypervolume_points, igd, igd_points
from cmoforge.problems import (
    PROBLEM_IDS,
    cpf_preimage,
    feasible_ratio_estimate,
    make_problem,
    sample_cpf,
    tric6_preimage,
)
from cmoforge.stats import ComparisonCell, format_results_table, friedman_ranks, wilcoxon_rank_sum

# Median final IGD of 30 pure-CCMO runs (seeds 1000-1029) times 1.2;
# produced by scripts/calibrate_baseline.py.
AC4_IGD_THRESHOLD = 0.004984290784666464


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def brute_force_cv(cons, q, delta):
    total = 0.0
    for i, c in enumerate(cons):
        if i < q:
            if c > 0:
                total = total + c
        else:
            excess = abs(c) - delta
            if excess > 0:
                total = total + excess
    return total


@pytest.mark.acceptance("AC-1", "constraint violation matches brute-force summation")
def test_ac1_cv_oracle():
    rng = np.random.default_rng(101)
    with Timer() as t:
        for _ in range(1000):
            q, l = int(rng.integers(0, 6)), int(rng.integers(0, 6))
            cons = list(rng.normal(0, 1, q + l) * rng.choice([1e-3, 1.0, 1e3]))
            delta = float(rng.choice([0.0, 1e-4, rng.random()]))
            assert constraint_violation(cons, q, q + l, delta) == brute_force_cv(cons, q, delta)
    assert t.elapsed < 1.0


def mc_hypervolume(points, ref, samples, rng):
    """Dominated share of the box [0, ref], sampled independently of the library."""
    x = rng.random((samples, len(ref))) * ref
    covered = np.zeros(samples, dtype=bool)
    for p in points:
        covered |= np.all(x >= p, axis=1)
    box = float(np.prod(ref))
    frac = covered.mean()
    return frac * box, box * math.sqrt(frac * (1 - frac) / samples)


@pytest.mark.acceptance("AC-2", "exact hypervolume agrees with Monte Carlo")
def test_ac2_hv():
    assert hypervolume_points(np.array([[0.25, 0.75], [0.75, 0.25]]), (1.0, 1.0))[0] == 0.3125
    rng = np.random.default_rng(202)
    misses = []
    with Timer() as t:
        for case in range(100):
            m = 2 if case % 2 == 0 else 3
            pts = rng.random((int(rng.integers(1, 16)), m))
            ref = np.full(m, 1.1)
            exact = hypervolume_points(pts, ref)[0]
            estimate, sigma = mc_hypervolume(pts, ref, 1_000_000, rng)
            if abs(exact - estimate) > 3 * sigma:
                misses.append((case, exact, estimate, sigma))
    assert not misses
    assert t.elapsed < 60.0


def brute_force_igd(ref, objs):
    return sum(min(math.dist(r, p) for p in objs) for r in ref) / len(ref)


@pytest.mark.acceptance("AC-3", "IGD worked examples and fuzzed properties")
def test_ac3_igd():
    with Timer() as t:
        sol = lambda o: Solution(decs=[0.0], objs=o, cons=[], cv=0.0)  # noqa: E731
        ref = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert abs(igd(ref, [sol([0.0, 1.0])]) - math.sqrt(2) / 2) <= 1e-12
        assert igd(ref, [sol(r) for r in ref]) == 0.0
        assert math.isnan(igd(ref, [Solution(decs=[0.0], objs=[0, 1], cons=[], cv=0.5)]))
        rng = np.random.default_rng(303)
        for _ in range(1000):
            m = int(rng.integers(2, 4))
            R = rng.random((int(rng.integers(1, 20)), m))
            P = rng.random((int(rng.integers(1, 20)), m))
            base = igd_points(R, P)
            assert abs(base - brute_force_igd(R, P)) <= 1e-12
            # Adding a point can only bring reference points closer.
            assert igd_points(R, np.vstack([P, rng.random((1, m))])) <= base
            assert abs(igd_points(R[rng.permutation(len(R))], P[rng.permutation(len(P))]) - base) <= 1e-12
    assert t.elapsed < 10.0


@pytest.mark.slow
@pytest.mark.acceptance("AC-4", "pure CCMO baseline on TRIC2 (n=5)")
def test_ac4_engine_baseline():
    problem = make_problem("TRIC2", 5)
    finals = []
    with Timer() as t:
        for seed in range(10):
            result = run(problem, EngineConfig(llm_offspring_fraction=0.0, seed=seed, metrics_every_generation=False))
            assert result.final.feasible_count >= 1
            finals.append(result.final.igd)
    median = statistics.median(finals)
    print(f"AC-4 median final IGD {median:.6g} (threshold {AC4_IGD_THRESHOLD:.6g}), {t.elapsed:.1f}s")
    assert median <= AC4_IGD_THRESHOLD
    assert t.elapsed < 120.0


@pytest.mark.slow
@pytest.mark.acceptance("AC-5", "oracle LLM offspring speed up early convergence")
def test_ac5_acceleration():
    problem = make_problem("TRIC3")
    reference = sample_cpf(problem, 1000)
    vector = cpf_preimage(problem, 0.5)
    with_oracle, pure, survived = [], [], []
    with Timer() as t:
        for seed in range(10):
            baseline = run(problem, EngineConfig(llm_offspring_fraction=0.0, seed=seed), max_generations=5)
            pure.append(baseline.history[4].igd)
            config = EngineConfig(seed=seed)
            state = initialize(problem, config)
            backend = OracleBackend(vector)
            run_generation(state, problem, config, backend, reference)
            survived.append(any(np.array_equal(s.decs, vector) for s in state.pop1))
            for _ in range(4):
                run_generation(state, problem, config, backend, reference)
            with_oracle.append(state.history[4].igd)
    print(
        f"AC-5 generation-5 median IGD oracle {statistics.median(with_oracle):.6g} "
        f"vs pure {statistics.median(pure):.6g}; survived {sum(survived)}/10"
    )
    assert statistics.median(with_oracle) <= statistics.median(pure)
    assert all(survived)
    assert t.elapsed < 180.0


@pytest.mark.acceptance("AC-6", "record then replay gives byte-identical CSVs")
def test_ac6_determinism(tmp_path):
    task = {
        "problem": "TRIC3",
        "n": None,
        "algorithm": "ccmo-llm",
        "run": 0,
        "seed": 17,
        "engine": {},
        "backend": "surrogate",
        "live": {},
        "metrics": "generation",
        "out": str(tmp_path),
    }
    with Timer() as t:
        run_dir = execute_task(task, out_dir=tmp_path / "recorded")
        verdict = replay_verify(run_dir)
    assert verdict == {"final_population.csv": True, "history.csv": True}
    assert t.elapsed < 30.0


GOOD_RESPONSES = [
    ("<start>0.1, 0.2, 0.3<end>", [0.1, 0.2, 0.3]),
    ("<start>0.1,0.2,0.3<end>", [0.1, 0.2, 0.3]),
    ("<start> 0.1 , 0.2 , 0.3 <end>", [0.1, 0.2, 0.3]),
    ("<start>0.1 0.2 0.3<end>", [0.1, 0.2, 0.3]),
    ("<start>0.1\t0.2\t0.3<end>", [0.1, 0.2, 0.3]),
    ("<start>\n0.1,\n0.2,\n0.3\n<end>", [0.1, 0.2, 0.3]),
    ("<start>[0.1, 0.2, 0.3]<end>", [0.1, 0.2, 0.3]),
    ("<start>(0.1, 0.2, 0.3)<end>", [0.1, 0.2, 0.3]),
    ("<start>0.1; 0.2; 0.3<end>", [0.1, 0.2, 0.3]),
    ("<start>0.1, 0.2, 0.3,<end>", [0.1, 0.2, 0.3]),
    ("Here is the new solution: <start>0.1, 0.2, 0.3<end>", [0.1, 0.2, 0.3]),
    ("<start>0.1, 0.2, 0.3<end> I combined the first two solutions.", [0.1, 0.2, 0.3]),
    ("Sure!\n\n<start>0.1, 0.2, 0.3<end>\n\nLet me know if you need more.", [0.1, 0.2, 0.3]),
    ("<start>1e-1, 2E-1, 3.0e-1<end>", [0.1, 0.2, 0.3]),
    ("<start>.1, .2, .3<end>", [0.1, 0.2, 0.3]),
    ("<start>+0.1, 0.20, 0.300<end>", [0.1, 0.2, 0.3]),
    ("<start>0, 1, 0.5<end>", [0.0, 1.0, 0.5]),
    ("<start>0.1, 0.2, 0.3<end><start>0.9, 0.9, 0.9<end>", [0.1, 0.2, 0.3]),
    ("<start>1.7, 0.5, -0.2<end>", [1.0, 0.5, 0.0]),
    ("<start>0.1, 0.2, 12<end>", [0.1, 0.2, 1.0]),
]

BAD_RESPONSES = [
    ("0.1, 0.2, 0.3", MissingTags),
    ("", MissingTags),
    ("<start>0.1, 0.2, 0.3", MissingTags),
    ("0.1, 0.2, 0.3<end>", MissingTags),
    ("<start>0.1, 0.2<end>", WrongCount),
    ("<start>0.1, 0.2, 0.3, 0.4<end>", WrongCount),
    ("<start><end>", WrongCount),
    ("<start>0.1, abc, 0.3<end>", NonNumeric),
    ("<start>x1=0.1, x2=0.2, x3=0.3<end>", NonNumeric),
    ("<start>0.1, inf, 0.3<end>", NonFinite),
]


@pytest.mark.acceptance("AC-7", "parser robustness and guaranteed offspring count")
def test_ac7_parser():
    bounds = ([0.0] * 3, [1.0] * 3)
    with Timer() as t:
        for i, (text, expected) in enumerate(GOOD_RESPONSES):
            parsed = parse_response(text, 3, bounds)
            assert np.allclose(parsed.decs, expected, atol=0, rtol=1e-15), text
            # only the last two shapes need clamping
            assert parsed.repaired == (i >= len(GOOD_RESPONSES) - 2), text
        for text, error in BAD_RESPONSES:
            with pytest.raises(error):
                parse_response(text, 3, bounds)

        problem = make_problem("TRIC3")
        budget = BudgetCounter(10)
        rng = np.random.default_rng(7)
        pool = [evaluate(problem, x, budget) for x in rng.random((10, problem.n))]
        for response in ("no tags here", None):
            ledger = Ledger()
            out = llm_generate(pool, 5, FailingBackend(response), problem, rng, ledger, LLMConfig(retries=2))
            assert len(out) == 5 and len(ledger) == 15
            assert all(np.all((o.decs >= 0) & (o.decs <= 1)) and o.decs.shape == (problem.n,) for o in out)
    assert t.elapsed < 5.0


def permutation_p(a, b):
    """Two-sided rank-sum p-value by enumerating every relabelling."""
    pooled = list(a) + list(b)
    n1 = len(a)
    ranks = {}
    ordered = sorted(pooled)
    for v in set(pooled):
        positions = [i + 1 for i, w in enumerate(ordered) if w == v]
        ranks[v] = Fraction(sum(positions), len(positions))
    r = [ranks[v] for v in pooled]
    center = Fraction(n1 * (len(pooled) + 1), 2)
    observed = abs(sum(r[:n1]) - center)
    hits = total = 0
    for combo in itertools.combinations(range(len(pooled)), n1):
        total += 1
        if abs(sum(r[i] for i in combo) - center) >= observed:
            hits += 1
    return hits / total


@pytest.mark.acceptance("AC-8", "Wilcoxon exact p-values and Friedman ranks")
def test_ac8_statistics():
    rng = np.random.default_rng(808)
    with Timer() as t:
        for n1 in range(1, 12):
            for n2 in range(1, 13 - n1):
                for trial in range(3):
                    # integer data from a small range produces ties
                    a = rng.integers(0, 6 if trial else 50, n1).astype(float)
                    b = rng.integers(0, 6 if trial else 50, n2).astype(float)
                    assert wilcoxon_rank_sum(a, b).p == pytest.approx(permutation_p(a, b), abs=1e-12), (a, b)
        assert wilcoxon_rank_sum([1, 2, 3, 4], [5, 6, 7, 8]).p == pytest.approx(2 / 70, abs=1e-15)
        ranks = friedman_ranks([[0.1, 0.2], [0.2, 0.3], [0.3, 0.1]]).mean_ranks
        assert ranks.tolist() == [1.5, 2.5, 2.0]
    assert t.elapsed < 30.0


@pytest.mark.acceptance("AC-9", "results-table cell format")
def test_ac9_table():
    cells = {
        "P1": {"A": ComparisonCell(0.73863, 0.0372, "="), "B": ComparisonCell(0.5, 0.1)},
        "P2": {"A": ComparisonCell(math.nan, math.nan, "-"), "B": ComparisonCell(0.5, 0.1)},
    }
    table = format_results_table(cells, ["A", "B"], baseline="B")
    lines = table.csv.splitlines()
    assert lines[1].split(",")[1] == "7.3863e-1 (3.72e-2) ="
    assert lines[2].split(",")[1] == "NaN (NaN)"
    assert "7.3863e-1 (3.72e-2) =" in table.text and "NaN (NaN)" in table.text


def bisect(f, lo, hi, tol=1e-13):
    flo = f(lo) > 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == flo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nondominated(points):
    le = np.all(points[:, None, :] <= points[None, :, :], axis=2)
    lt = np.any(points[:, None, :] < points[None, :, :], axis=2)
    return not np.any(le & lt)


@pytest.mark.acceptance("AC-10", "benchmark geometry")
def test_ac10_geometry():
    with Timer() as t:
        tric1 = make_problem("TRIC1")

        def c(t1):
            x = np.concatenate([[t1], np.full(tric1.n - 1, 0.5)])
            return tric1.evaluator(x)[1][0]

        for k in range(5):
            lo = bisect(c, k / 5, k / 5 + 0.05)
            hi = bisect(c, k / 5 + 0.05, k / 5 + 0.1)
            assert abs(lo - (k / 5 + 1 / 60)) <= 1e-9
            assert abs(hi - (k / 5 + 1 / 12)) <= 1e-9

        ratio = feasible_ratio_estimate(make_problem("TRIC2", 2), 100_000, np.random.default_rng(1010))
        sigma = math.sqrt(0.1 * 0.9 / 100_000)
        assert abs(ratio - 0.1) <= 3 * sigma

        for pid in PROBLEM_IDS:
            problem = make_problem(pid)
            points = sample_cpf(problem, 200)
            assert nondominated(points), pid
            budget = BudgetCounter(len(points))
            for point in points:
                if problem.m == 3:
                    x = tric6_preimage(problem, point)
                else:
                    x = cpf_preimage(problem, point[0])
                s = evaluate(problem, x, budget)
                assert s.feasible, (pid, point)
                assert np.allclose(s.objs, point, atol=1e-8), (pid, point, s.objs)
    assert t.elapsed < 30.0
