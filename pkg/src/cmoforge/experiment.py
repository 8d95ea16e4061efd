"""Batch experiments: run directories, comparisons and front plots.

Run directory layout (``<out>/<problem>/<algorithm>/run_<k>/``):

``manifest.json``
    resolved configuration, seed, problem parameters, backend identity,
    prompt version, timestamps and SHA-256 checksums of the other files.
``final_population.csv``
    ``x1..xn, f1..fm, cv, provenance`` for the reported population.
``history.csv``
    ``generation, fe, feasible_count, best_cv, igd, hv``.
``metrics.json``
    final ``igd``, ``hv`` and ``feasible_count``.
``ledger.jsonl``
    one LLM exchange per line.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from collections import defaultdict
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from cmoforge import stats
from cmoforge.core import ProblemDefinition
from cmoforge.engine import EngineConfig, GenerationRecord, RunResult, run
from cmoforge.llm.backends import (
    API_KEY_ENV,
    ConfigurationError,
    LiveBackend,
    LLMBackend,
    OracleBackend,
    ReplayBackend,
    SurrogateBackend,
)
from cmoforge.llm.generate import LLMConfig
from cmoforge.llm.ledger import Ledger
from cmoforge.operators import OperatorParams
from cmoforge.problems import cpf_preimage, make_problem, tric6_preimage

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("generation", "fe", "feasible_count", "best_cv", "igd", "hv")

DEFAULT_ALGORITHMS: dict[str, dict[str, Any]] = {
    "ccmo": {"llm_offspring_fraction": 0.0},
    "ccmo-llm": {},
}


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """Experiment description, usually loaded from a JSON file.

    Keys: ``problems`` (list of ``{"id", "n"}``), ``algorithms`` (name ->
    engine overrides, optionally with its own ``backend``), ``runs``,
    ``seed_base``, ``backend``, ``out``, ``metrics`` (``generation`` or
    ``final``), ``engine`` (shared engine defaults), ``live`` (endpoint,
    model and sampling settings), ``matched_seeds`` and ``jobs``.
    """

    problems: list[dict[str, Any]] = field(default_factory=lambda: [{"id": "TRIC3"}])
    algorithms: dict[str, dict[str, Any]] = field(default_factory=lambda: dict(DEFAULT_ALGORITHMS))
    runs: int = 10
    seed_base: int = 0
    backend: str = "surrogate"
    out: str = "results"
    metrics: str = "generation"
    engine: dict[str, Any] = field(default_factory=dict)
    live: dict[str, Any] = field(default_factory=dict)
    matched_seeds: bool = True
    jobs: int | None = None

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ExperimentError("runs must be positive")
        if self.metrics not in ("generation", "final"):
            raise ExperimentError("metrics must be 'generation' or 'final'")
        if not self.problems or not self.algorithms:
            raise ExperimentError("need at least one problem and one algorithm")
        self.problems = [p if isinstance(p, dict) else {"id": p} for p in self.problems]

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ExperimentError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def run_seed(self, problem: str, algorithm: str, index: int) -> int:
        key = f"{self.seed_base}|{problem}|{index}"
        if not self.matched_seeds:
            key += f"|{algorithm}"
        return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big") >> 1

    def tasks(self) -> list[dict[str, Any]]:
        out = []
        for spec in self.problems:
            pid = spec["id"].upper()
            for alg, overrides in self.algorithms.items():
                overrides = dict(overrides)
                backend = overrides.pop("backend", self.backend)
                for k in range(self.runs):
                    out.append(
                        {
                            "problem": pid,
                            "n": spec.get("n"),
                            "delta": spec.get("delta"),
                            "algorithm": alg,
                            "run": k,
                            "seed": self.run_seed(pid, alg, k),
                            "engine": {**self.engine, **overrides},
                            "backend": backend,
                            "live": dict(self.live),
                            "metrics": self.metrics,
                            "out": self.out,
                        }
                    )
        return out


def build_engine_config(engine: dict[str, Any], seed: int, metrics_cadence: str = "generation") -> EngineConfig:
    data = dict(engine)
    if isinstance(data.get("operators"), dict):
        data["operators"] = OperatorParams(**data["operators"])
    if isinstance(data.get("llm"), dict):
        data["llm"] = LLMConfig(**data["llm"])
    data["seed"] = seed
    data["metrics_every_generation"] = metrics_cadence == "generation"
    return EngineConfig(**data)


def default_oracle_vector(problem: ProblemDefinition) -> np.ndarray:
    if problem.m == 3:
        return tric6_preimage(problem, np.ones(3))
    segments = problem.params["segments"]
    t0, t1 = segments[len(segments) // 2]
    return cpf_preimage(problem, (t0 + t1) / 2.0)


def needs_live(spec: str) -> bool:
    return spec == "live" or spec.startswith("record:")


def make_backend(
    spec: str,
    problem: ProblemDefinition,
    seed: int,
    live: dict[str, Any] | None = None,
    run_dir: Path | None = None,
) -> LLMBackend:
    """Backend from a selector string.

    ``surrogate`` | ``oracle`` | ``oracle:v1,v2,...`` | ``live`` |
    ``replay:PATH`` | ``record:PATH``. ``PATH`` may be a ledger file or an
    experiment output directory holding a matching run.
    """
    kind, _, arg = spec.partition(":")
    if kind == "surrogate":
        return SurrogateBackend(seed=int(arg) if arg else seed)
    if kind == "oracle":
        vector = [float(v) for v in arg.split(",")] if arg else default_oracle_vector(problem)
        if len(vector) != problem.n:
            raise ExperimentError(f"oracle vector has {len(vector)} values, {problem.name} needs {problem.n}")
        return OracleBackend(vector)
    if kind == "live":
        return LiveBackend.from_env(**(live or {}))
    if kind in ("replay", "record"):
        if not arg:
            raise ExperimentError(f"{kind} backend needs a path")
        ledger_path = Path(arg)
        if ledger_path.is_dir() and (ledger_path / "ledger.jsonl").exists():
            ledger_path = ledger_path / "ledger.jsonl"
        elif ledger_path.is_dir():
            if run_dir is None:
                raise ExperimentError("directory replay needs a run location")
            ledger_path = ledger_path / run_dir / "ledger.jsonl"
        if not ledger_path.exists():
            raise ExperimentError(f"ledger not found: {ledger_path}")
        fallback = LiveBackend.from_env(**(live or {})) if kind == "record" else None
        return ReplayBackend(ledger_path, fallback=fallback)
    raise ExperimentError(f"unknown backend {spec!r}")


def _f(value: float) -> str:
    return repr(float(value))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_population(path: Path, result: RunResult, problem: ProblemDefinition) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [f"x{i + 1}" for i in range(problem.n)] + [f"f{j + 1}" for j in range(problem.m)] + ["cv", "provenance"]
        )
        for s in result.pop1:
            writer.writerow([_f(v) for v in s.decs] + [_f(v) for v in s.objs] + [_f(s.cv), s.provenance])


class _HistoryWriter:
    def __init__(self, path: Path):
        self._fh = path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(HISTORY_COLUMNS)

    def __call__(self, rec: GenerationRecord) -> None:
        self._writer.writerow(
            [rec.generation, rec.fe, rec.feasible_count, _f(rec.best_cv), _f(rec.igd), _f(rec.hv)]
        )

    def close(self) -> None:
        self._fh.close()


def run_relpath(problem: str, algorithm: str, index: int) -> Path:
    return Path(problem) / algorithm / f"run_{index:02d}"


def execute_task(task: dict[str, Any], out_dir: Path | None = None) -> Path:
    """Execute one run and write its directory; returns the directory."""
    problem = make_problem(task["problem"], task.get("n"), **({"delta": task["delta"]} if task.get("delta") is not None else {}))
    config = build_engine_config(task["engine"], task["seed"], task.get("metrics", "generation"))
    rel = run_relpath(problem.name, task["algorithm"], task["run"])
    backend = None
    if config.n_llm > 0:
        backend = make_backend(task["backend"], problem, task["seed"], task.get("live"), rel)
    run_dir = Path(out_dir) if out_dir is not None else Path(task["out"]) / rel
    run_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    ledger = Ledger(run_dir / "ledger.jsonl")
    history = _HistoryWriter(run_dir / "history.csv")
    try:
        result = run(problem, config, backend, observer=history, ledger=ledger)
    finally:
        history.close()
    write_population(run_dir / "final_population.csv", result, problem)
    final = result.final
    metrics_doc = {
        "igd": None if final is None or math.isnan(final.igd) else final.igd,
        "hv": None if final is None or math.isnan(final.hv) else final.hv,
        "feasible_count": len(result.pop1.feasible()),
        "normalization": None
        if final is None
        else {"ideal": final.ideal, "nadir": final.nadir, "reference_point": final.reference_point},
    }
    (run_dir / "metrics.json").write_text(json.dumps(metrics_doc, indent=2, sort_keys=True) + "\n")
    manifest = {
        **result.manifest,
        "algorithm": task["algorithm"],
        "run": task["run"],
        "task": task,
        "evaluations": result.budget.calls,
        "generations": len(result.history),
        "llm_calls": len(result.ledger),
        "timestamps": {"start": started, "end": time.time()},
        "checksums": {
            name: _sha256(run_dir / name)
            for name in ("final_population.csv", "history.csv", "metrics.json", "ledger.jsonl")
        },
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return run_dir


def cmd_run(config: ExperimentConfig, jobs: int | None = None) -> list[Path]:
    """Execute every (problem, algorithm, run) task of ``config``."""
    tasks = config.tasks()
    if any(needs_live(t["backend"]) for t in tasks) and not os.environ.get(API_KEY_ENV, "").strip():
        live_algs = sorted({t["algorithm"] for t in tasks if needs_live(t["backend"])})
        raise ConfigurationError(f"{API_KEY_ENV} is not set but {', '.join(live_algs)} use the live backend")
    # Live LLM calls are not pure, so their order must not depend on scheduling.
    jobs = jobs or config.jobs or os.cpu_count() or 1
    Path(config.out).mkdir(parents=True, exist_ok=True)
    if jobs <= 1 or len(tasks) == 1:
        return [execute_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(execute_task, tasks))


def find_runs(roots: Iterable[str | Path]) -> list[Path]:
    found = []
    for root in roots:
        root = Path(root)
        if (root / "manifest.json").exists():
            found.append(root)
        else:
            found.extend(p.parent for p in sorted(root.rglob("manifest.json")))
    return sorted(set(found))


@dataclass
class Comparison:
    igd: stats.ResultsTable
    hv: stats.ResultsTable
    friedman: dict[str, Any]
    algorithms: list[str]
    problems: list[str]


def _collect(run_dirs: Sequence[Path]) -> dict[str, dict[str, list[tuple[int, dict]]]]:
    table: dict[str, dict[str, list[tuple[int, dict]]]] = defaultdict(lambda: defaultdict(list))
    for d in run_dirs:
        manifest = json.loads((d / "manifest.json").read_text())
        metrics_doc = json.loads((d / "metrics.json").read_text())
        table[manifest["problem"]["name"]][manifest["algorithm"]].append((manifest["run"], metrics_doc))
    return table


def _values(entries: list[tuple[int, dict]], key: str) -> list[float]:
    return [math.nan if m[key] is None else float(m[key]) for _, m in sorted(entries, key=lambda e: e[0])]


def cmd_compare(roots: Iterable[str | Path], baseline: str, out: str | Path | None = None, alpha: float = 0.05) -> Comparison:
    """IGD/HV tables with Wilcoxon marks against ``baseline`` plus Friedman ranks."""
    run_dirs = find_runs(roots)
    if not run_dirs:
        raise ExperimentError("no run directories found")
    table = _collect(run_dirs)
    problems = sorted(table)
    algorithms = sorted({alg for per in table.values() for alg in per})
    if baseline not in algorithms:
        raise ExperimentError(f"baseline {baseline!r} not among algorithms {algorithms}")
    if len(algorithms) < 2:
        raise ExperimentError("need at least two algorithms to compare")
    for pid in problems:
        missing = [alg for alg in algorithms if alg not in table[pid]]
        if missing:
            raise ExperimentError(f"problem {pid} has no runs for algorithm(s) {', '.join(missing)}")
    columns = [a for a in algorithms if a != baseline] + [baseline]

    def build(key: str, smaller: bool) -> tuple[stats.ResultsTable, np.ndarray]:
        cells: dict[str, dict[str, stats.ComparisonCell]] = {}
        means = np.zeros((len(columns), len(problems)))
        for j, pid in enumerate(problems):
            base_vals = _values(table[pid][baseline], key)
            cells[pid] = {}
            for i, alg in enumerate(columns):
                vals = _values(table[pid][alg], key)
                mark = None
                if alg != baseline:
                    mark = stats.wilcoxon_rank_sum(vals, base_vals, alpha, smaller_is_better=smaller).mark
                cells[pid][alg] = stats.summarize(vals, mark)
                means[i, j] = cells[pid][alg].mean
        return stats.format_results_table(cells, columns, baseline, smaller_is_better=smaller), means

    igd_table, igd_means = build("igd", True)
    hv_table, hv_means = build("hv", False)
    friedman: dict[str, Any] = {"algorithms": columns, "problems": problems}
    if len(problems) >= 2:
        for name, means, smaller in (("igd", igd_means, True), ("hv", hv_means, False)):
            res = stats.friedman_ranks(means, smaller_is_better=smaller)
            friedman[name] = {
                "mean_ranks": dict(zip(columns, [float(r) for r in res.mean_ranks])),
                "chi2": res.chi2,
                "p": res.p,
            }
    else:
        friedman["note"] = "Friedman ranking needs at least two problems"
    comparison = Comparison(igd_table, hv_table, friedman, columns, problems)
    if out is not None:
        write_comparison(comparison, Path(out))
    return comparison


def write_comparison(comparison: Comparison, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "igd.csv").write_text(comparison.igd.csv)
    (out / "igd.md").write_text(comparison.igd.text)
    (out / "hv.csv").write_text(comparison.hv.csv)
    (out / "hv.md").write_text(comparison.hv.text)
    (out / "friedman.json").write_text(json.dumps(comparison.friedman, indent=2, sort_keys=True) + "\n")
    lines = ["metric,algorithm,mean_rank"]
    for metric in ("igd", "hv"):
        for alg, rank in comparison.friedman.get(metric, {}).get("mean_ranks", {}).items():
            lines.append(f"{metric},{alg},{rank!r}")
    (out / "friedman.csv").write_text("\n".join(lines) + "\n")


def load_problem(run_dir: Path) -> ProblemDefinition:
    manifest = json.loads((run_dir / "manifest.json").read_text())
    info = manifest["problem"]
    return make_problem(info["name"], info["n"], delta=info["delta"])


def read_population(path: Path, problem: ProblemDefinition) -> tuple[np.ndarray, np.ndarray]:
    """Objectives and CVs from a final-population CSV."""
    with path.open(encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    n, m = problem.n, problem.m
    objs = np.array([[float(v) for v in r[n : n + m]] for r in rows]).reshape(-1, m)
    cvs = np.array([float(r[n + m]) for r in rows])
    return objs, cvs


def _svg(problem: ProblemDefinition, points: np.ndarray, warning: str | None) -> str:
    width, height, pad = 480, 400, 40
    curves = []
    for t0, t1 in problem.params["segments"]:
        t = np.linspace(t0, t1, 100)
        curves.append(np.column_stack([t, [_curve_value(problem, v) for v in t]]))
    allpts = np.vstack(curves + ([points] if len(points) else []))
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def xy(p: np.ndarray) -> tuple[float, float]:
        x = pad + (p[0] - lo[0]) / span[0] * (width - 2 * pad)
        y = height - pad - (p[1] - lo[1]) / span[1] * (height - 2 * pad)
        return round(x, 2), round(y, 2)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="20" font-size="14">{problem.name}: final feasible population vs. constrained Pareto front</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 8}" font-size="12">f1</text>',
        f'<text x="8" y="{height / 2}" font-size="12">f2</text>',
    ]
    for curve in curves:
        coords = " ".join(f"{x},{y}" for x, y in map(xy, curve))
        parts.append(f'<polyline class="cpf" fill="none" stroke="gray" stroke-width="2" points="{coords}"/>')
    for p in points:
        x, y = xy(p)
        parts.append(f'<circle class="population" cx="{x}" cy="{y}" r="3" fill="crimson"/>')
    if warning:
        parts.append(f'<text class="warning" x="{pad}" y="{pad}" font-size="12" fill="darkred">{warning}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _curve_value(problem: ProblemDefinition, t: float) -> float:
    pid = problem.params["id"]
    if pid in ("TRIC3", "TRIC5"):
        return problem.params["e"] - t
    if pid == "TRIC7":
        g = 1.0 + problem.params["r2"]
        return g - math.sqrt(g * t)
    return 1.0 - math.sqrt(t)


def cmd_front(run_dir: str | Path) -> dict[str, Any]:
    """Write ``front.csv`` (feasible objectives) and, for two objectives, ``front.svg``."""
    run_dir = Path(run_dir)
    problem = load_problem(run_dir)
    objs, cvs = read_population(run_dir / "final_population.csv", problem)
    feasible = objs[cvs == 0.0]
    with (run_dir / "front.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j + 1}" for j in range(problem.m)])
        writer.writerows([[_f(v) for v in row] for row in feasible])
    result: dict[str, Any] = {"csv": run_dir / "front.csv", "svg": None, "notice": None}
    if problem.m != 2:
        result["notice"] = f"{problem.name} has {problem.m} objectives; SVG skipped, CSV only"
        return result
    warning = None if len(feasible) else "no feasible solution in the final population"
    (run_dir / "front.svg").write_text(_svg(problem, feasible, warning))
    result["svg"] = run_dir / "front.svg"
    result["notice"] = warning
    return result


def list_problems(n: int | None = None) -> str:
    from cmoforge.problems import PROBLEM_IDS, describe

    blocks = []
    for pid in PROBLEM_IDS:
        try:
            info = describe(make_problem(pid, n))
        except ValueError as exc:
            blocks.append(f"{pid}: unavailable ({exc})")
            continue
        params = ", ".join(f"{k}={v}" for k, v in info["params"].items())
        blocks.append(
            f"{info['id']}: n={info['n']} m={info['m']} q={info['q']} l={info['l']} "
            f"(equalities={info['equalities']}, delta={info['delta']:g})\n"
            f"  parameters: {params}\n"
            f"  witness: {info['witness']}"
        )
    return "\n".join(blocks) + "\n"


def replay_verify(run_dir: str | Path) -> dict[str, bool]:
    """Re-run a recorded run from its manifest and ledger and diff the CSVs."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    task = dict(manifest["task"])
    task["backend"] = f"replay:{run_dir / 'ledger.jsonl'}"
    with tempfile.TemporaryDirectory() as tmp:
        rerun = execute_task(task, out_dir=Path(tmp) / "run")
        verdict = {
            name: (run_dir / name).read_bytes() == (rerun / name).read_bytes()
            for name in ("final_population.csv", "history.csv")
        }
    return verdict
