"""IGD and hypervolume with feasibility gating.

Both indicators only look at feasible solutions and return NaN when there are
none. IGD uses raw objectives; hypervolume works in the space normalized by
the analytic front's ideal and nadir points, with reference point 1.1 per
objective.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from cmoforge.core import ProblemDefinition, Solution

HV_REFERENCE = 1.1
DEFAULT_MC_SAMPLES = 1_000_000


@dataclass(frozen=True)
class MetricReport:
    igd: float
    hv: float
    feasible_count: int
    ideal: tuple[float, ...]
    nadir: tuple[float, ...]
    reference_point: tuple[float, ...]
    hv_stderr: float = 0.0


def _feasible_objs(pop: Sequence[Solution]) -> np.ndarray:
    objs = [s.objs for s in pop if s.feasible]
    return np.array(objs, dtype=float) if objs else np.empty((0, 0))


def igd_points(reference: np.ndarray, objs: np.ndarray) -> float:
    """Mean distance from each reference point to its nearest objective vector."""
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    objs = np.atleast_2d(np.asarray(objs, dtype=float))
    if reference.shape[1] != objs.shape[1]:
        raise ValueError(f"dimension mismatch: reference has {reference.shape[1]}, population {objs.shape[1]}")
    diff = reference[:, None, :] - objs[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return float(dist.min(axis=1).mean())


def igd(reference: np.ndarray, pop: Sequence[Solution]) -> float:
    reference = np.asarray(reference, dtype=float)
    if reference.size == 0:
        raise ValueError("reference set is empty")
    objs = _feasible_objs(pop)
    if len(objs) == 0:
        return math.nan
    return igd_points(reference, objs)


def normalize(objs: np.ndarray, ideal: Sequence[float], nadir: Sequence[float]) -> np.ndarray:
    ideal = np.asarray(ideal, dtype=float)
    nadir = np.asarray(nadir, dtype=float)
    span = nadir - ideal
    if np.any(span <= 0):
        raise ValueError("nadir must exceed ideal in every component")
    return (np.asarray(objs, dtype=float) - ideal) / span


def _hv2d(points: np.ndarray, ref: np.ndarray) -> float:
    if len(points) == 0:
        return 0.0
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]
    volume = 0.0
    best_f2 = ref[1]
    for f1, f2 in pts:
        if f2 < best_f2:
            volume += (ref[0] - f1) * (best_f2 - f2)
            best_f2 = f2
    return volume


def _hv3d(points: np.ndarray, ref: np.ndarray) -> float:
    pts = points[np.argsort(points[:, 2], kind="stable")]
    levels = np.append(pts[:, 2], ref[2])
    volume = 0.0
    for i in range(len(pts)):
        depth = levels[i + 1] - levels[i]
        if depth > 0:
            volume += depth * _hv2d(pts[: i + 1, :2], ref[:2])
    return volume


def hv_monte_carlo(points: np.ndarray, ref: np.ndarray, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Dominated volume estimate and its standard error.

    Samples the box spanned by the componentwise minimum of ``points`` and the
    reference point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.asarray(ref, dtype=float)
    points = points[np.all(points < ref, axis=1)]
    if len(points) == 0:
        return 0.0, 0.0
    low = points.min(axis=0)
    box = float(np.prod(ref - low))
    hits = 0
    chunk = 200_000
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        x = low + rng.random((size, len(ref))) * (ref - low)
        covered = np.zeros(size, dtype=bool)
        for p in points:
            covered |= np.all(x >= p, axis=1)
        hits += int(covered.sum())
        done += size
    frac = hits / samples
    return frac * box, box * math.sqrt(frac * (1.0 - frac) / samples)


def hypervolume_points(
    points: np.ndarray,
    reference_point: Sequence[float],
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Hypervolume of ``points`` (minimization) and its standard error.

    Exact for two and three objectives, Monte Carlo beyond that. Points that
    do not strictly dominate the reference point are ignored.
    """
    ref = np.asarray(reference_point, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        return 0.0, 0.0
    if points.shape[1] != len(ref):
        raise ValueError("reference point dimension mismatch")
    points = points[np.all(points < ref, axis=1)]
    if len(points) == 0:
        return 0.0, 0.0
    m = len(ref)
    if m == 2:
        return float(_hv2d(points, ref)), 0.0
    if m == 3:
        return float(_hv3d(points, ref)), 0.0
    return hv_monte_carlo(points, ref, mc_samples, rng if rng is not None else np.random.default_rng(0))


def hypervolume(
    pop: Sequence[Solution],
    reference_point: Sequence[float],
    mc_samples: int = DEFAULT_MC_SAMPLES,
    ideal: Sequence[float] | None = None,
    nadir: Sequence[float] | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Hypervolume of the feasible members of ``pop``; NaN if there are none.

    ``reference_point`` is in the normalized space when ``ideal``/``nadir`` are
    given, otherwise objectives are used as they are.
    """
    objs = _feasible_objs(pop)
    if len(objs) == 0:
        return math.nan
    if ideal is not None and nadir is not None:
        objs = normalize(objs, ideal, nadir)
    return hypervolume_points(objs, reference_point, mc_samples, rng)[0]


def front_bounds(problem: ProblemDefinition) -> tuple[np.ndarray, np.ndarray]:
    """Ideal and nadir of the problem's analytic front."""
    try:
        return np.asarray(problem.params["ideal"], float), np.asarray(problem.params["nadir"], float)
    except KeyError:
        raise ValueError(f"{problem.name} does not publish front extremes") from None


def report(
    pop: Sequence[Solution],
    problem: ProblemDefinition,
    reference: np.ndarray,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng: np.random.Generator | None = None,
) -> MetricReport:
    ideal, nadir = front_bounds(problem)
    ref_point = np.full(problem.m, HV_REFERENCE)
    feasible = _feasible_objs(pop)
    if len(feasible) == 0:
        value_igd = value_hv = math.nan
        stderr = math.nan
    else:
        value_igd = igd_points(reference, feasible)
        value_hv, stderr = hypervolume_points(normalize(feasible, ideal, nadir), ref_point, mc_samples, rng)
    return MetricReport(
        igd=value_igd,
        hv=value_hv,
        feasible_count=len(feasible),
        ideal=tuple(ideal.tolist()),
        nadir=tuple(nadir.tolist()),
        reference_point=tuple(ref_point.tolist()),
        hv_stderr=stderr,
    )
