"""Offspring-generation prompt: four sections rendered from a solution pool."""

from __future__ import annotations

import hashlib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from cmoforge.core import Solution

PROMPT_VERSION = 1
DEFAULT_PRECISION = 6

TASK_DESCRIPTION = (
    "You are given solutions of a constrained multiobjective optimization problem. "
    "Each solution has decision variables (decs), objective values (objs), and a constraint "
    "violation degree (CV). A solution with CV = 0 is feasible. A solution with smaller CV is "
    "better; among solutions with equal CV, smaller objective values are better."
)
OPERATIONAL_STEPS = (
    "Select two solutions from those provided above and generate one completely new solution "
    "from them. The new solution must contain exactly {n} values; {bounds_clause}."
)
OUTPUT_FORMAT = (
    "Output only the new decision variables, separated by commas, placed between <start> and "
    "<end> tags. Do not include any additional explanation."
)
# Batched variant: several solutions per call, each in its own tag pair.
OPERATIONAL_STEPS_BATCH = (
    "Select two solutions from those provided above and generate {count} completely new "
    "solutions from them. Each new solution must contain exactly {n} values; {bounds_clause}."
)
OUTPUT_FORMAT_BATCH = (
    "Output only the new decision variables of each solution, separated by commas, each solution "
    "placed between its own <start> and <end> tags. Do not include any additional explanation."
)

SECTION_NAMES = ("task_description", "input_information", "operational_steps", "output_format")


class EmptyPool(ValueError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    sections: Mapping[str, str]
    rendered: str
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.rendered.encode()).hexdigest()


def fmt(value: float, precision: int = DEFAULT_PRECISION) -> str:
    return f"{float(value):.{precision}g}"


def _vector(values: Sequence[float], precision: int) -> str:
    return "[" + ", ".join(fmt(v, precision) for v in values) + "]"


def solution_line(sol: Solution, precision: int = DEFAULT_PRECISION) -> str:
    return f"decs: {_vector(sol.decs, precision)}, objs: {_vector(sol.objs, precision)}, CV: {fmt(sol.cv, precision)}"


def _bounds_clause(lower: np.ndarray, upper: np.ndarray, precision: int) -> str:
    if np.all(lower == lower[0]) and np.all(upper == upper[0]):
        return f"value i must lie within [{fmt(lower[0], precision)}, {fmt(upper[0], precision)}]"
    return (
        f"value i must lie within [lb_i, ub_i], where lb = {_vector(lower, precision)} "
        f"and ub = {_vector(upper, precision)}"
    )


def build_prompt(
    feasible: Sequence[Solution],
    infeasible: Sequence[Solution],
    n: int,
    lower: Sequence[float],
    upper: Sequence[float],
    precision: int = DEFAULT_PRECISION,
    meta: Mapping[str, Any] | None = None,
    count: int = 1,
) -> PromptBundle:
    """Render the offspring prompt for a partitioned pool.

    Feasible solutions are listed first; an empty list renders as ``none``.
    ``meta`` is carried along but never rendered, so the text depends only on
    the pool, the precision and the problem's dimension and bounds.

    Raises:
        EmptyPool: if both lists are empty.
    """
    if not feasible and not infeasible:
        raise EmptyPool("prompt needs at least one solution")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)

    def block(sols: Sequence[Solution]) -> str:
        return "\n".join(solution_line(s, precision) for s in sols) if sols else "none"

    bounds_clause = _bounds_clause(lower, upper, precision)
    if count == 1:
        steps = OPERATIONAL_STEPS.format(n=n, bounds_clause=bounds_clause)
        output = OUTPUT_FORMAT
    else:
        steps = OPERATIONAL_STEPS_BATCH.format(n=n, count=count, bounds_clause=bounds_clause)
        output = OUTPUT_FORMAT_BATCH
    sections = {
        "task_description": TASK_DESCRIPTION,
        "input_information": f"Feasible solutions:\n{block(feasible)}\nInfeasible solutions:\n{block(infeasible)}",
        "operational_steps": steps,
        "output_format": output,
    }
    rendered = "\n\n".join(sections[name] for name in SECTION_NAMES)
    pool_digest = hashlib.sha256(sections["input_information"].encode()).hexdigest()[:16]
    full_meta = {"prompt_version": PROMPT_VERSION, "pool_digest": pool_digest, **(meta or {})}
    return PromptBundle(sections=sections, rendered=rendered, meta=full_meta)
