"""Constrained multiobjective evolutionary optimization with LLM-aided offspring."""

from cmoforge.core import (
    BudgetCounter,
    BudgetExhausted,
    Population,
    ProblemDefinition,
    RandomSource,
    Solution,
    cdp_compare,
    constraint_violation,
    evaluate,
    pareto_dominates,
)
from cmoforge.problems import make_problem, sample_cpf

__version__ = "0.1.0"

__all__ = [
    "BudgetCounter",
    "BudgetExhausted",
    "Population",
    "ProblemDefinition",
    "RandomSource",
    "Solution",
    "cdp_compare",
    "constraint_violation",
    "evaluate",
    "make_problem",
    "pareto_dominates",
    "sample_cpf",
]
