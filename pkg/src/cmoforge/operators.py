"""Real-coded GA variation: SBX, polynomial mutation, binary tournament."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OperatorParams:
    """SBX and polynomial mutation settings.

    ``pm=None`` means ``1/n`` for the problem at hand.
    """

    pc: float = 1.0
    eta_c: float = 20.0
    pm: float | None = None
    eta_m: float = 20.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.pc <= 1.0:
            raise ValueError("pc must lie in [0, 1]")
        if self.pm is not None and not 0.0 <= self.pm <= 1.0:
            raise ValueError("pm must lie in [0, 1]")
        if self.eta_c <= 0 or self.eta_m <= 0:
            raise ValueError("distribution indices must be positive")

    def mutation_rate(self, n: int) -> float:
        return 1.0 / n if self.pm is None else self.pm


def spread_factor(u, eta_c: float):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(
            u <= 0.5,
            (2.0 * u) ** (1.0 / (eta_c + 1.0)),
            (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta_c + 1.0)),
        )


def sbx_children(p1, p2, beta):
    """Spread-factor recombination without clamping."""
    c1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
    c2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
    return c1, c2


def sbx_crossover(
    p1: np.ndarray,
    p2: np.ndarray,
    params: OperatorParams,
    bounds: tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover.

    Accepts a single pair of vectors or two ``(k, n)`` stacks of parents, in
    which case every row pair is recombined independently.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError("parents must have equal shape")
    lower, upper = bounds
    u = rng.random(p1.shape)
    recombine = rng.random(p1.shape) < 0.5
    pairs = p1.shape[0] if p1.ndim == 2 else 1
    active = rng.random(pairs) < params.pc
    if p1.ndim == 2:
        active = active[:, None]
    else:
        active = active[0]
    beta = np.where(recombine & active, spread_factor(u, params.eta_c), 1.0)
    c1, c2 = sbx_children(p1, p2, beta)
    # beta == 1 reproduces the parents only up to rounding, so copy them outright.
    keep = beta == 1.0
    c1 = np.where(keep, p1, c1)
    c2 = np.where(keep, p2, c2)
    return np.clip(c1, lower, upper), np.clip(c2, lower, upper)


def mutation_shift(u, eta_m: float):
    u = np.asarray(u, dtype=float)
    return np.where(
        u < 0.5,
        (2.0 * u) ** (1.0 / (eta_m + 1.0)) - 1.0,
        1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta_m + 1.0)),
    )


def polynomial_mutation(
    decs: np.ndarray,
    params: OperatorParams,
    bounds: tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator,
) -> np.ndarray:
    """Polynomial mutation of one vector or a ``(k, n)`` stack, clamped to bounds."""
    x = np.asarray(decs, dtype=float)
    lower, upper = bounds
    pm = params.mutation_rate(x.shape[-1])
    mask = rng.random(x.shape) < pm
    u = rng.random(x.shape)
    shift = np.where(mask, mutation_shift(u, params.eta_m), 0.0)
    return np.clip(x + shift * (upper - lower), lower, upper)


def tournament_indices(fitness: Sequence[float], k: int, rng: np.random.Generator) -> np.ndarray:
    fitness = np.asarray(fitness, dtype=float)
    size = len(fitness)
    if size < 2:
        raise ValueError("binary tournament needs at least two candidates")
    i = rng.integers(0, size, k)
    j = rng.integers(0, size - 1, k)
    j = j + (j >= i)
    coin = rng.random(k) < 0.5
    fi, fj = fitness[i], fitness[j]
    pick_i = (fi < fj) | ((fi == fj) & coin)
    return np.where(pick_i, i, j)


def binary_tournament(pop: Sequence, fitness: Sequence[float], k: int, rng: np.random.Generator) -> list:
    """``k`` independent binary tournaments; smaller fitness wins."""
    if len(pop) == 0:
        raise ValueError("empty population")
    if len(pop) != len(fitness):
        raise ValueError("fitness must align with the population")
    return [pop[i] for i in tournament_indices(fitness, k, rng)]
