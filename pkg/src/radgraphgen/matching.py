"""Bipartite matching between entity tokens and ground-truth entities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import RadiologyGraph


class MatchError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    assignment: tuple[tuple[int, int], ...]  # (token index, gt entity index), sorted by gt index
    total_cost: float

    def token_for_entity(self) -> dict[int, int]:
        return {g: t for t, g in self.assignment}


def solve_assignment(cost: np.ndarray) -> MatchResult:
    """Minimum-cost injective assignment of rows to columns (rows >= cols)."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return MatchResult((), 0.0)
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted(((int(r), int(c)) for r, c in zip(rows, cols)), key=lambda p: p[1]))
    return MatchResult(pairs, float(sum(cost[r, c] for r, c in pairs)))


def match_cost(class_probs: np.ndarray, uncertainty_probs: np.ndarray, gt: RadiologyGraph) -> np.ndarray:
    """cost[i, j] = -P_i(class_j) - P_i(uncertainty_j), shape (N, |gt|)."""
    cls = np.array([e.class_id for e in gt.entities], dtype=np.int64)
    unc = np.array([e.uncertainty.index for e in gt.entities], dtype=np.int64)
    return -np.asarray(class_probs)[:, cls] - np.asarray(uncertainty_probs)[:, unc]


def hungarian_match(class_probs, uncertainty_probs, gt: RadiologyGraph) -> MatchResult:
    n = np.asarray(class_probs).shape[0]
    if len(gt.entities) > n:
        raise MatchError(f"{len(gt.entities)} ground-truth entities exceed {n} entity tokens")
    if not gt.entities:
        return MatchResult((), 0.0)
    return solve_assignment(match_cost(class_probs, uncertainty_probs, gt))
