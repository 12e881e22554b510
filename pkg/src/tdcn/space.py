"""Search-space cardinalities, evaluation budgets and the success filter.

All counts are exact Python integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .fitness import FitnessReport

#: per-kind hyperparameter permutations for the ant colony vocabulary,
#: aligned with ``ACO_KINDS``
ACO_KINDS = ("C2D", "MP", "BN", "DE")
ACO_PERMUTATIONS = (9, 2, 1, 4)

#: value printed alongside the 12 C2D | BN, MP, 3 DE | BN worked example;
#: direct evaluation of the sum-of-powers form gives ACO_EXAMPLE_DERIVED
ACO_EXAMPLE_COUNTS = (12, 1, 15, 3)
ACO_EXAMPLE_PUBLISHED = 282_429_569_261
ACO_EXAMPLE_DERIVED = 282_429_536_548


@dataclass(frozen=True)
class SpaceSpec:
    t_l: int
    lower: int
    upper: int
    permutations: tuple[int, ...] = ACO_PERMUTATIONS

    def __post_init__(self):
        if self.t_l < 1:
            raise ValueError("t_l must be >= 1")
        if not 1 <= self.lower <= self.upper:
            raise ValueError("need 1 <= lower <= upper")
        if any(p < 1 for p in self.permutations):
            raise ValueError("permutation counts must be >= 1")

    def cardinality(self) -> int:
        return unconstrained_cardinality(self.t_l, self.lower, self.upper)


def unconstrained_cardinality(t_l: int, lower: int, upper: int) -> int:
    """Number of layer sequences with length in ``[lower, upper]``."""
    SpaceSpec(t_l, lower, upper)
    return sum(t_l ** b for b in range(lower, upper + 1))


def aco_cardinality(num_c2d: int, num_mp: int, num_bn: int, num_de: int,
                    permutations: Sequence[int] = ACO_PERMUTATIONS,
                    form: str = "sum") -> int:
    """Ant-colony search-space size for a model with the given layer counts.

    ``form="sum"`` adds the per-kind powers ``P_i ** n_i``; ``form="product"``
    multiplies them, which is the count of joint hyperparameter settings.
    """
    counts = (num_c2d, num_mp, num_bn, num_de)
    if any(n < 0 for n in counts):
        raise ValueError("layer counts must be >= 0")
    if len(permutations) != 4:
        raise ValueError("expected four permutation counts (C2D, MP, BN, DE)")
    terms = [p ** n for p, n in zip(permutations, counts)]
    if form == "sum":
        return sum(terms)
    if form == "product":
        out = 1
        for t in terms:
            out *= t
        return out
    raise ValueError(f"unknown form {form!r}")


def evaluation_budget_aco(ants: int, depth: int) -> int:
    if ants < 1 or depth < 1:
        raise ValueError("ants and depth must be >= 1")
    return ants * depth


def evaluation_budget_pso(runs: int, iterations: int, swarm: int) -> int:
    if min(runs, iterations, swarm) < 1:
        raise ValueError("runs, iterations and swarm size must be >= 1")
    return runs * iterations * swarm


METRICS = ("accuracy", "auc_roc", "cohens_kappa")


@dataclass(frozen=True)
class SearchGoal:
    """Target ``goal`` on ``metric`` with tolerance ``epsilon``.

    Accuracy goals are expressed in percentage points, AUC and kappa on
    their natural scale.
    """

    metric: str
    goal: float
    epsilon: float

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    @classmethod
    def default(cls, metric: str) -> "SearchGoal":
        return DEFAULT_GOALS[metric]

    def value(self, report: FitnessReport) -> float | None:
        if self.metric == "accuracy":
            return None if report.accuracy is None else 100.0 * report.accuracy
        if self.metric == "auc_roc":
            return report.auc
        return report.kappa

    def threshold(self) -> float:
        return self.goal - self.epsilon


DEFAULT_GOALS = {
    "accuracy": SearchGoal("accuracy", 74.8, 1.5),
    "auc_roc": SearchGoal("auc_roc", 0.91, 0.2),
    "cohens_kappa": SearchGoal("cohens_kappa", 0.776, 0.02),
}


class MissingMetricError(KeyError):
    pass


def success_filter(candidates, goal: SearchGoal) -> list:
    """Keep ``(architecture, report)`` pairs scoring at least ``goal - epsilon``.

    Order is preserved. A candidate without a value for the goal metric
    raises :class:`MissingMetricError`.
    """
    kept = []
    bound = goal.threshold()
    for i, (arch, report) in enumerate(candidates):
        value = goal.value(report)
        if value is None:
            raise MissingMetricError(f"candidate {i} ({arch}) has no {goal.metric} value")
        if value >= bound:
            kept.append((arch, report))
    return kept
