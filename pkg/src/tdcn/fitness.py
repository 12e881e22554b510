"""Per-candidate evaluation records and the evaluator interface."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Protocol

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitnessReport:
    accuracy: float | None
    auc: float | None = None
    kappa: float | None = None
    params: int = 0
    seconds: float = 0.0
    fold: int | None = None
    epochs: int = 0
    error: str | None = None

    @property
    def fitness(self) -> float:
        # search fitness is validation accuracy; failures score 0
        return 0.0 if self.accuracy is None else float(self.accuracy)

    def metrics(self) -> dict:
        return {"accuracy": self.accuracy, "auc": self.auc, "kappa": self.kappa}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def failed(cls, error: str, params: int = 0) -> "FitnessReport":
        return cls(accuracy=0.0, params=params, error=error)


class Evaluator(Protocol):
    """Anything that can turn an architecture into a fitness report.

    ``fit`` returns the trained model state (or ``None`` for evaluators
    that do not train) together with the report. ``seed`` makes every
    evaluation reproducible independent of scheduling order.
    """

    def fit(self, arch, *, epochs: int, seed: int,
            patience: int | None = None) -> tuple[Any, FitnessReport]:
        ...


def safe_fit(evaluator: Evaluator, arch, **kwargs) -> tuple[Any, FitnessReport]:
    """Run ``evaluator.fit`` and turn any failure into a zero-fitness report."""
    try:
        return evaluator.fit(arch, **kwargs)
    except Exception as exc:  # noqa: BLE001 - a bad candidate must not end the search
        log.warning("evaluation failed for %s: %s", arch, exc)
        return None, FitnessReport.failed(f"{type(exc).__name__}: {exc}")
