"""Instant, deterministic fitness landscapes for testing the searches.

A :class:`SurrogateEvaluator` exposes the same ``fit`` interface as the
training evaluator, so a search cannot tell the two apart.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .arch import Architecture, LayerSpec, core_layer_count, param_count, serialize
from .fitness import FitnessReport

LANDSCAPES = ("prefer-specific-layer", "prefer-depth", "hash-rugged")


class UnknownLandscape(ValueError):
    pass


@dataclass(frozen=True)
class SurrogateSpec:
    landscape: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.landscape not in LANDSCAPES:
            raise UnknownLandscape(f"unknown landscape {self.landscape!r}; choose from {LANDSCAPES}")
        if self.landscape == "prefer-specific-layer" and "target" not in self.params:
            raise ValueError("prefer-specific-layer needs params['target'] (a layer list)")

    @property
    def target(self) -> tuple[LayerSpec, ...]:
        raw = self.params["target"]
        return tuple(l if isinstance(l, LayerSpec) else LayerSpec.from_dict(l) for l in raw)


def surrogate_value(spec: SurrogateSpec, arch: Architecture) -> float:
    if spec.landscape == "prefer-specific-layer":
        # position-wise agreement with the designated layer sequence
        target, layers = spec.target, arch.layers
        hits = sum(a == b for a, b in zip(layers, target))
        return hits / max(len(layers), len(target))
    if spec.landscape == "prefer-depth":
        want = int(spec.params.get("depth", 4))
        have = core_layer_count(arch)
        return min(have, want) / max(have, want) if have else 0.0
    digest = hashlib.sha256(f"{spec.seed}:".encode() + serialize(arch).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def surrogate_fitness(spec: SurrogateSpec, arch: Architecture) -> FitnessReport:
    value = surrogate_value(spec, arch)
    return FitnessReport(accuracy=value, auc=value, kappa=value, params=param_count(arch))


class SurrogateEvaluator:
    def __init__(self, spec: SurrogateSpec):
        self.spec = spec
        self.calls = 0

    def fit(self, arch, *, epochs: int = 1, seed: int = 0, patience: int | None = None):
        self.calls += 1
        return None, surrogate_fitness(self.spec, arch)

    def __call__(self, arch) -> FitnessReport:
        return self.fit(arch)[1]
