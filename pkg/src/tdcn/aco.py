"""Ant colony architecture search over a lazily grown, depth-indexed layer graph.

Ants start at a single input node. Whenever an ant reaches a node, every
legal successor layer is attached to it as a neighbor (edges start at
``tau0``). Selection follows the ant colony system rule: with probability
``q0`` take the strongest edge, otherwise sample edges in proportion to
their pheromone. Each step is followed by a local update that pulls the
edge back toward ``tau0``; after all ants of a depth have been evaluated
the best one reinforces its path with its validation accuracy.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from .arch import Architecture, LayerKind, LayerSpec, POOLING, validate
from .fitness import Evaluator, FitnessReport, safe_fit

log = logging.getLogger(__name__)

CONV, DENSE = "conv", "dense"


@dataclass(frozen=True)
class AcoConfig:
    ants: int = 16
    depth: int = 32
    image_side: int = 64
    epochs_per_eval: int = 10
    q0: float = 0.5
    rho: float = 0.1
    tau0: float = 0.1
    seed: int = 0
    conv_filters: tuple[int, ...] = (16, 32, 64)
    conv_kernels: tuple[int, ...] = (3, 5, 7)
    pool_sizes: tuple[int, ...] = (2, 3)
    dense_units: tuple[int, ...] = (64, 128, 256, 512)
    batch_norm: bool = True
    jobs: int = 1

    def __post_init__(self):
        for name in ("conv_filters", "conv_kernels", "pool_sizes", "dense_units"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.ants < 1 or self.depth < 1:
            raise ValueError("ants and depth must be >= 1")
        if self.epochs_per_eval < 1:
            raise ValueError("epochs_per_eval must be >= 1")
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if not (self.conv_filters or self.pool_sizes or self.batch_norm or self.dense_units):
            raise ValueError("empty layer vocabulary")

    def conv_variants(self) -> list[LayerSpec]:
        return [LayerSpec.conv(f, k) for f in self.conv_filters for k in self.conv_kernels]

    def pool_variants(self) -> list[LayerSpec]:
        return [LayerSpec.maxpool(p) for p in self.pool_sizes]

    def dense_variants(self) -> list[LayerSpec]:
        return [LayerSpec.dense(u) for u in self.dense_units]


@dataclass(frozen=True)
class Node:
    id: int
    depth: int
    layer: LayerSpec | None  # None for the input node
    phase: str               # "dense" once a DE lies on the path


class PheromoneGraph:
    def __init__(self, cfg: AcoConfig):
        self.cfg = cfg
        self.nodes: list[Node] = [Node(0, 0, None, CONV)]
        self._index: dict[tuple, int] = {}
        self.tau: dict[tuple[int, int], float] = {}
        self.neighbors: dict[int, list[int]] = {}

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def _successor_layers(self, node: Node) -> list[LayerSpec]:
        cfg = self.cfg
        bn = [LayerSpec.batchnorm()] if cfg.batch_norm else []
        if node.phase == DENSE:
            return cfg.dense_variants() + bn
        return cfg.conv_variants() + cfg.pool_variants() + bn + cfg.dense_variants()

    def _node(self, depth: int, layer: LayerSpec, phase: str) -> int:
        key = (depth, layer, phase)
        if key not in self._index:
            node = Node(len(self.nodes), depth, layer, phase)
            self.nodes.append(node)
            self._index[key] = node.id
        return self._index[key]

    def expand_neighbors(self, node_id: int) -> list[int]:
        """Attach every legal successor of ``node_id``; idempotent."""
        if node_id in self.neighbors:
            return self.neighbors[node_id]
        node = self.nodes[node_id]
        out = []
        for layer in self._successor_layers(node):
            phase = DENSE if node.phase == DENSE or layer.kind is LayerKind.DE else CONV
            child = self._node(node.depth + 1, layer, phase)
            self.tau.setdefault((node_id, child), self.cfg.tau0)
            out.append(child)
        self.neighbors[node_id] = sorted(out)
        return self.neighbors[node_id]

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "depth": n.depth, "phase": n.phase,
                       "layer": None if n.layer is None else n.layer.to_dict()} for n in self.nodes],
            "edges": [{"from": a, "to": b, "tau": t} for (a, b), t in sorted(self.tau.items())],
        }


def acs_select(graph: PheromoneGraph, node_id: int, rng: np.random.Generator,
               q0: float | None = None) -> tuple[int, int]:
    """Pseudo-random proportional choice of the next edge from ``node_id``."""
    q0 = graph.cfg.q0 if q0 is None else q0
    choices = graph.expand_neighbors(node_id)
    if not choices:
        raise RuntimeError(f"node {node_id} has no neighbors")
    tau = np.array([graph.tau[node_id, c] for c in choices])
    if rng.random() < q0:
        pick = int(np.argmax(tau))  # choices are sorted, so ties go to the lowest id
    else:
        pick = int(rng.choice(len(choices), p=tau / tau.sum()))
    return node_id, choices[pick]


def local_update(graph: PheromoneGraph, edge: tuple[int, int]) -> float:
    rho, tau0 = graph.cfg.rho, graph.cfg.tau0
    graph.tau[edge] = (1 - rho) * graph.tau[edge] + rho * tau0
    return graph.tau[edge]


def global_update(graph: PheromoneGraph, path: list[int], fitness: float) -> None:
    """Blend ``fitness`` into every edge of ``path`` (node ids from the root)."""
    if fitness is None:
        raise ValueError("best ant has no fitness yet")
    rho = graph.cfg.rho
    for edge in zip(path[:-1], path[1:]):
        # a failed ant scores 0; keep pheromone strictly positive
        graph.tau[edge] = max((1 - rho) * graph.tau[edge] + rho * fitness, np.finfo(float).tiny)


def path_to_architecture(layers, input_shape, num_classes: int) -> Architecture:
    """Translate a walked path into a trainable network.

    The convolutional part is kept in order, then ``F``, then whatever
    dense-phase layers the path holds, then the ``DE(num_classes)`` output.
    Pooling layers that would shrink the feature map below one pixel are
    dropped.
    """
    h, w = input_shape[0], input_shape[1]
    out: list[LayerSpec] = []
    flat = False
    for layer in layers:
        if layer.kind is LayerKind.DE and not flat:
            out.append(LayerSpec.flatten())
            flat = True
        if layer.kind in POOLING:
            if h // layer.pool < 1 or w // layer.pool < 1:
                continue
            h, w = h // layer.pool, w // layer.pool
        out.append(layer)
    if not flat:
        out.append(LayerSpec.flatten())
    out.append(LayerSpec.dense(num_classes))
    return Architecture(tuple(input_shape), num_classes, tuple(out))


@dataclass
class Ant:
    index: int
    path: list[int]
    architecture: Architecture
    report: FitnessReport | None = None
    state: Any = None


@dataclass
class AcoResult:
    best_architecture: Architecture
    best_report: FitnessReport
    best_state: Any
    best_depth: int
    records: list[dict]
    trace: list[float]      # best-so-far fitness after each depth
    graph: PheromoneGraph
    timings: list[dict] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.records)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _walk(graph: PheromoneGraph, length: int, rng, cfg: AcoConfig) -> list[int]:
    path = [graph.root.id]
    for _ in range(length):
        edge = acs_select(graph, path[-1], rng, cfg.q0)
        local_update(graph, edge)
        path.append(edge[1])
    return path


def search_aco(cfg: AcoConfig, evaluator: Evaluator, num_classes: int, channels: int = 3,
               on_record: Callable[[dict], None] | None = None) -> AcoResult:
    """Run the colony for depths ``1..cfg.depth`` with ``cfg.ants`` ants each."""
    rng = np.random.default_rng(derive_seed(cfg.seed))
    graph = PheromoneGraph(cfg)
    input_shape = (cfg.image_side, cfg.image_side, channels)
    records: list[dict] = []
    timings: list[dict] = []
    trace: list[float] = []
    best: Ant | None = None
    best_depth = 0

    for depth in range(1, cfg.depth + 1):
        ants = []
        for a in range(cfg.ants):
            path = _walk(graph, depth, rng, cfg)
            layers = [graph.nodes[n].layer for n in path[1:]]
            arch = path_to_architecture(layers, input_shape, num_classes)
            assert not validate(arch), validate(arch)
            ants.append(Ant(a, path, arch))

        def run(ant: Ant):
            return safe_fit(evaluator, ant.architecture, epochs=cfg.epochs_per_eval,
                            seed=derive_seed(cfg.seed, depth, ant.index))

        if cfg.jobs > 1:
            with ThreadPoolExecutor(cfg.jobs) as pool:
                outcomes = list(pool.map(run, ants))
        else:
            outcomes = [run(ant) for ant in ants]

        depth_best = None
        for ant, (state, report) in zip(ants, outcomes):
            ant.report, ant.state = report, state
            record = {"depth": depth, "ant": ant.index,
                      "architecture": ant.architecture.to_dict(),
                      "fitness": report.metrics(), "params": report.params}
            if report.error:
                record["error"] = report.error
            records.append(record)
            timings.append({"depth": depth, "ant": ant.index, "seconds": report.seconds})
            if on_record:
                on_record(record)
            if depth_best is None or report.fitness > depth_best.report.fitness:
                depth_best = ant
            else:
                ant.state = None

        global_update(graph, depth_best.path, depth_best.report.fitness)
        if best is None or depth_best.report.fitness > best.report.fitness:
            best, best_depth = depth_best, depth
        trace.append(best.report.fitness)
        log.info("depth %d: best %.4f (%s)", depth, best.report.fitness, best.architecture)

    return AcoResult(best.architecture, best.report, best.state, best_depth,
                     records, trace, graph, timings)


def config_from_dict(doc: dict) -> AcoConfig:
    known = set(AcoConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown ACO config field {sorted(unknown)[0]!r}")
    return AcoConfig(**doc)


def config_to_dict(cfg: AcoConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}
