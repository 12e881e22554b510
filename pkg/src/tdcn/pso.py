"""Particle swarm architecture search.

Particles are architectures. A particle's searched layers ("genes") split
into a feature phase (C2D, MP, AP before the flatten) and a dense phase
(hidden DE layers); BN, DO, F and the output DE are added by a fixed
completion rule. A velocity is a per-slot edit list computed separately
for each phase: keep the particle's layer, replace it with the other
architecture's layer, or drop it. Each slot takes its edit from the gbest
difference with probability ``Cg`` and from the pbest difference otherwise.

:func:`pso_reference_step` is the textbook real-valued update rule, kept
for comparison and testing.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from .aco import derive_seed
from .arch import Architecture, LayerKind, LayerSpec, POOLING, core_layer_count, validate
from .fitness import Evaluator, FitnessReport, safe_fit

log = logging.getLogger(__name__)

KEEP, REPLACE, DROP = "keep", "replace", "drop"


@dataclass(frozen=True)
class PsoConfig:
    runs: int = 5
    iterations: int = 12
    swarm: int = 20
    cg: float = 0.5
    min_layers: int = 3
    max_layers: int = 20
    conv_filters: tuple[int, int] = (3, 256)
    conv_kernels: tuple[int, ...] = (3, 5, 7)
    fc_units: tuple[int, int] = (1, 300)
    pool_size: int = 2
    dropout_rate: float = 0.5
    p_conv: float = 0.7
    p_pool: float = 0.15
    p_fc: float = 0.15
    epochs_per_eval: int = 1
    epochs_gbest: int = 100
    gbest_patience: int | None = 2
    batch_norm: bool = True
    image_side: int = 128
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        for name in ("conv_filters", "conv_kernels", "fc_units"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if min(self.runs, self.iterations, self.swarm) < 1:
            raise ValueError("runs, iterations and swarm must be >= 1")
        if not 0.0 <= self.cg <= 1.0:
            raise ValueError("cg must lie in [0, 1]")
        if not 1 <= self.min_layers <= self.max_layers:
            raise ValueError("need 1 <= min_layers <= max_layers")
        lo, hi = self.conv_filters
        if not 1 <= lo <= hi:
            raise ValueError("conv_filters must be a (min, max) range >= 1")
        lo, hi = self.fc_units
        if not 1 <= lo <= hi:
            raise ValueError("fc_units must be a (min, max) range >= 1")
        if not self.conv_kernels or any(k < 1 or k % 2 == 0 for k in self.conv_kernels):
            raise ValueError("conv_kernels must be odd positive sizes")
        if abs(self.p_conv + self.p_pool + self.p_fc - 1.0) > 1e-9:
            raise ValueError("layer-type probabilities must sum to 1")
        if min(self.p_conv, self.p_pool, self.p_fc) < 0:
            raise ValueError("layer-type probabilities must be >= 0")

    @property
    def bounds(self) -> tuple[int, int]:
        return self.min_layers, self.max_layers


# -- genes and completion ----------------------------------------------------

def split_genes(arch: Architecture) -> tuple[list[LayerSpec], list[LayerSpec]]:
    """Searched layers of ``arch``: (feature phase, hidden dense layers)."""
    feature, dense = [], []
    flat = False
    de = [l for l in arch.layers if l.kind is LayerKind.DE]
    hidden = len(de) - 1
    for layer in arch.layers:
        if layer.kind is LayerKind.F:
            flat = True
        elif layer.kind in (LayerKind.C2D, *POOLING) and not flat:
            feature.append(layer)
        elif layer.kind is LayerKind.DE and len(dense) < hidden:
            dense.append(layer)
    return feature, dense


def complete(feature, dense, cfg: PsoConfig, input_shape, num_classes: int) -> Architecture:
    """Assemble genes into a valid architecture.

    BN follows every C2D when ``cfg.batch_norm`` is set, DO follows every
    hidden DE, and ``F`` plus the ``DE(num_classes)`` output close the
    network. Pooling genes that would leave no pixels are dropped.
    """
    h, w = input_shape[0], input_shape[1]
    layers: list[LayerSpec] = []
    for gene in feature:
        if gene.kind in POOLING:
            if h // gene.pool < 1 or w // gene.pool < 1:
                continue
            h, w = h // gene.pool, w // gene.pool
        layers.append(gene)
        if gene.kind is LayerKind.C2D and cfg.batch_norm:
            layers.append(LayerSpec.batchnorm())
    layers.append(LayerSpec.flatten())
    for gene in dense:
        layers.append(gene)
        layers.append(LayerSpec.dropout(cfg.dropout_rate))
    layers.append(LayerSpec.dense(num_classes))
    return Architecture(tuple(input_shape), num_classes, tuple(layers))


def _random_conv(cfg: PsoConfig, rng) -> LayerSpec:
    lo, hi = cfg.conv_filters
    return LayerSpec.conv(int(rng.integers(lo, hi + 1)), int(rng.choice(cfg.conv_kernels)))


def _random_dense(cfg: PsoConfig, rng) -> LayerSpec:
    lo, hi = cfg.fc_units
    return LayerSpec.dense(int(rng.integers(lo, hi + 1)))


@dataclass
class Particle:
    id: int
    position: Architecture
    fitness: float | None = None
    pbest: Architecture | None = None
    pbest_fitness: float = -np.inf


def init_particle(cfg: PsoConfig, rng: np.random.Generator, input_shape, num_classes: int,
                  pid: int = 0) -> Particle:
    """Random particle with ``min_layers..max_layers`` searched layers.

    Each slot draws conv / pool / fc with the configured probabilities
    (pooling split evenly between MP and AP) until the first fc draw; the
    remaining slots are hidden DE layers. A pooling draw that would leave no
    pixels becomes a conv layer.
    """
    n = int(rng.integers(cfg.min_layers, cfg.max_layers + 1))
    probs = np.array([cfg.p_conv, cfg.p_pool, cfg.p_fc])
    h, w = input_shape[0], input_shape[1]
    feature, dense = [], []
    for _ in range(n):
        if dense:
            dense.append(_random_dense(cfg, rng))
            continue
        kind = rng.choice(3, p=probs)
        if kind == 1:
            cls = LayerSpec.maxpool if rng.random() < 0.5 else LayerSpec.avgpool
            if h // cfg.pool_size >= 1 and w // cfg.pool_size >= 1:
                h, w = h // cfg.pool_size, w // cfg.pool_size
                feature.append(cls(cfg.pool_size))
            else:
                feature.append(_random_conv(cfg, rng))
        elif kind == 0:
            feature.append(_random_conv(cfg, rng))
        else:
            dense.append(_random_dense(cfg, rng))
    arch = complete(feature, dense, cfg, input_shape, num_classes)
    assert not validate(arch, cfg.bounds), validate(arch, cfg.bounds)
    return Particle(pid, arch)


# -- velocity -------------------------------------------------------------------

@dataclass(frozen=True)
class Velocity:
    """Per-slot edits for the feature phase and the dense phase."""

    feature: tuple[tuple[str, LayerSpec | None], ...]
    dense: tuple[tuple[str, LayerSpec | None], ...]

    def is_identity(self) -> bool:
        return all(op == KEEP for op, _ in self.feature + self.dense)


def _phase_difference(a, b):
    out = []
    for s in range(max(len(a), len(b))):
        if s >= len(b):
            out.append((DROP, None))
        elif s < len(a) and a[s] == b[s]:
            out.append((KEEP, None))
        else:
            out.append((REPLACE, b[s]))
    return tuple(out)


def particle_difference(a: Architecture, b: Architecture) -> Velocity:
    """Edits that turn ``a`` into ``b``, slot-aligned within each phase."""
    fa, da = split_genes(a)
    fb, db = split_genes(b)
    return Velocity(_phase_difference(fa, fb), _phase_difference(da, db))


def combine(toward_gbest: Velocity, toward_pbest: Velocity, cg: float,
            rng: np.random.Generator) -> tuple[Velocity, Velocity]:
    """Pick every slot's edit from the gbest side with probability ``cg``.

    Returns the combined velocity and a mask velocity whose ops are
    ``"gbest"`` or ``"pbest"``, recording where each slot came from.
    """
    phases, sources = [], []
    for g, p in ((toward_gbest.feature, toward_pbest.feature),
                 (toward_gbest.dense, toward_pbest.dense)):
        edits, src = [], []
        for s in range(max(len(g), len(p))):
            use_g = rng.random() < cg
            side = g if use_g else p
            edits.append(side[s] if s < len(side) else (KEEP, None))
            src.append(("gbest" if use_g else "pbest", None))
        phases.append(tuple(edits))
        sources.append(tuple(src))
    return Velocity(*phases), Velocity(*sources)


def _apply(genes, edits):
    out = []
    for s, (op, layer) in enumerate(edits):
        if op == KEEP:
            if s < len(genes):
                out.append(genes[s])
        elif op == REPLACE:
            out.append(layer)
    out.extend(genes[len(edits):])
    return out


def apply_velocity(position: Architecture, velocity: Velocity, cfg: PsoConfig) -> Architecture:
    feature, dense = split_genes(position)
    new = complete(_apply(feature, velocity.feature), _apply(dense, velocity.dense),
                   cfg, position.input_shape, position.num_classes)
    n = core_layer_count(new)
    if n > cfg.max_layers:
        f, d = split_genes(new)
        excess = n - cfg.max_layers
        cut = min(excess, len(d))
        d = d[:len(d) - cut]
        f = f[:len(f) - (excess - cut)]
        new = complete(f, d, cfg, position.input_shape, position.num_classes)
    if core_layer_count(new) < cfg.min_layers:
        # edits from shorter parents can undershoot the bound; keep the old position
        return position
    return new


def update_particle(particle: Particle, gbest: Architecture, cg: float, rng: np.random.Generator,
                    cfg: PsoConfig) -> Architecture:
    """New position for ``particle`` under slot-wise gbest/pbest inheritance."""
    pbest = particle.pbest if particle.pbest is not None else particle.position
    velocity, _ = combine(particle_difference(particle.position, gbest),
                          particle_difference(particle.position, pbest), cg, rng)
    return apply_velocity(particle.position, velocity, cfg)


# -- real-valued reference rule -------------------------------------------------

@dataclass
class RealParticle:
    x: np.ndarray
    v: np.ndarray
    pbest: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.pbest = np.asarray(self.pbest, dtype=np.float64)
        if not self.x.shape == self.v.shape == self.pbest.shape:
            raise ValueError("x, v and pbest must share one shape")


def pso_reference_step(particle: RealParticle, gbest, w: float, c1: float, c2: float | None = None,
                       rng: np.random.Generator | None = None, r1=None, r2=None) -> RealParticle:
    """``v' = w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)``, ``x' = x + v'``.

    ``r1`` and ``r2`` are drawn uniformly per dimension unless given.
    ``c2`` defaults to ``c1``.
    """
    gbest = np.asarray(gbest, dtype=np.float64)
    if gbest.shape != particle.x.shape:
        raise ValueError(f"gbest has shape {gbest.shape}, particle has {particle.x.shape}")
    c2 = c1 if c2 is None else c2
    rng = rng if rng is not None else np.random.default_rng()
    r1 = rng.random(particle.x.shape) if r1 is None else np.broadcast_to(r1, particle.x.shape)
    r2 = rng.random(particle.x.shape) if r2 is None else np.broadcast_to(r2, particle.x.shape)
    v = w * particle.v + c1 * r1 * (particle.pbest - particle.x) + c2 * r2 * (gbest - particle.x)
    return RealParticle(particle.x + v, v, particle.pbest.copy())


# -- search ---------------------------------------------------------------------

@dataclass
class RunResult:
    run: int
    gbest: Architecture
    gbest_fitness: float
    trace: list[float]
    final_report: FitnessReport | None
    final_state: Any = None


@dataclass
class PsoResult:
    best_architecture: Architecture
    best_report: FitnessReport
    best_state: Any
    best_run: int
    runs: list[RunResult]
    records: list[dict]
    timings: list[dict] = field(default_factory=list)

    @property
    def update_evaluations(self) -> int:
        return sum(1 for r in self.records if r["iteration"] > 0)

    @property
    def initial_evaluations(self) -> int:
        return sum(1 for r in self.records if r["iteration"] == 0)


def search_pso(cfg: PsoConfig, evaluator: Evaluator, num_classes: int, channels: int = 3,
               on_record: Callable[[dict], None] | None = None) -> PsoResult:
    """``cfg.runs`` independent swarms; the best run's retrained gbest is returned."""
    input_shape = (cfg.image_side, cfg.image_side, channels)
    records: list[dict] = []
    timings: list[dict] = []
    runs: list[RunResult] = []

    def evaluate(run, it, positions):
        def one(item):
            pid, arch = item
            return safe_fit(evaluator, arch, epochs=cfg.epochs_per_eval,
                            seed=derive_seed(cfg.seed, run, it, pid))
        if cfg.jobs > 1:
            with ThreadPoolExecutor(cfg.jobs) as pool:
                return list(pool.map(one, enumerate(positions)))
        return [one(item) for item in enumerate(positions)]

    for run in range(cfg.runs):
        particles = [init_particle(cfg, np.random.default_rng(derive_seed(cfg.seed, run, 0, pid)),
                                   input_shape, num_classes, pid) for pid in range(cfg.swarm)]
        gbest, gbest_fit = None, -np.inf
        trace: list[float] = []
        for it in range(cfg.iterations + 1):
            if it > 0:
                for p in particles:
                    p.position = update_particle(
                        p, gbest, cfg.cg, np.random.default_rng(derive_seed(cfg.seed, run, it, p.id, 1)), cfg)
            outcomes = evaluate(run, it, [p.position for p in particles])
            # barrier: pbest and gbest refresh only after the whole swarm is evaluated
            new_gbest = None
            for p, (_, report) in zip(particles, outcomes):
                p.fitness = report.fitness
                if p.fitness > p.pbest_fitness:
                    p.pbest, p.pbest_fitness = p.position, p.fitness
                    is_pbest = True
                else:
                    is_pbest = False
                is_gbest = p.fitness > gbest_fit
                if is_gbest:
                    gbest, gbest_fit, new_gbest = p.position, p.fitness, p.id
                record = {"run": run, "iteration": it, "particle": p.id,
                          "architecture": p.position.to_dict(), "fitness": report.metrics(),
                          "is_new_pbest": is_pbest, "is_new_gbest": False}
                if report.error:
                    record["error"] = report.error
                records.append(record)
                timings.append({"run": run, "iteration": it, "particle": p.id, "seconds": report.seconds})
            if new_gbest is not None:
                records[-cfg.swarm + new_gbest]["is_new_gbest"] = True
            for r in records[-cfg.swarm:]:
                if on_record:
                    on_record(r)
            if it > 0:
                trace.append(float(gbest_fit))
            log.info("run %d iteration %d: gbest %.4f", run, it, gbest_fit)

        state, final = safe_fit(evaluator, gbest, epochs=cfg.epochs_gbest,
                                seed=derive_seed(cfg.seed, run, cfg.iterations + 1, 0, 2),
                                patience=cfg.gbest_patience)
        runs.append(RunResult(run, gbest, float(gbest_fit), trace, final, state))

    best = max(runs, key=lambda r: (r.gbest_fitness, -r.run))
    return PsoResult(best.gbest, best.final_report, best.final_state, best.run, runs, records, timings)


def config_from_dict(doc: dict) -> PsoConfig:
    known = set(PsoConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown PSO config field {sorted(unknown)[0]!r}")
    return PsoConfig(**doc)


def config_to_dict(cfg: PsoConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}
