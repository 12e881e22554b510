from dataclasses import replace

import numpy as np
import pytest

from tdcn.aco import (AcoConfig, PheromoneGraph, acs_select, config_from_dict, config_to_dict,
                      global_update, local_update, path_to_architecture, search_aco)
from tdcn.arch import LayerKind, LayerSpec, parse_layers, validate
from tdcn.fitness import FitnessReport
from tdcn.surrogate import SurrogateEvaluator, SurrogateSpec, surrogate_value
from test_acceptance import aco_space_oracle, designated_target

CHI2_DF15_P001 = 37.697  # upper 0.001 quantile of chi-square with 15 degrees of freedom


def test_root_neighbors():
    g = PheromoneGraph(AcoConfig())
    first = g.expand_neighbors(0)
    assert len(first) == 16
    assert g.expand_neighbors(0) == first and len(g.tau) == 16
    kinds = [g.nodes[n].layer.kind for n in first]
    assert kinds.count(LayerKind.C2D) == 9 and kinds.count(LayerKind.MP) == 2
    assert kinds.count(LayerKind.BN) == 1 and kinds.count(LayerKind.DE) == 4


def test_dense_phase_neighbors():
    g = PheromoneGraph(AcoConfig())
    de = next(n for n in g.expand_neighbors(0) if g.nodes[n].layer.kind is LayerKind.DE)
    succ = g.expand_neighbors(de)
    assert len(succ) == 5
    assert {g.nodes[n].layer.kind for n in succ} == {LayerKind.DE, LayerKind.BN}


def test_uniform_selection_at_tau0():
    g = PheromoneGraph(AcoConfig(q0=0.0))
    rng = np.random.default_rng(0)
    picks = [acs_select(g, 0, rng)[1] for _ in range(10_000)]
    counts = np.unique(picks, return_counts=True)[1]
    expected = 10_000 / 16
    assert len(counts) == 16
    assert ((counts - expected) ** 2 / expected).sum() < CHI2_DF15_P001


def test_greedy_takes_strongest():
    g = PheromoneGraph(AcoConfig(q0=1.0))
    nb = g.expand_neighbors(0)
    g.tau[0, nb[7]] = 0.9
    rng = np.random.default_rng(0)
    assert all(acs_select(g, 0, rng)[1] == nb[7] for _ in range(200))


def test_greedy_ties_lowest_id():
    g = PheromoneGraph(AcoConfig(q0=1.0))
    nb = g.expand_neighbors(0)
    assert acs_select(g, 0, np.random.default_rng(0))[1] == min(nb)


def test_proportional_ratio():
    cfg = AcoConfig(q0=0.0, conv_filters=(8,), conv_kernels=(3,), pool_sizes=(2,), dense_units=(),
                    batch_norm=False)
    g = PheromoneGraph(cfg)
    a, b = g.expand_neighbors(0)
    g.tau[0, a], g.tau[0, b] = 0.3, 0.1
    rng = np.random.default_rng(1)
    picks = [acs_select(g, 0, rng)[1] for _ in range(10_000)]
    ratio = picks.count(a) / picks.count(b)
    assert abs(ratio - 3.0) <= 0.15


def test_local_update():
    g = PheromoneGraph(AcoConfig(rho=0.1, tau0=0.1))
    nb = g.expand_neighbors(0)
    assert local_update(g, (0, nb[0])) == pytest.approx(0.1)
    g.tau[0, nb[1]] = 0.5
    assert local_update(g, (0, nb[1])) == pytest.approx(0.46)
    values = [local_update(g, (0, nb[1])) for _ in range(50)]
    assert all(b < a for a, b in zip(values, values[1:])) and values[-1] > 0.1


def test_global_update():
    g = PheromoneGraph(AcoConfig(rho=0.1, tau0=0.1))
    nb = g.expand_neighbors(0)
    before = dict(g.tau)
    global_update(g, [0, nb[0]], 0.9)
    assert g.tau[0, nb[0]] == pytest.approx(0.18)
    assert all(g.tau[e] == v for e, v in before.items() if e != (0, nb[0]))
    global_update(g, [0, nb[1]], 0.1)
    assert g.tau[0, nb[1]] == pytest.approx(0.1)
    global_update(g, [0, nb[2]], 0.0)
    assert g.tau[0, nb[2]] > 0


def test_path_to_architecture_examples():
    a = path_to_architecture([LayerSpec.conv(16, 3)], (32, 32, 3), 5)
    assert [str(l) for l in a.layers] == ["C2D(16,3)", "F", "DE(5)"]
    path = parse_layers("C2D(16,3)|BN|MP(2)|DE(64)")
    a = path_to_architecture(path, (32, 32, 3), 5)
    assert [str(l) for l in a.layers] == ["C2D(16,3)", "BN", "MP(2)", "F", "DE(64)", "DE(5)"]


def test_path_drops_infeasible_pools():
    a = path_to_architecture(parse_layers("MP(3)|MP(3)|MP(3)|C2D(4,3)"), (8, 8, 1), 2)
    assert [str(l) for l in a.layers] == ["MP(3)", "C2D(4,3)", "F", "DE(2)"]
    assert validate(a) == []


def test_random_paths_valid():
    cfg = AcoConfig()
    g = PheromoneGraph(cfg)
    rng = np.random.default_rng(2)
    for _ in range(1000):
        node, layers = 0, []
        for _ in range(int(rng.integers(1, 33))):
            node = acs_select(g, node, rng)[1]
            layers.append(g.nodes[node].layer)
        assert validate(path_to_architecture(layers, (32, 32, 3), 5)) == []


RUGGED = SurrogateEvaluator(SurrogateSpec("hash-rugged", seed=9))


def test_full_budget():
    result = search_aco(AcoConfig(ants=16, depth=32, seed=1), RUGGED, 5)
    assert result.evaluations == 512
    assert all(t > 0 for t in result.graph.tau.values())
    assert all(b >= a for a, b in zip(result.trace, result.trace[1:]))
    assert result.best_report.fitness == max(r["fitness"]["accuracy"] for r in result.records)


def test_single_ant():
    result = search_aco(AcoConfig(ants=1, depth=1), RUGGED, 2)
    assert result.evaluations == 1 and result.best_depth == 1
    assert len(result.best_architecture.layers) == 3


def test_greedy_determinism_on_frozen_graph():
    g = PheromoneGraph(AcoConfig(q0=1.0))
    rng = np.random.default_rng(0)

    def walk():
        node, path = 0, []
        for _ in range(4):
            node = acs_select(g, node, rng)[1]
            path.append(node)
        return path

    assert walk() == walk()


def test_serial_matches_parallel():
    cfg = AcoConfig(ants=4, depth=4, seed=3)
    a = search_aco(cfg, RUGGED, 2)
    b = search_aco(replace(cfg, jobs=4), RUGGED, 2)
    assert a.records == b.records


class Flaky:
    def fit(self, arch, *, epochs, seed, patience=None):
        if any(l.kind is LayerKind.BN for l in arch.layers):
            raise RuntimeError("boom")
        return None, FitnessReport(accuracy=0.5)


def test_failures_score_zero_and_continue():
    result = search_aco(AcoConfig(ants=6, depth=3, seed=0), Flaky(), 2)
    failed = [r for r in result.records if "error" in r]
    assert result.evaluations == 18 and failed
    assert all(r["fitness"]["accuracy"] == 0.0 and "boom" in r["error"] for r in failed)


def test_tiny_vocabulary_finds_optimum():
    cfg = AcoConfig(ants=8, depth=3, image_side=8, conv_filters=(8, 16), conv_kernels=(3,),
                    pool_sizes=(), dense_units=(), batch_norm=False)
    space = aco_space_oracle(cfg, 2)
    spec = SurrogateSpec("prefer-specific-layer", {"target": designated_target(space)})
    hits = 0
    for seed in range(10):
        best = search_aco(replace(cfg, seed=seed), SurrogateEvaluator(spec), 2).best_report.fitness
        hits += best == 1.0
    assert hits >= 8


def test_config_round_trip():
    cfg = AcoConfig(ants=3, conv_filters=(4, 8))
    assert config_from_dict(config_to_dict(cfg)) == cfg
    with pytest.raises(ValueError, match="antz"):
        config_from_dict({"antz": 3})
