import json

import numpy as np
import pytest
from PIL import Image

from tdcn.arch import Architecture, parse_layers, serialize
from tdcn.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_space_default(capsys):
    code, out, _ = run(capsys, "space")
    assert code == 0
    assert "unconstrained: 1466015503680" in out
    assert "budget_aco: 512" in out and "budget_pso: 1200" in out
    assert "aco_sum: 282429536548" in out and "note:" in out


def test_space_flags(capsys):
    code, out, _ = run(capsys, "space", "--tl", "1", "--bl", "1", "--bu", "3")
    assert code == 0 and out.strip() == "unconstrained: 3"
    code, out, _ = run(capsys, "space", "--budget-pso", "--runs", "1", "--iters", "1", "--swarm", "1")
    assert out.strip() == "budget_pso: 1"


def test_space_partial_bounds_is_usage_error(capsys):
    assert run(capsys, "space", "--tl", "2")[0] == 1


def test_bad_flag_is_usage_error(capsys):
    assert run(capsys, "space", "--nope")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1


def test_invalid_config_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"antz": 3}')
    code, _, err = run(capsys, "search", "aco", "--config", str(cfg), "--evaluator", "surrogate:hash-rugged",
                       "--out", str(tmp_path / "r"))
    assert code == 1 and "antz" in err


def test_unknown_landscape(tmp_path, capsys):
    code, _, err = run(capsys, "search", "aco", "--evaluator", "surrogate:flat", "--out", str(tmp_path / "r"))
    assert code == 1


def test_surrogate_search_and_report(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("TDCN_SEED", "5")
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "search", "aco", "--evaluator", "surrogate:hash-rugged", "--ants", "3",
                          "--depth", "4", "--out", str(out))
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["finished"]
    lines = (out / "log.jsonl").read_text().splitlines()
    assert len(lines) == 12
    assert json.loads(stdout)["best_fitness"] == max(json.loads(l)["fitness"]["accuracy"] for l in lines)

    assert run(capsys, "report", str(out))[0] == 0
    first = {p.name: p.read_bytes() for p in (out / "report").iterdir()}
    assert run(capsys, "report", str(out))[0] == 0
    assert {p.name: p.read_bytes() for p in (out / "report").iterdir()} == first
    assert "gbest_trace.csv" in first


def test_seed_flag_overrides_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("TDCN_SEED", "5")
    out = tmp_path / "run"
    run(capsys, "search", "pso", "--evaluator", "surrogate:hash-rugged", "--runs", "1", "--iters", "1",
        "--swarm", "2", "--seed", "9", "--out", str(out))
    assert json.loads((out / "manifest.json").read_text())["seed"] == 9


def test_bad_env_seed(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("TDCN_SEED", "abc")
    assert run(capsys, "search", "aco", "--evaluator", "surrogate:hash-rugged", "--out", str(tmp_path))[0] == 1


def test_report_on_empty_dir(tmp_path, capsys):
    code, _, err = run(capsys, "report", str(tmp_path))
    assert code == 2 and "log.jsonl" in err
    (tmp_path / "log.jsonl").write_text("")
    assert run(capsys, "report", str(tmp_path))[0] == 2
    (tmp_path / "log.jsonl").write_text("{not json\n")
    assert run(capsys, "report", str(tmp_path))[0] == 2


ARCH = Architecture((8, 8, 3), 2, tuple(parse_layers("C2D(4,3)|MP(2)|F|DE(2)")))


@pytest.fixture
def arch_file(tmp_path):
    path = tmp_path / "arch.json"
    path.write_text(serialize(ARCH))
    return path


def test_train_then_eval(tmp_path, capsys, arch_file):
    weights = tmp_path / "w.bin"
    code, out, err = run(capsys, "train", str(arch_file), "--synthetic", "--per-class", "40", "--epochs", "30",
                         "--lr", "0.01", "--seed", "1", "--out", str(weights))
    assert code == 0, err
    code, out, _ = run(capsys, "eval", str(weights), "--synthetic", "--per-class", "40", "--split", "train")
    assert code == 0 and json.loads(out)["accuracy"] >= 0.95


def test_eval_class_mismatch(tmp_path, capsys, arch_file):
    weights = tmp_path / "w.bin"
    run(capsys, "train", str(arch_file), "--synthetic", "--per-class", "10", "--epochs", "1", "--out", str(weights))
    code, _, err = run(capsys, "eval", str(weights), "--synthetic", "--classes", "3", "--per-class", "10")
    assert code == 2 and "classes" in err


def test_missing_weights(tmp_path, capsys):
    assert run(capsys, "eval", str(tmp_path / "none.bin"), "--synthetic")[0] == 2


def test_fold_out_of_range(tmp_path, capsys, arch_file):
    code = run(capsys, "train", str(arch_file), "--synthetic", "--per-class", "10", "--folds", "5",
               "--fold", "5", "--out", str(tmp_path / "w.bin"))[0]
    assert code == 2


def test_histogram(tmp_path, capsys):
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    img[..., 0] = 255
    path = tmp_path / "img.png"
    Image.fromarray(img).save(path)
    code, out, _ = run(capsys, "histogram", str(path))
    rows = out.strip().splitlines()
    assert code == 0 and rows[0] == "bin,count_r,count_g,count_b,count_all"
    assert len(rows) == 257
    assert rows[1].split(",") == ["0", "0", "16", "16", "32"]
    assert rows[256].split(",") == ["255", "16", "0", "0", "16"]
    assert run(capsys, "histogram", str(tmp_path / "missing.png"))[0] == 2
