"""``tdcn`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, aco, pso, space
from .arch import ArchitectureError, deserialize, serialize
from .data import DataError, LabeledImageSet, load_dataset, load_image, pixel_histogram, \
    histogram_csv, stratified_kfold, synth_patterns
from .io import JsonlWriter, atomic_write_text, write_json
from .nn import Network, TrainConfig, TrainingEvaluator, WeightFileError, evaluate, train
from .report import ReportError, write_report
from .surrogate import LANDSCAPES, SurrogateEvaluator, SurrogateSpec

log = logging.getLogger("tdcn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get("TDCN_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"TDCN_SEED must be an integer, got {raw!r}") from None


# -- data ------------------------------------------------------------------------

def _add_data_args(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", type=Path, help="image directory")
    g.add_argument("--labels", type=Path, help="id_code,diagnosis CSV (default: DATA/labels.csv)")
    g.add_argument("--synthetic", action="store_true", help="use the stripe-pattern dataset")
    g.add_argument("--classes", type=int, default=2, help="synthetic classes")
    g.add_argument("--per-class", type=int, default=100, help="synthetic samples per class")
    g.add_argument("--side", type=int, help="image side (defaults to the search config)")
    g.add_argument("--num-classes", type=int, help="number of classes in real data")
    g.add_argument("--folds", type=int, default=10)
    g.add_argument("--fold", type=int, default=0)


def _load_data(args, side: int) -> LabeledImageSet:
    if args.synthetic:
        return synth_patterns(args.per_class, side=side, classes=args.classes, seed=args.data_seed)
    if args.data is None:
        raise DataError("no data: pass --data DIR or --synthetic")
    labels = args.labels or args.data / "labels.csv"
    if not labels.exists():
        raise DataError(f"{labels}: label file not found")
    return load_dataset(args.data, labels, side, num_classes=args.num_classes, jobs=max(args.jobs, 1))


def _split(data: LabeledImageSet, args):
    plan = stratified_kfold(data.labels, args.folds, seed=args.data_seed)
    tr, va = plan.train_indices(args.fold), plan.val_indices(args.fold)
    return plan, data.subset(tr), data.subset(va)


# -- space -----------------------------------------------------------------------

def cmd_space(args) -> int:
    out = []
    picked = False
    if args.tl is not None or args.bl is not None or args.bu is not None:
        if None in (args.tl, args.bl, args.bu):
            raise UsageError("--tl, --bl and --bu go together")
        out.append(("unconstrained", space.unconstrained_cardinality(args.tl, args.bl, args.bu)))
        picked = True
    if args.aco_counts is not None:
        counts, perms = args.aco_counts, args.permutations
        out.append(("aco_sum", space.aco_cardinality(*counts, permutations=perms, form="sum")))
        out.append(("aco_product", space.aco_cardinality(*counts, permutations=perms, form="product")))
        picked = True
    if args.budget_aco:
        out.append(("budget_aco", space.evaluation_budget_aco(args.ants, args.depth)))
        picked = True
    if args.budget_pso:
        out.append(("budget_pso", space.evaluation_budget_pso(args.runs, args.iters, args.swarm)))
        picked = True
    if not picked:
        derived = space.aco_cardinality(*space.ACO_EXAMPLE_COUNTS, permutations=space.ACO_PERMUTATIONS)
        out = [
            ("unconstrained", space.unconstrained_cardinality(4, 3, 20)),
            ("aco_sum", derived),
            ("aco_product", space.aco_cardinality(*space.ACO_EXAMPLE_COUNTS,
                                                  permutations=space.ACO_PERMUTATIONS, form="product")),
            ("budget_aco", space.evaluation_budget_aco(16, 32)),
            ("budget_pso", space.evaluation_budget_pso(5, 12, 20)),
        ]
        args.aco_counts = list(space.ACO_EXAMPLE_COUNTS)
    for name, value in out:
        print(f"{name}: {value}")
    if args.aco_counts is not None and tuple(args.aco_counts) == space.ACO_EXAMPLE_COUNTS \
            and tuple(args.permutations) == space.ACO_PERMUTATIONS:
        published = space.ACO_EXAMPLE_PUBLISHED
        value = space.aco_cardinality(*space.ACO_EXAMPLE_COUNTS, permutations=space.ACO_PERMUTATIONS)
        print(f"note: the commonly quoted total for this example is {published}; "
              f"summing the terms exactly gives {value} (difference {published - value})")
    return EXIT_OK


# -- search ----------------------------------------------------------------------

ACO_FLAGS = {"ants": "ants", "depth": "depth", "epochs": "epochs_per_eval", "q0": "q0", "rho": "rho"}
PSO_FLAGS = {"runs": "runs", "iters": "iterations", "swarm": "swarm", "epochs_eval": "epochs_per_eval",
             "epochs_gbest": "epochs_gbest", "cg": "cg"}


def _build_config(args):
    module, flags = (aco, ACO_FLAGS) if args.algorithm == "aco" else (pso, PSO_FLAGS)
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise DataError(f"{args.config}: config file not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
    for flag, field_name in flags.items():
        value = getattr(args, flag)
        if value is not None:
            doc[field_name] = value
    doc["seed"] = args.seed
    if args.jobs is not None:
        doc["jobs"] = args.jobs
    if args.side is not None:
        doc["image_side"] = args.side
    try:
        return module.config_from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _build_evaluator(args, train_set, val_set):
    kind = args.evaluator
    if kind == "train":
        cfg = TrainConfig(batch_size=args.batch_size, learning_rate=args.lr)
        return TrainingEvaluator(train_set.as_pair(), val_set.as_pair(), cfg, fold=args.fold)
    if kind.startswith("surrogate:"):
        landscape = kind.split(":", 1)[1]
        if landscape not in LANDSCAPES:
            raise UsageError(f"unknown landscape {landscape!r}; choose from {', '.join(LANDSCAPES)}")
        params = {}
        if args.surrogate_params:
            try:
                params = json.loads(Path(args.surrogate_params).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise DataError(f"{args.surrogate_params}: {exc}") from None
        try:
            return SurrogateEvaluator(SurrogateSpec(landscape, params, seed=args.seed))
        except (ValueError, ArchitectureError) as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"unknown evaluator {kind!r}; use 'train' or 'surrogate:<landscape>'")


def _scores_csv(y, proba) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", *[f"score_{c}" for c in range(proba.shape[1])]])
    for label, row in zip(y, proba):
        writer.writerow([int(label), *[repr(float(v)) for v in row]])
    return buf.getvalue()


def cmd_search(args) -> int:
    cfg = _build_config(args)
    side = cfg.image_side
    out = Path(args.out)
    if args.evaluator == "train" or args.synthetic or args.data:
        data = _load_data(args, side)
        plan, train_set, val_set = _split(data, args)
        num_classes, channels = data.num_classes, data.shape[2]
    else:
        train_set = val_set = None
        num_classes, channels = args.num_classes or 2, 3
    evaluator = _build_evaluator(args, train_set, val_set)
    module = aco if args.algorithm == "aco" else pso

    manifest = {
        "command": ["tdcn", *args.argv],
        "algorithm": args.algorithm,
        "config": module.config_to_dict(cfg),
        "seed": cfg.seed,
        "evaluator": args.evaluator,
        "data": {"synthetic": args.synthetic, "dir": str(args.data) if args.data else None,
                 "classes": num_classes, "per_class": args.per_class if args.synthetic else None,
                 "data_seed": args.data_seed, "folds": args.folds, "fold": args.fold},
        "training": {"batch_size": args.batch_size, "learning_rate": args.lr},
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "finished": None,
        "outputs": {},
    }
    write_json(out / "manifest.json", manifest)

    with JsonlWriter(out / "log.jsonl") as writer:
        if args.algorithm == "aco":
            result = aco.search_aco(cfg, evaluator, num_classes, channels, on_record=writer.write)
        else:
            result = pso.search_pso(cfg, evaluator, num_classes, channels, on_record=writer.write)
    with JsonlWriter(out / "timings.jsonl") as writer:
        for t in result.timings:
            writer.write(t)

    outputs = ["log.jsonl", "timings.jsonl", "best_architecture.json", "trace.csv", "summary.json"]
    atomic_write_text(out / "best_architecture.json", serialize(result.best_architecture) + "\n")

    if args.algorithm == "aco":
        trace_rows = [f"{d + 1},{v!r}" for d, v in enumerate(result.trace)]
        atomic_write_text(out / "trace.csv", "depth,best_accuracy\n" + "\n".join(trace_rows) + "\n")
        write_json(out / "pheromone.json", result.graph.to_dict())
        outputs.append("pheromone.json")
        summary = {"algorithm": "aco", "evaluations": result.evaluations, "best_depth": result.best_depth,
                   "best_fitness": result.best_report.fitness, "best_report": result.best_report.to_dict(),
                   "trace": result.trace}
    else:
        rows = [f"{r.run},{i + 1},{v!r}" for r in result.runs for i, v in enumerate(r.trace)]
        atomic_write_text(out / "trace.csv", "run,iteration,gbest_accuracy\n" + "\n".join(rows) + "\n")
        summary = {"algorithm": "pso", "update_evaluations": result.update_evaluations,
                   "initial_evaluations": result.initial_evaluations, "best_run": result.best_run,
                   "best_report": result.best_report.to_dict() if result.best_report else None,
                   "runs": [{"run": r.run, "gbest_fitness": r.gbest_fitness, "trace": r.trace,
                             "gbest": r.gbest.to_dict(),
                             "final": r.final_report.to_dict() if r.final_report else None}
                            for r in result.runs]}

    net = result.best_state
    if isinstance(net, Network):
        net.save(out / "weights.bin")
        xv, yv = val_set.as_pair()
        metrics = evaluate(net, xv, yv)
        write_json(out / "metrics.json", metrics)
        atomic_write_text(out / "val_scores.csv", _scores_csv(yv, net.predict_proba(xv)))
        outputs += ["weights.bin", "metrics.json", "val_scores.csv"]
        summary["validation_accuracy"] = metrics["accuracy"]
    write_json(out / "summary.json", summary)

    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    manifest["outputs"] = {name: str(out / name) for name in sorted(outputs)}
    write_json(out / "manifest.json", manifest)
    print(json.dumps({"run_dir": str(out), "best_architecture": str(result.best_architecture),
                      "best_fitness": result.best_report.fitness if result.best_report else None}))
    return EXIT_OK


# -- train / eval ----------------------------------------------------------------

def _read_arch(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    return deserialize(text)


def _check_compat(arch, data: LabeledImageSet):
    if arch.num_classes != data.num_classes:
        raise DataError(f"architecture has {arch.num_classes} classes, data has {data.num_classes}")
    if tuple(arch.input_shape) != data.shape:
        raise DataError(f"architecture expects {arch.input_shape}, data is {data.shape}")


def cmd_train(args) -> int:
    arch = _read_arch(args.arch)
    if args.synthetic and args.classes != arch.num_classes:
        args.classes = arch.num_classes
    data = _load_data(args, args.side or arch.input_shape[0])
    _check_compat(arch, data)
    _, train_set, val_set = _split(data, args)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                      seed=args.seed, patience=args.patience)
    net, report = train(arch, train_set.as_pair(), val_set.as_pair(), cfg)
    net.save(args.out)
    metrics = evaluate(net, *val_set.as_pair())
    if args.metrics:
        write_json(args.metrics, metrics)
    print(json.dumps({"weights": str(args.out), "epochs": report.epochs, **metrics}))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        net = Network.load(args.weights)
    except FileNotFoundError:
        raise DataError(f"{args.weights}: weight file not found") from None
    data = _load_data(args, args.side or net.arch.input_shape[0])
    _check_compat(net.arch, data)
    _, train_set, val_set = _split(data, args)
    chosen = {"train": train_set, "val": val_set, "all": data}[args.split]
    print(json.dumps(evaluate(net, *chosen.as_pair())))
    return EXIT_OK


# -- report / histogram ----------------------------------------------------------

def cmd_report(args) -> int:
    for path in write_report(args.run_dir, args.out):
        print(path)
    return EXIT_OK


def cmd_histogram(args) -> int:
    try:
        if args.side:
            img = load_image(args.image, args.side)
        else:
            from PIL import Image
            with Image.open(args.image) as im:
                img = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"{args.image}: {exc}") from None
    text = histogram_csv(pixel_histogram(img))
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tdcn", description="Swarm-based CNN architecture search toolkit.")
    p.add_argument("--version", action="version", version=f"tdcn {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("space", help="exact search-space and budget arithmetic")
    s.add_argument("--tl", type=int)
    s.add_argument("--bl", type=int)
    s.add_argument("--bu", type=int)
    s.add_argument("--aco-counts", type=int, nargs=4, metavar=("C2D", "MP", "BN", "DE"))
    s.add_argument("--permutations", type=int, nargs=4, default=list(space.ACO_PERMUTATIONS),
                   metavar=("C2D", "MP", "BN", "DE"))
    s.add_argument("--budget-aco", action="store_true")
    s.add_argument("--ants", type=int, default=16)
    s.add_argument("--depth", type=int, default=32)
    s.add_argument("--budget-pso", action="store_true")
    s.add_argument("--runs", type=int, default=5)
    s.add_argument("--iters", type=int, default=12)
    s.add_argument("--swarm", type=int, default=20)
    s.set_defaults(func=cmd_space)

    s = sub.add_parser("search", help="run an architecture search")
    s.add_argument("algorithm", choices=["aco", "pso"])
    s.add_argument("--config", type=Path, help="JSON file with config field values")
    s.add_argument("--out", type=Path, default=Path("run"))
    s.add_argument("--seed", type=int)
    s.add_argument("--data-seed", type=int, default=0, help="seed for the synthetic set and the folds")
    s.add_argument("--jobs", type=int)
    s.add_argument("--evaluator", default="train", help="'train' or 'surrogate:<landscape>'")
    s.add_argument("--surrogate-params", type=Path, help="JSON landscape parameters")
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-3)
    for flag in ("ants", "depth", "epochs", "runs", "iters", "swarm", "epochs-eval", "epochs-gbest"):
        s.add_argument(f"--{flag}", type=int)
    for flag in ("q0", "rho", "cg"):
        s.add_argument(f"--{flag}", type=float)
    _add_data_args(s)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("train", help="train one architecture")
    s.add_argument("arch", type=Path, help="architecture JSON")
    s.add_argument("--out", type=Path, default=Path("weights.bin"))
    s.add_argument("--metrics", type=Path)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--patience", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--data-seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    _add_data_args(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a weight file")
    s.add_argument("weights", type=Path)
    s.add_argument("--split", choices=["train", "val", "all"], default="val")
    s.add_argument("--data-seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    _add_data_args(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="plot-ready CSV from a run directory")
    s.add_argument("run_dir", type=Path)
    s.add_argument("--out", type=Path, help="output directory (default RUN_DIR/report)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("histogram", help="per-channel pixel histogram of an image")
    s.add_argument("image", type=Path)
    s.add_argument("--side", type=int, help="resize to SIDE x SIDE first")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_histogram)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    args.argv = argv
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        if hasattr(args, "jobs") and args.jobs is not None and args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"tdcn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ArchitectureError, WeightFileError, ReportError) as exc:
        print(f"tdcn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"tdcn: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
