"""Plot-ready CSV and markdown derived from a finished run directory.

Everything here reads only files the search wrote, so a report can be
regenerated at any time and always produces the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .io import atomic_write_text, read_jsonl
from .metrics import MetricError, roc_curve, auc


class ReportError(ValueError):
    pass


def _csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    return "" if v is None else repr(float(v)) if isinstance(v, float) else v


def load_log(run_dir: Path) -> list[dict]:
    path = run_dir / "log.jsonl"
    if not path.exists():
        raise ReportError(f"{path}: missing run log")
    try:
        records = read_jsonl(path)
    except ValueError as exc:
        raise ReportError(f"{path}: corrupt run log ({exc})") from None
    if not records:
        raise ReportError(f"{path}: run log is empty")
    return records


def algorithm_of(records: list[dict]) -> str:
    first = records[0]
    if {"run", "iteration", "particle"} <= set(first):
        return "pso"
    if {"depth", "ant"} <= set(first):
        return "aco"
    raise ReportError("log records match neither the PSO nor the ACO schema")


def pso_traces(records: list[dict]) -> dict[int, list[float]]:
    """gbest fitness after every update iteration, per run."""
    traces: dict[int, list[float]] = {}
    best: dict[int, float] = {}
    by_iter: dict[tuple[int, int], list[float]] = {}
    for r in records:
        by_iter.setdefault((r["run"], r["iteration"]), []).append(r["fitness"]["accuracy"] or 0.0)
    for (run, it), values in sorted(by_iter.items()):
        best[run] = max(best.get(run, -np.inf), max(values))
        if it > 0:
            traces.setdefault(run, []).append(best[run])
    return traces


def aco_trace(records: list[dict]) -> list[float]:
    """Best-so-far fitness after every depth."""
    out, best = [], -np.inf
    depths: dict[int, list[float]] = {}
    for r in records:
        depths.setdefault(r["depth"], []).append(r["fitness"]["accuracy"] or 0.0)
    for d in sorted(depths):
        best = max(best, max(depths[d]))
        out.append(best)
    return out


def build_report(run_dir) -> dict[str, str]:
    """Return ``{filename: contents}`` for every report artifact."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ReportError(f"{run_dir}: not a directory")
    records = load_log(run_dir)
    algo = algorithm_of(records)
    files: dict[str, str] = {}
    md = [f"# Run report ({algo.upper()})", ""]

    if algo == "pso":
        traces = pso_traces(records)
        files["gbest_trace.csv"] = _csv(
            [(run, i + 1, _fmt(v)) for run, tr in sorted(traces.items()) for i, v in enumerate(tr)],
            ["run", "iteration", "gbest_accuracy"])
        finals = {}
        summary_path = run_dir / "summary.json"
        if summary_path.exists():
            summary = json.loads(summary_path.read_text())
            finals = {r["run"]: r.get("final", {}) for r in summary.get("runs", [])}
        rows = [(run, _fmt(tr[-1]), _fmt((finals.get(run) or {}).get("accuracy")))
                for run, tr in sorted(traces.items())]
        files["runs.csv"] = _csv(rows, ["run", "gbest_search_accuracy", "gbest_final_accuracy"])
        md += ["| run | gbest (search) | gbest (retrained) |", "|---|---|---|"]
        md += [f"| {r[0]} | {r[1]} | {r[2]} |" for r in rows]
        md += ["", f"Update-phase evaluations: {sum(r['iteration'] > 0 for r in records)}",
               f"Initial evaluations: {sum(r['iteration'] == 0 for r in records)}"]
    else:
        trace = aco_trace(records)
        files["gbest_trace.csv"] = _csv([(d + 1, _fmt(v)) for d, v in enumerate(trace)],
                                        ["depth", "best_accuracy"])
        md += [f"Evaluations: {len(records)}", f"Best accuracy: {_fmt(trace[-1])}"]

    metrics_path = run_dir / "metrics.json"
    if metrics_path.exists():
        metrics = json.loads(metrics_path.read_text())
        cm = metrics.get("confusion") or []
        files["confusion.csv"] = _csv([[i, *row] for i, row in enumerate(cm)],
                                      ["true", *[f"pred_{j}" for j in range(len(cm))]])
        md += ["", "## Validation metrics", "",
               f"- accuracy: {metrics.get('accuracy')}",
               f"- macro AUC: {metrics.get('auc_macro')}",
               f"- kappa: {metrics.get('kappa')}",
               f"- quadratic kappa: {metrics.get('kappa_quadratic')}"]

    scores_path = run_dir / "val_scores.csv"
    if scores_path.exists():
        data = np.loadtxt(scores_path, delimiter=",", skiprows=1, ndmin=2)
        y, scores = data[:, 0].astype(int), data[:, 1:]
        for c in range(scores.shape[1]):
            try:
                fpr, tpr, thr = roc_curve((y == c).astype(int), scores[:, c])
            except MetricError:
                continue
            files[f"roc_{c}.csv"] = _csv([(_fmt(t), _fmt(a), _fmt(b)) for t, a, b in zip(thr, fpr, tpr)],
                                         ["threshold", "fpr", "tpr"])
            md.append(f"- class {c} AUC: {auc(fpr, tpr)!r}")

    files["summary.md"] = "\n".join(md) + "\n"
    return files


def write_report(run_dir, out_dir=None) -> list[Path]:
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "report"
    written = []
    for name, text in sorted(build_report(run_dir).items()):
        atomic_write_text(out_dir / name, text)
        written.append(out_dir / name)
    return written
