"""Report files: aligned text table, CSV and JSON lines."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from ..fileio import atomic_write_text
from .metrics import SCALAR_NAMES, MetricsReport

FORMATS = ("text", "csv", "jsonl")
SCALAR_COLUMNS = SCALAR_NAMES + ("factor", "n_events")


def _num(x):
    """Float as text; infinities spelled inf / -inf so float() reads them back."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _scalar_row(report):
    row = report.scalars()
    row.update(factor=report.factor, n_events=report.n_events)
    return row


def text_table(report: MetricsReport):
    row = _scalar_row(report)
    width = max(len(k) for k in SCALAR_COLUMNS)
    lines = [f"{'metric':<{width}}  value", f"{'-' * width}  ------"]
    for k in SCALAR_COLUMNS:
        v = row[k]
        lines.append(f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    for title, mat in (("recall matrix (rows: truth)", report.recall_matrix),
                       ("precision matrix (columns: prediction)", report.precision_matrix)):
        lines += ["", title, " " * 10 + "".join(f"{c:>10}" for c in report.classes)]
        for c, r in zip(report.classes, mat):
            lines.append(f"{c:<10}" + "".join(f"{v:>10.4f}" for v in r))
    if report.empty_rows or report.empty_cols:
        lines += ["", f"no truth support: {report.empty_rows}; never predicted: {report.empty_cols}"]
    return "\n".join(lines) + "\n"


def metrics_csv(report: MetricsReport):
    row = _scalar_row(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCALAR_COLUMNS)
    w.writerow([_num(row[k]) if isinstance(row[k], float) else row[k] for k in SCALAR_COLUMNS])
    return buf.getvalue()


def matrices_csv(report: MetricsReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["matrix", "truth", "predicted", "value"])
    for name, mat in (("count", report.counts), ("recall", report.recall_matrix),
                      ("precision", report.precision_matrix)):
        for i, t in enumerate(report.classes):
            for j, p in enumerate(report.classes):
                v = mat[i][j]
                w.writerow([name, t, p, int(v) if name == "count" else _num(v)])
    return buf.getvalue()


def roc_csv(report: MetricsReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "fpr", "tpr", "threshold"])
    for c in report.classes:
        for fpr, tpr, thr in report.roc[c]:
            w.writerow([c, _num(fpr), _num(tpr), _num(thr)])
    return buf.getvalue()


def report_jsonl(report: MetricsReport):
    lines = [dict(kind="metrics", **_scalar_row(report))]
    lines.append({"kind": "confusion", "classes": list(report.classes),
                  "counts": report.counts.tolist(), "recall": report.recall_matrix.tolist(),
                  "precision": report.precision_matrix.tolist(),
                  "empty_rows": report.empty_rows, "empty_cols": report.empty_cols})
    for c in report.classes:
        for fpr, tpr, thr in report.roc[c]:
            lines.append({"kind": "roc", "class": c, "fpr": fpr, "tpr": tpr,
                          "threshold": _num(thr) if math.isinf(thr) else thr})
    return "".join(json.dumps(d, sort_keys=True) + "\n" for d in lines)


def emit_report(report: MetricsReport, path, formats=FORMATS, stem="metrics"):
    """Write the report under directory ``path``; returns the written file paths."""
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}; choose from {FORMATS}")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "text" in formats:
        written.append(atomic_write_text(out / f"{stem}.txt", text_table(report)))
    if "csv" in formats:
        written.append(atomic_write_text(out / f"{stem}.csv", metrics_csv(report)))
        written.append(atomic_write_text(out / f"{stem}_confusion.csv", matrices_csv(report)))
        written.append(atomic_write_text(out / f"{stem}_roc.csv", roc_csv(report)))
    if "jsonl" in formats:
        written.append(atomic_write_text(out / f"{stem}.jsonl", report_jsonl(report)))
    return written


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, values = rows[0], rows[1]
    return {k: (int(v) if k in ("factor", "n_events") else float(v)) for k, v in zip(header, values)}
