"""JSON report serialisation and the derived CSV / text views."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

WALL_CLOCK = "wall_clock_seconds"

CSV_COLUMNS = ("shots", "run", "episode", "seed", "accuracy", "baseline_accuracy",
               "lr", "baseline_lr", "eps_hat")


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(doc: dict) -> str:
    # float repr is the shortest string that round-trips a float64 exactly
    return json.dumps(doc, indent=2, default=_default, allow_nan=False) + "\n"


def write_report(doc: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(doc))


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def strip_wall_clock(doc):
    """Copy of ``doc`` without any wall-clock fields (for replay comparison)."""
    if isinstance(doc, dict):
        return {k: strip_wall_clock(v) for k, v in doc.items() if k != WALL_CLOCK}
    if isinstance(doc, list):
        return [strip_wall_clock(v) for v in doc]
    return doc


def _experiments(doc: dict):
    """Yield ``(label, experiment_report)`` for plain and ablation documents."""
    if "ablation" in doc:
        axis = doc["ablation"]
        for entry in doc["reports"]:
            yield f"{axis}={entry['value']}", entry["report"]
    else:
        yield "", doc


def rows(doc: dict) -> list[dict]:
    """One row per task (pFSL) or episode (FSL)."""
    out = []
    for label, exp in _experiments(doc):
        for block in exp["results"]:
            items = block["tasks"] if "tasks" in block else block["episodes"]
            for rec in items:
                row = {"variant": label} if label else {}
                row["shots"] = block["shots"]
                for key in CSV_COLUMNS[1:]:
                    row[key] = rec.get(key, "")
                out.append(row)
    return out


def to_csv(doc: dict) -> str:
    data = rows(doc)
    cols = (["variant"] if "ablation" in doc else []) + list(CSV_COLUMNS)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in data:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def summary(doc: dict) -> list[dict]:
    out = []
    for label, exp in _experiments(doc):
        cfg = exp["config"]
        for block in exp["results"]:
            row = {"variant": label or f"{cfg['method']}/{cfg['sampling']}", "mode": cfg["mode"],
                   "shots": block["shots"]}
            if "tasks" in block:
                row.update(n=len(block["tasks"]), acc=block["accuracy_mean"], std=block["accuracy_std"],
                           baseline=block["baseline_mean"])
            else:
                m = block["metrics_mean"]
                row.update(n=len(block["episodes"]), acc=m["acc_mean"], std=m["std"],
                           baseline=block["baseline_metrics_mean"]["acc_mean"],
                           acc_1=m["acc_1"], acc_10=m["acc_10"], acc_100=m["acc_100"], ci95=m["ci95"])
            out.append(row)
    return out


def to_text(doc: dict) -> str:
    table = summary(doc)
    cols = []
    for row in table:
        for k in row:
            if k not in cols:
                cols.append(k)

    def fmt(v):
        if isinstance(v, float):
            return f"{100 * v:.2f}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in cols] for r in table]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"
