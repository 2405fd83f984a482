"""Report files: deterministic CSV/JSON plus a separate timing file.

``report.csv`` and ``report.json`` are pure functions of config and seed and
byte-identical across repeated runs; wall-clock times go to ``timings.csv``,
which is the one deliberately non-reproducible artifact. All files are
written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

REPORT_FORMAT = "csdlab-report-1"

CSV_HEADER = (
    "row,run_index,seed,mode,k,lambda,kappa,use_common_loss,use_specific_loss,"
    "use_ortho_reg,status,in_domain_acc,out_domain_acc,angle_to_truth_deg,"
    "specific_axis_ratio,final_loss_specific,final_loss_common,"
    "final_ortho_penalty"
)

METRIC_FIELDS = (
    "in_domain_acc", "out_domain_acc", "angle_to_truth_deg",
    "specific_axis_ratio", "final_loss_specific", "final_loss_common",
    "final_ortho_penalty",
)


def atomic_write_text(path, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp~")
    tmp.write_text(text)
    tmp.replace(target)


def format_float(x: float) -> str:
    """Full-precision decimal rendering; round-trips float64 exactly."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def yn(flag: bool) -> str:
    return "Y" if flag else "N"


def run_row_to_csv(row) -> str:
    fields = [
        row.row,
        "" if row.run_index is None else str(row.run_index),
        "" if row.seed is None else str(row.seed),
        row.mode,
        str(row.k),
        format_float(row.lam),
        format_float(row.kappa),
        yn(row.use_common_loss),
        yn(row.use_specific_loss),
        yn(row.use_ortho_reg),
        row.status,
    ]
    fields += [format_float(getattr(row, name)) for name in METRIC_FIELDS]
    return ",".join(fields)


def write_report_csv(path, rows) -> None:
    lines = [CSV_HEADER] + [run_row_to_csv(r) for r in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, obj: dict) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_timings_csv(path, entries) -> None:
    lines = ["run_index,label,wall_time_s"]
    lines += [f"{idx},{label},{wall:.6f}" for idx, label, wall in entries]
    atomic_write_text(path, "\n".join(lines) + "\n")
