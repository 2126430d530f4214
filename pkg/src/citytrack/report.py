"""Per-camera evaluation tables: key/value text and CSV with an Average row."""

from __future__ import annotations

import csv
import io
from typing import Mapping, Sequence

from .metrics import EvalReport
from .model import camera_sort_key

ID_FIELDS = ["idf1", "idp", "idr", "precision", "recall", "idtp", "idfp", "idfn", "tp", "fp", "fn"]
DET_FIELDS = ["ap", "precision", "recall", "tp", "fp", "fn"]
COUNT_FIELDS = {"idtp", "idfp", "idfn", "tp", "fp", "fn"}


def report_rows(results: Mapping[str, EvalReport], fields: Sequence[str]) -> list[dict]:
    """One row per camera (natural camera order) plus an ``Average`` row.

    Ratios are averaged over cameras, counts are summed.
    """
    rows = []
    for cam in sorted(results, key=camera_sort_key):
        d = results[cam].as_dict()
        rows.append({"camera": cam, **{f: d[f] for f in fields}})
    if rows:
        avg = {"camera": "Average"}
        for f in fields:
            vals = [r[f] for r in rows]
            avg[f] = sum(vals) if f in COUNT_FIELDS else sum(vals) / len(vals)
        rows.append(avg)
    return rows


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else f"{v:.4f}"


def format_key_values(rows: Sequence[dict]) -> str:
    lines = []
    for r in rows:
        for k, v in r.items():
            if k != "camera":
                lines.append(f"{r['camera']}.{k} = {_fmt(v)}")
    return "\n".join(lines) + ("\n" if lines else "")


def format_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (v if isinstance(v, (int, str)) else repr(float(v))) for k, v in r.items()})
    return buf.getvalue()


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
