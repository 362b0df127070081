"""CSV and JSON artifacts.

CSV bodies are deterministic: floats are written with ``repr`` and carry no
timestamps, so reruns with the same seed compare byte for byte. Run metadata
(timestamp, worker count, runtime) goes only into the JSON summary.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time

SCHEMA_VERSION = 1

REPORT_COLUMNS = ("t", "x_id", "estimator", "value", "stderr", "bound", "verdict")


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, complex):
        v = complex(v)
        return f"{v.real!r}{v.imag:+}j"
    if isinstance(v, float):
        return repr(float(v))
    if hasattr(v, "item"):
        return _fmt(v.item())
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def write_csv(path, rows, columns=REPORT_COLUMNS, echo=None):
    """Rows are dicts or objects with the given attributes. ``echo`` lines go first as comments."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        if echo:
            for k in sorted(echo):
                fh.write(f"# {k}={_fmt(echo[k])}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            get = r.get if isinstance(r, dict) else (lambda k, r=r: getattr(r, k))
            w.writerow([_fmt(get(c)) for c in columns])


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    if hasattr(v, "tolist"):
        return _jsonable(v.tolist())
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def write_summary(path, subcommand, config: dict, status: int, verdict: str, summary: dict, run_meta=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    doc = dict(schema_version=SCHEMA_VERSION, subcommand=subcommand, status=status, verdict=verdict,
               config=_jsonable(config), summary=_jsonable(summary),
               run=dict(timestamp=time.strftime("%Y-%m-%dT%H:%M:%S%z"), **(run_meta or {})))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return doc
