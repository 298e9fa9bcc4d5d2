"""Byte-deterministic JSON and CSV artifacts."""

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def _clean(obj):
    # plain JSON types only; non-finite floats become null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    return obj


def dumps_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def dumps_csv(rows, columns=None):
    """RFC 4180 with a header row and LF line endings."""
    rows = [_clean(r) for r in rows]
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else repr(r[c]) if isinstance(r.get(c), float) else r.get(c) for c in columns])
    return buf.getvalue()


def write_artifacts(out_dir, stem, summary, tables=None):
    """Write ``<stem>.json`` and one ``<stem>_<table>.csv`` per table; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out / f"{stem}.json"
    p.write_bytes(dumps_json(summary).encode())
    paths.append(p)
    for name, (rows, columns) in sorted((tables or {}).items()):
        p = out / f"{stem}_{name}.csv"
        p.write_bytes(dumps_csv(rows, columns).encode())
        paths.append(p)
    return paths
