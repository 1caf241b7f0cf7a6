"""Deterministic CSV and JSON writers.

Every file carries the config hash, seed, tool version and constants block
and nothing time-dependent, so identical runs give identical bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .constants import constants_block
from .pipeline import VERSION


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bytes, bytearray)):
        return obj.hex()
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def provenance(config_hash, seed) -> dict:
    return {"config_hash": config_hash, "seed": int(seed), "version": VERSION, "constants": constants_block()}


def write_json(path, doc) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n")
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def write_csv(path, columns, rows, meta) -> Path:
    """Plot-ready CSV with ``#``-prefixed provenance lines above the header."""
    path = Path(path)
    lines = [f"# {k}: {json.dumps(_clean(v), sort_keys=True)}" for k, v in sorted(meta.items())]
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_histogram(path, hist, meta) -> Path:
    rows = zip(hist.centers.tolist(), hist.counts.tolist())
    return write_csv(path, ("bin_center_ps", "counts"), rows, meta)


def write_preset(result, out_dir) -> list:
    """Write each table of a PresetResult as CSV plus one JSON document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = provenance(result.config_hash(), result.seed)
    paths = [write_csv(out / f"{result.name}_{name}.csv", cols, rows, meta)
             for name, (cols, rows) in sorted(result.tables.items())]
    paths.append(write_json(out / f"{result.name}.json", result.document()))
    return paths
