"""Deterministic CSV/JSON writers shared by every output artifact.

Floats are written with ``repr`` so files round-trip bit-exactly; JSON keys are
sorted and nothing time- or host-dependent is ever recorded.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__

VERSION_STRING = f"srlab {__version__}"


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def dumps_json(payload: dict) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, payload: dict, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(payload)
    doc["version"] = VERSION_STRING
    if config is not None:
        doc["config"] = config
    path.write_text(dumps_json(doc))
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows, config: dict | None = None) -> Path:
    """CSV with leading ``#`` comment lines carrying version and config echo."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# version: {VERSION_STRING}\n")
        if config is not None:
            fh.write("# config: " + json.dumps(_plain(config), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader if row]
