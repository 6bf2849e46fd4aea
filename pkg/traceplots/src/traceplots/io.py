"""File-format readers for the solver's outputs.

Only the documented file contracts are consumed: trace CSVs with columns
(k, g_val, primal_val, subgrad_norm, gamma, in_rfgor, bits_epoch, bits_cum),
their JSON sidecars carrying the reference value g_star, the run summary
CSV, and the wide-format resample matrices (k, err_sq_001, ...).
"""

import csv
import json
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("k", "g_val", "primal_val", "subgrad_norm", "gamma",
                 "in_rfgor", "bits_epoch", "bits_cum")


class TraceFormatError(ValueError):
    pass


def read_trace(path):
    path = Path(path)
    if not path.exists():
        raise TraceFormatError(f"trace file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise TraceFormatError(
                f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise TraceFormatError(f"{path}: empty trace")
    out = {name: np.array([float(r[name]) for r in rows])
           for name in TRACE_COLUMNS}
    out["k"] = out["k"].astype(int)
    out["bits_cum"] = out["bits_cum"].astype(int)
    return out


def read_sidecar(trace_path):
    side = Path(trace_path).with_suffix(".json")
    if not side.exists():
        raise TraceFormatError(f"missing sidecar for trace {trace_path}")
    with open(side) as fh:
        payload = json.load(fh)
    if "g_star" not in payload:
        raise TraceFormatError(f"{side}: sidecar has no g_star reference")
    return payload


def read_summary(path):
    path = Path(path)
    if not path.exists():
        raise TraceFormatError(f"summary file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"run", "k_star", "k0", "bits"}
        if not required <= set(reader.fieldnames or ()):
            raise TraceFormatError(
                f"{path}: summary needs columns {sorted(required)}, got "
                f"{reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise TraceFormatError(f"{path}: empty summary")
    return rows


def read_error_profile(path):
    """Wide resample matrix: first column k, remaining columns one trial
    each; returns (k, (len(k), trials) array)."""
    path = Path(path)
    if not path.exists():
        raise TraceFormatError(f"profile file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "k" or len(header) < 2:
            raise TraceFormatError(f"{path}: not a resample profile")
        ks, rows = [], []
        for row in reader:
            ks.append(int(row[0]))
            rows.append([float(v) for v in row[1:]])
    return np.array(ks), np.array(rows)
