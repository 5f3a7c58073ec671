"""Per-iteration run records and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

COLUMNS = ("iter", "f", "g", "grad_norm", "dist_ref", "krylov_iters", "grad_calls", "hvp_calls",
           "wall_s", "status")
INT_COLUMNS = ("iter", "krylov_iters", "grad_calls", "hvp_calls")
STATUSES = ("ok", "clamped", "converged", "max_iters", "diverged")


@dataclass
class TraceRecord:
    iter: int
    f: float
    g: float
    grad_norm: float
    dist_ref: float
    krylov_iters: int
    grad_calls: int
    hvp_calls: int
    wall_s: float
    status: str
    x: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    y: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def oracle_calls(self):
        return self.grad_calls + self.hvp_calls

    def row(self):
        return [getattr(self, c) for c in COLUMNS]


@dataclass
class RunTrace:
    records: List[TraceRecord]
    status: str
    x: np.ndarray
    y: np.ndarray
    method: str = ""
    clamp_events: int = 0
    message: str = ""
    grad_calls: int = 0
    hvp_calls: int = 0

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final(self):
        return self.records[-1]


def _fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return "%.17g" % value


def write_trace(trace, path):
    """Write the trace as CSV; floats use 17 significant digits so they round-trip."""
    records = trace.records if isinstance(trace, RunTrace) else list(trace)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow([_fmt(v) for v in r.row()])
    return path


def read_trace(path):
    """Read a CSV trace back into a list of :class:`TraceRecord`."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        for row in reader:
            kw = {}
            for c in COLUMNS:
                if c == "status":
                    kw[c] = row[c]
                elif c in INT_COLUMNS:
                    kw[c] = int(row[c])
                else:
                    kw[c] = float(row[c])
            out.append(TraceRecord(**kw))
    return out
