"""Append-only solver traces and their CSV serialization.

One row per outer iteration.  The CSV column set is fixed (it is the wire
format the certifier parses); in-memory rows may carry extra fields such as
``y_step_norm`` or ``prox_branch`` which are not serialized.  Run-level
metadata travels as ``# key=value`` comment lines at the top of the file.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

CSV_COLUMNS = ["k", "time_s", "f", "phi", "h", "delta_k", "d_k", "alpha_k",
               "beta_k", "L_or_gamma", "lambda_k", "inner_iters", "backtracks",
               "psi", "x_step_norm"]

_INT_COLUMNS = {"k", "inner_iters", "backtracks"}


def _fmt(value) -> str:
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


class Trace:
    """Sequence of per-iteration rows plus run metadata."""

    def __init__(self, meta: Optional[dict] = None):
        self.meta = dict(meta or {})
        self.rows: list[dict] = []
        #: final iterate, populated by solvers; never serialized
        self.x_final = None

    def append(self, **row) -> dict:
        row.setdefault("k", len(self.rows))
        self.rows.append(row)
        return row

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r.get(name, math.nan) for r in self.rows]

    def write_csv(self, path, f_star: Optional[float] = None) -> None:
        columns = list(CSV_COLUMNS)
        if f_star is not None:
            columns.append("rel_gap")
        with open(path, "w") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}={_fmt_meta(self.meta[key])}\n")
            fh.write(",".join(columns) + "\n")
            for row in self.rows:
                vals = []
                for col in columns:
                    if col == "rel_gap":
                        vals.append(_fmt((row["f"] - f_star) / f_star))
                    elif col in _INT_COLUMNS:
                        vals.append(str(int(row.get(col, 0))))
                    else:
                        vals.append(_fmt(row.get(col, math.nan)))
                fh.write(",".join(vals) + "\n")

    @classmethod
    def read_csv(cls, path) -> "Trace":
        trace = cls()
        header: Optional[list] = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    trace.meta[key.strip()] = _parse_meta(val)
                    continue
                parts = line.split(",")
                if header is None:
                    header = parts
                    continue
                row = {}
                for col, raw in zip(header, parts):
                    if col in _INT_COLUMNS:
                        row[col] = int(raw)
                    else:
                        row[col] = float(raw)
                trace.rows.append(row)
        return trace


def _fmt_meta(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _parse_meta(raw: str):
    raw = raw.strip()
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def csv_equal_ignoring_time(path_a, path_b) -> bool:
    """Byte comparison of two trace files with the time_s column blanked."""
    return _strip_time(path_a) == _strip_time(path_b)


def _strip_time(path) -> list:
    out = []
    idx = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                out.append(line)
                continue
            parts = line.split(",")
            if idx is None:
                idx = parts.index("time_s")
            else:
                parts[idx] = ""
            out.append(",".join(parts))
    return out
