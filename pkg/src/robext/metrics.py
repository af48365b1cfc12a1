"""Error metrics and the long-format result table."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .geometry import Manifold

COLUMNS = ("scenario", "n", "r", "alpha", "tau", "estimator", "metric", "value", "stderr", "reps")
KEY_COLUMNS = ("scenario", "n", "r", "alpha", "tau", "estimator", "metric")


def _pairwise_robust(fitted, other, manifold: Manifold):
    fitted = np.asarray(fitted)
    other = np.asarray(other)
    if fitted.shape != other.shape:
        raise ValueError("fitted and reference arrays must have the same shape")
    return np.array([manifold.robust_distance(a, b) for a, b in zip(fitted, other)], dtype=float)


def md_obs(fitted, observed, manifold: Manifold):
    """Mean robust distance between fitted values and the observed responses."""
    return float(np.mean(_pairwise_robust(fitted, observed, manifold)))


def rmse_true(fitted, truth, manifold: Manifold):
    """Root mean squared robust distance to the noiseless regression function."""
    d = _pairwise_robust(fitted, truth, manifold)
    return float(np.sqrt(np.mean(d * d)))


def chord_error(estimate, truth):
    """Euclidean distance between two points of S^d."""
    return float(np.linalg.norm(np.asarray(estimate, float) - np.asarray(truth, float)))


def summarize(values):
    """Mean and standard error of the mean (0 for a single replication)."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan"), 0
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se, int(v.size)


def _norm_key(value):
    if value is None or value == "":
        return None
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return float(value)


class ResultTable:
    """Rows keyed by (scenario, n, r, alpha, tau, estimator, metric)."""

    def __init__(self, rows=None):
        self.rows: list[dict] = []
        self._index: dict[tuple, int] = {}
        for row in rows or []:
            self.append(row)

    def _key(self, row):
        key = []
        for c in KEY_COLUMNS:
            v = row.get(c)
            key.append(v if c in ("scenario", "estimator", "metric") else _norm_key(v))
        return tuple(key)

    def append(self, row):
        row = {c: row.get(c) for c in COLUMNS}
        key = self._key(row)
        if key in self._index:
            raise ValueError(f"duplicate result row {key}")
        self._index[key] = len(self.rows)
        self.rows.append(row)

    def add(self, scenario, estimator, metric, values, n=None, r=None, alpha=None, tau=None):
        value, se, reps = summarize(values)
        self.append({"scenario": scenario, "n": n, "r": r, "alpha": alpha, "tau": tau,
                     "estimator": estimator, "metric": metric, "value": value,
                     "stderr": se, "reps": reps})

    def get(self, scenario, estimator, metric, n=None, r=None, alpha=None, tau=None):
        key = self._key({"scenario": scenario, "n": n, "r": r, "alpha": alpha, "tau": tau,
                         "estimator": estimator, "metric": metric})
        return self.rows[self._index[key]]

    def value(self, *args, **kwargs):
        return float(self.get(*args, **kwargs)["value"])

    def extend(self, other: "ResultTable"):
        for row in other.rows:
            self.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow(["" if row[c] is None else _fmt(row[c]) for c in COLUMNS])
        return buf.getvalue()

    def to_json(self):
        rows = [{c: _json_cell(row[c]) for c in COLUMNS} for row in self.rows]
        return json.dumps({"columns": list(COLUMNS), "rows": rows}, indent=2,
                          default=_json_default, allow_nan=False)

    @classmethod
    def from_csv(cls, text):
        table = cls()
        for raw in csv.DictReader(io.StringIO(text)):
            row = {}
            for c in COLUMNS:
                v = raw.get(c, "")
                if c in ("scenario", "estimator", "metric"):
                    row[c] = v
                elif v == "":
                    row[c] = None
                elif c in ("n", "reps"):
                    row[c] = int(float(v))
                else:
                    row[c] = float(v)
            table.append(row)
        return table


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating, np.integer)):
        return repr(v.item())
    return str(v)


def _json_cell(v):
    # strict JSON has no NaN/inf
    if isinstance(v, (float, np.floating)) and not math.isfinite(float(v)):
        return None
    return v


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")
