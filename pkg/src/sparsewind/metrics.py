"""Point-forecast error measures and comparison tables."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


class MetricError(ValueError):
    pass


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.shape != p.shape:
        raise MetricError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise MetricError("empty input")
    return a, p


def mae(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean(np.abs(a - p)))


def rmse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def nrmse(actual, predicted) -> float:
    """RMSE as a percentage of the observed range ``max(actual) - min(actual)``."""
    a, p = _pair(actual, predicted)
    span = float(a.max() - a.min())
    if span <= 0:
        raise MetricError("observed data has zero range")
    return 100.0 * rmse(a, p) / span


def reduction(base: float, improved: float) -> float:
    """Percent reduction of ``improved`` relative to ``base``, to one decimal."""
    if base <= 0:
        raise MetricError("base must be positive")
    return round(100.0 * (base - improved) / base, 1)


@dataclass(frozen=True)
class ReportRow:
    method: str
    mae: float
    rmse: float
    nrmse: float
    per_step: tuple[tuple[int, float, float], ...] = ()  # (step, mae, rmse)


@dataclass
class EvaluationReport:
    target: str
    span: tuple[int, int]
    rows: list[ReportRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=lambda: [
        "NRMSE normalized by the range of the target's observed values over the evaluation span",
        "metrics pool all horizon steps; per_step gives the breakdown by step",
    ])

    def add(self, method: str, actual, predicted, steps=None) -> ReportRow:
        a, p = _pair(actual, predicted)
        per_step = ()
        if steps is not None:
            s = np.asarray(steps)
            per_step = tuple((int(h), mae(a[s == h], p[s == h]), rmse(a[s == h], p[s == h]))
                             for h in np.unique(s))
        row = ReportRow(method, mae(a, p), rmse(a, p), nrmse(a, p), per_step)
        self.rows.append(row)
        return row

    def row(self, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def reductions(self, reference: str) -> dict[str, float]:
        """NRMSE reduction of ``reference`` against every other method."""
        ref = self.row(reference).nrmse
        return {r.method: reduction(r.nrmse, ref) for r in self.rows if r.method != reference}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "mae_ms", "rmse_ms", "nrmse_pct"])
        for r in self.rows:
            w.writerow([r.method, repr(r.mae), repr(r.rmse), repr(r.nrmse)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "span": list(self.span),
            "rows": [{"method": r.method, "mae_ms": r.mae, "rmse_ms": r.rmse,
                      "nrmse_pct": r.nrmse,
                      "per_step": [{"step": h, "mae_ms": m, "rmse_ms": s}
                                   for h, m, s in r.per_step]}
                     for r in self.rows],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def format_table(self) -> str:
        lines = [f"{'method':<24}{'MAE (m/s)':>12}{'RMSE (m/s)':>12}{'NRMSE (%)':>12}"]
        for r in self.rows:
            lines.append(f"{r.method:<24}{r.mae:>12.4f}{r.rmse:>12.4f}{r.nrmse:>12.2f}")
        return "\n".join(lines)
