"""Rolling recursive multi-step backtests.

Every method reduces to one linear predictor per station. At each refresh
origin the predictors are refit on the most recent ``window`` hours, then the
next ``horizon`` hours are forecast for all stations at once, feeding each
step's predictions back in as regressors for the following step. The next
cycle starts again from actual measurements.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .design import BlockLayout, DesignError, design_from_array, predict_row
from .solver import SolverConfig, SolverError, SparseCoefficients, bomp, least_squares

logger = logging.getLogger(__name__)

AUTO_RIDGE = 1e-8
METHOD_KINDS = ("persistence", "ar", "ls_mar", "cst_uniform", "cst_nonuniform")
DEFAULT_NONUNIFORM_NMAX = 6
DEFAULT_NONUNIFORM_TAU = 0.4


class ForecastError(RuntimeError):
    pass


@dataclass(frozen=True)
class Method:
    """A forecasting method and its structural parameters.

    For ``cst_nonuniform`` either ``layouts`` (one per predicted station) is
    given, or orders are chosen from the pre-split data by correlation
    thresholding with ``n_max`` and ``tau``.
    """

    kind: str
    order: int | None = None
    layouts: tuple[BlockLayout, ...] | None = None
    n_max: int = DEFAULT_NONUNIFORM_NMAX
    tau: float = DEFAULT_NONUNIFORM_TAU

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method {self.kind!r}; expected one of {METHOD_KINDS}")
        if self.kind in ("ar", "ls_mar", "cst_uniform"):
            if self.order is None or self.order < 1:
                raise ValueError(f"{self.kind} needs a lag order >= 1")

    @property
    def label(self) -> str:
        if self.kind in ("ar", "ls_mar", "cst_uniform"):
            return f"{self.kind}({self.order})"
        return self.kind

    @property
    def slug(self) -> str:
        return re.sub(r"[^A-Za-z0-9]+", "_", self.label).strip("_")

    @property
    def sparse(self) -> bool:
        return self.kind.startswith("cst")

    def history_needed(self) -> int:
        if self.kind == "persistence":
            return 1
        if self.kind == "cst_nonuniform":
            if self.layouts is not None:
                return max(l.n_max for l in self.layouts)
            return self.n_max
        return self.order

    def with_layouts(self, layouts: Sequence[BlockLayout]) -> Method:
        return Method(self.kind, self.order, tuple(layouts), self.n_max, self.tau)


_METHOD_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*(\d+)\s*\))?\s*$")


def parse_method(text: str) -> Method:
    """Parse ``persistence``, ``ar(3)``, ``ls_mar(3)``, ``cst_uniform(3)``, ``cst_nonuniform``."""
    m = _METHOD_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse method {text!r}")
    kind, order = m.group(1), m.group(2)
    return Method(kind, int(order) if order else None)


def split_methods(text: str) -> list[Method]:
    # commas inside parentheses never occur, so a plain split is enough
    return [parse_method(t) for t in text.split(",") if t.strip()]


@dataclass(frozen=True)
class ForecastConfig:
    """Backtest protocol settings.

    ``center`` subtracts each station's training-window mean before fitting
    and adds it back to the forecasts, which gives every model-based method
    an implicit per-station intercept.
    """

    method: Method
    horizon: int = 6
    window: int = 720
    solver: SolverConfig = field(default_factory=SolverConfig)
    center: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.window < self.method.history_needed() + 1:
            raise ValueError("window must exceed the largest lag order")


@dataclass(frozen=True)
class StationModel:
    """Linear one-step predictor for ``station`` from the lags of ``inputs``."""

    station: int
    inputs: tuple[int, ...]
    layout: BlockLayout
    coef: np.ndarray

    def predict(self, recent: np.ndarray) -> float:
        # recent: (P, h) most-recent-first
        row = predict_row([recent[q] for q in self.inputs], self.layout)
        return float(row @ self.coef)


def _dense_fit(sys) -> np.ndarray:
    ridge = 0.0
    if sys.A.shape[1] >= sys.M:
        ridge = AUTO_RIDGE
        logger.info("N=%d >= M=%d, using ridge %g", sys.A.shape[1], sys.M, ridge)
    return least_squares(sys, ridge)


def _dense_coefficients(sys, x) -> SparseCoefficients:
    support = tuple(p for p in range(sys.layout.P)
                    if np.any(x[sys.layout.block(p)] != 0))
    return SparseCoefficients(sys.layout, support, x, sys.target,
                              trained_at_hour=sys.origin_hour)


def _values(train) -> np.ndarray:
    return train.values if isinstance(train, Dataset) else np.asarray(train, dtype=float)


def fit_persistence(P: int) -> list[StationModel]:
    """Each station's next value is its last one; no training data involved."""
    return [StationModel(p, (p,), BlockLayout((1,)), np.ones(1)) for p in range(P)]


def fit_ar(train, order: int) -> tuple[list[StationModel], list[SparseCoefficients]]:
    """Single-station least squares on each station's own lags."""
    y = _values(train)
    models, coefs = [], []
    for p in range(y.shape[0]):
        sys = design_from_array(y[p:p + 1], 0, BlockLayout((order,)))
        x = _dense_fit(sys)
        models.append(StationModel(p, (p,), sys.layout, x))
        coefs.append(_dense_coefficients(sys, x))
    return models, coefs


def fit_ls_mar(train, order: int) -> tuple[list[StationModel], list[SparseCoefficients]]:
    y = _values(train)
    P = y.shape[0]
    layout = BlockLayout.uniform(P, order)
    models, coefs = [], []
    for p in range(P):
        sys = design_from_array(y, p, layout)
        x = _dense_fit(sys)
        models.append(StationModel(p, tuple(range(P)), layout, x))
        coefs.append(_dense_coefficients(sys, x))
    return models, coefs


def fit_cst(train, layouts: Sequence[BlockLayout], solver_cfg: SolverConfig | None = None
            ) -> tuple[list[StationModel], list[SparseCoefficients]]:
    """One block-sparse fit per station; ``layouts[p]`` is the layout used to predict ``p``."""
    y = _values(train)
    P = y.shape[0]
    if len(layouts) != P:
        raise ValueError(f"need {P} layouts, got {len(layouts)}")
    models, coefs = [], []
    for p in range(P):
        sys = design_from_array(y, p, layouts[p])
        c = bomp(sys, solver_cfg)
        models.append(StationModel(p, tuple(range(P)), layouts[p], c.values))
        coefs.append(c)
    return models, coefs


def resolve_layouts(method: Method, ds: Dataset, split: int) -> Method:
    """Fill in per-station nonuniform layouts from the data before ``split``."""
    if method.kind != "cst_nonuniform" or method.layouts is not None:
        return method
    from .orders import layouts_for_all
    return method.with_layouts(layouts_for_all(ds.slice(0, split), method.n_max, method.tau))


@dataclass
class ForecastRun:
    target: int
    method: str
    hours: np.ndarray
    predicted: np.ndarray
    actual: np.ndarray
    steps: np.ndarray
    retrain_points: list[int]
    coefficients_log: list[SparseCoefficients] = field(default_factory=list)
    horizon: int = 6
    window: int = 720
    center: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hour", "actual", "predicted", "method"])
        for h, a, p in zip(self.hours, self.actual, self.predicted):
            w.writerow([int(h), repr(float(a)), repr(float(p)), self.method])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "target": int(self.target),
            "method": self.method,
            "horizon": self.horizon,
            "window": self.window,
            "center": self.center,
            "hours": [int(h) for h in self.hours],
            "steps": [int(s) for s in self.steps],
            "actual": [float(a) for a in self.actual],
            "predicted": [float(p) for p in self.predicted],
            "retrain_points": [int(t) for t in self.retrain_points],
            "coefficients_log": [c.to_dict() for c in self.coefficients_log],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def backtest(ds: Dataset, split: int, cfg: ForecastConfig, target: int) -> ForecastRun:
    """Forecast hours ``[split, T)`` for ``target`` in refresh cycles of ``cfg.horizon``."""
    P, T = ds.P, ds.T
    H, W = cfg.horizon, cfg.window
    if not 0 <= target < P:
        raise ForecastError(f"target index {target} out of range for P={P}")
    if not 0 < split < T:
        raise ForecastError(f"split hour {split} outside (0, {T})")
    if T - split < H:
        raise ForecastError(f"validation span {T - split} shorter than horizon {H}")
    if split < W:
        raise ForecastError(f"split hour {split} leaves fewer than window={W} training hours")

    method = resolve_layouts(cfg.method, ds, split)
    lags = method.history_needed()
    Y = ds.values
    hours, preds, actuals, steps, retrain, log = [], [], [], [], [], []

    for cycle, t0 in enumerate(range(split, T, H)):
        span = min(H, T - t0)
        offset = np.zeros(P)
        try:
            if method.kind == "persistence":
                models, coefs = fit_persistence(P), None
            else:
                train = Y[:, t0 - W:t0]
                if cfg.center:
                    offset = train.mean(axis=1)
                    train = train - offset[:, None]
                if method.kind == "ar":
                    models, coefs = fit_ar(train, method.order)
                elif method.kind == "ls_mar":
                    models, coefs = fit_ls_mar(train, method.order)
                elif method.kind == "cst_uniform":
                    models, coefs = fit_cst(train, [BlockLayout.uniform(P, method.order)] * P,
                                            cfg.solver)
                else:
                    models, coefs = fit_cst(train, method.layouts, cfg.solver)
        except (SolverError, DesignError) as exc:
            raise ForecastError(f"cycle {cycle} (origin hour {t0}): {exc}") from exc
        retrain.append(t0)
        if coefs is not None:
            c = coefs[target]
            c.trained_at_hour = t0
            log.append(c)

        # Only actuals strictly before t0 enter the buffer.
        buf = np.empty((P, lags + span))
        buf[:, :lags] = Y[:, t0 - lags:t0] - offset[:, None]
        for h in range(span):
            recent = buf[:, lags + h - 1::-1][:, :lags]
            step = np.array([m.predict(recent) for m in models])
            buf[:, lags + h] = step
            step = step + offset
            hours.append(t0 + h)
            preds.append(step[target])
            actuals.append(Y[target, t0 + h])
            steps.append(h + 1)

    return ForecastRun(target, method.label, np.array(hours), np.array(preds),
                       np.array(actuals), np.array(steps), retrain, log, H, W, cfg.center)
