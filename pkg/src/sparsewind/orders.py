"""Per-station lag orders from lagged cross-correlations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset, concat
from .design import BlockLayout

DEFAULT_NMAX = 6
DEFAULT_TAU = 0.4
DEFAULT_GRID = tuple((n, tau) for n in (3, 4, 6, 8) for tau in (0.2, 0.4, 0.6))


@dataclass(frozen=True)
class CorrelationProfile:
    """``rho[p, l-1]`` is corr(y_target[t], y_p[t - l]) for lags ``l = 1..L``."""

    target: int
    rho: np.ndarray

    @property
    def L(self) -> int:
        return self.rho.shape[1]


def correlate(ds: Dataset, target: int, L: int) -> CorrelationProfile:
    """Pearson correlation of the target against every station at lags ``1..L``.

    Zero-variance windows give a correlation of 0.
    """
    T = ds.T
    if L < 1:
        raise ValueError("L must be >= 1")
    if T - L < 3:
        raise ValueError(f"degenerate correlation window: T={T}, L={L}")
    y = ds.values
    rho = np.zeros((ds.P, L))
    for lag in range(1, L + 1):
        a = y[target, lag:]
        a = a - a.mean()
        B = y[:, :T - lag]
        B = B - B.mean(axis=1, keepdims=True)
        denom = np.sqrt((a @ a) * np.einsum("pt,pt->p", B, B))
        num = B @ a
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
        rho[:, lag - 1] = np.clip(r, -1.0, 1.0)
    return CorrelationProfile(target, rho)


def select_orders(profile: CorrelationProfile, n_max: int = DEFAULT_NMAX,
                  tau: float = DEFAULT_TAU) -> BlockLayout:
    """Order of each block = largest lag ``<= n_max`` with ``|rho| >= tau``, at least 1."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    if profile.L < n_max:
        raise ValueError(f"profile scanned {profile.L} lags, need n_max={n_max}")
    qualifies = np.abs(profile.rho[:, :n_max]) >= tau
    orders = []
    for row in qualifies:
        hits = np.flatnonzero(row)
        orders.append(int(hits[-1]) + 1 if hits.size else 1)
    return BlockLayout(tuple(orders), n_max)


def layouts_for_all(ds: Dataset, n_max: int = DEFAULT_NMAX,
                    tau: float = DEFAULT_TAU) -> list[BlockLayout]:
    """Threshold layouts with every station in turn as the target."""
    return [select_orders(correlate(ds, p, n_max), n_max, tau) for p in range(ds.P)]


@dataclass(frozen=True)
class TuningResult:
    n_max: int
    tau: float
    layouts: tuple[BlockLayout, ...]
    scores: tuple[tuple[int, float, float, int], ...]  # (n_max, tau, rmse, N) per grid entry

    def layout(self, target: int) -> BlockLayout:
        return self.layouts[target]


def tune_order_params(ds_train: Dataset, ds_val: Dataset, target: int,
                      grid: Iterable[tuple[int, float]] = DEFAULT_GRID,
                      cfg=None) -> TuningResult:
    """Pick ``(n_max, tau)`` by validation RMSE of the nonuniform backtest.

    Correlations come from ``ds_train`` only; the backtest forecasts the
    ``ds_val`` hours. Ties go to the smaller target layout, then grid order.
    """
    from .forecast import ForecastConfig, Method, backtest
    from .metrics import rmse

    grid = list(grid)
    if not grid:
        raise ValueError("empty tuning grid")
    full = concat(ds_train, ds_val)
    split = ds_train.T
    best = None
    scores = []
    for n_max, tau in grid:
        layouts = layouts_for_all(ds_train, n_max, tau)
        method = Method("cst_nonuniform", layouts=tuple(layouts))
        if cfg is None:
            fcfg = ForecastConfig(method, window=min(720, split))
        else:
            fcfg = ForecastConfig(method, cfg.horizon, min(cfg.window, split), cfg.solver,
                                  cfg.center)
        run = backtest(full, split, fcfg, target)
        err = rmse(run.actual, run.predicted)
        N = layouts[target].N
        scores.append((n_max, tau, err, N))
        if best is None or (err, N) < (best[0], best[1]):
            best = (err, N, n_max, tau, tuple(layouts))
    return TuningResult(best[2], best[3], best[4], tuple(scores))


def tune_orders(ds_train: Dataset, ds_val: Dataset, target: int,
                grid: Sequence[tuple[int, float]] = DEFAULT_GRID, cfg=None) -> BlockLayout:
    return tune_order_params(ds_train, ds_val, target, grid, cfg).layout(target)
