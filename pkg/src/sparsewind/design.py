"""Regression systems ``b = A x`` for multivariate autoregressive models.

Each station contributes one contiguous block of lagged columns. Inside a
block the lag-1 column comes first. Row ``m`` of ``A`` predicts hour
``origin_hour + m`` of the target station.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .dataset import Dataset


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class BlockLayout:
    """Per-station lag orders and the implied column partition."""

    orders: tuple[int, ...]
    n_max: int | None = None

    def __post_init__(self):
        orders = tuple(int(n) for n in self.orders)
        if not orders:
            raise DesignError("layout needs at least one block")
        if min(orders) < 1:
            raise DesignError(f"every lag order must be >= 1, got {orders}")
        n_max = max(orders) if self.n_max is None else int(self.n_max)
        if n_max < max(orders):
            raise DesignError(f"n_max={n_max} is smaller than max order {max(orders)}")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "n_max", n_max)

    @classmethod
    def uniform(cls, P: int, n: int) -> BlockLayout:
        return cls((n,) * P, n)

    @property
    def P(self) -> int:
        return len(self.orders)

    @property
    def N(self) -> int:
        return sum(self.orders)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for n in self.orders:
            out.append(acc)
            acc += n
        return tuple(out)

    def block(self, p: int) -> slice:
        off = self.offsets[p]
        return slice(off, off + self.orders[p])

    def block_of_column(self) -> np.ndarray:
        return np.repeat(np.arange(self.P), self.orders)

    def is_uniform(self) -> bool:
        return len(set(self.orders)) == 1 and self.n_max == self.orders[0]


@dataclass(frozen=True)
class DesignSystem:
    A: np.ndarray
    b: np.ndarray
    layout: BlockLayout
    target: int
    origin_hour: int

    @property
    def M(self) -> int:
        return self.A.shape[0]


def build_nonuniform(ds: Dataset, target: int, layout: BlockLayout,
                     rows: int | None = None) -> DesignSystem:
    """Build ``(A, b)`` with block ``p`` holding lags ``1..n_p`` of station ``p``.

    Uses the most recent ``rows`` predictable hours (default: all
    ``T - n_max`` of them).
    """
    return design_from_array(ds.values, target, layout, rows)


def design_from_array(y: np.ndarray, target: int, layout: BlockLayout,
                      rows: int | None = None) -> DesignSystem:
    """Same as :func:`build_nonuniform` on a raw ``(P, T)`` array."""
    P, T = y.shape
    if not 0 <= target < P:
        raise DesignError(f"target index {target} out of range for P={P}")
    if layout.P != P:
        raise DesignError(f"layout has {layout.P} blocks, dataset has {P} stations")
    M = T - layout.n_max if rows is None else int(rows)
    if M < 1:
        raise DesignError(f"need at least one row (T={T}, n_max={layout.n_max})")
    if T < layout.n_max + M:
        raise DesignError(
            f"insufficient history: T={T} < n_max + M = {layout.n_max + M}")
    t0 = T - M
    A = np.empty((M, layout.N))
    for p, (off, n_p) in enumerate(zip(layout.offsets, layout.orders)):
        for lag in range(1, n_p + 1):
            A[:, off + lag - 1] = y[p, t0 - lag:T - lag]
    b = y[target, t0:T].copy()
    return DesignSystem(A, b, layout, target, t0)


def build_uniform(ds: Dataset, target: int, n: int, rows: int | None = None) -> DesignSystem:
    """Uniform-order special case: every station contributes ``n`` lags."""
    return build_nonuniform(ds, target, BlockLayout.uniform(ds.P, n), rows)


def predict_row(history: Sequence[Sequence[float]], layout: BlockLayout) -> np.ndarray:
    """Regressor row for one forecast step.

    ``history[p]`` lists station ``p``'s values most-recent-first; actual and
    recursively predicted values are used alike.
    """
    if len(history) != layout.P:
        raise DesignError(f"history has {len(history)} stations, layout has {layout.P}")
    row = np.empty(layout.N)
    for p, (off, n_p) in enumerate(zip(layout.offsets, layout.orders)):
        h = np.asarray(history[p], dtype=float)
        if h.shape[0] < n_p:
            raise DesignError(
                f"station {p}: need {n_p} past values, history has {h.shape[0]}")
        row[off:off + n_p] = h[:n_p]
    return row
