"""Coefficient recovery for block-structured regression systems.

``bomp`` is Block Orthogonal Matching Pursuit: it grows a support one station
block at a time, choosing the block whose columns correlate most with the
current residual, and refits least squares on the whole support after every
step. ``least_squares`` is the dense (optionally ridge) fit used by the
full M-AR baseline, and ``exhaustive_oracle`` is a brute-force reference for
small problems.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .design import BlockLayout, DesignSystem

ORACLE_MAX_SUPPORTS = 100_000


class SolverError(ValueError):
    pass


class RankDeficientError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    k_max: int | None = None  # None -> min(P, 10)
    residual_tol: float = 1e-6
    normalize_columns: bool = True
    ridge: float = 1e-10
    min_gain: float = 1e-9

    def __post_init__(self):
        if self.k_max is not None and self.k_max < 1:
            raise SolverError("k_max must be >= 1")
        if self.residual_tol < 0:
            raise SolverError("residual_tol must be >= 0")
        if self.ridge < 0:
            raise SolverError("ridge must be >= 0")
        if self.min_gain < 0:
            raise SolverError("min_gain must be >= 0")

    def effective_k_max(self, P: int) -> int:
        return min(P, 10) if self.k_max is None else min(self.k_max, P)


@dataclass
class SparseCoefficients:
    """Block-sparse coefficient vector; zero outside the support blocks.

    ``residual_history`` holds ``||r||_2`` before the first and after every
    selection; ``skipped_blocks`` lists blocks excluded because all their
    columns were zero.
    """

    layout: BlockLayout
    support: tuple[int, ...]
    values: np.ndarray
    target: int
    scaling: np.ndarray | None = None
    trained_at_hour: int | None = None
    residual_history: list[float] = field(default_factory=list)
    skipped_blocks: tuple[int, ...] = ()

    @property
    def K(self) -> int:
        return len(self.support)

    def block_values(self, p: int) -> np.ndarray:
        return self.values[self.layout.block(p)]

    def block_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.block_values(p)) for p in range(self.layout.P)])

    def residual(self, sys: DesignSystem) -> float:
        return float(np.linalg.norm(sys.b - sys.A @ self.values))

    def to_dict(self) -> dict:
        return {
            "target": int(self.target),
            "orders": list(self.layout.orders),
            "support": [int(p) for p in self.support],
            "values": [float(v) for v in self.values],
            "trained_at_hour": None if self.trained_at_hour is None else int(self.trained_at_hour),
        }

    @classmethod
    def from_dict(cls, d: dict, n_max: int | None = None) -> SparseCoefficients:
        layout = BlockLayout(tuple(d["orders"]), n_max)
        return cls(layout, tuple(d["support"]), np.array(d["values"], dtype=float),
                   d["target"], trained_at_hour=d.get("trained_at_hour"))


def _qr_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least squares via column-pivoted QR; raises if A lacks full column rank."""
    M, n = A.shape
    if n == 0:
        return np.zeros(0)
    if n > M:
        raise RankDeficientError(f"{n} columns but only {M} rows")
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(R))
    if d[0] == 0 or d[-1] <= d[0] * max(M, n) * np.finfo(float).eps:
        raise RankDeficientError("matrix is numerically rank deficient")
    z = scipy.linalg.solve_triangular(R, Q.T @ b, check_finite=False)
    x = np.empty(n)
    x[piv] = z
    return x


def _ridge_solve(A: np.ndarray, b: np.ndarray, ridge: float) -> np.ndarray:
    # Augmented system [A; sqrt(ridge) I] avoids forming A^T A.
    n = A.shape[1]
    A_aug = np.vstack([A, math.sqrt(ridge) * np.eye(n)])
    b_aug = np.concatenate([b, np.zeros(n)])
    return _qr_solve(A_aug, b_aug)


def solve_ls(A: np.ndarray, b: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    if ridge > 0:
        return _ridge_solve(A, b, ridge)
    return _qr_solve(A, b)


def _subproblem(A: np.ndarray, b: np.ndarray, ridge: float) -> np.ndarray:
    try:
        return _qr_solve(A, b)
    except RankDeficientError:
        if ridge > 0:
            return _ridge_solve(A, b, ridge)
        return np.linalg.lstsq(A, b, rcond=None)[0]


def least_squares(sys: DesignSystem, ridge: float = 0.0) -> np.ndarray:
    """Minimize ``||b - A x||^2 + ridge * ||x||^2``.

    With ``ridge == 0`` the system must have full column rank.
    """
    if ridge < 0:
        raise SolverError("ridge must be >= 0")
    if sys.M < 1:
        raise SolverError("need at least one row")
    try:
        return solve_ls(sys.A, sys.b, ridge)
    except RankDeficientError as exc:
        raise RankDeficientError(f"{exc}; use ridge > 0 for rank-deficient systems") from None


def _support_columns(layout: BlockLayout, support) -> np.ndarray:
    if not support:
        return np.zeros(0, dtype=int)
    return np.concatenate([np.arange(layout.offsets[p], layout.offsets[p] + layout.orders[p])
                           for p in support])


def bomp(sys: DesignSystem, cfg: SolverConfig | None = None) -> SparseCoefficients:
    """Greedy block-sparse recovery of ``x`` from ``b = A x``."""
    cfg = cfg or SolverConfig()
    layout = sys.layout
    A, b = sys.A, sys.b
    P = layout.P
    k_max = cfg.effective_k_max(P)

    norms = np.linalg.norm(A, axis=0)
    if cfg.normalize_columns:
        scale = np.where(norms > 0, norms, 1.0)
        An = A / scale
    else:
        scale = np.ones(A.shape[1])
        An = A
    skipped = tuple(p for p in range(P) if not np.any(norms[layout.block(p)] > 0))

    values = np.zeros(layout.N)
    b_norm = float(np.linalg.norm(b))
    history = [b_norm]
    if b_norm == 0.0:
        return SparseCoefficients(layout, (), values, sys.target, scale, sys.origin_hour,
                                  history, skipped)

    starts = np.array(layout.offsets)
    excluded = np.zeros(P, dtype=bool)
    excluded[list(skipped)] = True
    support: list[int] = []
    r = b
    x_s = np.zeros(0)
    cols = np.zeros(0, dtype=int)
    while len(support) < k_max:
        if excluded.all():
            break
        scores = np.sqrt(np.add.reduceat((An.T @ r) ** 2, starts))
        scores[excluded] = -np.inf
        best = int(np.argmax(scores))  # first maximum -> lowest block index
        excluded[best] = True
        support.append(best)
        cols = _support_columns(layout, support)
        A_s = An[:, cols]
        x_s = _subproblem(A_s, b, cfg.ridge)
        r = b - A_s @ x_s
        r_norm = float(np.linalg.norm(r))
        prev = history[-1]
        history.append(r_norm)
        if r_norm <= cfg.residual_tol * b_norm:
            break
        if prev > 0 and (prev - r_norm) / prev < cfg.min_gain:
            break

    values[cols] = x_s / scale[cols]
    return SparseCoefficients(layout, tuple(support), values, sys.target, scale,
                              sys.origin_hour, history, skipped)


def exhaustive_oracle(sys: DesignSystem, k: int) -> SparseCoefficients:
    """Best ``k``-block support by enumeration; ties go to the lexicographically first."""
    layout = sys.layout
    P = layout.P
    if not 1 <= k <= P:
        raise SolverError(f"k must be in [1, {P}]")
    if math.comb(P, k) > ORACLE_MAX_SUPPORTS:
        raise SolverError(f"C({P}, {k}) = {math.comb(P, k)} supports exceeds the oracle guard")
    best_res, best_support, best_x = math.inf, None, None
    for support in itertools.combinations(range(P), k):
        cols = _support_columns(layout, support)
        x_s = _subproblem(sys.A[:, cols], sys.b, 0.0)
        res = float(np.linalg.norm(sys.b - sys.A[:, cols] @ x_s))
        if res < best_res:
            best_res, best_support, best_x = res, support, (cols, x_s)
    values = np.zeros(layout.N)
    values[best_x[0]] = best_x[1]
    return SparseCoefficients(layout, tuple(best_support), values, sys.target,
                              np.ones(layout.N), sys.origin_hour,
                              [float(np.linalg.norm(sys.b)), best_res])
