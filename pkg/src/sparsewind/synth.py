"""Synthetic station networks driven by planted block-sparse M-AR models."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import scipy.linalg

from .dataset import Dataset, StationMeta
from .design import BlockLayout
from .solver import SparseCoefficients

logger = logging.getLogger(__name__)

TARGET_RADIUS = 0.95
DEFAULT_SIGMA = 0.5
DEFAULT_START = datetime(2014, 1, 6, tzinfo=timezone.utc)
BLOWUP = 1e6
MAX_CLIP_RATE = 0.01


class SimulationError(RuntimeError):
    pass


@dataclass
class PlantedModel:
    """Ground-truth coefficients for every station of a synthetic network.

    ``coefficients[i]`` predicts station ``i`` from the lags of all stations.
    """

    layout: BlockLayout
    coefficients: list[SparseCoefficients]
    noise_sigma: float = DEFAULT_SIGMA
    seed: int = 0
    baseline_level: float = 0.0

    @property
    def P(self) -> int:
        return self.layout.P

    def lag_matrices(self) -> np.ndarray:
        """``X[j-1][i, p]``: weight of station ``p`` at lag ``j`` in station ``i``'s equation."""
        P, n_max = self.P, self.layout.n_max
        X = np.zeros((n_max, P, P))
        for i, c in enumerate(self.coefficients):
            for p in range(P):
                blk = c.block_values(p)
                X[:len(blk), i, p] = blk
        return X

    def companion(self) -> np.ndarray:
        X = self.lag_matrices()
        n_max, P = X.shape[0], self.P
        C = np.zeros((P * n_max, P * n_max))
        C[:P, :] = np.hstack(list(X))
        if n_max > 1:
            C[P:, :-P] = np.eye(P * (n_max - 1))
        return C

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))

    def stationary_std(self) -> np.ndarray:
        """Per-station standard deviation of the stationary noise-driven process."""
        C = self.companion()
        Q = np.zeros_like(C)
        Q[:self.P, :self.P] = np.eye(self.P) * self.noise_sigma ** 2
        S = scipy.linalg.solve_discrete_lyapunov(C, Q)
        return np.sqrt(np.clip(np.diag(S)[:self.P], 0, None))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "noise_sigma": self.noise_sigma,
            "baseline_level": self.baseline_level,
            "n_max": self.layout.n_max,
            "orders": list(self.layout.orders),
            "spectral_radius": self.spectral_radius(),
            "targets": [c.to_dict() for c in self.coefficients],
        }


def plant(P: int, layout: BlockLayout, K: int, seed: int, *,
          noise_sigma: float = DEFAULT_SIGMA, baseline_level: float | None = None,
          positive: bool = False, radius: float = TARGET_RADIUS) -> PlantedModel:
    """Draw a stable block-sparse network: ``K`` blocks per target, self-block included.

    Lag-``j`` matrices are rescaled by ``c**j``, which scales every companion
    eigenvalue by ``c``, so the spectral radius lands on ``radius`` exactly.
    ``baseline_level=None`` picks four stationary standard deviations of the
    most variable station. ``positive`` draws nonnegative weights.
    """
    if layout.P != P:
        raise ValueError(f"layout has {layout.P} blocks, expected {P}")
    if not 1 <= K < P:
        raise ValueError(f"need 1 <= K < P, got K={K}, P={P}")
    rng = np.random.default_rng(seed)
    coefs = []
    for i in range(P):
        others = [p for p in range(P) if p != i]
        picked = sorted(int(p) for p in rng.choice(others, size=K - 1, replace=False))
        support = (i, *picked)
        values = np.zeros(layout.N)
        for p in support:
            w = rng.standard_normal(layout.orders[p])
            values[layout.block(p)] = np.abs(w) if positive else w
        coefs.append(SparseCoefficients(layout, support, values, i))
    model = PlantedModel(layout, coefs, noise_sigma, seed, 0.0)

    rho = model.spectral_radius()
    if rho == 0:
        raise ValueError("planted model is nilpotent; cannot rescale")
    c = radius / rho
    lag_of_col = np.concatenate([np.arange(1, n + 1) for n in layout.orders])
    for coef in coefs:
        coef.values = coef.values * c ** lag_of_col

    if baseline_level is None:
        baseline_level = float(4.0 * model.stationary_std().max())
    model.baseline_level = baseline_level
    return model


def _run(model: PlantedModel, T: int, burn_in: int,
         initial: np.ndarray | None) -> tuple[np.ndarray, float]:
    P, n = model.P, model.layout.n_max
    X = model.lag_matrices()
    mu = np.full(P, model.baseline_level)
    drive = mu - np.einsum("jip,p->i", X, mu)
    total = n + burn_in + T
    Y = np.empty((P, total))
    if initial is None:
        Y[:, :n] = mu[:, None]
    else:
        init = np.asarray(initial, dtype=float)
        if init.shape != (P, n):
            raise ValueError(f"initial history must be shape {(P, n)}")
        Y[:, :n] = init
    rng = np.random.default_rng([model.seed, 1])
    noise = model.noise_sigma * rng.standard_normal((P, total - n))
    for t in range(n, total):
        lagged = Y[:, t - n:t][:, ::-1]  # column j-1 holds lag j
        Y[:, t] = np.einsum("jip,pj->i", X, lagged) + drive + noise[:, t - n]
        if np.any(np.abs(Y[:, t]) > BLOWUP):
            raise SimulationError(f"simulation unstable at step {t - n}")
    Y = Y[:, n + burn_in:]
    clip_rate = float(np.mean(Y < 0))
    return Y, clip_rate


def simulate(model: PlantedModel, T: int, burn_in: int = 200, *,
             initial: np.ndarray | None = None, start: datetime = DEFAULT_START,
             ids: list[str] | None = None) -> Dataset:
    """Forward-simulate ``T`` hours after discarding ``burn_in`` hours.

    ``initial`` is a ``(P, n_max)`` history, oldest column first; it defaults
    to the baseline level. Negative speeds are clipped to zero; more than 1%
    clipping is an error.
    """
    if T < model.layout.n_max + 1:
        raise ValueError("T must be at least n_max + 1")
    if burn_in < 100:
        raise ValueError("burn_in must be >= 100")
    Y, clip_rate = _run(model, T, burn_in, initial)
    if clip_rate >= MAX_CLIP_RATE:
        raise SimulationError(f"clipping rate {clip_rate:.2%} >= 1%")
    logger.info("simulated %d x %d hours, clipping rate %.4f%%", model.P, T, 100 * clip_rate)
    Y = np.maximum(Y, 0.0)
    ids = ids or [f"S{p + 1:02d}" for p in range(model.P)]
    return Dataset(tuple(StationMeta(i, f"synthetic station {i}") for i in ids), start, Y)


def clip_rate(model: PlantedModel, T: int, burn_in: int = 200) -> float:
    return _run(model, T, burn_in, None)[1]
