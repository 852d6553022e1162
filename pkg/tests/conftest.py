from datetime import datetime, timezone

import numpy as np
import pytest

from sparsewind import BlockLayout, Dataset, StationMeta, plant, simulate

START = datetime(2014, 1, 6, tzinfo=timezone.utc)


def make_dataset(values, ids=None, start=START) -> Dataset:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    ids = ids or [f"S{p + 1:02d}" for p in range(values.shape[0])]
    return Dataset(tuple(StationMeta(i) for i in ids), start, values)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_planted():
    """Six-station planted network, 400 hours; cheap enough for backtests."""
    model = plant(6, BlockLayout.uniform(6, 2), 2, seed=3)
    return model, simulate(model, 400)


def planted_system(seed, P=10, n=3, M=60, K=2, noise=0.0):
    """Gaussian ``A`` with a block ``K``-sparse ``x*``; returns ``(sys, x*, support)``."""
    from sparsewind.design import DesignSystem

    r = np.random.default_rng(seed)
    layout = BlockLayout.uniform(P, n)
    A = r.standard_normal((M, layout.N))
    support = tuple(sorted(r.choice(P, K, replace=False).tolist()))
    x = np.zeros(layout.N)
    for p in support:
        x[layout.block(p)] = r.standard_normal(n)
    b = A @ x + noise * r.standard_normal(M)
    return DesignSystem(A, b, layout, 0, 0), x, support


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
