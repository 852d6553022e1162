import json

import numpy as np
import pytest

from sparsewind import BlockLayout, PlantedModel, SparseCoefficients, build_nonuniform, plant, simulate
from sparsewind.synth import SimulationError


def _stack(model, target):
    return model.coefficients[target].values


@pytest.mark.parametrize("seed", range(5))
def test_radius_is_pinned(seed):
    model = plant(12, BlockLayout.uniform(12, 3), 3, seed)
    assert model.spectral_radius() == pytest.approx(0.95, abs=1e-9)


def test_supports():
    model = plant(20, BlockLayout((1, 2, 3, 2) * 5), 4, seed=9)
    for i, c in enumerate(model.coefficients):
        assert c.support[0] == i and c.K == 4 and len(set(c.support)) == 4
        outside = [p for p in range(20) if p not in c.support]
        assert all(not c.block_values(p).any() for p in outside)
    with pytest.raises(ValueError):
        plant(5, BlockLayout.uniform(5, 2), 5, seed=0)


def test_self_only_network_is_decoupled():
    model = plant(4, BlockLayout.uniform(4, 2), 1, seed=5)
    X = model.lag_matrices()
    off = X * (1 - np.eye(4))[None]
    assert not off.any()


def test_determinism():
    a = plant(8, BlockLayout.uniform(8, 2), 2, seed=42)
    b = plant(8, BlockLayout.uniform(8, 2), 2, seed=42)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert simulate(a, 300) == simulate(b, 300)
    assert simulate(a, 300) != simulate(plant(8, BlockLayout.uniform(8, 2), 2, seed=43), 300)


def test_zero_everything_stays_zero():
    model = plant(5, BlockLayout.uniform(5, 2), 2, seed=1, noise_sigma=0.0, baseline_level=0.0)
    ds = simulate(model, 50, initial=np.zeros((5, 2)))
    assert not ds.values.any()


@pytest.mark.parametrize("layout", [BlockLayout.uniform(6, 3), BlockLayout((1, 3, 2, 1, 2, 3), 3)],
                         ids=["uniform", "nonuniform"])
def test_noiseless_self_consistency(layout):
    # positive weights + positive history keep the series positive, so no clipping
    model = plant(6, layout, 3, seed=7, noise_sigma=0.0, baseline_level=0.0, positive=True)
    init = np.random.default_rng(0).uniform(500, 1500, size=(6, layout.n_max))
    ds = simulate(model, 80, burn_in=100, initial=init)
    assert ds.values.min() > 0
    for target in range(6):
        sys = build_nonuniform(ds, target, layout)
        assert np.linalg.norm(sys.b - sys.A @ _stack(model, target)) < 1e-9


def test_ar1_autocovariance():
    a, sigma = 0.8, 1.0
    lay = BlockLayout((1,))
    coef = SparseCoefficients(lay, (0,), np.array([a]), 0)
    model = PlantedModel(lay, [coef], noise_sigma=sigma, seed=2, baseline_level=20.0)
    y = simulate(model, 50000).values[0]
    y = y - y.mean()
    for lag in range(4):
        got = np.dot(y[lag:], y[:len(y) - lag]) / len(y)
        want = a ** lag * sigma ** 2 / (1 - a ** 2)
        assert abs(got - want) <= 0.05 * want


def test_default_level_keeps_speeds_positive():
    model = plant(10, BlockLayout.uniform(10, 3), 3, seed=0)
    assert model.baseline_level == pytest.approx(4 * model.stationary_std().max())
    ds = simulate(model, 1080)
    assert ds.values.min() >= 0
    assert abs(ds.values.mean() - model.baseline_level) < model.baseline_level * 0.2


def test_guards():
    model = plant(4, BlockLayout.uniform(4, 2), 2, seed=0, baseline_level=0.0)
    with pytest.raises(SimulationError, match="clipping"):
        simulate(model, 500)
    with pytest.raises(ValueError):
        simulate(model, 500, burn_in=50)
    lay = BlockLayout((1,))
    wild = PlantedModel(lay, [SparseCoefficients(lay, (0,), np.array([1.5]), 0)], 1.0, 0, 10.0)
    with pytest.raises(SimulationError, match="unstable"):
        simulate(wild, 500)
