# pytest tests/test_metrics.py -v

import logging

import numpy as np
import pytest

from models.density import DensityField, Grid1D, WeightedAtoms
from models.features import FeatureModel
from models.geometry import Domain, DistanceKind
from services import metrics
from services.metrics import (
    grid_as_atoms,
    kde_density,
    l2_density_distance,
    mmd_energy,
    mmd_feature,
    mmd_feature_double_sum,
)
from tests.fixtures import gaussian_dataset
from utils.errors import DomainMismatchError, InvalidInputError, UnequalMassError

# Тестовые константы
CIRCLE = Domain.circle()
TWO_PI = 2.0 * np.pi
KDE_SIGMA = 0.03


def random_atoms(rng, k: int, domain: Domain = CIRCLE, weighted: bool = False) -> WeightedAtoms:
    locations = rng.uniform(0.0, domain.period, size=(k, domain.dim))
    weights = rng.uniform(0.1, 1.0, size=k) if weighted else np.ones(k)
    return WeightedAtoms.uniform(locations, domain, weights=weights / weights.sum())


def brute_force_energy(a: WeightedAtoms, b: WeightedAtoms) -> float:
    """MMD² через хордовое расстояние 2|sin(Δ/2)| на окружности"""
    def mean_distance(x, wx, y, wy):
        d = 2.0 * np.abs(np.sin(0.5 * (x[:, 0][:, None] - y[:, 0][None, :])))
        return wx @ d @ wy

    squared = (
        2.0 * mean_distance(a.locations, a.weights, b.locations, b.weights)
        - mean_distance(a.locations, a.weights, a.locations, a.weights)
        - mean_distance(b.locations, b.weights, b.locations, b.weights)
    )
    return float(np.sqrt(max(squared, 0.0)))


def test_energy_mmd_between_diracs():
    """MMD(δ_a, δ_b) = √(2 d(a, b))"""
    for angle in (0.3, 1.0, np.pi, 5.0):
        a = WeightedAtoms.uniform([0.0], CIRCLE)
        b = WeightedAtoms.uniform([angle], CIRCLE)
        chord = 2.0 * abs(np.sin(0.5 * angle))
        assert mmd_energy(a, b) == pytest.approx(np.sqrt(2.0 * chord), rel=1e-12)


def test_energy_mmd_matches_brute_force(rng):
    for _ in range(5):
        a = random_atoms(rng, 7, weighted=True)
        b = random_atoms(rng, 11, weighted=True)
        assert mmd_energy(a, b) == pytest.approx(brute_force_energy(a, b), rel=1e-10, abs=1e-12)


def test_energy_mmd_symmetric_and_zero_on_self(rng):
    a = random_atoms(rng, 20)
    b = random_atoms(rng, 30)
    assert mmd_energy(a, b) == pytest.approx(mmd_energy(b, a), rel=1e-12)
    assert mmd_energy(a, a) == 0.0
    torus = Domain.torus()
    c = random_atoms(rng, 10, domain=torus)
    assert mmd_energy(c, c, DistanceKind.QUOTIENT) == 0.0


def test_energy_mmd_rejects_mismatched_measures(rng):
    a = random_atoms(rng, 5)
    with pytest.raises(DomainMismatchError):
        mmd_energy(a, random_atoms(rng, 5, domain=Domain.torus()))
    half = WeightedAtoms.model_construct(
        locations=np.array([[0.5]]), weights=np.array([0.5]), domain=CIRCLE
    )
    with pytest.raises(UnequalMassError):
        mmd_energy(a, half)


def test_weighted_atoms_require_probability_weights():
    with pytest.raises(ValueError):
        WeightedAtoms(locations=[0.0, 1.0], weights=[0.2, 0.2], domain=CIRCLE)
    with pytest.raises(ValueError):
        WeightedAtoms(locations=[0.0, 1.0], weights=[1.5, -0.5], domain=CIRCLE)


def test_feature_mmd_identity(rng):
    """‖Φ⋆(A − B)‖² совпадает с двойной суммой по κ̂"""
    model = FeatureModel.relu_sphere()
    data = gaussian_dataset(rng, 200)
    for _ in range(5):
        a = random_atoms(rng, 9, weighted=True)
        b = random_atoms(rng, 13)
        operator = mmd_feature(a, b, model, data)
        double = mmd_feature_double_sum(a, b, model, data)
        assert operator ** 2 == pytest.approx(double ** 2, rel=1e-10, abs=1e-14)
    assert mmd_feature(a, a, model, data) == pytest.approx(0.0, abs=1e-12)


def test_feature_mmd_identity_violation_strict(rng, monkeypatch, caplog):
    """Разошедшаяся двойная сумма: предупреждение, в strict-режиме ошибка"""
    model = FeatureModel.relu_sphere()
    data = gaussian_dataset(rng, 30)
    a = random_atoms(rng, 5)
    b = random_atoms(rng, 7)
    expected = mmd_feature(a, b, model, data, strict=True)

    monkeypatch.setattr(metrics, "_double_sum_squared", lambda *args: expected ** 2 + 1.0)
    with caplog.at_level(logging.WARNING, logger="metrics"):
        assert mmd_feature(a, b, model, data, strict=False) == pytest.approx(expected)
    assert "identity violated" in caplog.text
    with pytest.raises(InvalidInputError):
        mmd_feature(a, b, model, data, strict=True)


def test_feature_mmd_rejects_foreign_domain(rng):
    model = FeatureModel.relu_sphere()
    data = gaussian_dataset(rng, 20)
    a = random_atoms(rng, 4, domain=Domain.torus())
    with pytest.raises(DomainMismatchError):
        mmd_feature(a, a, model, data)


def test_kde_has_unit_mass_and_peak(rng):
    grid = Grid1D(n_cells=256)
    a = WeightedAtoms.uniform([grid.centers[40]], CIRCLE)
    kde = kde_density(a, KDE_SIGMA * 3, grid)
    assert kde.mass == pytest.approx(1.0, abs=1e-12)
    assert int(np.argmax(kde.values)) == 40


def test_kde_of_uniform_atoms_is_flat():
    grid = Grid1D(n_cells=128)
    locations = np.arange(1024) * TWO_PI / 1024
    kde = kde_density(WeightedAtoms.uniform(locations, CIRCLE), KDE_SIGMA, grid)
    assert kde.values == pytest.approx(np.full(128, 1.0 / TWO_PI), rel=1e-3)


def test_kde_wraps_around_the_circle():
    """Атом у 0 дает симметричную плотность по обе стороны границы"""
    grid = Grid1D(n_cells=64)
    kde = kde_density(WeightedAtoms.uniform([0.0], CIRCLE), 0.2, grid)
    assert kde.values[0] == pytest.approx(kde.values[-1], rel=1e-10)
    assert kde.values[1] == pytest.approx(kde.values[-2], rel=1e-10)


def test_kde_rejects_bad_arguments(rng):
    grid = Grid1D(n_cells=64)
    with pytest.raises(InvalidInputError):
        kde_density(random_atoms(rng, 3), 0.0, grid)
    with pytest.raises(InvalidInputError):
        kde_density(random_atoms(rng, 3, domain=Domain.torus()), KDE_SIGMA, grid)


def test_l2_density_distance():
    grid = Grid1D(n_cells=32)
    uniform = DensityField.uniform(grid)
    values = np.ones(32)
    values[:16] = 3.0
    other = DensityField.normalized(values, grid)
    expected = np.sqrt(grid.h * np.sum((other.values - uniform.values) ** 2))
    assert l2_density_distance(uniform, other) == pytest.approx(expected)
    assert l2_density_distance(uniform, uniform) == 0.0
    with pytest.raises(DomainMismatchError):
        l2_density_distance(uniform, DensityField.uniform(Grid1D(n_cells=64)))


def test_grid_as_atoms_preserves_mass_and_locations():
    grid = Grid1D(n_cells=32)
    atoms = grid_as_atoms(DensityField.uniform(grid))
    assert atoms.mass == pytest.approx(1.0)
    assert atoms.locations[:, 0] == pytest.approx(grid.centers)
    assert atoms.weights == pytest.approx(np.full(32, 1.0 / 32))


def test_grid_atoms_close_to_fine_uniform_sample():
    grid = Grid1D(n_cells=512)
    coarse = grid_as_atoms(DensityField.uniform(grid))
    fine = WeightedAtoms.uniform(np.arange(2048) * TWO_PI / 2048, CIRCLE)
    assert mmd_energy(coarse, fine) < 1e-2
