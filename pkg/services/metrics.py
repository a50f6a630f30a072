"""
Расстояния и дивергенции для оценки траекторий: MMD с ядром энергии
и с ядром признаков, KDE на окружности, L²-расстояние плотностей.
"""
import numpy as np

from config.logging import get_logger
from config.settings import (
    KDE_WINDOW,
    MMD_CLAMP_TOLERANCE,
    MMD_IDENTITY_TOLERANCE,
    MMD_ROW_BLOCK,
    MMD_STRICT,
    WEIGHT_SUM_TOLERANCE,
)
from models.density import DensityField, Grid1D, WeightedAtoms
from models.features import FeatureModel, feature_matrix
from models.geometry import Domain, DistanceKind, DomainKind, pairwise_distance, wrap_displacement_array
from models.training_models import DataSet
from utils.errors import DomainMismatchError, InvalidInputError, UnequalMassError

logger = get_logger("metrics")

# Атомы обрабатываются блоками при построении KDE
KDE_ATOM_BLOCK = 4096


def _check_measures(a: WeightedAtoms, b: WeightedAtoms) -> None:
    if a.domain != b.domain:
        raise DomainMismatchError(a.domain, b.domain)
    if abs(a.mass - b.mass) > WEIGHT_SUM_TOLERANCE:
        raise UnequalMassError(a.mass, b.mass)


def _energy_sum(x: np.ndarray, wx: np.ndarray, y: np.ndarray, wy: np.ndarray,
                domain: Domain, dist: DistanceKind) -> float:
    """Σ_i Σ_k wx_i wy_k ‖x_i − y_k‖ по блокам строк"""
    total = 0.0
    for start in range(0, x.shape[0], MMD_ROW_BLOCK):
        stop = start + MMD_ROW_BLOCK
        block = pairwise_distance(x[start:stop], y, domain, dist)
        total += float(wx[start:stop] @ block @ wy)
    return total


def _clamped_root(squared: float, label: str) -> float:
    if squared < 0.0:
        if squared < -MMD_CLAMP_TOLERANCE:
            logger.warning(f"{label}: negative squared MMD {squared:.3e} clamped to 0")
        return 0.0
    return float(np.sqrt(squared))


def mmd_energy(a: WeightedAtoms, b: WeightedAtoms,
               dist: DistanceKind = DistanceKind.CHORDAL) -> float:
    """
    MMD с ядром энергии κ(ω, ω′) = −‖ω − ω′‖.

    MMD² = 2 E‖a − b‖ − E‖a − a′‖ − E‖b − b′‖; отрицательный результат
    округления обнуляется.
    """
    _check_measures(a, b)
    dist = DistanceKind(dist)
    cross = _energy_sum(a.locations, a.weights, b.locations, b.weights, a.domain, dist)
    self_a = _energy_sum(a.locations, a.weights, a.locations, a.weights, a.domain, dist)
    self_b = _energy_sum(b.locations, b.weights, b.locations, b.weights, a.domain, dist)
    return _clamped_root(2.0 * cross - self_a - self_b, "mmd_energy")


def _feature_parts(a: WeightedAtoms, b: WeightedAtoms, model: FeatureModel, data: DataSet):
    _check_measures(a, b)
    if a.domain != model.domain:
        raise DomainMismatchError(a.domain, model.domain)
    phi_a = feature_matrix(model, a.locations, data.xs)
    phi_b = feature_matrix(model, b.locations, data.xs)
    return phi_a, phi_b


def _double_sum_squared(phi_a: np.ndarray, wa: np.ndarray,
                        phi_b: np.ndarray, wb: np.ndarray) -> float:
    n_samples = phi_a.shape[0]
    k_aa = phi_a.T @ phi_a / n_samples
    k_bb = phi_b.T @ phi_b / n_samples
    k_ab = phi_a.T @ phi_b / n_samples
    return float(wa @ k_aa @ wa + wb @ k_bb @ wb - 2.0 * (wa @ k_ab @ wb))


def _operator_squared(phi_a: np.ndarray, wa: np.ndarray,
                      phi_b: np.ndarray, wb: np.ndarray) -> float:
    diff = phi_a @ wa - phi_b @ wb
    return float(np.mean(diff * diff))


def mmd_feature_double_sum(a: WeightedAtoms, b: WeightedAtoms,
                           model: FeatureModel, data: DataSet) -> float:
    """MMD через двойную сумму эмпирического ядра признаков κ̂"""
    phi_a, phi_b = _feature_parts(a, b, model, data)
    return _clamped_root(
        _double_sum_squared(phi_a, a.weights, phi_b, b.weights), "mmd_feature_double_sum"
    )


def mmd_feature(a: WeightedAtoms, b: WeightedAtoms,
                model: FeatureModel, data: DataSet, strict: bool = MMD_STRICT) -> float:
    """
    ‖Φ⋆(A − B)‖ в L²(ρ̂). Сверяется с двойной суммой по κ̂;
    расхождение квадратов больше 1e−10 (относительно) логируется,
    а при strict поднимает InvalidInputError.
    """
    phi_a, phi_b = _feature_parts(a, b, model, data)
    operator = _operator_squared(phi_a, a.weights, phi_b, b.weights)
    double = _double_sum_squared(phi_a, a.weights, phi_b, b.weights)
    if abs(operator - double) > MMD_IDENTITY_TOLERANCE * (1.0 + operator):
        message = f"Feature MMD identity violated: operator {operator!r} vs double sum {double!r}"
        if strict:
            raise InvalidInputError(message)
        logger.warning(message)
    return float(np.sqrt(operator))


def kde_density(a: WeightedAtoms, sigma: float, grid: Grid1D) -> DensityField:
    """
    Свернутая гауссова KDE в центрах ячеек. Сумма по копиям обрезается
    окном ±5σ, результат нормируется к массе 1.
    """
    if not sigma > 0:
        raise InvalidInputError(f"KDE bandwidth must be positive, got {sigma}")
    if a.domain.kind != DomainKind.CIRCLE:
        raise InvalidInputError("KDE is defined on the circle only")

    period = grid.period
    window = KDE_WINDOW * sigma
    replicas = int(np.ceil(window / period))
    centers = grid.centers
    locations = a.locations[:, 0]
    values = np.zeros(grid.n_cells)
    for start in range(0, locations.shape[0], KDE_ATOM_BLOCK):
        stop = start + KDE_ATOM_BLOCK
        base = wrap_displacement_array(centers[:, None] - locations[None, start:stop], period)
        block = np.zeros_like(base)
        for k in range(-replicas, replicas + 1):
            z = base + k * period
            block += np.where(np.abs(z) <= window, np.exp(-0.5 * (z / sigma) ** 2), 0.0)
        values += block @ a.weights[start:stop]

    if not values.sum() > 0.0:
        raise InvalidInputError(
            f"KDE bandwidth {sigma} is too small for a grid of {grid.n_cells} cells"
        )
    return DensityField.normalized(values, grid)


def l2_density_distance(a: DensityField, b: DensityField) -> float:
    """sqrt(h Σ (a_j − b_j)²)"""
    if a.grid != b.grid:
        raise DomainMismatchError(a.grid, b.grid)
    diff = a.values - b.values
    return float(np.sqrt(a.grid.h * np.sum(diff * diff)))


def grid_as_atoms(f: DensityField) -> WeightedAtoms:
    """Атомы в центрах ячеек с весами h·f_j"""
    weights = f.grid.h * f.values
    return WeightedAtoms.uniform(
        f.grid.centers[:, None], Domain.circle(), weights=weights / weights.sum()
    )
