"""
Распределение учителя: плотности π_γ и μ_γ, сэмплер обратной CDF,
синтетические датасеты и сеточная плотность для PDE.
"""
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad

from config.logging import get_logger
from config.settings import INVERSE_CDF_GRID_SIZE
from models.density import DensityField, Grid1D
from models.features import FeatureModel, feature_matrix
from models.geometry import DomainKind, wrap_array
from models.teacher_models import TeacherSpec
from models.training_models import DataSet, ParticleEnsemble
from utils.digest import array_digest
from utils.errors import InvalidInputError

logger = get_logger("teacher")

# Допуск сверки квадратуры с замкнутой формой L/√(1+γ)
NORMALIZER_CROSS_CHECK_TOL = 1e-8


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if math.isnan(gamma) or gamma < 0:
        raise InvalidInputError(f"gamma must be non-negative, got {gamma}")
    if math.isinf(gamma):
        raise InvalidInputError("gamma = inf has no density")
    return gamma


@lru_cache(maxsize=128)
def pi_gamma_normalizer(gamma: float, period: float = 2.0 * np.pi) -> float:
    """∫₀^L dz / (1 + γ sin²(πz/L)) квадратурой"""
    gamma = _check_gamma(gamma)
    value, _ = quad(
        lambda z: 1.0 / (1.0 + gamma * math.sin(math.pi * z / period) ** 2),
        0.0, period,
        points=[0.5 * period],
        limit=500,
        epsabs=1e-14,
        epsrel=1e-13,
    )
    closed_form = period / math.sqrt(1.0 + gamma)
    if abs(value - closed_form) > NORMALIZER_CROSS_CHECK_TOL * closed_form:
        logger.warning(
            f"pi_gamma normalizer quadrature {value!r} disagrees with "
            f"closed form {closed_form!r} (gamma={gamma})"
        )
    return value


def pi_gamma_density(theta, gamma: float, period: float = 2.0 * np.pi):
    """Нормированная плотность π_γ на [0, L)"""
    gamma = _check_gamma(gamma)
    theta = np.asarray(theta, dtype=float)
    unnormalized = 1.0 / (1.0 + gamma * np.sin(np.pi * theta / period) ** 2)
    return unnormalized / pi_gamma_normalizer(gamma, period)


def mu_gamma_density(theta, spec: TeacherSpec):
    """
    Σ_m w_m Π_k π_γ(θ_k − ω*_{m,k}).
    На окружности theta задает углы, на торе массив формы (..., n).
    """
    if spec.is_atomic:
        raise InvalidInputError("Atomic teacher (gamma = inf) has no density")
    dim = spec.domain.dim
    theta = np.asarray(theta, dtype=float)
    out_shape = theta.shape if dim == 1 else theta.shape[:-1]
    points = theta.reshape(-1, dim)
    density = np.zeros(points.shape[0])
    for location, weight in zip(spec.locations, spec.weights):
        term = np.full(points.shape[0], weight)
        for k in range(dim):
            term = term * pi_gamma_density(points[:, k] - location[k], spec.gamma, spec.domain.period)
        density += term
    return density.reshape(out_shape)


@lru_cache(maxsize=32)
def _inverse_cdf_table(gamma: float, period: float) -> Tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(0.0, period, INVERSE_CDF_GRID_SIZE)
    cdf = cumulative_trapezoid(pi_gamma_density(grid, gamma, period), grid, initial=0.0)
    cdf /= cdf[-1]
    grid.setflags(write=False)
    cdf.setflags(write=False)
    return grid, cdf


def sample_pi_gamma(gamma: float, size: int, rng: np.random.Generator,
                    period: float = 2.0 * np.pi) -> np.ndarray:
    """Смещения из π_γ обратной CDF на фиксированной сетке"""
    grid, cdf = _inverse_cdf_table(_check_gamma(gamma), float(period))
    return np.interp(rng.random(size), cdf, grid)


def sample_teacher(spec: TeacherSpec, rng: np.random.Generator) -> ParticleEnsemble:
    """M̄ независимых атомов μ_γ"""
    size = spec.teacher_width
    modes = rng.choice(len(spec.modes), size=size, p=spec.weights)
    offsets = np.zeros((size, spec.domain.dim))
    if not spec.is_atomic:
        for k in range(spec.domain.dim):
            offsets[:, k] = sample_pi_gamma(spec.gamma, size, rng, spec.domain.period)
    atoms = wrap_array(spec.locations[modes] + offsets, spec.domain.period)
    logger.debug(
        f"Sampled {size} teacher atoms (gamma={spec.gamma}, modes={len(spec.modes)})"
    )
    return ParticleEnsemble(atoms=atoms, domain=spec.domain)


def teacher_signal(m: FeatureModel, teacher: ParticleEnsemble, xs: np.ndarray) -> np.ndarray:
    """Y(x_j) = (1/M̄) Σ_i φ(ω̄_i, x_j)"""
    return feature_matrix(m, teacher.atoms, xs).mean(axis=1)


def make_dataset(m: FeatureModel, teacher: ParticleEnsemble, n_samples: int,
                 rng: np.random.Generator, seed: int = 0) -> DataSet:
    """Гауссовы входы N(0, I_d) и сигнал учителя"""
    if n_samples < 1:
        raise InvalidInputError(f"N must be positive, got {n_samples}")
    xs = rng.standard_normal((n_samples, m.data_dim))
    return DataSet(
        xs=xs,
        ys=teacher_signal(m, teacher, xs),
        seed=seed,
        teacher_digest=array_digest(teacher.atoms),
    )


def grid_teacher_density(spec: TeacherSpec, grid: Grid1D) -> DensityField:
    """Средние по ячейкам (правило средней точки), нормированные к массе 1"""
    if spec.domain.kind != DomainKind.CIRCLE:
        raise InvalidInputError("Grid densities are defined on the circle only")
    if spec.is_atomic:
        raise InvalidInputError("Atomic teacher (gamma = inf) has no density")
    return DensityField.normalized(mu_gamma_density(grid.centers, spec), grid)
