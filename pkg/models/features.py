"""
Карты признаков φ(ω, x), их внутренние градиенты ∇_ω φ и сборка
матрицы признаков Φ (N×M) и ядер.
"""
from enum import Enum
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import EPS_SING
from models.geometry import (
    Domain,
    DomainKind,
    ManifoldPoint,
    wrap_array,
    wrap_displacement_array,
)
from models.training_models import DataSet, ParticleEnsemble
from utils.digest import array_digest
from utils.errors import DomainMismatchError, InvalidInputError


class FeatureKind(str, Enum):
    RELU_SPHERE = 'relu_sphere'
    LAPLACE_TORUS = 'laplace_torus'


class FeatureModel(BaseModel):
    """Параметры карты признаков"""
    model_config = ConfigDict(frozen=True)

    kind: FeatureKind
    domain: Domain
    data_dim: int = Field(..., ge=1)
    amplitude: float = Field(8.0, gt=0)
    decay: float = Field(0.5, gt=0)

    @model_validator(mode='after')
    def domain_fits_kind(self) -> 'FeatureModel':
        if self.kind == FeatureKind.RELU_SPHERE:
            if self.domain.kind != DomainKind.CIRCLE or self.data_dim != 2:
                raise ValueError('relu_sphere requires a circle domain and data_dim = 2')
        else:
            if self.domain.kind != DomainKind.FLAT_TORUS or self.domain.dim != self.data_dim:
                raise ValueError('laplace_torus requires a flat torus with dim = data_dim')
        return self

    @classmethod
    def relu_sphere(cls) -> 'FeatureModel':
        return cls(kind=FeatureKind.RELU_SPHERE, domain=Domain.circle(), data_dim=2)

    @classmethod
    def laplace_torus(cls, amplitude: float = 8.0, decay: float = 0.5,
                      period: float = 4.0, dim: int = 2) -> 'FeatureModel':
        return cls(
            kind=FeatureKind.LAPLACE_TORUS,
            domain=Domain.torus(dim=dim, period=period),
            data_dim=dim,
            amplitude=amplitude,
            decay=decay,
        )


class FeatureMatrix(BaseModel):
    """Φ_{ji} = φ(ω_i, x_j) со ссылками на ансамбль и датасет"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    entries: np.ndarray
    ensemble_digest: str = ''
    dataset_digest: str = ''

    @field_validator('entries', mode='before')
    @classmethod
    def entries_as_matrix(cls, v):
        return np.atleast_2d(np.asarray(v, dtype=float))

    @model_validator(mode='after')
    def entries_are_finite(self) -> 'FeatureMatrix':
        if self.entries.ndim != 2 or min(self.entries.shape) < 1:
            raise ValueError('Feature matrix must be N×M with N, M ≥ 1')
        if not np.all(np.isfinite(self.entries)):
            raise ValueError('Feature matrix entries must be finite')
        return self

    @property
    def n_samples(self) -> int:
        return int(self.entries.shape[0])

    @property
    def width(self) -> int:
        return int(self.entries.shape[1])


def _check_inputs(m: FeatureModel, atoms: np.ndarray, xs: np.ndarray):
    atoms = np.asarray(atoms, dtype=float).reshape(-1, m.domain.dim)
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(1, -1)
    if xs.shape[1] != m.data_dim:
        raise InvalidInputError(f"Inputs have dim {xs.shape[1]}, model expects {m.data_dim}")
    if not np.all(np.isfinite(xs)):
        raise InvalidInputError("Non-finite input")
    return atoms, xs


def _relu_preactivation(atoms: np.ndarray, xs: np.ndarray):
    theta = atoms[:, 0]
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    pre = xs[:, 0:1] * cos_t[None, :] + xs[:, 1:2] * sin_t[None, :]
    dpre = -xs[:, 0:1] * sin_t[None, :] + xs[:, 1:2] * cos_t[None, :]
    return pre, dpre


def _torus_displacements(m: FeatureModel, atoms: np.ndarray, xs: np.ndarray):
    """z_{ji} = [ω_i − x_j] по осям и их нормы"""
    xw = wrap_array(xs, m.domain.period)
    zs = [
        wrap_displacement_array(atoms[:, k][None, :] - xw[:, k][:, None], m.domain.period)
        for k in range(m.domain.dim)
    ]
    squared = np.zeros_like(zs[0])
    for z in zs:
        squared += z * z
    return zs, np.sqrt(squared)


def feature_matrix(m: FeatureModel, atoms: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Плотная матрица Φ формы (N, M)"""
    atoms, xs = _check_inputs(m, atoms, xs)
    if m.kind == FeatureKind.RELU_SPHERE:
        pre, _ = _relu_preactivation(atoms, xs)
        return np.maximum(pre, 0.0)
    _, norms = _torus_displacements(m, atoms, xs)
    return m.amplitude * np.exp(-m.decay * norms)


def feature_gradients(m: FeatureModel, atoms: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """∇_ω φ(ω_i, x_j) формы (N, M, n)"""
    atoms, xs = _check_inputs(m, atoms, xs)
    if m.kind == FeatureKind.RELU_SPHERE:
        pre, dpre = _relu_preactivation(atoms, xs)
        return np.where(pre > 0.0, dpre, 0.0)[:, :, None]
    zs, norms = _torus_displacements(m, atoms, xs)
    coef = _laplace_gradient_coefficient(m, norms)
    return np.stack([coef * z for z in zs], axis=-1)


def _laplace_gradient_coefficient(m: FeatureModel, norms: np.ndarray) -> np.ndarray:
    active = norms > EPS_SING
    safe = np.where(active, norms, 1.0)
    return np.where(active, -m.amplitude * m.decay * np.exp(-m.decay * safe) / safe, 0.0)


def contract_gradients(m: FeatureModel, atoms: np.ndarray, xs: np.ndarray,
                       weights: np.ndarray) -> np.ndarray:
    """
    Σ_j w_j ∇_ω φ(ω_i, x_j) формы (M, n) без материализации (N, M, n).
    Суммирование по j идет через матричное произведение в фиксированном порядке.
    """
    atoms, xs = _check_inputs(m, atoms, xs)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if m.kind == FeatureKind.RELU_SPHERE:
        pre, dpre = _relu_preactivation(atoms, xs)
        active = np.where(pre > 0.0, dpre, 0.0)
        return (active.T @ weights)[:, None]
    zs, norms = _torus_displacements(m, atoms, xs)
    coef = _laplace_gradient_coefficient(m, norms)
    return np.column_stack([(coef * z).T @ weights for z in zs])


def _check_point(m: FeatureModel, omega: ManifoldPoint) -> np.ndarray:
    if omega.domain != m.domain:
        raise DomainMismatchError(omega.domain, m.domain)
    return omega.as_array()[None, :]


def eval_feature(m: FeatureModel, omega: ManifoldPoint, x) -> float:
    """φ(ω, x) для одной пары"""
    return float(feature_matrix(m, _check_point(m, omega), x)[0, 0])


def grad_feature(m: FeatureModel, omega: ManifoldPoint, x) -> np.ndarray:
    """Внутренний градиент ∇_ω φ(ω, x)"""
    return feature_gradients(m, _check_point(m, omega), x)[0, 0, :]


def assemble_matrix(m: FeatureModel, ensemble: ParticleEnsemble, data: DataSet) -> FeatureMatrix:
    if ensemble.domain != m.domain:
        raise DomainMismatchError(ensemble.domain, m.domain)
    if data.xs.shape[1] != m.data_dim:
        raise InvalidInputError(
            f"Dataset dim {data.xs.shape[1]} does not match model dim {m.data_dim}"
        )
    return FeatureMatrix(
        entries=feature_matrix(m, ensemble.atoms, data.xs),
        ensemble_digest=array_digest(ensemble.atoms),
        dataset_digest=array_digest(data.xs, data.ys),
    )


def tangent_kernel(phi: FeatureMatrix) -> np.ndarray:
    """K̂ = ΦΦᵀ/(MN)"""
    entries = phi.entries
    kernel = entries @ entries.T / (phi.width * phi.n_samples)
    return 0.5 * (kernel + kernel.T)


def feature_kernel_matrix(m: FeatureModel, data: DataSet,
                          atoms_a: np.ndarray, atoms_b: np.ndarray) -> np.ndarray:
    """κ̂(a_i, b_k) = (1/N) Σ_j φ(a_i, x_j) φ(b_k, x_j)"""
    phi_a = feature_matrix(m, atoms_a, data.xs)
    phi_b = feature_matrix(m, atoms_b, data.xs)
    return phi_a.T @ phi_b / data.n_samples


def feature_kernel(m: FeatureModel, data: DataSet) -> Callable[[ManifoldPoint, ManifoldPoint], float]:
    """Эмпирическое ядро признаков κ̂ как функция двух точек"""
    def kernel(omega: ManifoldPoint, omega_prime: ManifoldPoint) -> float:
        a = _check_point(m, omega)
        b = _check_point(m, omega_prime)
        return float(feature_kernel_matrix(m, data, a, b)[0, 0])

    return kernel
