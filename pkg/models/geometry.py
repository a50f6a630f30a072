"""
Пространство признаков Ω: окружность S¹ (угол) или плоский тор ℝⁿ/LZⁿ.

Скалярные операции работают с ManifoldPoint, векторные (суффикс _array)
с массивами формы (..., n) и используются в численном ядре.
"""
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.distance import cdist

from utils.errors import DomainMismatchError, InvalidInputError


class DomainKind(str, Enum):
    """Тип области признаков"""
    CIRCLE = 'circle'
    FLAT_TORUS = 'flat_torus'


class DistanceKind(str, Enum):
    """Расстояние для энергетического ядра"""
    CHORDAL = 'chordal'
    QUOTIENT = 'quotient'


class Domain(BaseModel):
    """Периодическая область с одинаковым периодом по всем осям"""
    model_config = ConfigDict(frozen=True)

    kind: DomainKind
    dim: int = Field(1, ge=1)
    period: float = Field(2.0 * np.pi, gt=0)

    @model_validator(mode='after')
    def circle_is_one_dimensional(self) -> 'Domain':
        if self.kind == DomainKind.CIRCLE and self.dim != 1:
            raise ValueError('Circle domain must have dim = 1')
        return self

    @classmethod
    def circle(cls) -> 'Domain':
        return cls(kind=DomainKind.CIRCLE, dim=1, period=2.0 * np.pi)

    @classmethod
    def torus(cls, dim: int = 2, period: float = 4.0) -> 'Domain':
        return cls(kind=DomainKind.FLAT_TORUS, dim=dim, period=period)


def wrap_array(raw: np.ndarray, period: float) -> np.ndarray:
    """raw mod L в [0, L)"""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise InvalidInputError("Non-finite coordinate")
    out = np.mod(raw, period)
    # mod может вернуть ровно L из-за округления
    return np.where(out >= period, 0.0, out)


def wrap_displacement_array(z: np.ndarray, period: float) -> np.ndarray:
    """Представитель разности в [−L/2, L/2)"""
    half = 0.5 * period
    out = np.mod(np.asarray(z, dtype=float) + half, period) - half
    return np.where(out >= half, out - period, out)


class ManifoldPoint(BaseModel):
    """Точка области; координаты канонизируются при создании"""
    model_config = ConfigDict(frozen=True)

    coords: Tuple[float, ...]
    domain: Domain

    @model_validator(mode='before')
    @classmethod
    def canonical_coords(cls, data):
        if isinstance(data, dict) and 'coords' in data and 'domain' in data:
            domain = data['domain']
            if not isinstance(domain, Domain):
                domain = Domain.model_validate(domain)
            raw = np.atleast_1d(np.asarray(data['coords'], dtype=float)).reshape(-1)
            if raw.shape[0] != domain.dim:
                raise ValueError(
                    f'Expected {domain.dim} coordinates, got {raw.shape[0]}'
                )
            wrapped = wrap_array(raw, domain.period)
            return {**data, 'domain': domain, 'coords': tuple(float(c) for c in wrapped)}
        return data

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    @property
    def angle(self) -> float:
        return self.coords[0]


Coordinates = Union[float, Sequence[float], np.ndarray]


def canonicalize(raw: Coordinates, d: Domain) -> ManifoldPoint:
    """Каноническое представление точки"""
    values = np.atleast_1d(np.asarray(raw, dtype=float)).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"Non-finite coordinate in {values.tolist()}")
    if values.shape[0] != d.dim:
        raise InvalidInputError(f"Expected {d.dim} coordinates, got {values.shape[0]}")
    return ManifoldPoint(coords=tuple(values), domain=d)


def _check_same_domain(*points: ManifoldPoint, d: Domain) -> None:
    for p in points:
        if p.domain != d:
            raise DomainMismatchError(p.domain, d)


def displacement(a: ManifoldPoint, b: ManifoldPoint, d: Domain) -> np.ndarray:
    """Кратчайший представитель a − b, покомпонентно в [−L/2, L/2)"""
    _check_same_domain(a, b, d=d)
    return wrap_displacement_array(a.as_array() - b.as_array(), d.period)


def retract(p: ManifoldPoint, step: Coordinates, d: Domain) -> ManifoldPoint:
    """Сдвиг точки на касательный шаг с возвратом в область"""
    _check_same_domain(p, d=d)
    step = np.atleast_1d(np.asarray(step, dtype=float)).reshape(-1)
    if not np.all(np.isfinite(step)):
        raise InvalidInputError("Non-finite step")
    return canonicalize(p.as_array() + step, d)


def chordal_distance(a: ManifoldPoint, b: ManifoldPoint, d: Domain) -> float:
    """Хордовое расстояние на S¹, факторное на торе"""
    _check_same_domain(a, b, d=d)
    if d.kind == DomainKind.CIRCLE:
        return float(2.0 * abs(np.sin(0.5 * (a.angle - b.angle))))
    return float(np.linalg.norm(displacement(a, b, d)))


# --- Векторные версии ---

def canonicalize_array(raw: np.ndarray, d: Domain) -> np.ndarray:
    return wrap_array(raw, d.period)


def displacement_array(a: np.ndarray, b: np.ndarray, d: Domain) -> np.ndarray:
    return wrap_displacement_array(np.asarray(a) - np.asarray(b), d.period)


def retract_array(atoms: np.ndarray, steps: np.ndarray, d: Domain) -> np.ndarray:
    if not np.all(np.isfinite(steps)):
        raise InvalidInputError("Non-finite step")
    return wrap_array(np.asarray(atoms) + steps, d.period)


def embed_circle(angles: np.ndarray) -> np.ndarray:
    """Вложение S¹ → ℝ²"""
    angles = np.asarray(angles, dtype=float).reshape(-1)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def pairwise_distance(a: np.ndarray, b: np.ndarray, d: Domain,
                      kind: DistanceKind = DistanceKind.CHORDAL) -> np.ndarray:
    """Матрица расстояний между наборами точек формы (K, n) и (J, n)"""
    a = np.asarray(a, dtype=float).reshape(-1, d.dim)
    b = np.asarray(b, dtype=float).reshape(-1, d.dim)
    if d.kind == DomainKind.CIRCLE and DistanceKind(kind) == DistanceKind.CHORDAL:
        return cdist(embed_circle(a[:, 0]), embed_circle(b[:, 0]))
    squared = np.zeros((a.shape[0], b.shape[0]))
    for axis in range(d.dim):
        z = wrap_displacement_array(a[:, axis][:, None] - b[:, axis][None, :], d.period)
        squared += z * z
    return np.sqrt(squared)
