"""
Pydantic модели обучения: регуляризаторы, ансамбли частиц, датасеты,
решения внешней задачи, конфигурация и журнал траектории.
"""
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import DEFAULT_EVAL_EVERY, DEFAULT_STEPSIZE
from models.geometry import Domain, ManifoldPoint


class RegularizerKind(str, Enum):
    """Регуляризатор внешних весов"""
    QUAD = 'quad'                    # f(t) = t²
    QUAD_BIASED = 'quad_biased'      # f_b(t) = t²/2
    QUAD_UNBIASED = 'quad_unbiased'  # f_u(t) = (t−1)²/2
    POWER_R = 'power_r'              # f(t) = |t|^r/(r−1)


_REGULARIZER_ALIASES = {
    'quad': RegularizerKind.QUAD,
    'f': RegularizerKind.QUAD,
    'quad_biased': RegularizerKind.QUAD_BIASED,
    'f_b': RegularizerKind.QUAD_BIASED,
    'biased': RegularizerKind.QUAD_BIASED,
    'quad_unbiased': RegularizerKind.QUAD_UNBIASED,
    'f_u': RegularizerKind.QUAD_UNBIASED,
    'unbiased': RegularizerKind.QUAD_UNBIASED,
    'power_r': RegularizerKind.POWER_R,
}


class Regularizer(BaseModel):
    """
    Выпуклый сверхлинейный регуляризатор f и его сопряженная f*.
    Все методы векторизованы по numpy.
    """
    model_config = ConfigDict(frozen=True)

    kind: RegularizerKind
    r: Optional[float] = None

    @model_validator(mode='after')
    def exponent_matches_kind(self) -> 'Regularizer':
        if self.kind == RegularizerKind.POWER_R:
            if self.r is None or not self.r > 1.0:
                raise ValueError('power_r regularizer requires r > 1')
        elif self.r is not None:
            raise ValueError(f'{self.kind.value} regularizer takes no exponent')
        return self

    @classmethod
    def parse(cls, text: str) -> 'Regularizer':
        """'quad', 'f_b', 'f_u', 'power_r:1.5'"""
        name, _, exponent = text.strip().lower().partition(':')
        if name not in _REGULARIZER_ALIASES:
            raise ValueError(f'Unknown regularizer {text!r}')
        kind = _REGULARIZER_ALIASES[name]
        if kind == RegularizerKind.POWER_R:
            return cls(kind=kind, r=float(exponent) if exponent else None)
        return cls(kind=kind)

    @property
    def label(self) -> str:
        if self.kind == RegularizerKind.POWER_R:
            return f'power_r:{self.r:g}'
        return self.kind.value

    @property
    def is_quadratic(self) -> bool:
        return self.kind != RegularizerKind.POWER_R

    @property
    def _q(self) -> float:
        return self.r / (self.r - 1.0)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == RegularizerKind.QUAD:
            return t * t
        if self.kind == RegularizerKind.QUAD_BIASED:
            return 0.5 * t * t
        if self.kind == RegularizerKind.QUAD_UNBIASED:
            return 0.5 * (t - 1.0) ** 2
        return np.abs(t) ** self.r / (self.r - 1.0)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == RegularizerKind.QUAD:
            return 2.0 * t
        if self.kind == RegularizerKind.QUAD_BIASED:
            return t
        if self.kind == RegularizerKind.QUAD_UNBIASED:
            return t - 1.0
        return self._q * np.sign(t) * np.abs(t) ** (self.r - 1.0)

    def conjugate(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == RegularizerKind.QUAD:
            return 0.25 * s * s
        if self.kind == RegularizerKind.QUAD_BIASED:
            return 0.5 * s * s
        if self.kind == RegularizerKind.QUAD_UNBIASED:
            return s + 0.5 * s * s
        q = self._q
        return (self.r - 1.0) / self.r * q ** (-1.0 / (self.r - 1.0)) * np.abs(s) ** q

    def conjugate_derivative(self, s):
        """∂f*(s): оптимальный внешний вес при h = s"""
        s = np.asarray(s, dtype=float)
        if self.kind == RegularizerKind.QUAD:
            return 0.5 * s
        if self.kind == RegularizerKind.QUAD_BIASED:
            return s
        if self.kind == RegularizerKind.QUAD_UNBIASED:
            return 1.0 + s
        return np.sign(s) * (np.abs(s) / self._q) ** (1.0 / (self.r - 1.0))

    def conjugate_second_derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == RegularizerKind.QUAD:
            return np.full_like(s, 0.5)
        if self.kind in (RegularizerKind.QUAD_BIASED, RegularizerKind.QUAD_UNBIASED):
            return np.ones_like(s)
        q = self._q
        exponent = (2.0 - self.r) / (self.r - 1.0)
        with np.errstate(divide='ignore'):
            return (np.abs(s) / q) ** exponent / ((self.r - 1.0) * q)

    @property
    def diffusion_exponent(self) -> float:
        return 2.0 if self.is_quadratic else float(self.r)

    @property
    def diffusion_coefficient(self) -> float:
        """Множитель первой вариации предельного (λ → 0) риска"""
        if self.kind in (RegularizerKind.QUAD_BIASED, RegularizerKind.QUAD_UNBIASED):
            return 0.5
        return 1.0


def _as_float_array(value, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


class ParticleEnsemble(BaseModel):
    """Эмпирическое распределение признаков μ̂ = (1/M) Σ δ_{ω_i}"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    atoms: np.ndarray
    domain: Domain
    outer: Optional[np.ndarray] = None
    iteration: int = Field(0, ge=0)
    clip_events: int = Field(0, ge=0)

    @field_validator('atoms', mode='before')
    @classmethod
    def atoms_as_matrix(cls, v):
        return _as_float_array(v, 2)

    @field_validator('outer', mode='before')
    @classmethod
    def outer_as_vector(cls, v):
        if v is None:
            return None
        return np.asarray(v, dtype=float).reshape(-1)

    @model_validator(mode='after')
    def atoms_are_canonical(self) -> 'ParticleEnsemble':
        if self.atoms.ndim != 2 or self.atoms.shape[0] < 1:
            raise ValueError('Ensemble needs at least one atom')
        if self.atoms.shape[1] != self.domain.dim:
            raise ValueError(
                f'Atoms have {self.atoms.shape[1]} coordinates, domain has {self.domain.dim}'
            )
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError('Atoms must be finite')
        if np.any(self.atoms < 0.0) or np.any(self.atoms >= self.domain.period):
            raise ValueError('Atoms must be canonicalized into [0, L)')
        if self.outer is not None:
            if self.outer.shape != (self.atoms.shape[0],):
                raise ValueError('Outer weights must have one entry per atom')
            if not np.all(np.isfinite(self.outer)):
                raise ValueError('Outer weights must be finite')
        return self

    @property
    def width(self) -> int:
        return int(self.atoms.shape[0])

    def points(self) -> List[ManifoldPoint]:
        return [ManifoldPoint(coords=tuple(row), domain=self.domain) for row in self.atoms]

    def time(self, stepsize: float) -> float:
        return self.iteration * stepsize

    def permuted(self, order: np.ndarray) -> 'ParticleEnsemble':
        return self.model_copy(update={
            'atoms': self.atoms[order],
            'outer': None if self.outer is None else self.outer[order],
        })


class DataSet(BaseModel):
    """Обучающая выборка: гауссовы входы и сигнал учителя"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    xs: np.ndarray
    ys: np.ndarray
    seed: int = 0
    teacher_digest: str = ''

    @field_validator('xs', mode='before')
    @classmethod
    def xs_as_matrix(cls, v):
        return _as_float_array(v, 2)

    @field_validator('ys', mode='before')
    @classmethod
    def ys_as_vector(cls, v):
        return np.asarray(v, dtype=float).reshape(-1)

    @model_validator(mode='after')
    def shapes_agree(self) -> 'DataSet':
        if self.xs.ndim != 2 or self.xs.shape[0] < 1:
            raise ValueError('Dataset needs at least one sample')
        if self.ys.shape[0] != self.xs.shape[0]:
            raise ValueError('xs and ys must have the same number of rows')
        if not (np.all(np.isfinite(self.xs)) and np.all(np.isfinite(self.ys))):
            raise ValueError('Dataset must be finite')
        return self

    @property
    def n_samples(self) -> int:
        return int(self.xs.shape[0])


class OuterSolution(BaseModel):
    """Оптимальные внешние веса с невязкой и двойственной переменной"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: np.ndarray
    residual: np.ndarray
    alpha: np.ndarray
    primal_value: float
    dual_value: float
    iterations: int = 0


class Algorithm(str, Enum):
    """Алгоритм обучения частиц"""
    VARPRO = 'varpro'
    TWO_TIMESCALE = 'two_timescale'
    PLAIN_GD = 'plain_gd'


class TrainConfig(BaseModel):
    """Параметры одного запуска обучения"""
    model_config = ConfigDict(frozen=True)

    width: int = Field(..., ge=1)
    iters: int = Field(..., ge=0)
    stepsize: float = Field(DEFAULT_STEPSIZE, gt=0)
    lam: float = Field(..., gt=0)
    regularizer: Regularizer
    eta: Optional[float] = Field(None, ge=0)
    seed: int = Field(0, ge=0)
    eval_every: int = Field(DEFAULT_EVAL_EVERY, ge=1)
    algorithm: Algorithm = Algorithm.VARPRO
    clip: bool = True
    snapshot_every: int = Field(0, ge=0)

    @property
    def effective_eta(self) -> float:
        """η по умолчанию λM"""
        return self.eta if self.eta is not None else self.lam * self.width

    def logged_iterations(self) -> List[int]:
        ks = list(range(0, self.iters + 1, self.eval_every))
        if ks[-1] != self.iters:
            ks.append(self.iters)
        return ks

    def snapshot_iterations(self) -> List[int]:
        if self.snapshot_every == 0:
            return []
        ks = list(range(0, self.iters + 1, self.snapshot_every))
        if ks[-1] != self.iters:
            ks.append(self.iters)
        return ks


class TrajectoryRecord(BaseModel):
    """Одна строка журнала траектории"""
    k: int = Field(..., ge=0)
    time: float
    wallclock: float = 0.0
    reduced_risk: float
    full_risk: Optional[float] = None
    mmd_teacher: Optional[float] = None
    mmd_pde: Optional[float] = None
    chi2: Optional[float] = None
    clip_events: int = 0
    snapshot: Optional[str] = None


class TrajectoryLog(BaseModel):
    """Журнал траектории, упорядоченный по итерациям"""
    run_id: str
    records: List[TrajectoryRecord] = Field(default_factory=list)

    @model_validator(mode='after')
    def sorted_by_iteration(self) -> 'TrajectoryLog':
        ks = [rec.k for rec in self.records]
        if ks != sorted(ks) or len(set(ks)) != len(ks):
            raise ValueError('Trajectory records must be strictly increasing in k')
        return self

    def series(self, field: str) -> np.ndarray:
        values = [getattr(rec, field) for rec in self.records]
        return np.array([np.nan if v is None else v for v in values], dtype=float)
