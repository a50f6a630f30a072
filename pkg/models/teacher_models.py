"""
Модели распределения учителя μ_γ = (Σ w_m δ_{ω*_m}) ⋆ π_γ
"""
import math
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import DEFAULT_GAMMA, DEFAULT_TEACHER_WIDTH, WEIGHT_SUM_TOLERANCE
from models.geometry import Domain, wrap_array


class TeacherMode(BaseModel):
    """Одна мода: положение и вес"""
    model_config = ConfigDict(frozen=True)

    location: Tuple[float, ...]
    weight: float = Field(..., ge=0)


class TeacherSpec(BaseModel):
    """Спецификация учителя; gamma = inf дает атомарный предел"""
    model_config = ConfigDict(frozen=True)

    domain: Domain
    modes: List[TeacherMode] = Field(..., min_length=1)
    gamma: float = Field(DEFAULT_GAMMA, ge=0)
    teacher_width: int = Field(DEFAULT_TEACHER_WIDTH, ge=1)

    @field_validator('gamma')
    @classmethod
    def gamma_not_nan(cls, v: float) -> float:
        if math.isnan(v):
            raise ValueError('gamma must not be NaN')
        return v

    @model_validator(mode='after')
    def modes_are_valid(self) -> 'TeacherSpec':
        total = sum(mode.weight for mode in self.modes)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f'Mode weights sum to {total!r}, expected 1')
        for mode in self.modes:
            if len(mode.location) != self.domain.dim:
                raise ValueError(
                    f'Mode location {mode.location} does not match domain dim {self.domain.dim}'
                )
        return self

    @property
    def is_atomic(self) -> bool:
        return math.isinf(self.gamma)

    @property
    def locations(self) -> np.ndarray:
        raw = np.array([mode.location for mode in self.modes], dtype=float)
        return wrap_array(raw, self.domain.period)

    @property
    def weights(self) -> np.ndarray:
        return np.array([mode.weight for mode in self.modes], dtype=float)

    @classmethod
    def relu_default(cls, gamma: float = DEFAULT_GAMMA,
                     teacher_width: int = DEFAULT_TEACHER_WIDTH) -> 'TeacherSpec':
        """Моды 0 и 0.4π с весами 2/3 и 1/3"""
        return cls(
            domain=Domain.circle(),
            modes=[
                TeacherMode(location=(0.0,), weight=2.0 / 3.0),
                TeacherMode(location=(0.4 * np.pi,), weight=1.0 / 3.0),
            ],
            gamma=gamma,
            teacher_width=teacher_width,
        )

    @classmethod
    def torus_default(cls, gamma: float = DEFAULT_GAMMA,
                      teacher_width: int = DEFAULT_TEACHER_WIDTH) -> 'TeacherSpec':
        """Моды (−1, 0) и (1, 1) на торе периода 4"""
        return cls(
            domain=Domain.torus(dim=2, period=4.0),
            modes=[
                TeacherMode(location=(3.0, 0.0), weight=0.5),
                TeacherMode(location=(1.0, 1.0), weight=0.5),
            ],
            gamma=gamma,
            teacher_width=teacher_width,
        )
