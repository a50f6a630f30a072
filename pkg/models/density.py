"""
Сеточные плотности на S¹ и взвешенные наборы атомов.
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import (
    MASS_TOLERANCE,
    PDE_MIN_CELLS,
    PDE_N_CELLS,
    WEIGHT_SUM_TOLERANCE,
)
from models.geometry import Domain, wrap_array
from models.training_models import ParticleEnsemble


class Grid1D(BaseModel):
    """Периодическая равномерная сетка на [0, 2π)"""
    model_config = ConfigDict(frozen=True)

    n_cells: int = Field(PDE_N_CELLS, ge=PDE_MIN_CELLS)

    @field_validator('n_cells')
    @classmethod
    def power_of_two(cls, v: int) -> int:
        if v & (v - 1) != 0:
            raise ValueError('n_cells must be a power of two')
        return v

    @property
    def period(self) -> float:
        return 2.0 * np.pi

    @property
    def h(self) -> float:
        return self.period / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h


class DensityField(BaseModel):
    """
    Средние по ячейкам плотности вероятности.
    Строгую положительность проверяют операции, которым она нужна.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    grid: Grid1D

    @field_validator('values', mode='before')
    @classmethod
    def values_as_vector(cls, v):
        return np.asarray(v, dtype=float).reshape(-1)

    @model_validator(mode='after')
    def unit_mass(self) -> 'DensityField':
        if self.values.shape != (self.grid.n_cells,):
            raise ValueError(
                f'Expected {self.grid.n_cells} cell values, got {self.values.shape[0]}'
            )
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0.0):
            raise ValueError('Density values must be finite and non-negative')
        if abs(self.mass - 1.0) > MASS_TOLERANCE:
            raise ValueError(f'Density mass {self.mass!r} differs from 1')
        return self

    @classmethod
    def normalized(cls, values: np.ndarray, grid: Grid1D) -> 'DensityField':
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(values=values / (grid.h * values.sum()), grid=grid)

    @classmethod
    def uniform(cls, grid: Grid1D) -> 'DensityField':
        return cls(values=np.full(grid.n_cells, 1.0 / grid.period), grid=grid)

    @property
    def mass(self) -> float:
        return float(self.grid.h * self.values.sum())

    @property
    def min_value(self) -> float:
        return float(self.values.min())


class WeightedAtoms(BaseModel):
    """Вероятностная мера, сосредоточенная в конечном числе точек"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    locations: np.ndarray
    weights: np.ndarray
    domain: Domain

    @field_validator('locations', mode='before')
    @classmethod
    def locations_as_matrix(cls, v):
        arr = np.asarray(v, dtype=float)
        return arr.reshape(-1, 1) if arr.ndim == 1 else arr

    @field_validator('weights', mode='before')
    @classmethod
    def weights_as_vector(cls, v):
        return np.asarray(v, dtype=float).reshape(-1)

    @model_validator(mode='after')
    def probability_weights(self) -> 'WeightedAtoms':
        if self.locations.ndim != 2 or self.locations.shape[1] != self.domain.dim:
            raise ValueError('Locations must have shape (K, dim)')
        if self.locations.shape[0] != self.weights.shape[0] or self.weights.shape[0] < 1:
            raise ValueError('One weight per location is required')
        if np.any(self.weights < 0.0):
            raise ValueError('Weights must be non-negative')
        if abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f'Weights sum to {self.weights.sum()!r}, expected 1')
        self.locations = wrap_array(self.locations, self.domain.period)
        return self

    @classmethod
    def uniform(cls, locations: np.ndarray, domain: Domain,
                weights: Optional[np.ndarray] = None) -> 'WeightedAtoms':
        locations = np.asarray(locations, dtype=float).reshape(-1, domain.dim)
        if weights is None:
            weights = np.full(locations.shape[0], 1.0 / locations.shape[0])
        return cls(locations=locations, weights=weights, domain=domain)

    @classmethod
    def from_ensemble(cls, ensemble: ParticleEnsemble) -> 'WeightedAtoms':
        return cls.uniform(ensemble.atoms, ensemble.domain)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())
