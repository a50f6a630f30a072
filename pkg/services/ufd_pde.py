"""
Эталонный решатель взвешенной сверхбыстрой диффузии на S¹:

    ∂ₜμ = −C ∂_ω( μ ∂_ω (μ̄/μ)ʳ )

Конечные объемы в дивергентной форме, метод прямых и адаптивный
неявный интегратор scipy с аналитическим якобианом.
"""
import time
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import BDF, LSODA, Radau
from scipy.sparse import coo_matrix, csr_matrix

from config.logging import get_logger
from config.settings import (
    MASS_TOLERANCE,
    PDE_ABS_TOL,
    PDE_COEFFICIENT,
    PDE_EXPONENT,
    PDE_MAX_FLOOR_RESTARTS,
    PDE_METHOD,
    PDE_POSITIVITY_FLOOR,
    PDE_REL_TOL,
)
from models.density import DensityField, Grid1D
from models.training_models import Regularizer
from services.metrics import l2_density_distance
from utils.errors import DegenerateStateError, DomainMismatchError, StepSizeUnderflowError
from utils.monitoring import measure_latency_sync

logger = get_logger("ufd_pde")

INTEGRATORS = {'BDF': BDF, 'Radau': Radau, 'LSODA': LSODA}


class PdeConfig(BaseModel):
    """Параметры решения; snapshot_times по умолчанию [t_end]"""
    model_config = ConfigDict(frozen=True)

    r: float = Field(PDE_EXPONENT, gt=1)
    coefficient: float = Field(PDE_COEFFICIENT, gt=0)
    t_end: float = Field(..., ge=0)
    snapshot_times: List[float] = Field(default_factory=list)
    rel_tol: float = Field(PDE_REL_TOL, gt=0)
    abs_tol: float = Field(PDE_ABS_TOL, gt=0)
    positivity_floor: float = Field(PDE_POSITIVITY_FLOOR, gt=0)
    method: Literal['BDF', 'Radau', 'LSODA'] = PDE_METHOD

    @model_validator(mode='before')
    @classmethod
    def default_snapshot(cls, data):
        if isinstance(data, dict) and not data.get('snapshot_times') and 't_end' in data:
            data = {**data, 'snapshot_times': [float(data['t_end'])]}
        return data

    @model_validator(mode='after')
    def snapshot_times_in_range(self) -> 'PdeConfig':
        times = self.snapshot_times
        if any(t < 0 or t > self.t_end for t in times):
            raise ValueError(f'Snapshot times must lie in [0, {self.t_end}]')
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError('Snapshot times must be strictly increasing')
        return self

    @classmethod
    def for_regularizer(cls, reg: Regularizer, **kwargs) -> 'PdeConfig':
        """Показатель и коэффициент диффузии, соответствующие регуляризатору"""
        values = {'r': reg.diffusion_exponent, 'coefficient': reg.diffusion_coefficient}
        values.update({k: v for k, v in kwargs.items() if v is not None})
        return cls(**values)


class PdeSolution(BaseModel):
    """Снимки решения и счетчики интегратора"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: List[float]
    snapshots: List[DensityField]
    floor_events: int = 0
    restarts: int = 0
    n_steps: int = 0
    nfev: int = 0
    njev: int = 0
    wallclock: float = 0.0


def _check_pair(mu_bar: DensityField, mu: DensityField) -> Grid1D:
    if mu_bar.grid != mu.grid:
        raise DomainMismatchError(mu_bar.grid, mu.grid)
    return mu.grid


def _require_positive(values: np.ndarray, where: str) -> None:
    smallest = float(values.min())
    if not smallest > 0.0:
        raise DegenerateStateError(smallest, where)


def _flux_terms(mu: np.ndarray, bar: np.ndarray, r: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = (bar / mu) ** r
    jump = np.roll(g, -1) - g                 # g_{j+1} − g_j
    face = 0.5 * (mu + np.roll(mu, -1))       # μ_{j+½}
    return g, jump, face


def _rhs_values(mu: np.ndarray, bar: np.ndarray, r: float, coefficient: float, h: float) -> np.ndarray:
    _, jump, face = _flux_terms(mu, bar, r)
    flux = coefficient * face * jump / h
    return -(flux - np.roll(flux, 1)) / h


def _jacobian_values(mu: np.ndarray, bar: np.ndarray, r: float, coefficient: float,
                     h: float) -> csr_matrix:
    n = mu.shape[0]
    g, jump, face = _flux_terms(mu, bar, r)
    dg = -r * g / mu
    # производные потока через грань j+½ по μ_j и по μ_{j+1}
    d_left = coefficient * (0.5 * jump - face * dg) / h
    d_right = coefficient * (0.5 * jump + face * np.roll(dg, -1)) / h

    idx = np.arange(n)
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([(idx + 1) % n, idx, (idx - 1) % n])
    data = np.concatenate([
        -d_right / h,
        -(d_left - np.roll(d_right, 1)) / h,
        np.roll(d_left, 1) / h,
    ])
    return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def rhs(mu: DensityField, mu_bar: DensityField, cfg: PdeConfig) -> np.ndarray:
    """
    Правая часть метода прямых.
    Поток J_{j+½} = C μ_{j+½} (g_{j+1} − g_j)/h, rhs_j = −(J_{j+½} − J_{j−½})/h,
    g = (μ̄/μ)ʳ, μ_{j+½}: среднее арифметическое соседних ячеек.
    """
    grid = _check_pair(mu_bar, mu)
    _require_positive(mu.values, 'rhs state')
    _require_positive(mu_bar.values, 'rhs target')
    return _rhs_values(mu.values, mu_bar.values, cfg.r, cfg.coefficient, grid.h)


def rhs_jacobian(mu: DensityField, mu_bar: DensityField, cfg: PdeConfig) -> csr_matrix:
    """Трехдиагональный якобиан rhs с периодическими углами"""
    grid = _check_pair(mu_bar, mu)
    _require_positive(mu.values, 'jacobian state')
    _require_positive(mu_bar.values, 'jacobian target')
    return _jacobian_values(mu.values, mu_bar.values, cfg.r, cfg.coefficient, grid.h)


def _as_snapshot(values: np.ndarray, grid: Grid1D, floor: float) -> DensityField:
    return DensityField.normalized(np.maximum(values, floor), grid)


@measure_latency_sync(threshold=30.0, logger_name="ufd_pde")
def solve(mu0: DensityField, mu_bar: DensityField, cfg: PdeConfig) -> PdeSolution:
    """
    Интегрирует от t = 0 до t_end и возвращает снимки в snapshot_times.

    Интегратор scipy шагает вручную; снимки берутся из плотного вывода
    шага. Состояние ниже ε_pos поднимается до ε_pos, масса
    восстанавливается, и интегратор перезапускается с этой точки.
    """
    grid = _check_pair(mu_bar, mu0)
    _require_positive(mu0.values, 'initial state')
    _require_positive(mu_bar.values, 'target')
    started = time.perf_counter()

    bar = mu_bar.values
    h = grid.h
    floor = cfg.positivity_floor

    def fun(_t: float, y: np.ndarray) -> np.ndarray:
        return _rhs_values(np.maximum(y, floor), bar, cfg.r, cfg.coefficient, h)

    def jac(_t: float, y: np.ndarray):
        matrix = _jacobian_values(np.maximum(y, floor), bar, cfg.r, cfg.coefficient, h)
        return matrix.toarray() if cfg.method == 'LSODA' else matrix

    integrator = INTEGRATORS[cfg.method]
    times = list(cfg.snapshot_times)
    snapshots: List[DensityField] = []
    pending = 0

    y = mu0.values.copy()
    t = 0.0
    floor_events = restarts = n_steps = nfev = njev = 0

    while pending < len(times) and t < cfg.t_end:
        solver = integrator(fun, t, y, cfg.t_end, rtol=cfg.rel_tol, atol=cfg.abs_tol, jac=jac)
        restart = False
        while solver.status == 'running':
            message = solver.step()
            if solver.status == 'failed':
                raise StepSizeUnderflowError(
                    t=solver.t,
                    min_density=float(solver.y.min()),
                    mass=float(h * solver.y.sum()),
                    message=message,
                )
            n_steps += 1
            if pending < len(times) and times[pending] <= solver.t:
                dense = solver.dense_output()
                while pending < len(times) and times[pending] <= solver.t:
                    snapshots.append(_as_snapshot(dense(times[pending]), grid, floor))
                    pending += 1

            t, y = solver.t, solver.y.copy()
            below = int(np.count_nonzero(y < floor))
            drift = abs(h * y.sum() - 1.0)
            if below or drift > 0.1 * MASS_TOLERANCE:
                if below:
                    floor_events += below
                    logger.warning(
                        f"Positivity floor hit in {below} cells at t={t:.6g} "
                        f"(min {float(y.min()):.3e})"
                    )
                y = np.maximum(y, floor)
                y /= h * y.sum()
                restart = True
                break

        nfev += solver.nfev
        njev += solver.njev
        if restart:
            restarts += 1
            if restarts > PDE_MAX_FLOOR_RESTARTS:
                raise StepSizeUnderflowError(
                    t=t, min_density=float(y.min()), mass=float(h * y.sum()),
                    message=f"more than {PDE_MAX_FLOOR_RESTARTS} integrator restarts",
                )

    # t_end = 0 или снимки в самом конце отрезка
    while pending < len(times):
        snapshots.append(_as_snapshot(y, grid, floor))
        pending += 1

    wallclock = time.perf_counter() - started
    logger.info(
        f"PDE solved to t={cfg.t_end:g} with {cfg.method}: {n_steps} steps, "
        f"{restarts} restarts, {floor_events} floor events, {wallclock:.2f}s"
    )
    return PdeSolution(
        times=times,
        snapshots=snapshots,
        floor_events=floor_events,
        restarts=restarts,
        n_steps=n_steps,
        nfev=nfev,
        njev=njev,
        wallclock=wallclock,
    )


def step_to(mu0: DensityField, mu_bar: DensityField, cfg: PdeConfig) -> List[DensityField]:
    """Снимки в моменты cfg.snapshot_times"""
    return solve(mu0, mu_bar, cfg).snapshots


def chi2_on_grid(mu_bar: DensityField, mu: DensityField) -> float:
    """χ²(μ̄|μ) = h Σ (μ̄_j/μ_j − 1)² μ_j"""
    grid = _check_pair(mu_bar, mu)
    _require_positive(mu.values, 'chi2 reference')
    ratio = mu_bar.values / mu.values
    return float(grid.h * np.sum((ratio - 1.0) ** 2 * mu.values))


def log_density_ratio_sup(mu_bar: DensityField, mu: DensityField) -> float:
    """max_j |log(μ̄_j/μ_j)|"""
    _check_pair(mu_bar, mu)
    _require_positive(mu.values, 'log ratio state')
    _require_positive(mu_bar.values, 'log ratio target')
    return float(np.max(np.abs(np.log(mu_bar.values) - np.log(mu.values))))


def lyapunov(mu_bar: DensityField, mu: DensityField, r: float = PDE_EXPONENT,
             coefficient: float = PDE_COEFFICIENT) -> float:
    """(C/(r−1)) h Σ (μ̄/μ)ʳ μ, не возрастает вдоль решения"""
    grid = _check_pair(mu_bar, mu)
    _require_positive(mu.values, 'lyapunov state')
    values = (mu_bar.values / mu.values) ** r * mu.values
    return float(coefficient / (r - 1.0) * grid.h * np.sum(values))


def summary_row(t: float, mu: DensityField, mu_bar: DensityField,
                cfg: Optional[PdeConfig] = None) -> dict:
    """Строка сводки по снимку: масса, χ², лог-отношение, функционал, L²"""
    r = cfg.r if cfg is not None else PDE_EXPONENT
    coefficient = cfg.coefficient if cfg is not None else PDE_COEFFICIENT
    return {
        'time': t,
        'mass': mu.mass,
        'chi2': chi2_on_grid(mu_bar, mu),
        'log_ratio_sup': log_density_ratio_sup(mu_bar, mu),
        'lyapunov': lyapunov(mu_bar, mu, r, coefficient),
        'l2_to_teacher': l2_density_distance(mu, mu_bar),
    }
