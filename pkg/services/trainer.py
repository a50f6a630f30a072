"""
Обучение частиц: VarPro (спуск по редуцированному риску), двухмасштабный
спуск и обычный градиентный спуск по полному риску.

Итерация k соответствует времени градиентного потока t = kτ.
"""
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.logging import get_logger
from config.settings import CLIP_FRACTION, KDE_SIGMA
from models.density import DensityField, WeightedAtoms
from models.features import FeatureModel, contract_gradients, feature_matrix
from models.geometry import Domain, DistanceKind, DomainKind, retract_array, wrap_array
from models.training_models import (
    Algorithm,
    DataSet,
    OuterSolution,
    ParticleEnsemble,
    TrainConfig,
    TrajectoryLog,
    TrajectoryRecord,
)
from services import metrics
from services.outer_solver import primal_value, solve_outer
from services.ufd_pde import chi2_on_grid
from utils.errors import DegenerateStateError, InvalidInputError
from utils.rng import Stream, make_rng

logger = get_logger("trainer")

SnapshotSink = Callable[[ParticleEnsemble], str]


def init_uniform(width: int, domain: Domain, rng: np.random.Generator) -> ParticleEnsemble:
    """Независимые равномерные атомы"""
    if width < 1:
        raise InvalidInputError(f"Width must be positive, got {width}")
    atoms = wrap_array(rng.uniform(0.0, domain.period, size=(width, domain.dim)), domain.period)
    return ParticleEnsemble(atoms=atoms, domain=domain)


def particle_gradient(model: FeatureModel, atoms: np.ndarray, data: DataSet,
                      u: np.ndarray, residual: np.ndarray, lam: float) -> np.ndarray:
    """g_i = (u_i/(λN)) Σ_j r_j ∇_ω φ(ω_i, x_j) = M ∇_{ω_i} L̂"""
    contracted = contract_gradients(model, atoms, data.xs, residual)
    return u[:, None] * contracted / (lam * data.n_samples)


def _clip_steps(steps: np.ndarray, domain: Domain, enabled: bool) -> Tuple[np.ndarray, int]:
    """Шаг атома длиннее CLIP_FRACTION·L укорачивается с сохранением направления"""
    if not enabled:
        return steps, 0
    bound = CLIP_FRACTION * domain.period
    norms = np.linalg.norm(steps, axis=1)
    over = norms > bound
    clipped = int(np.count_nonzero(over))
    if clipped:
        scale = np.ones_like(norms)
        scale[over] = bound / norms[over]
        steps = steps * scale[:, None]
    return steps, clipped


def _advance(state: ParticleEnsemble, steps: np.ndarray, cfg: TrainConfig,
             outer: Optional[np.ndarray]) -> ParticleEnsemble:
    steps, clipped = _clip_steps(steps, state.domain, cfg.clip)
    return state.model_copy(update={
        'atoms': retract_array(state.atoms, steps, state.domain),
        'outer': outer,
        'iteration': state.iteration + 1,
        'clip_events': state.clip_events + clipped,
    })


def _require_algorithm(cfg: TrainConfig, algorithm: Algorithm) -> None:
    if cfg.algorithm != algorithm:
        raise InvalidInputError(
            f"Config algorithm is {cfg.algorithm.value}, step expects {algorithm.value}"
        )


def _require_outer(state: ParticleEnsemble) -> np.ndarray:
    if state.outer is None:
        raise InvalidInputError("State has no outer weights; project them first")
    return state.outer


def project_outer(state: ParticleEnsemble, model: FeatureModel, data: DataSet,
                  cfg: TrainConfig) -> ParticleEnsemble:
    """Один точный шаг проекции внешних весов"""
    phi = feature_matrix(model, state.atoms, data.xs)
    sol = solve_outer(phi, data.ys, cfg.lam, cfg.regularizer)
    return state.model_copy(update={'outer': sol.u})


def varpro_step(state: ParticleEnsemble, model: FeatureModel, data: DataSet,
                cfg: TrainConfig) -> ParticleEnsemble:
    """Шаг по редуцированному риску с точно спроецированными внешними весами"""
    _require_algorithm(cfg, Algorithm.VARPRO)
    phi = feature_matrix(model, state.atoms, data.xs)
    sol = solve_outer(phi, data.ys, cfg.lam, cfg.regularizer)
    g = particle_gradient(model, state.atoms, data, sol.u, sol.residual, cfg.lam)
    return _advance(state, -cfg.stepsize * g, cfg, state.outer)


def two_timescale_step(state: ParticleEnsemble, model: FeatureModel, data: DataSet,
                       cfg: TrainConfig) -> ParticleEnsemble:
    """Якобиевский шаг по (ω, u) с масштабом 1/λ"""
    _require_algorithm(cfg, Algorithm.TWO_TIMESCALE)
    u = _require_outer(state)
    width = state.width
    phi = feature_matrix(model, state.atoms, data.xs)
    residual = phi @ u / width - data.ys
    g = particle_gradient(model, state.atoms, data, u, residual, cfg.lam)
    grad_u = (cfg.lam / width) * (
        phi.T @ residual / (cfg.lam * data.n_samples) + cfg.regularizer.derivative(u)
    )
    new_u = u - (cfg.effective_eta / cfg.lam) * grad_u
    return _advance(state, -cfg.stepsize * g, cfg, new_u)


def plain_gd_step(state: ParticleEnsemble, model: FeatureModel, data: DataSet,
                  cfg: TrainConfig) -> ParticleEnsemble:
    """Одновременный шаг по немасштабированному риску (1/(2N))‖F−Y‖² + (λ/M)Σf(u)"""
    _require_algorithm(cfg, Algorithm.PLAIN_GD)
    u = _require_outer(state)
    phi = feature_matrix(model, state.atoms, data.xs)
    residual = phi @ u / state.width - data.ys
    # M ∇_ω R̂ = λ g
    g = particle_gradient(model, state.atoms, data, u, residual, cfg.lam)
    u_step = cfg.effective_eta * cfg.stepsize * (
        phi.T @ residual / data.n_samples + cfg.lam * cfg.regularizer.derivative(u)
    )
    return _advance(state, -cfg.stepsize * cfg.lam * g, cfg, u - u_step)


STEP_FUNCTIONS = {
    Algorithm.VARPRO: varpro_step,
    Algorithm.TWO_TIMESCALE: two_timescale_step,
    Algorithm.PLAIN_GD: plain_gd_step,
}


def reduced_risk(model: FeatureModel, state: ParticleEnsemble, data: DataSet,
                 cfg: TrainConfig) -> float:
    phi = feature_matrix(model, state.atoms, data.xs)
    return solve_outer(phi, data.ys, cfg.lam, cfg.regularizer).primal_value


class TeacherReferences(BaseModel):
    """Эталоны для метрик траектории"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    teacher: Optional[WeightedAtoms] = None
    distance: DistanceKind = DistanceKind.CHORDAL
    teacher_density: Optional[DensityField] = None
    pde_times: List[float] = Field(default_factory=list)
    pde_snapshots: List[DensityField] = Field(default_factory=list)
    stepsize: float = 0.0
    kde_sigma: float = KDE_SIGMA

    def nearest_pde_snapshot(self, t: float) -> Optional[DensityField]:
        if not self.pde_times:
            return None
        idx = int(np.argmin(np.abs(np.asarray(self.pde_times) - t)))
        if abs(self.pde_times[idx] - t) > 0.5 * self.stepsize + 1e-12:
            return None
        return self.pde_snapshots[idx]

    def evaluate(self, state: ParticleEnsemble, t: float) -> Dict[str, Optional[float]]:
        particles = WeightedAtoms.from_ensemble(state)
        values: Dict[str, Optional[float]] = {'mmd_teacher': None, 'mmd_pde': None, 'chi2': None}
        if self.teacher is not None:
            values['mmd_teacher'] = metrics.mmd_energy(particles, self.teacher, self.distance)
        snapshot = self.nearest_pde_snapshot(t)
        if snapshot is not None:
            values['mmd_pde'] = metrics.mmd_energy(
                particles, metrics.grid_as_atoms(snapshot), self.distance
            )
        if self.teacher_density is not None and state.domain.kind == DomainKind.CIRCLE:
            kde = metrics.kde_density(particles, self.kde_sigma, self.teacher_density.grid)
            try:
                values['chi2'] = chi2_on_grid(self.teacher_density, kde)
            except DegenerateStateError:
                values['chi2'] = float('inf')
        return values


def _record(k: int, state: ParticleEnsemble, sol: OuterSolution, phi: np.ndarray,
            data: DataSet, cfg: TrainConfig, refs: Optional[TeacherReferences],
            started: float, snapshot: Optional[str]) -> TrajectoryRecord:
    full = None
    if state.outer is not None and cfg.algorithm != Algorithm.VARPRO:
        full = primal_value(phi, data.ys, cfg.lam, cfg.regularizer, state.outer)
    t = k * cfg.stepsize
    extra = refs.evaluate(state, t) if refs is not None else {}
    return TrajectoryRecord(
        k=k,
        time=t,
        wallclock=time.perf_counter() - started,
        reduced_risk=sol.primal_value,
        full_risk=full,
        clip_events=state.clip_events,
        snapshot=snapshot,
        **extra,
    )


def run(cfg: TrainConfig, model: FeatureModel, data: DataSet,
        teacher_refs: Optional[TeacherReferences] = None,
        initial: Optional[ParticleEnsemble] = None,
        run_id: str = 'run',
        snapshot_sink: Optional[SnapshotSink] = None) -> Tuple[TrajectoryLog, ParticleEnsemble]:
    """Полный запуск обучения с журналом и снимками"""
    started = time.perf_counter()
    if initial is None:
        initial = init_uniform(cfg.width, model.domain, make_rng(cfg.seed, stream=Stream.INIT))
    if initial.width != cfg.width:
        raise InvalidInputError(f"Initial ensemble has {initial.width} atoms, config says {cfg.width}")

    state = initial.model_copy(update={'iteration': 0, 'clip_events': 0})
    if cfg.algorithm != Algorithm.VARPRO:
        state = project_outer(state, model, data, cfg)
    step = STEP_FUNCTIONS[cfg.algorithm]

    logged = set(cfg.logged_iterations())
    snapshots = set(cfg.snapshot_iterations()) if snapshot_sink is not None else set()
    records: List[TrajectoryRecord] = []
    last_clip_events = 0

    logger.info(
        f"Starting {cfg.algorithm.value} run {run_id}: M={cfg.width}, lambda={cfg.lam:g}, "
        f"reg={cfg.regularizer.label}, iters={cfg.iters}"
    )
    for k in range(cfg.iters + 1):
        if k in logged or k in snapshots:
            phi = feature_matrix(model, state.atoms, data.xs)
            sol = solve_outer(phi, data.ys, cfg.lam, cfg.regularizer)
            reference = None
            if k in snapshots:
                snap_state = state if state.outer is not None else state.model_copy(
                    update={'outer': sol.u}
                )
                reference = snapshot_sink(snap_state)
            if k in logged:
                record = _record(k, state, sol, phi, data, cfg, teacher_refs, started, reference)
                records.append(record)
                logger.debug(
                    f"[{run_id}] k={k} t={record.time:.4f} risk={record.reduced_risk:.6e} "
                    f"mmd_teacher={record.mmd_teacher}"
                )
                if state.clip_events > last_clip_events:
                    logger.warning(
                        f"[{run_id}] {state.clip_events - last_clip_events} clipped atom "
                        f"updates before k={k}"
                    )
                    last_clip_events = state.clip_events
        if k < cfg.iters:
            state = step(state, model, data, cfg)

    log = TrajectoryLog(run_id=run_id, records=records)
    logger.info(
        f"Run {run_id} completed in {time.perf_counter() - started:.2f}s: "
        f"final risk {records[-1].reduced_risk:.6e}, clip events {state.clip_events}"
    )
    return log, state
