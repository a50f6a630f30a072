"""
Команды эксперимента: обучение одного запуска, эталон PDE, сравнение
рядов снимков, выборка учителя и полная развертка через акторов.

Функции здесь синхронные и вызываются либо напрямую из CLI, либо в
пуле потоков RunWorkerActor.
"""
import asyncio
import math
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.experiment_config import ExperimentConfig, ParameterPoint
from config.logging import get_logger
from config.settings import PDE_N_CELLS, RUN_WORKER_COUNT, SLOW_RUN_THRESHOLD
from models.density import DensityField, Grid1D, WeightedAtoms
from models.geometry import DistanceKind, DomainKind
from models.teacher_models import TeacherSpec
from models.training_models import DataSet, ParticleEnsemble, Regularizer, TrajectoryLog
from services import metrics, ufd_pde
from services.artifact_store import ArtifactStore
from services.teacher_service import grid_teacher_density, make_dataset, sample_teacher
from services.trainer import TeacherReferences, init_uniform, run as train_run
from utils.digest import config_digest
from utils.errors import InvalidInputError
from utils.monitoring import measure_latency_sync
from utils.rng import Stream, make_rng

logger = get_logger("harness")

PathLike = Union[str, Path]

PDE_DIR = 'pde'
TEACHER_DIR = 'teachers'
# Допуск выравнивания, когда обе стороны сравнения являются решениями PDE
PDE_ALIGNMENT_SKEW = 1e-9
COMPARE_METRICS = ('mmd', 'l2')


class PdeReference(BaseModel):
    """Решение PDE в моменты журнала частиц"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    key: str
    times: List[float] = Field(default_factory=list)
    snapshots: List[DensityField] = Field(default_factory=list)
    directory: Optional[str] = None
    error: Optional[str] = None


class RunOutcome(BaseModel):
    """Результат одного запуска для оркестратора"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    point_id: str
    run: int
    log: TrajectoryLog
    trajectory_path: str
    wall_time: float
    teacher_digest: str

    @property
    def final_values(self) -> Dict[str, Any]:
        last = self.log.records[-1]
        return last.model_dump(exclude={'wallclock', 'snapshot'})


# --- Подпотоки и входы ---

def run_seeds(exp: ExperimentConfig, point: ParameterPoint, run: int) -> Dict[str, List[int]]:
    """Полные ключи подпотоков запуска; по ним запуск воспроизводится"""
    return {
        'teacher': [exp.base_seed, 0, run, int(Stream.TEACHER)],
        'data': [exp.base_seed, 0, run, int(Stream.DATA)],
        'init': [exp.base_seed, point.index, run, int(Stream.INIT)],
    }


def sample_run_teacher(exp: ExperimentConfig, spec: TeacherSpec,
                       run: int) -> Tuple[ParticleEnsemble, DataSet]:
    """Учитель и данные запуска; общие для всех точек с тем же run"""
    teacher = sample_teacher(spec, make_rng(exp.base_seed, 0, run, Stream.TEACHER))
    data = make_dataset(
        exp.feature_model(), teacher, exp.n_samples,
        make_rng(exp.base_seed, 0, run, Stream.DATA), seed=exp.base_seed,
    )
    return teacher, data


def teacher_measure(spec: TeacherSpec, teacher: ParticleEnsemble) -> WeightedAtoms:
    """Точные моды при γ = inf, иначе выборка учителя"""
    if spec.is_atomic:
        return WeightedAtoms.uniform(spec.locations, spec.domain, spec.weights)
    return WeightedAtoms.from_ensemble(teacher)


def _has_density(exp: ExperimentConfig, gamma: float) -> bool:
    return exp.feature_model().domain.kind == DomainKind.CIRCLE and not math.isinf(gamma)


def _pde_grid(exp: ExperimentConfig) -> Grid1D:
    return Grid1D(n_cells=exp.pde_n_cells)


def point_references(exp: ExperimentConfig, point: ParameterPoint, spec: TeacherSpec,
                     teacher: ParticleEnsemble,
                     pde: Optional[PdeReference] = None) -> TeacherReferences:
    teacher_density = None
    if _has_density(exp, point.gamma):
        teacher_density = grid_teacher_density(spec, _pde_grid(exp))
    usable = pde is not None and pde.error is None
    return TeacherReferences(
        teacher=teacher_measure(spec, teacher),
        distance=exp.distance,
        teacher_density=teacher_density,
        pde_times=pde.times if usable else [],
        pde_snapshots=pde.snapshots if usable else [],
        stepsize=point.stepsize,
    )


# --- PDE ---

def pde_key(point: ParameterPoint) -> str:
    return f"gamma{point.gamma:g}_{point.regularizer.label.replace(':', '')}_tau{point.stepsize:g}"


def _particle_times(exp: ExperimentConfig, point: ParameterPoint) -> List[float]:
    cfg = exp.train_config(point)
    return [k * cfg.stepsize for k in cfg.logged_iterations()]


def solve_pde_series(regularizer: Regularizer, spec: TeacherSpec, times: List[float],
                     n_cells: int = PDE_N_CELLS, method: str = 'BDF',
                     initial: str = 'uniform',
                     **overrides: Any) -> Tuple[ufd_pde.PdeConfig, DensityField, ufd_pde.PdeSolution]:
    """
    Решение от равномерного состояния (или от μ̄) с показателем и
    коэффициентом регуляризатора; overrides заменяют r и coefficient.
    """
    if initial not in ('uniform', 'teacher'):
        raise InvalidInputError(f"Unknown initial state {initial!r}")
    grid = Grid1D(n_cells=n_cells)
    mu_bar = grid_teacher_density(spec, grid)
    mu0 = DensityField.uniform(grid) if initial == 'uniform' else mu_bar
    t_end = max(times) if times else 0.0
    cfg = ufd_pde.PdeConfig.for_regularizer(
        regularizer, t_end=t_end, snapshot_times=list(times), method=method, **overrides,
    )
    return cfg, mu_bar, ufd_pde.solve(mu0, mu_bar, cfg)


def write_pde_series(store: ArtifactStore, directory: PathLike, cfg: ufd_pde.PdeConfig,
                     mu_bar: DensityField, solution: ufd_pde.PdeSolution,
                     header: Dict[str, Any]) -> Path:
    summary = [
        ufd_pde.summary_row(t, snap, mu_bar, cfg)
        for t, snap in zip(solution.times, solution.snapshots)
    ]
    return store.write_pde(directory, solution.times, solution.snapshots, {
        **header,
        'pde_config': cfg.model_dump(),
        'floor_events': solution.floor_events,
        'restarts': solution.restarts,
        'n_steps': solution.n_steps,
        'nfev': solution.nfev,
        'njev': solution.njev,
    }, summary)


def prepare_pde_references(exp: ExperimentConfig, store: ArtifactStore) -> Dict[str, PdeReference]:
    """
    Эталоны PDE для всех точек с плотностью учителя. Ошибка решателя
    не останавливает развертку: у точки просто не будет mmd_pde.
    """
    references: Dict[str, PdeReference] = {}
    if not exp.with_pde:
        return references

    for point in exp.parameter_points():
        key = pde_key(point)
        if key in references or not _has_density(exp, point.gamma):
            continue
        spec = exp.teacher_spec(point.gamma)
        times = _particle_times(exp, point)
        directory = store.root / PDE_DIR / key
        try:
            cfg, mu_bar, solution = solve_pde_series(
                point.regularizer, spec, times, exp.pde_n_cells, exp.pde_method,
            )
            write_pde_series(store, directory, cfg, mu_bar, solution, {
                'teacher_spec': spec.model_dump(),
                'initial': 'uniform',
            })
            references[key] = PdeReference(
                key=key, times=solution.times, snapshots=solution.snapshots,
                directory=str(directory),
            )
        except Exception as e:
            logger.error(f"PDE reference {key} failed: {e}", exc_info=True)
            references[key] = PdeReference(key=key, error=f"{type(e).__name__}: {e}")
    return references


# --- Один запуск ---

@measure_latency_sync(threshold=SLOW_RUN_THRESHOLD, logger_name="harness")
def execute_run(exp: ExperimentConfig, point: ParameterPoint, run: int,
                store: ArtifactStore, pde: Optional[PdeReference] = None) -> RunOutcome:
    """
    Обучает одну точку для одного запуска и пишет CSV траектории,
    финальный ансамбль и снимки в собственный каталог запуска.
    """
    started = time.perf_counter()
    spec = exp.teacher_spec(point.gamma)
    teacher, data = sample_run_teacher(exp, spec, run)
    model = exp.feature_model()
    refs = point_references(exp, point, spec, teacher, pde)

    cfg = exp.train_config(point, seed=exp.base_seed)
    initial = init_uniform(
        point.width, model.domain, make_rng(exp.base_seed, point.index, run, Stream.INIT)
    )
    run_dir = store.run_dir(point.point_id, run)
    sink = None
    if cfg.snapshot_every:
        sink = store.snapshot_sink(run_dir, point.stepsize, config_digest(cfg.model_dump(mode='json')))

    log, final = train_run(
        cfg, model, data, refs, initial,
        run_id=f"{point.point_id}/run_{run:02d}", snapshot_sink=sink,
    )
    trajectory = store.write_trajectory(run_dir / 'trajectory.csv', log)
    store.write_ensemble(run_dir / 'final.csv', final, {
        'point_id': point.point_id,
        'run': run,
        'stepsize': point.stepsize,
        't': final.time(point.stepsize),
        'teacher_digest': data.teacher_digest,
    })
    return RunOutcome(
        point_id=point.point_id,
        run=run,
        log=log,
        trajectory_path=str(trajectory),
        wall_time=time.perf_counter() - started,
        teacher_digest=data.teacher_digest,
    )


# --- Команды CLI ---

def train_cmd(exp: ExperimentConfig, run: int = 0) -> Path:
    """Все точки конфигурации для одного запуска, последовательно, без акторов"""
    store = ArtifactStore(exp.output_dir)
    pde = prepare_pde_references(exp, store)
    for point in exp.parameter_points():
        execute_run(exp, point, run, store, pde.get(pde_key(point)))
    return store.root


def solve_pde_cmd(exp: ExperimentConfig, t_end: float, n_snapshots: int = 33,
                  initial: str = 'uniform', exponent: Optional[float] = None,
                  coefficient: Optional[float] = None) -> Path:
    """
    Решение PDE для первой точки (γ, регуляризатор) конфигурации на
    равномерной сетке моментов [0, t_end]. γ = inf отклоняется.
    """
    gamma = exp.gammas[0]
    if math.isinf(gamma):
        raise InvalidInputError("gamma = inf has no density; the PDE needs a finite gamma")
    if exp.feature_model().domain.kind != DomainKind.CIRCLE:
        raise InvalidInputError("The PDE reference is defined on the circle only")
    if n_snapshots < 1:
        raise InvalidInputError(f"n_snapshots must be positive, got {n_snapshots}")

    spec = exp.teacher_spec(gamma)
    if t_end > 0 and n_snapshots > 1:
        times = np.linspace(0.0, t_end, n_snapshots).tolist()
    else:
        times = [t_end]
    cfg, mu_bar, solution = solve_pde_series(
        exp.regularizers[0], spec, times, exp.pde_n_cells, exp.pde_method, initial,
        r=exponent, coefficient=coefficient,
    )

    store = ArtifactStore(exp.output_dir)
    directory = store.root / PDE_DIR / f"gamma{gamma:g}_r{cfg.r:g}_{initial}"
    write_pde_series(store, directory, cfg, mu_bar, solution, {
        'teacher_spec': spec.model_dump(),
        'initial': initial,
    })
    logger.info(f"PDE series written to {directory}")
    return directory


def _align(times_a: List[float], times_b: List[float], max_skew: float) -> List[Tuple[int, int]]:
    """Ближайший снимок B для каждого снимка A в пределах max_skew"""
    b = np.asarray(times_b)
    pairs = []
    for i, t in enumerate(times_a):
        j = int(np.argmin(np.abs(b - t)))
        if abs(b[j] - t) <= max_skew:
            pairs.append((i, j))
    return pairs


def compare_cmd(dir_a: PathLike, dir_b: PathLike, metric: str = 'mmd',
                distance: DistanceKind = DistanceKind.CHORDAL,
                output: Optional[PathLike] = None) -> Path:
    """
    Поточечная по времени метрика между двумя рядами снимков
    (частицы или PDE). Допустимый сдвиг по времени τ/2.
    """
    if metric not in COMPARE_METRICS:
        raise InvalidInputError(f"Unknown metric {metric!r}, expected one of {COMPARE_METRICS}")
    store = ArtifactStore(Path(dir_a).parent)
    times_a, measures_a, tau_a = store.load_series(dir_a)
    times_b, measures_b, tau_b = store.load_series(dir_b)

    steps = [tau for tau in (tau_a, tau_b) if tau is not None]
    max_skew = 0.5 * max(steps) if steps else PDE_ALIGNMENT_SKEW
    pairs = _align(times_a, times_b, max_skew)
    if not pairs:
        raise InvalidInputError(
            f"No overlapping snapshot times between {dir_a} and {dir_b} (max skew {max_skew:g})"
        )

    if metric == 'l2':
        if tau_a is not None or tau_b is not None:
            raise InvalidInputError("The l2 metric compares two PDE series only")
        _, fields_a, _ = store.read_pde(dir_a)
        _, fields_b, _ = store.read_pde(dir_b)
        rows = [
            (times_a[i], times_b[j], metrics.l2_density_distance(fields_a[i], fields_b[j]))
            for i, j in pairs
        ]
    else:
        rows = [
            (times_a[i], times_b[j], metrics.mmd_energy(measures_a[i], measures_b[j], distance))
            for i, j in pairs
        ]

    path = Path(output) if output else Path(dir_a) / f"compare_{Path(dir_b).name}_{metric}.csv"
    store.write_comparison(path, rows, metric)
    logger.info(f"Compared {len(rows)} aligned snapshots, written to {path}")
    return path


def sample_teacher_cmd(exp: ExperimentConfig, run: int = 0,
                       with_dataset: bool = True) -> Path:
    """Учитель (и датасет) запуска run для каждого γ конфигурации"""
    store = ArtifactStore(exp.output_dir)
    directory = store.root / TEACHER_DIR
    for gamma in exp.gammas:
        spec = exp.teacher_spec(gamma)
        teacher, data = sample_run_teacher(exp, spec, run)
        target = directory / f"gamma{gamma:g}_run{run:02d}"
        store.write_teacher(target, spec, teacher, exp.base_seed)
        if with_dataset:
            store.write_dataset(target / 'dataset.csv', data)
        logger.info(f"Teacher gamma={gamma:g} run={run} written to {target}")
    return directory


# --- Развертка ---

class SweepResult(BaseModel):
    root: str
    completed: int = 0
    failed: int = 0


async def run_experiment(exp: ExperimentConfig, n_workers: int = RUN_WORKER_COUNT) -> SweepResult:
    """
    Полная развертка: точки × запуски через пул RunWorkerActor.
    Средние и манифест пишет ExperimentActor после всех ответов.
    """
    from actors.actor_system import ActorSystem
    from actors.events import EventStore
    from actors.experiment_actor import ExperimentActor
    from actors.messages import ActorMessage, MESSAGE_TYPES
    from actors.run_worker_actor import RunWorkerActor

    if n_workers < 1:
        raise InvalidInputError(f"At least one worker is required, got {n_workers}")

    store = ArtifactStore(exp.output_dir)
    system = ActorSystem()
    system.set_event_store(EventStore())

    worker_ids = [f"worker_{i}" for i in range(n_workers)]
    for worker_id in worker_ids:
        await system.register_actor(RunWorkerActor(worker_id))

    done: asyncio.Future = asyncio.get_running_loop().create_future()
    orchestrator = ExperimentActor("experiment", exp, store, worker_ids, done)
    await system.register_actor(orchestrator)

    await system.start()
    try:
        await system.send_message("experiment", ActorMessage.create(
            sender_id="main",
            message_type=MESSAGE_TYPES['START_SWEEP'],
        ))
        result: SweepResult = await done
    finally:
        await system.stop()
    return result
