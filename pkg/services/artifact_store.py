"""
Хранилище артефактов: CSV с JSON-сайдкарами для учителя, датасетов,
снимков частиц и PDE, журналов траекторий, средних и манифеста.

Числа пишутся в формате 17g, поэтому чтение восстанавливает их точно.
"""
import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.logging import get_logger
from models.density import DensityField, Grid1D, WeightedAtoms
from models.geometry import Domain
from models.teacher_models import TeacherSpec
from models.training_models import DataSet, ParticleEnsemble, TrajectoryLog, TrajectoryRecord
from services.metrics import grid_as_atoms
from utils.digest import array_digest

PathLike = Union[str, Path]

TRAJECTORY_COLUMNS = [
    'run_id', 'iter', 'time', 'reduced_risk', 'full_risk',
    'mmd_teacher', 'mmd_pde', 'chi2', 'clip_events',
]
SUMMARY_COLUMNS = ['time', 'mass', 'chi2', 'log_ratio_sup', 'lyapunov', 'l2_to_teacher']

SNAPSHOT_DIR = 'snapshots'
PDE_SNAPSHOTS = 'pde_snapshots.csv'
PDE_HEADER = 'pde.json'
PDE_SUMMARY = 'pde_summary.csv'
MANIFEST = 'manifest.json'


def format_value(value: Any) -> str:
    """Пустая строка для None, 17 значащих цифр для вещественных"""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def parse_optional(text: str) -> Optional[float]:
    return None if text == '' else float(text)


def sidecar(path: PathLike) -> Path:
    return Path(path).with_suffix('.json')


class ArtifactStore:
    """
    Файловое хранилище результатов под одним корневым каталогом.
    Записи разных запусков не пересекаются по путям.
    """

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.logger = get_logger("artifact_store")
        self._files_written = 0

    # --- Низкоуровневые записи ---

    def _write_rows(self, path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        self._files_written += 1
        return path

    def _read_rows(self, path: PathLike) -> Tuple[List[str], List[List[str]]]:
        with open(path, newline='') as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [row for row in reader]
        return header, rows

    def write_json(self, path: PathLike, payload: Dict[str, Any]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write('\n')
        self._files_written += 1
        return path

    @staticmethod
    def read_json(path: PathLike) -> Dict[str, Any]:
        with open(path) as fh:
            return json.load(fh)

    @property
    def files_written(self) -> int:
        return self._files_written

    # --- Каталоги ---

    def point_dir(self, point_id: str) -> Path:
        return self.root / point_id

    def run_dir(self, point_id: str, run: int) -> Path:
        return self.point_dir(point_id) / f"run_{run:02d}"

    # --- Учитель и данные ---

    def write_ensemble(self, path: PathLike, ensemble: ParticleEnsemble,
                       header: Optional[Dict[str, Any]] = None) -> Path:
        """Атомы (и внешние веса, если есть) в CSV; заголовок в JSON рядом"""
        dim = ensemble.domain.dim
        columns = [f"omega_{k}" for k in range(dim)]
        rows = ensemble.atoms.tolist()
        if ensemble.outer is not None:
            columns.append('u')
            rows = [row + [u] for row, u in zip(rows, ensemble.outer.tolist())]
        path = self._write_rows(path, columns, rows)
        payload = {
            'domain': ensemble.domain.model_dump(),
            'width': ensemble.width,
            'iteration': ensemble.iteration,
            'digest': array_digest(ensemble.atoms),
            **(header or {}),
        }
        self.write_json(sidecar(path), payload)
        return path

    def read_ensemble(self, path: PathLike) -> Tuple[ParticleEnsemble, Dict[str, Any]]:
        header = self.read_json(sidecar(path))
        domain = Domain.model_validate(header['domain'])
        columns, rows = self._read_rows(path)
        values = np.array(rows, dtype=float).reshape(len(rows), len(columns))
        outer = values[:, domain.dim] if 'u' in columns else None
        ensemble = ParticleEnsemble(
            atoms=values[:, :domain.dim],
            domain=domain,
            outer=outer,
            iteration=int(header.get('iteration', 0)),
        )
        return ensemble, header

    def write_teacher(self, directory: PathLike, spec: TeacherSpec,
                      ensemble: ParticleEnsemble, seed: int) -> Path:
        return self.write_ensemble(
            Path(directory) / 'teacher.csv',
            ensemble,
            {'teacher_spec': spec.model_dump(), 'seed': seed},
        )

    def write_dataset(self, path: PathLike, data: DataSet) -> Path:
        columns = [f"x_{k}" for k in range(data.xs.shape[1])] + ['y']
        rows = np.column_stack([data.xs, data.ys]).tolist()
        path = self._write_rows(path, columns, rows)
        self.write_json(sidecar(path), {
            'n_samples': data.n_samples,
            'seed': data.seed,
            'teacher_digest': data.teacher_digest,
            'digest': array_digest(data.xs, data.ys),
        })
        return path

    # --- Траектории ---

    def write_trajectory(self, path: PathLike, log: TrajectoryLog) -> Path:
        """CSV траектории с фиксированным порядком колонок"""
        rows = [
            [log.run_id, rec.k, rec.time, rec.reduced_risk, rec.full_risk,
             rec.mmd_teacher, rec.mmd_pde, rec.chi2, rec.clip_events]
            for rec in log.records
        ]
        return self._write_rows(path, TRAJECTORY_COLUMNS, rows)

    def read_trajectory(self, path: PathLike) -> TrajectoryLog:
        header, rows = self._read_rows(path)
        if header != TRAJECTORY_COLUMNS:
            raise ValueError(f"Unexpected trajectory columns in {path}: {header}")
        records = []
        run_id = rows[0][0] if rows else Path(path).parent.name
        for row in rows:
            records.append(TrajectoryRecord(
                k=int(row[1]),
                time=float(row[2]),
                reduced_risk=float(row[3]),
                full_risk=parse_optional(row[4]),
                mmd_teacher=parse_optional(row[5]),
                mmd_pde=parse_optional(row[6]),
                chi2=parse_optional(row[7]),
                clip_events=int(float(row[8])),
            ))
        return TrajectoryLog(run_id=run_id, records=records)

    def write_mean(self, path: PathLike, logs: List[TrajectoryLog]) -> Path:
        """
        Поэлементное среднее журналов с общей сеткой итераций.
        Колонка пуста, если хотя бы в одном журнале значение отсутствует.
        """
        if not logs:
            raise ValueError("No trajectories to average")
        grid = [rec.k for rec in logs[0].records]
        for log in logs[1:]:
            if [rec.k for rec in log.records] != grid:
                raise ValueError(f"Run {log.run_id} has a different iteration grid")

        rows = []
        for i, k in enumerate(grid):
            row: List[Any] = ['mean', k, logs[0].records[i].time]
            for column in TRAJECTORY_COLUMNS[3:]:
                values = [getattr(log.records[i], column) for log in logs]
                if any(v is None for v in values):
                    row.append(None)
                else:
                    row.append(float(np.mean(np.asarray(values, dtype=float))))
            rows.append(row)
        return self._write_rows(path, TRAJECTORY_COLUMNS, rows)

    def snapshot_sink(self, run_dir: PathLike, stepsize: float, config_hash: str):
        """Функция записи снимка частиц для trainer.run"""
        directory = Path(run_dir) / SNAPSHOT_DIR

        def sink(state: ParticleEnsemble) -> str:
            path = directory / f"k_{state.iteration:06d}.csv"
            self.write_ensemble(path, state, {
                'k': state.iteration,
                't': state.time(stepsize),
                'stepsize': stepsize,
                'config_hash': config_hash,
            })
            return str(path.relative_to(self.root)) if self.root in path.parents else str(path)

        return sink

    # --- PDE ---

    def write_pde(self, directory: PathLike, times: List[float], snapshots: List[DensityField],
                  header: Dict[str, Any], summary: Optional[List[Dict[str, float]]] = None) -> Path:
        """Строка на ячейку, колонка на момент времени; сводка отдельным CSV"""
        directory = Path(directory)
        grid = snapshots[0].grid
        columns = ['cell', 'center'] + [f"t={format_value(t)}" for t in times]
        values = np.column_stack([snap.values for snap in snapshots])
        rows = [
            [j, grid.centers[j]] + values[j].tolist()
            for j in range(grid.n_cells)
        ]
        self._write_rows(directory / PDE_SNAPSHOTS, columns, rows)
        self.write_json(directory / PDE_HEADER, {
            'grid': grid.model_dump(),
            'times': list(times),
            **header,
        })
        if summary is not None:
            self._write_rows(
                directory / PDE_SUMMARY,
                SUMMARY_COLUMNS,
                [[row[c] for c in SUMMARY_COLUMNS] for row in summary],
            )
        return directory

    def read_pde(self, directory: PathLike) -> Tuple[List[float], List[DensityField], Dict[str, Any]]:
        directory = Path(directory)
        header = self.read_json(directory / PDE_HEADER)
        grid = Grid1D.model_validate(header['grid'])
        _, rows = self._read_rows(directory / PDE_SNAPSHOTS)
        values = np.array(rows, dtype=float)[:, 2:]
        times = [float(t) for t in header['times']]
        snapshots = [DensityField(values=values[:, i], grid=grid) for i in range(len(times))]
        return times, snapshots, header

    # --- Временные ряды для сравнения ---

    def load_series(self, directory: PathLike) -> Tuple[List[float], List[WeightedAtoms], Optional[float]]:
        """
        Ряд (t, мера) из каталога запуска: снимки частиц или снимки PDE.
        Третий элемент: шаг τ для частиц и None для PDE.
        """
        directory = Path(directory)
        if (directory / PDE_HEADER).exists():
            times, snapshots, _ = self.read_pde(directory)
            return times, [grid_as_atoms(s) for s in snapshots], None

        files = sorted((directory / SNAPSHOT_DIR).glob('k_*.csv'))
        if not files:
            raise FileNotFoundError(f"No particle or PDE snapshots in {directory}")
        times: List[float] = []
        measures: List[WeightedAtoms] = []
        stepsize: Optional[float] = None
        for path in files:
            ensemble, header = self.read_ensemble(path)
            times.append(float(header['t']))
            stepsize = float(header['stepsize'])
            measures.append(WeightedAtoms.from_ensemble(ensemble))
        return times, measures, stepsize

    def write_comparison(self, path: PathLike, rows: List[Tuple[float, float, float]],
                         metric: str) -> Path:
        return self._write_rows(path, ['time_a', 'time_b', metric], rows)

    # --- Манифест ---

    def write_manifest(self, payload: Dict[str, Any]) -> Path:
        path = self.write_json(self.root / MANIFEST, payload)
        self.logger.info(f"Manifest written to {path} ({self._files_written} files in total)")
        return path

    def read_manifest(self) -> Dict[str, Any]:
        return self.read_json(self.root / MANIFEST)
