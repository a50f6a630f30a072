"""
Конфигурация экспериментов: именованные пресеты, их desk-scale
варианты, загрузка плоских KEY=VALUE файлов и развертка точек параметров.

Приоритет источников: флаги CLI > файл конфигурации > пресет.
"""
import itertools
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from config.settings import (
    BASE_SEED,
    DEFAULT_ENERGY_DISTANCE,
    DEFAULT_EVAL_EVERY,
    DEFAULT_GAMMA,
    DEFAULT_GAMMAS,
    DEFAULT_ITERS,
    DEFAULT_LAMBDAS,
    DEFAULT_N_RUNS,
    DEFAULT_N_SAMPLES,
    DEFAULT_STEPSIZE,
    DEFAULT_TEACHER_WIDTH,
    DEFAULT_WIDTHS,
    MINI_EVAL_EVERY,
    MINI_ITERS,
    MINI_N_SAMPLES,
    MINI_TEACHER_WIDTH,
    MINI_WIDTHS,
    OUTPUT_DIR,
    PDE_METHOD,
    PDE_N_CELLS,
)
from models.features import FeatureKind, FeatureModel
from models.geometry import DistanceKind
from models.teacher_models import TeacherSpec
from models.training_models import Algorithm, Regularizer, TrainConfig


class Preset(str, Enum):
    WIDTH_SWEEP = 'width-sweep'
    LAMBDA_SWEEP = 'lambda-sweep'
    GAMMA_SWEEP = 'gamma-sweep'
    TWO_TIMESCALE_COMPARE = 'two-timescale-compare'
    PDE_COMPARE = 'pde-compare'
    TORUS_RBF = 'torus-rbf'


# Поля, принимающие списки через запятую
LIST_FIELDS = ('widths', 'lambdas', 'gammas', 'regularizers', 'algorithms', 'stepsizes')


def _preset_values(preset: Preset, mini: bool) -> Dict[str, Any]:
    """Значения пресета поверх общих умолчаний"""
    values: Dict[str, Any] = {
        'preset': preset,
        'mini': mini,
        'n_samples': MINI_N_SAMPLES if mini else DEFAULT_N_SAMPLES,
        'teacher_width': MINI_TEACHER_WIDTH if mini else DEFAULT_TEACHER_WIDTH,
        'iters': MINI_ITERS if mini else DEFAULT_ITERS,
        'eval_every': MINI_EVAL_EVERY if mini else DEFAULT_EVAL_EVERY,
        'widths': list(MINI_WIDTHS if mini else DEFAULT_WIDTHS),
        'lambdas': [1e-3],
        'gammas': [DEFAULT_GAMMA],
        'regularizers': ['f_b'],
        'algorithms': [Algorithm.VARPRO],
        'stepsizes': [DEFAULT_STEPSIZE],
    }
    large = MINI_WIDTHS[-1] if mini else DEFAULT_WIDTHS[-1]

    if preset == Preset.WIDTH_SWEEP:
        values.update(regularizers=['f_b', 'f_u'], with_pde=True)
    elif preset == Preset.LAMBDA_SWEEP:
        values.update(
            widths=[large],
            lambdas=[1e-1, 1e-2, 1e-3] if mini else list(DEFAULT_LAMBDAS),
        )
    elif preset == Preset.GAMMA_SWEEP:
        values.update(widths=[large], gammas=list(DEFAULT_GAMMAS), with_pde=True)
    elif preset == Preset.TWO_TIMESCALE_COMPARE:
        values.update(
            widths=[128],
            lambdas=[1e-1],
            algorithms=[Algorithm.VARPRO, Algorithm.TWO_TIMESCALE],
            stepsizes=[DEFAULT_STEPSIZE, DEFAULT_STEPSIZE / 4.0],
            snapshot_every=values['eval_every'],
        )
    elif preset == Preset.PDE_COMPARE:
        values.update(
            widths=[large],
            lambdas=[1e-4],
            with_pde=True,
            snapshot_every=values['eval_every'],
        )
    elif preset == Preset.TORUS_RBF:
        values.update(
            feature=FeatureKind.LAPLACE_TORUS,
            widths=[32, 128] if mini else [32, 128, 512],
            regularizers=['f_u', 'f_b'],
            distance=DistanceKind.QUOTIENT,
        )
    return values


class ParameterPoint(BaseModel):
    """Одна точка развертки параметров"""
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=0)
    width: int = Field(..., ge=1)
    lam: float = Field(..., gt=0)
    gamma: float = Field(..., ge=0)
    regularizer: Regularizer
    algorithm: Algorithm
    stepsize: float = Field(..., gt=0)

    @property
    def point_id(self) -> str:
        return (
            f"p{self.index:02d}_M{self.width}_lam{self.lam:g}_gamma{self.gamma:g}_"
            f"{self.regularizer.label.replace(':', '')}_{self.algorithm.value}_tau{self.stepsize:g}"
        )


class ExperimentConfig(BaseModel):
    """Полная конфигурация эксперимента; списки задают развертку"""
    model_config = ConfigDict(frozen=True)

    preset: Preset = Preset.WIDTH_SWEEP
    mini: bool = False
    feature: FeatureKind = FeatureKind.RELU_SPHERE

    # Учитель и данные
    n_samples: int = Field(DEFAULT_N_SAMPLES, ge=1)
    teacher_width: int = Field(DEFAULT_TEACHER_WIDTH, ge=1)
    gammas: List[float] = Field(default_factory=lambda: [DEFAULT_GAMMA], min_length=1)

    # Обучение
    widths: List[int] = Field(default_factory=lambda: list(DEFAULT_WIDTHS), min_length=1)
    lambdas: List[float] = Field(default_factory=lambda: [1e-3], min_length=1)
    regularizers: List[Regularizer] = Field(
        default_factory=lambda: [Regularizer.parse('f_b')], min_length=1
    )
    algorithms: List[Algorithm] = Field(default_factory=lambda: [Algorithm.VARPRO], min_length=1)
    stepsizes: List[float] = Field(default_factory=lambda: [DEFAULT_STEPSIZE], min_length=1)
    iters: int = Field(DEFAULT_ITERS, ge=0)
    eval_every: int = Field(DEFAULT_EVAL_EVERY, ge=1)
    snapshot_every: int = Field(0, ge=0)
    eta: Optional[float] = Field(None, ge=0)
    clip: bool = True

    # Оценка
    distance: DistanceKind = DistanceKind(DEFAULT_ENERGY_DISTANCE)
    with_pde: bool = False
    pde_n_cells: int = Field(PDE_N_CELLS, ge=16)
    pde_method: str = PDE_METHOD

    # Запуски
    n_runs: int = Field(DEFAULT_N_RUNS, ge=1)
    output_dir: str = OUTPUT_DIR
    base_seed: int = Field(BASE_SEED, ge=0)

    @field_validator(*LIST_FIELDS, mode='before')
    @classmethod
    def split_lists(cls, v, info: ValidationInfo):
        if isinstance(v, str):
            v = [item.strip() for item in v.split(',') if item.strip()]
        elif not isinstance(v, (list, tuple)):
            v = [v]
        if info.field_name == 'regularizers':
            return [Regularizer.parse(item) if isinstance(item, str) else item for item in v]
        return v

    @field_validator('widths', 'lambdas', 'stepsizes')
    @classmethod
    def positive_entries(cls, v):
        if any(not item > 0 for item in v):
            raise ValueError('Sweep entries must be positive')
        return v

    @field_validator('gammas')
    @classmethod
    def gammas_not_negative(cls, v):
        if any(not item >= 0 for item in v):
            raise ValueError('gamma must be non-negative')
        return v

    @model_validator(mode='after')
    def feature_fits_options(self) -> 'ExperimentConfig':
        if self.feature == FeatureKind.LAPLACE_TORUS and self.with_pde:
            raise ValueError('The PDE reference is defined on the circle only')
        if self.pde_n_cells & (self.pde_n_cells - 1):
            raise ValueError('pde_n_cells must be a power of two')
        return self

    # --- Построение ---

    @classmethod
    def from_preset(cls, preset: Union[Preset, str], mini: bool = False,
                    **overrides: Any) -> 'ExperimentConfig':
        values = _preset_values(Preset(preset), mini)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(values)

    @classmethod
    def from_sources(cls, preset: Optional[str] = None, mini: bool = False,
                     config_file: Optional[Union[str, Path]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> 'ExperimentConfig':
        """Пресет, затем файл, затем флаги"""
        file_values = load_config_file(config_file) if config_file else {}
        preset_name = (overrides or {}).get('preset') or preset or file_values.get(
            'preset', Preset.WIDTH_SWEEP.value
        )
        mini = mini or str(file_values.get('mini', '')).lower() in ('1', 'true', 'yes')
        values = _preset_values(Preset(preset_name), mini)
        values.update(file_values)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        values['preset'] = Preset(preset_name)
        values['mini'] = mini
        return cls.model_validate(values)

    def parameter_points(self) -> List[ParameterPoint]:
        """Декартово произведение списков в фиксированном порядке"""
        grid = itertools.product(
            self.gammas, self.regularizers, self.lambdas,
            self.widths, self.algorithms, self.stepsizes,
        )
        return [
            ParameterPoint(
                index=i, width=width, lam=lam, gamma=gamma,
                regularizer=reg, algorithm=algorithm, stepsize=stepsize,
            )
            for i, (gamma, reg, lam, width, algorithm, stepsize) in enumerate(grid)
        ]

    def feature_model(self) -> FeatureModel:
        if self.feature == FeatureKind.LAPLACE_TORUS:
            return FeatureModel.laplace_torus()
        return FeatureModel.relu_sphere()

    def teacher_spec(self, gamma: float) -> TeacherSpec:
        if self.feature == FeatureKind.LAPLACE_TORUS:
            return TeacherSpec.torus_default(gamma=gamma, teacher_width=self.teacher_width)
        return TeacherSpec.relu_default(gamma=gamma, teacher_width=self.teacher_width)

    def train_config(self, point: ParameterPoint, seed: int = 0) -> TrainConfig:
        """
        TrainConfig точки. iters и eval_every заданы для первого шага в
        stepsizes; для меньших шагов они масштабируются, сохраняя время.
        """
        scale = max(1, round(self.stepsizes[0] / point.stepsize))
        return TrainConfig(
            width=point.width,
            iters=self.iters * scale,
            stepsize=point.stepsize,
            lam=point.lam,
            regularizer=point.regularizer,
            eta=self.eta,
            seed=seed,
            eval_every=self.eval_every * scale,
            algorithm=point.algorithm,
            clip=self.clip,
            snapshot_every=self.snapshot_every * scale,
        )

    def manifest_payload(self) -> Dict[str, Any]:
        payload = self.model_dump()
        payload['regularizers'] = [reg.label for reg in self.regularizers]
        return payload


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Плоский файл KEY=VALUE (синтаксис .env). Ключи: имена полей
    ExperimentConfig без учета регистра; списки через запятую.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    raw = dotenv_values(path)
    known = set(ExperimentConfig.model_fields)
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        name = key.strip().lower()
        if name not in known:
            raise ValueError(f"Unknown config key {key!r} in {path}")
        if value is None or value == '':
            continue
        values[name] = value
    return values
