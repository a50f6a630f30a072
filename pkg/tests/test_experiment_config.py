# pytest tests/test_experiment_config.py -v

import pytest
from pydantic import ValidationError

from config.experiment_config import ExperimentConfig, Preset, load_config_file
from models.features import FeatureKind
from models.geometry import DistanceKind
from models.training_models import Algorithm, RegularizerKind

# Тестовые константы
BASE_TAU = 2.0 ** -10


def write_config(tmp_path, text: str):
    path = tmp_path / "experiment.env"
    path.write_text(text, encoding="utf-8")
    return path


def test_every_preset_builds():
    for preset in Preset:
        for mini in (False, True):
            exp = ExperimentConfig.from_preset(preset, mini=mini)
            assert exp.preset == preset
            assert exp.parameter_points()


def test_mini_preset_is_smaller():
    full = ExperimentConfig.from_preset('width-sweep')
    mini = ExperimentConfig.from_preset('width-sweep', mini=True)
    assert mini.n_samples < full.n_samples
    assert mini.iters < full.iters
    assert max(mini.widths) < max(full.widths)
    assert full.with_pde and mini.with_pde


def test_torus_preset_uses_laplace_features():
    exp = ExperimentConfig.from_preset('torus-rbf', mini=True)
    assert exp.feature == FeatureKind.LAPLACE_TORUS
    assert exp.distance == DistanceKind.QUOTIENT
    assert not exp.with_pde
    assert exp.feature_model().domain.dim == 2
    assert exp.teacher_spec(100.0).domain.dim == 2


def test_torus_with_pde_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig.from_preset('torus-rbf', with_pde=True)


def test_comma_separated_lists():
    exp = ExperimentConfig.from_preset(
        'lambda-sweep', widths='8, 16', lambdas='0.1,0.01', regularizers='f_u,power_r:1.5',
    )
    assert exp.widths == [8, 16]
    assert exp.lambdas == [0.1, 0.01]
    assert [reg.kind for reg in exp.regularizers] == [RegularizerKind.QUAD_UNBIASED, RegularizerKind.POWER_R]
    assert exp.regularizers[1].r == 1.5


def test_invalid_sweep_entries_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig.from_preset('width-sweep', lambdas='0.1,0')
    with pytest.raises(ValidationError):
        ExperimentConfig.from_preset('width-sweep', gammas='-1')
    with pytest.raises(ValidationError):
        ExperimentConfig.from_preset('width-sweep', pde_n_cells=100)
    with pytest.raises(ValueError):
        ExperimentConfig.from_preset('width-sweep', regularizers='huber')


def test_parameter_points_order_and_ids():
    """Порядок: γ, регуляризатор, λ, M, алгоритм, τ"""
    exp = ExperimentConfig.from_preset('width-sweep', mini=True, widths='8,16', gammas='10,100')
    points = exp.parameter_points()
    assert len(points) == 2 * 2 * 1 * 2
    assert [p.index for p in points] == list(range(8))
    assert (points[0].gamma, points[0].regularizer.kind, points[0].width) == (10.0, RegularizerKind.QUAD_BIASED, 8)
    assert points[1].width == 16
    assert points[2].regularizer.kind == RegularizerKind.QUAD_UNBIASED
    assert points[4].gamma == 100.0
    assert points[0].point_id == 'p00_M8_lam0.001_gamma10_quad_biased_varpro_tau0.000976562'
    assert len({p.point_id for p in points}) == len(points)


def test_train_config_scales_iterations_for_smaller_steps():
    """Меньший шаг сохраняет конечное время t = iters·τ"""
    exp = ExperimentConfig.from_preset(
        'two-timescale-compare', mini=True, stepsizes=[BASE_TAU, BASE_TAU / 4], iters=64, eval_every=16,
    )
    points = exp.parameter_points()
    by_tau = {p.stepsize: exp.train_config(p, seed=3) for p in points if p.algorithm == Algorithm.VARPRO}
    coarse, fine = by_tau[BASE_TAU], by_tau[BASE_TAU / 4]
    assert (coarse.iters, coarse.eval_every) == (64, 16)
    assert (fine.iters, fine.eval_every) == (256, 64)
    assert fine.iters * fine.stepsize == pytest.approx(coarse.iters * coarse.stepsize)
    assert coarse.seed == 3


def test_config_file_values_and_precedence(tmp_path):
    """Флаги > файл > пресет"""
    path = write_config(tmp_path, "PRESET=lambda-sweep\nWIDTHS=8,16\nITERS=100\nlambdas=0.5\n")
    exp = ExperimentConfig.from_sources(config_file=path)
    assert exp.preset == Preset.LAMBDA_SWEEP
    assert exp.widths == [8, 16]
    assert exp.iters == 100
    assert exp.lambdas == [0.5]

    exp = ExperimentConfig.from_sources(config_file=path, overrides={'iters': 5, 'widths': None})
    assert exp.iters == 5
    assert exp.widths == [8, 16]

    exp = ExperimentConfig.from_sources(preset='gamma-sweep', config_file=path)
    assert exp.preset == Preset.GAMMA_SWEEP


def test_config_file_errors(tmp_path):
    with pytest.raises(ValueError):
        load_config_file(write_config(tmp_path, "WIDTHS=8\nNOT_A_FIELD=1\n"))
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "missing.env")


def test_empty_values_in_file_are_ignored(tmp_path):
    values = load_config_file(write_config(tmp_path, "WIDTHS=\nN_RUNS=3\n"))
    assert values == {'n_runs': '3'}


def test_mini_flag_from_file(tmp_path):
    path = write_config(tmp_path, "MINI=true\n")
    exp = ExperimentConfig.from_sources(config_file=path)
    assert exp.mini
    assert exp.n_samples == ExperimentConfig.from_preset('width-sweep', mini=True).n_samples


def test_manifest_payload_uses_labels():
    exp = ExperimentConfig.from_preset('width-sweep', mini=True)
    payload = exp.manifest_payload()
    assert payload['regularizers'] == ['quad_biased', 'quad_unbiased']
    assert payload['preset'] == Preset.WIDTH_SWEEP
