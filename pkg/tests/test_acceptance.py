# VARPRO_ACCEPTANCE=1 pytest tests/test_acceptance.py -v

import numpy as np
import pytest
from scipy.stats import linregress

from config.experiment_config import ExperimentConfig
from models.density import DensityField, Grid1D, WeightedAtoms
from models.features import FeatureModel, feature_matrix
from models.geometry import Domain
from models.teacher_models import TeacherSpec
from models.training_models import Algorithm, ParticleEnsemble, Regularizer, TrainConfig
from services import harness
from services.artifact_store import ArtifactStore
from services.metrics import mmd_energy, mmd_feature, mmd_feature_double_sum
from services.outer_solver import solve_outer
from services.teacher_service import grid_teacher_density
from services.trainer import init_uniform, particle_gradient, run
from services.ufd_pde import PdeConfig, chi2_on_grid, solve
from tests.fixtures import gaussian_dataset, requires_acceptance
from utils.rng import Stream, make_rng

# Тестовые константы
N_ENVELOPE_INSTANCES = 50
N_MMD_INSTANCES = 100
FD_STEP = 1e-6
KINK_MARGIN = 1e-4
ENVELOPE_TOLERANCE = 1e-5
STATIONARY_TOLERANCE = 1e-10
MASS_TOLERANCE = 1e-10
DECAY_N_CELLS = 512
DECAY_TIMES = np.linspace(0.0, 20.0, 201).tolist()
BURN_IN_TIME = 1.0
MIN_R_SQUARED = 0.98
TWO_TIMESCALE_RATIO = 3.0
TAU = 2.0 ** -10
HORIZON = 2.0
N_SEEDS = 6


def acceptance_experiment(tmp_path, preset: str = 'width-sweep', **overrides) -> ExperimentConfig:
    values = dict(n_runs=N_SEEDS, output_dir=str(tmp_path), base_seed=2024)
    values.update(overrides)
    return ExperimentConfig.from_preset(preset, mini=True, **values)


async def sweep_means(exp: ExperimentConfig):
    """Средние траектории по точкам в порядке parameter_points"""
    result = await harness.run_experiment(exp)
    assert result.failed == 0
    store = ArtifactStore(exp.output_dir)
    return [
        (point, store.read_trajectory(store.point_dir(point.point_id) / 'mean.csv'))
        for point in exp.parameter_points()
    ]


def strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


@requires_acceptance
def test_envelope_gradient_on_random_instances():
    """Градиент частиц VarPro против центральных разностей пересчитанного L̂"""
    rng = np.random.default_rng(3)
    model = FeatureModel.relu_sphere()
    regs = [Regularizer.parse(label) for label in ('quad', 'f_b', 'f_u')]
    for i in range(N_ENVELOPE_INSTANCES):
        width = int(rng.integers(2, 17))
        data = gaussian_dataset(rng, int(rng.integers(16, 65)))
        lam = (1e-3, 1e-1)[i % 2]
        reg = regs[i % len(regs)]
        atoms = rng.uniform(0.0, 2.0 * np.pi, size=(width, 1))

        def value(points):
            return solve_outer(feature_matrix(model, points, data.xs), data.ys, lam, reg).primal_value

        sol = solve_outer(feature_matrix(model, atoms, data.xs), data.ys, lam, reg)
        g = particle_gradient(model, atoms, data, sol.u, sol.residual, lam)[:, 0] / width
        fd, exact = [], []
        for j in range(width):
            theta = atoms[j, 0]
            pre = data.xs[:, 0] * np.cos(theta) + data.xs[:, 1] * np.sin(theta)
            if np.min(np.abs(pre)) < KINK_MARGIN:
                continue
            plus, minus = atoms.copy(), atoms.copy()
            plus[j, 0] += FD_STEP
            minus[j, 0] -= FD_STEP
            fd.append((value(plus) - value(minus)) / (2 * FD_STEP))
            exact.append(g[j])
        if not fd:
            continue
        fd, exact = np.array(fd), np.array(exact)
        scale = max(np.linalg.norm(fd), 1e-8 * (1.0 + abs(sol.primal_value)))
        assert np.linalg.norm(exact - fd) <= ENVELOPE_TOLERANCE * scale, (i, reg.label)


@requires_acceptance
def test_pde_stationarity_and_mass():
    spec = TeacherSpec.relu_default(gamma=100.0)
    bar = grid_teacher_density(spec, Grid1D(n_cells=DECAY_N_CELLS))
    sol = solve(bar, bar, PdeConfig(t_end=10.0, snapshot_times=[1.0, 5.0, 10.0]))
    for snap in sol.snapshots:
        assert np.max(np.abs(snap.values - bar.values)) <= STATIONARY_TOLERANCE
        assert abs(snap.mass - 1.0) <= MASS_TOLERANCE


def fitted_decay(gamma: float):
    """(скорость, R²) линейной регрессии log χ² по t на декаде после разгона"""
    bar = grid_teacher_density(TeacherSpec.relu_default(gamma=gamma), Grid1D(n_cells=DECAY_N_CELLS))
    mu0 = DensityField.uniform(bar.grid)
    sol = solve(mu0, bar, PdeConfig(t_end=DECAY_TIMES[-1], snapshot_times=DECAY_TIMES))
    assert all(abs(s.mass - 1.0) <= MASS_TOLERANCE for s in sol.snapshots)

    times = np.array(sol.times)
    chi2 = np.array([chi2_on_grid(bar, s) for s in sol.snapshots])
    start = int(np.searchsorted(times, BURN_IN_TIME))
    window = [start]
    for i in range(start + 1, len(times)):
        if chi2[i] < 1e-12:
            break
        window.append(i)
        if chi2[i] <= 0.1 * chi2[start]:
            break
    assert len(window) >= 5, gamma
    fit = linregress(times[window], np.log(chi2[window]))
    return -fit.slope, fit.rvalue ** 2


@requires_acceptance
def test_linear_decay_and_rate_ordering():
    """log χ² линейно по t; скорость падает с ростом γ"""
    rates = {}
    for gamma in (10.0, 100.0, 1000.0):
        rate, r_squared = fitted_decay(gamma)
        rates[gamma] = rate
        if gamma == 100.0:
            assert r_squared >= MIN_R_SQUARED
        assert rate > 0.0
    assert rates[10.0] > rates[100.0] > rates[1000.0]


@requires_acceptance
@pytest.mark.asyncio
async def test_particles_approach_pde_with_width(tmp_path):
    """Среднее по времени MMD до PDE убывает по M"""
    exp = acceptance_experiment(tmp_path, lambdas=[1e-3], regularizers=['f_b'], with_pde=True)
    means = await sweep_means(exp)
    averaged = [np.nanmean(log.series('mmd_pde')) for _, log in means]
    assert [point.width for point, _ in means] == [32, 128, 256]
    assert strictly_decreasing(averaged)


@requires_acceptance
@pytest.mark.asyncio
async def test_unbiased_regularizer_recovers_teacher(tmp_path):
    exp = acceptance_experiment(tmp_path, lambdas=[1e-3], regularizers=['f_u'], with_pde=False)
    means = await sweep_means(exp)
    finals = []
    for _, log in means:
        mmd = log.series('mmd_teacher')
        assert mmd[-1] < mmd[0]
        finals.append(mmd[-1])
    assert strictly_decreasing(finals)


@requires_acceptance
@pytest.mark.asyncio
async def test_bias_vanishes_with_lambda(tmp_path):
    exp = acceptance_experiment(
        tmp_path, 'lambda-sweep', widths=[256], lambdas=[1e-1, 1e-2, 1e-3],
        regularizers=['f_b'], with_pde=False,
    )
    means = await sweep_means(exp)
    assert [point.lam for point, _ in means] == [1e-1, 1e-2, 1e-3]
    assert strictly_decreasing([log.series('mmd_teacher')[-1] for _, log in means])


def ensemble_path(algorithm: Algorithm, stepsize: float, data, model, initial: ParticleEnsemble):
    """Снимки ансамбля каждые τ·snapshot_every до t = HORIZON"""
    scale = round(TAU / stepsize)
    cfg = TrainConfig(
        width=initial.width,
        iters=int(round(HORIZON / stepsize)),
        stepsize=stepsize,
        lam=1e-1,
        regularizer=Regularizer.parse('f_b'),
        eval_every=64 * scale,
        snapshot_every=64 * scale,
        algorithm=algorithm,
    )
    states = []

    def sink(state: ParticleEnsemble) -> str:
        states.append(state)
        return ''

    run(cfg, model, data, initial=initial, snapshot_sink=sink)
    return states


def averaged_gap(stepsize: float, data, model, initial) -> float:
    varpro = ensemble_path(Algorithm.VARPRO, stepsize, data, model, initial)
    joint = ensemble_path(Algorithm.TWO_TIMESCALE, stepsize, data, model, initial)
    assert len(varpro) == len(joint)
    return float(np.mean([
        mmd_energy(WeightedAtoms.from_ensemble(a), WeightedAtoms.from_ensemble(b))
        for a, b in zip(varpro, joint)
    ]))


@requires_acceptance
def test_two_timescale_tracks_varpro(tmp_path):
    """η = λM: расхождение с VarPro сходится по τ и мало относительно MMD до учителя"""
    exp = acceptance_experiment(tmp_path, 'two-timescale-compare')
    spec = exp.teacher_spec(exp.gammas[0])
    teacher, data = harness.sample_run_teacher(exp, spec, 0)
    model = exp.feature_model()
    initial = init_uniform(128, model.domain, make_rng(exp.base_seed, 0, 0, Stream.INIT))

    coarse = averaged_gap(TAU, data, model, initial)
    fine = averaged_gap(TAU / 4.0, data, model, initial)
    assert coarse <= TWO_TIMESCALE_RATIO * fine

    initial_mmd = mmd_energy(WeightedAtoms.from_ensemble(initial), harness.teacher_measure(spec, teacher))
    assert coarse < initial_mmd


@requires_acceptance
def test_feature_mmd_identity_on_random_instances():
    rng = np.random.default_rng(5)
    model = FeatureModel.relu_sphere()
    circle = Domain.circle()
    for _ in range(N_MMD_INSTANCES):
        data = gaussian_dataset(rng, int(rng.integers(10, 200)))
        atoms = []
        for k in rng.integers(1, 20, size=2):
            weights = rng.uniform(0.1, 1.0, size=k)
            atoms.append(WeightedAtoms.uniform(
                rng.uniform(0.0, circle.period, size=(k, 1)), circle, weights=weights / weights.sum(),
            ))
        operator = mmd_feature(atoms[0], atoms[1], model, data) ** 2
        double = mmd_feature_double_sum(atoms[0], atoms[1], model, data) ** 2
        assert abs(operator - double) <= 1e-10 * max(1.0, abs(double))


@requires_acceptance
@pytest.mark.asyncio
async def test_torus_laplace_smoke(tmp_path):
    """Тор с признаками Лапласа: риск падает, f_u приближает учителя с ростом M"""
    exp = acceptance_experiment(tmp_path, 'torus-rbf', regularizers=['f_u'], widths=[32, 128])
    means = await sweep_means(exp)
    for _, log in means:
        risk = log.series('reduced_risk')
        assert risk[-1] < risk[0]
    assert strictly_decreasing([log.series('mmd_teacher')[-1] for _, log in means])
