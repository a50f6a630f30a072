# pytest tests/test_main.py -v

import pytest

import main
from actors import run_worker_actor
from services import harness
from utils.errors import SolverError

# Тестовые константы
SMALL_FLAGS = [
    '--mini',
    '--n-samples', '32',
    '--teacher-width', '32',
    '--widths', '4',
    '--lambdas', '0.1',
    '--gammas', '100',
    '--regularizers', 'f_b',
    '--iters', '4',
    '--eval-every', '2',
    '--stepsizes', '0.015625',
    '--pde-n-cells', '64',
    '--n-runs', '2',
]


def test_invalid_config_exits_with_2(tmp_path):
    """Ошибка конфигурации дает код 2"""
    code = main.main(['train', *SMALL_FLAGS, '--lambdas', '0', '--output-dir', str(tmp_path)])
    assert code == main.EXIT_INVALID


def test_unknown_config_file_exits_with_2(tmp_path):
    code = main.main(['train', '--config', str(tmp_path / 'missing.env')])
    assert code == main.EXIT_INVALID


def test_solve_pde_rejects_atomic_teacher(tmp_path):
    code = main.main(['solve-pde', *SMALL_FLAGS, '--gammas', 'inf', '--t-end', '1',
                      '--output-dir', str(tmp_path)])
    assert code == main.EXIT_INVALID


def test_solve_pde_requires_end_time():
    with pytest.raises(SystemExit):
        main.main(['solve-pde', '--mini'])


def test_compare_missing_directories(tmp_path):
    code = main.main(['compare', str(tmp_path / 'a'), str(tmp_path / 'b')])
    assert code == main.EXIT_INVALID


def test_sample_teacher_command(tmp_path):
    code = main.main(['sample-teacher', *SMALL_FLAGS, '--gammas', '10,100', '--no-dataset',
                      '--output-dir', str(tmp_path)])
    assert code == main.EXIT_OK
    assert (tmp_path / 'teachers' / 'gamma10_run00' / 'teacher.csv').exists()
    assert not (tmp_path / 'teachers' / 'gamma100_run00' / 'dataset.csv').exists()


def test_solve_pde_command(tmp_path):
    code = main.main(['solve-pde', *SMALL_FLAGS, '--t-end', '0.25', '--n-snapshots', '2',
                      '--output-dir', str(tmp_path)])
    assert code == main.EXIT_OK
    assert (tmp_path / 'pde' / 'gamma100_r2_uniform' / 'pde_summary.csv').exists()


def test_config_flags_override_preset(tmp_path):
    args = main.build_parser().parse_args(
        ['train', *SMALL_FLAGS, '--eta', '0.5', '--no-clip', '--output-dir', str(tmp_path)]
    )
    exp = main.config_from_args(args)
    assert exp.widths == [4]
    assert exp.eta == 0.5
    assert exp.clip is False
    assert exp.with_pde is True  # из пресета
    assert exp.output_dir == str(tmp_path)


def test_sweep_with_failed_run_exits_with_1(tmp_path, monkeypatch):
    """Упавший запуск не прерывает развертку, но код выхода 1"""
    def flaky(exp, point, run, store, pde=None):
        if run == 0:
            raise SolverError("line search stalled")
        return harness.execute_run(exp, point, run, store, pde)

    monkeypatch.setattr(run_worker_actor, 'execute_run', flaky)
    code = main.main(['sweep', *SMALL_FLAGS, '--workers', '2', '--output-dir', str(tmp_path)])
    assert code == main.EXIT_RUN_FAILED
    assert (tmp_path / 'manifest.json').exists()
    assert list(tmp_path.glob('p*/run_01/trajectory.csv'))
