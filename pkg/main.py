"""
Точка входа: эксперименты VarPro и эталон сверхбыстрой диффузии.

    python main.py sweep --preset width-sweep --mini
    python main.py train --widths 128 --lambdas 1e-3 --iters 512
    python main.py solve-pde --gammas 100 --regularizers f_b --t-end 2
    python main.py compare artifacts/<point>/run_00 artifacts/pde/<key>
    python main.py sample-teacher --gammas 10,100
"""
import argparse
import asyncio
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Добавляем корневую директорию в Python path
sys.path.insert(0, str(Path(__file__).parent))

# ВАЖНО: настраиваем логирование ДО всех импортов
from config.logging import get_logger, setup_logging
setup_logging()

from pydantic import ValidationError  # noqa: E402

from config.experiment_config import ExperimentConfig, Preset  # noqa: E402
from config.settings import RUN_WORKER_COUNT  # noqa: E402
from models.geometry import DistanceKind  # noqa: E402
from services import harness  # noqa: E402
from utils.errors import VarProError  # noqa: E402

logger = get_logger("main")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_INVALID = 2

# Флаги, повторяющие поля ExperimentConfig: (флаг, тип, подсказка)
CONFIG_FLAGS = [
    ('--feature', str, "relu_sphere or laplace_torus"),
    ('--n-samples', int, "training points N"),
    ('--teacher-width', int, "teacher atoms M̄"),
    ('--gammas', str, "comma-separated gamma values; 'inf' for the atomic teacher"),
    ('--widths', str, "comma-separated student widths M"),
    ('--lambdas', str, "comma-separated lambda values"),
    ('--regularizers', str, "comma-separated: quad, f_b, f_u, power_r:<r>"),
    ('--algorithms', str, "comma-separated: varpro, two_timescale, plain_gd"),
    ('--stepsizes', str, "comma-separated stepsizes tau"),
    ('--iters', int, "iterations for the first stepsize"),
    ('--eval-every', int, "log every k iterations"),
    ('--snapshot-every', int, "particle snapshot every k iterations (0 = off)"),
    ('--eta', float, "outer learning-rate ratio (default lambda*M)"),
    ('--distance', str, "chordal or quotient"),
    ('--pde-n-cells', int, "PDE grid cells (power of two)"),
    ('--pde-method', str, "BDF, Radau or LSODA"),
    ('--n-runs', int, "independent runs per point"),
    ('--output-dir', str, "artifact root"),
    ('--base-seed', int, "base seed of all substreams"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--preset', choices=[p.value for p in Preset], default=None)
    parser.add_argument('--mini', action='store_true', help="desk-scale variant of the preset")
    parser.add_argument('--config', default=None, help="KEY=VALUE config file")
    for flag, kind, text in CONFIG_FLAGS:
        parser.add_argument(flag, type=kind, default=None, help=text)
    parser.add_argument('--with-pde', action='store_true', default=None,
                        help="solve the PDE reference and log mmd_pde")
    parser.add_argument('--no-clip', action='store_false', dest='clip', default=None,
                        help="disable the step clipping safeguard")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='varpro',
        description="VarPro mean-field training and weighted ultra-fast diffusion experiments",
    )
    sub = parser.add_subparsers(dest='command', required=True)

    train = sub.add_parser('train', help="train every parameter point for one run")
    _add_config_flags(train)
    train.add_argument('--run', type=int, default=0)

    sweep = sub.add_parser('sweep', help="points x runs through the worker pool")
    _add_config_flags(sweep)
    sweep.add_argument('--workers', type=int, default=RUN_WORKER_COUNT)

    pde = sub.add_parser('solve-pde', help="solve the ultra-fast diffusion reference")
    _add_config_flags(pde)
    pde.add_argument('--t-end', type=float, required=True)
    pde.add_argument('--n-snapshots', type=int, default=33)
    pde.add_argument('--initial', choices=['uniform', 'teacher'], default='uniform')
    pde.add_argument('--exponent', type=float, default=None, help="override r")
    pde.add_argument('--coefficient', type=float, default=None, help="override C")

    teacher = sub.add_parser('sample-teacher', help="write teacher atoms and dataset")
    _add_config_flags(teacher)
    teacher.add_argument('--run', type=int, default=0)
    teacher.add_argument('--no-dataset', action='store_true')

    compare = sub.add_parser('compare', help="time-aligned metric between two snapshot series")
    compare.add_argument('dir_a')
    compare.add_argument('dir_b')
    compare.add_argument('--metric', choices=list(harness.COMPARE_METRICS), default='mmd')
    compare.add_argument('--distance', choices=[d.value for d in DistanceKind],
                         default=DistanceKind.CHORDAL.value)
    compare.add_argument('--output', default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides: Dict[str, Any] = {}
    for flag, _, _ in CONFIG_FLAGS:
        name = flag[2:].replace('-', '_')
        overrides[name] = getattr(args, name)
    overrides['with_pde'] = args.with_pde
    overrides['clip'] = args.clip
    return ExperimentConfig.from_sources(
        preset=args.preset,
        mini=args.mini,
        config_file=args.config,
        overrides=overrides,
    )


async def run_command(args: argparse.Namespace) -> int:
    if args.command == 'compare':
        path = harness.compare_cmd(
            args.dir_a, args.dir_b, args.metric, DistanceKind(args.distance), args.output
        )
        print(path)
        return EXIT_OK

    exp = config_from_args(args)
    if args.command == 'train':
        print(harness.train_cmd(exp, run=args.run))
    elif args.command == 'solve-pde':
        print(harness.solve_pde_cmd(
            exp, args.t_end, args.n_snapshots, args.initial, args.exponent, args.coefficient
        ))
    elif args.command == 'sample-teacher':
        print(harness.sample_teacher_cmd(exp, run=args.run, with_dataset=not args.no_dataset))
    elif args.command == 'sweep':
        result = await harness.run_experiment(exp, n_workers=args.workers)
        print(result.root)
        if result.failed:
            logger.error(f"{result.failed} of {result.completed + result.failed} runs failed")
            return EXIT_RUN_FAILED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return asyncio.run(run_command(args))
    except (ValidationError, VarProError, ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_INVALID
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
