"""
Счетчиковые генераторы случайных чисел с подпотоками на запуск.

Подпоток определяется кортежем (base_seed, point, run, stream), поэтому
результат не зависит от порядка исполнения запусков.
"""
from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Назначение подпотока"""
    TEACHER = 0
    DATA = 1
    INIT = 2


def make_rng(base_seed: int, point: int = 0, run: int = 0,
             stream: Stream = Stream.INIT) -> np.random.Generator:
    """Генератор Philox для заданного подпотока"""
    if base_seed < 0 or point < 0 or run < 0:
        raise ValueError("Seed components must be non-negative")
    seq = np.random.SeedSequence([int(base_seed), int(point), int(run), int(stream)])
    return np.random.Generator(np.random.Philox(seq))
