import asyncio

import numpy as np
import pytest


@pytest.fixture(scope="session")
def event_loop():
    """Создаем один event loop для всей сессии тестов"""
    loop = asyncio.get_event_loop_policy().new_event_loop()
    yield loop
    loop.close()


@pytest.fixture
def rng():
    """Детерминированный генератор для отдельного теста"""
    return np.random.default_rng(12345)


@pytest.fixture
def output_dir(tmp_path):
    """Каталог артефактов внутри tmp_path"""
    path = tmp_path / "artifacts"
    path.mkdir()
    return path
