"""Короткие содержательные хеши для массивов, файлов и конфигов"""
import hashlib
import json
from pathlib import Path
from typing import Any, Union

import numpy as np


def array_digest(*arrays: np.ndarray) -> str:
    """sha256 по байтам массивов (с формой и типом)"""
    h = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        h.update(str(arr.shape).encode())
        h.update(str(arr.dtype).encode())
        h.update(arr.tobytes())
    return h.hexdigest()[:16]


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, 'rb') as fh:
        for chunk in iter(lambda: fh.read(65536), b''):
            h.update(chunk)
    return h.hexdigest()


def config_digest(payload: Any) -> str:
    """Хеш JSON-представления с отсортированными ключами"""
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
