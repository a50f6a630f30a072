"""
События жизненного цикла запусков
"""
from typing import Any, Dict, List, Optional

from actors.events.base_event import BaseEvent


def run_stream_id(point_id: str, run: int) -> str:
    return f"run_{point_id}_{run:02d}"


class RunStartedEvent(BaseEvent):
    """Воркер начал запуск"""

    @classmethod
    def create(cls,
               point_id: str,
               run: int,
               worker_id: str,
               seeds: Dict[str, List[int]],
               correlation_id: Optional[str] = None) -> 'RunStartedEvent':
        return cls(
            stream_id=run_stream_id(point_id, run),
            event_type="RunStartedEvent",
            data={
                "point_id": point_id,
                "run": run,
                "worker_id": worker_id,
                "seeds": seeds,
            },
            correlation_id=correlation_id
        )


class RunCompletedEvent(BaseEvent):
    """Запуск завершен, артефакты записаны"""

    @classmethod
    def create(cls,
               point_id: str,
               run: int,
               trajectory_path: str,
               wall_time: float,
               final_values: Dict[str, Any],
               correlation_id: Optional[str] = None) -> 'RunCompletedEvent':
        """
        Args:
            point_id: Идентификатор точки параметров
            run: Номер запуска
            trajectory_path: Путь к CSV траектории
            wall_time: Время выполнения в секундах
            final_values: Метрики последней записанной итерации
            correlation_id: ID сообщения RUN_REQUEST
        """
        return cls(
            stream_id=run_stream_id(point_id, run),
            event_type="RunCompletedEvent",
            data={
                "point_id": point_id,
                "run": run,
                "trajectory_path": trajectory_path,
                "wall_time": round(wall_time, 3),
                "final_values": final_values,
            },
            correlation_id=correlation_id
        )


class RunFailedEvent(BaseEvent):
    """Запуск упал; развертка продолжается"""

    @classmethod
    def create(cls,
               point_id: str,
               run: int,
               error_type: str,
               error: str,
               wall_time: float,
               correlation_id: Optional[str] = None) -> 'RunFailedEvent':
        return cls(
            stream_id=run_stream_id(point_id, run),
            event_type="RunFailedEvent",
            data={
                "point_id": point_id,
                "run": run,
                "error_type": error_type,
                "error": error[:500],
                "wall_time": round(wall_time, 3),
            },
            correlation_id=correlation_id
        )
