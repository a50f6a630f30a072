import asyncio
from typing import Dict, List, Optional

from actors.events.base_event import BaseEvent
from config.logging import get_logger
from utils.monitoring import measure_latency


class EventStoreConcurrencyError(Exception):
    """Версия события не совпала с длиной потока"""
    def __init__(self, stream_id: str, expected_version: int, actual_version: int):
        self.stream_id = stream_id
        self.expected_version = expected_version
        self.actual_version = actual_version
        super().__init__(
            f"Version conflict for stream {stream_id}: "
            f"expected {expected_version}, got {actual_version}"
        )


class EventStore:
    """
    Журнал жизненного цикла запусков в памяти процесса.

    Один поток на запуск (run_<point_id>_<run>) и по одному потоку
    недоставленных сообщений на актор (dlq_<actor_id>). Версия события
    обязана равняться длине потока: повторная запись того же шага
    отклоняется. Живет ровно одну развертку, манифест читает его в конце.
    """

    def __init__(self):
        self.logger = get_logger("event_store")
        self._streams: Dict[str, List[BaseEvent]] = {}
        self._locks: Dict[str, asyncio.Lock] = {}
        self._total_appends = 0
        self._version_conflicts = 0

    @measure_latency
    async def append_event(self, event: BaseEvent) -> None:
        lock = self._locks.setdefault(event.stream_id, asyncio.Lock())
        async with lock:
            stream = self._streams.setdefault(event.stream_id, [])
            if event.version != len(stream):
                self._version_conflicts += 1
                raise EventStoreConcurrencyError(event.stream_id, event.version, len(stream))
            stream.append(event)
            self._total_appends += 1

        self.logger.debug(
            f"Event {event.event_type} appended to stream {event.stream_id} "
            f"at version {event.version}"
        )

    async def get_stream(self, stream_id: str) -> List[BaseEvent]:
        """Копия потока; пустой список для неизвестного"""
        return list(self._streams.get(stream_id, []))

    async def get_last_event(self, stream_id: str) -> Optional[BaseEvent]:
        stream = self._streams.get(stream_id)
        return stream[-1] if stream else None

    def get_metrics(self) -> Dict[str, int]:
        return {
            'total_events': self._total_appends,
            'total_streams': sum(1 for stream in self._streams.values() if stream),
            'version_conflicts': self._version_conflicts,
        }
