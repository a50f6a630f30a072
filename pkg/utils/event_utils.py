"""
Утилиты для работы с Event Store
"""
from typing import Dict, Optional

from actors.events import BaseEvent, EventStore


class EventVersionManager:
    """Выдает событиям следующую версию их потока"""

    def __init__(self):
        self._stream_versions: Dict[str, int] = {}

    async def append_event(self, event: BaseEvent, actor_system) -> Optional[BaseEvent]:
        """
        Добавить событие с правильной версией.

        Args:
            event: Событие (версия игнорируется)
            actor_system: ActorSystem с подключенным Event Store

        Returns:
            Записанное событие или None, если Event Store не подключен
        """
        store: Optional[EventStore] = actor_system.get_event_store() if actor_system else None
        if store is None:
            return None

        stream_id = event.stream_id
        if stream_id not in self._stream_versions:
            last_event = await store.get_last_event(stream_id)
            self._stream_versions[stream_id] = last_event.version + 1 if last_event else 0

        versioned = event.with_version(self._stream_versions[stream_id])
        await store.append_event(versioned)
        self._stream_versions[stream_id] += 1
        return versioned
