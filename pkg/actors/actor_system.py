import asyncio
from collections import deque
from typing import Any, Deque, Dict, List, Optional

from actors.base_actor import BaseActor
from actors.events.base_event import BaseEvent
from actors.events.event_store import EventStore
from actors.messages import ActorMessage
from config.logging import get_logger
from config.settings import (
    ACTOR_MESSAGE_MAX_RETRIES,
    ACTOR_MESSAGE_RETRY_DELAY,
    ACTOR_MESSAGE_RETRY_ENABLED,
    ACTOR_MESSAGE_RETRY_MAX_DELAY,
    ACTOR_SHUTDOWN_TIMEOUT,
    ACTOR_SYSTEM_NAME,
    DLQ_MAX_SIZE,
)
from utils.monitoring import measure_latency


class ActorSystem:
    """
    Реестр акторов развертки и доставка сообщений между ними.

    Почтовый ящик воркера ограничен: при переполнении отправка
    повторяется с удвоением задержки, после исчерпания попыток письмо
    уходит в Dead Letter Queue и в поток dlq_<actor_id> Event Store,
    а вызывающий получает QueueFull.
    """

    def __init__(self, name: str = ACTOR_SYSTEM_NAME):
        self.name = name
        self.logger = get_logger(f"actor_system.{name}")
        self.is_running = False
        self._actors: Dict[str, BaseActor] = {}
        self._event_store: Optional[EventStore] = None
        self._dead_letters: Deque[Dict[str, Any]] = deque(maxlen=DLQ_MAX_SIZE)
        self._dead_letter_total = 0
        self._dlq_versions: Dict[str, int] = {}
        self._pending_writes: List[asyncio.Task] = []

    @measure_latency
    async def register_actor(self, actor: BaseActor) -> None:
        """Зарегистрировать актор; в работающей системе он сразу стартует"""
        if actor.actor_id in self._actors:
            raise ValueError(f"Actor {actor.actor_id} already registered")
        self._actors[actor.actor_id] = actor
        actor.set_actor_system(self)
        self.logger.info(f"Registered actor {actor.actor_id}")
        if self.is_running:
            await actor.start()

    @property
    def actor_ids(self) -> List[str]:
        return list(self._actors)

    @measure_latency
    async def send_message(self, actor_id: str, message: ActorMessage) -> None:
        actor = self._actors.get(actor_id)
        if actor is None:
            raise ValueError(f"Actor {actor_id} not found")

        attempts = ACTOR_MESSAGE_MAX_RETRIES if ACTOR_MESSAGE_RETRY_ENABLED else 0
        delay = ACTOR_MESSAGE_RETRY_DELAY
        for attempt in range(attempts + 1):
            try:
                await actor.send_message(message)
                return
            except asyncio.QueueFull:
                if attempt == attempts:
                    self.logger.error(
                        f"Failed to deliver {message.message_type} to {actor_id} "
                        f"after {attempts} retries"
                    )
                    self._dead_letter(actor_id, message, 'queue full')
                    raise
                self.logger.warning(
                    f"Mailbox of {actor_id} full, retry {attempt + 1}/{attempts} in {delay:.1f}s"
                )
                await asyncio.sleep(delay)
                delay = min(delay * 2, ACTOR_MESSAGE_RETRY_MAX_DELAY)

    def _dead_letter(self, actor_id: str, message: ActorMessage, error: str) -> None:
        self._dead_letters.append({'actor_id': actor_id, 'message': message, 'error': error})
        self._dead_letter_total += 1
        self.logger.error(f"Message {message.message_id} for {actor_id} moved to DLQ: {error}")
        if self._event_store is None:
            return

        version = self._dlq_versions.get(actor_id, 0)
        self._dlq_versions[actor_id] = version + 1
        event = BaseEvent.create(
            stream_id=f"dlq_{actor_id}",
            event_type="DeadLetterQueuedEvent",
            version=version,
            data={
                'actor_id': actor_id,
                'message_id': message.message_id,
                'message_type': message.message_type,
                'error': error,
            },
            correlation_id=message.message_id,
        )
        self._pending_writes = [t for t in self._pending_writes if not t.done()]
        self._pending_writes.append(asyncio.create_task(self._event_store.append_event(event)))

    def get_dlq_metrics(self) -> Dict[str, int]:
        return {
            'current_size': len(self._dead_letters),
            'total_messages': self._dead_letter_total,
            'max_size': DLQ_MAX_SIZE,
        }

    async def start(self) -> None:
        if self.is_running:
            self.logger.warning("Actor system already running")
            return
        self.is_running = True
        for actor in self._actors.values():
            await actor.start()
        self.logger.info(f"Actor system started with {len(self._actors)} actors")

    async def stop(self, timeout: float = ACTOR_SHUTDOWN_TIMEOUT) -> None:
        """Остановить акторы; записи DLQ в Event Store дожидаются всегда"""
        if self._pending_writes:
            await asyncio.gather(*self._pending_writes, return_exceptions=True)
            self._pending_writes = []

        if not self.is_running:
            self.logger.warning("Actor system not running")
            return
        self.is_running = False

        running = [actor for actor in self._actors.values() if actor.is_running]
        try:
            await asyncio.wait_for(
                asyncio.gather(*(actor.stop() for actor in running), return_exceptions=True),
                timeout=timeout
            )
        except asyncio.TimeoutError:
            self.logger.error("Timeout stopping actors, forcing shutdown")
        self.logger.info("Actor system stopped")

    def set_event_store(self, event_store: EventStore) -> None:
        self._event_store = event_store

    def get_event_store(self) -> Optional[EventStore]:
        return self._event_store
