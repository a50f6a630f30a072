import asyncio
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

from actors.messages import ActorMessage, MESSAGE_TYPES
from config.logging import get_logger
from config.settings import (
    ACTOR_MESSAGE_QUEUE_SIZE,
    ACTOR_MESSAGE_TIMEOUT,
    ACTOR_SHUTDOWN_TIMEOUT,
)


class BaseActor(ABC):
    """
    Актор развертки: собственный ограниченный почтовый ящик и цикл,
    разбирающий его по одному письму.

    Подклассы реализуют initialize/shutdown/handle_message. Исключение
    обработчика считается в _failed_count и не останавливает цикл,
    SHUTDOWN завершает цикл, не доходя до обработчика.
    """

    def __init__(self, actor_id: str, name: str):
        self.actor_id = actor_id
        self.name = name
        self.logger = get_logger(f"actor.{name}.{actor_id}")
        self.is_running = False
        self._message_queue: asyncio.Queue = asyncio.Queue(maxsize=ACTOR_MESSAGE_QUEUE_SIZE)
        self._task: Optional[asyncio.Task] = None
        self._actor_system = None
        self._processed_count = 0
        self._failed_count = 0

    @abstractmethod
    async def initialize(self) -> None:
        ...

    @abstractmethod
    async def shutdown(self) -> None:
        ...

    @abstractmethod
    async def handle_message(self, message: ActorMessage) -> Optional[ActorMessage]:
        ...

    async def send_message(self, message: ActorMessage) -> None:
        """Без ожидания места: QueueFull уходит отправителю"""
        try:
            self._message_queue.put_nowait(message)
        except asyncio.QueueFull:
            self.logger.error(f"Mailbox full, rejecting {message.message_type} {message.message_id}")
            raise

    async def reply(self, request: ActorMessage, message_type: str,
                    payload: Dict[str, Any]) -> bool:
        """Ответ по адресу reply_to запроса; False, если адреса нет"""
        system = self.get_actor_system()
        if system is None or not request.reply_to:
            self.logger.warning(f"Reply {message_type} to {request.message_id} has no address")
            return False
        await system.send_message(request.reply_to, ActorMessage.create(
            sender_id=self.actor_id,
            message_type=message_type,
            payload=payload,
        ))
        return True

    async def start(self) -> None:
        if self.is_running:
            self.logger.warning(f"Actor {self.actor_id} already running")
            return
        self.is_running = True
        await self.initialize()
        self._task = asyncio.create_task(self._message_loop(), name=f"actor-{self.actor_id}")
        self.logger.info(f"Actor {self.actor_id} started")

    async def stop(self) -> None:
        if not self.is_running:
            self.logger.warning(f"Actor {self.actor_id} not running")
            return
        self.is_running = False

        # Ящик может быть полон: тогда цикл выйдет по таймауту ожидания
        try:
            self._message_queue.put_nowait(ActorMessage.create(
                sender_id="system", message_type=MESSAGE_TYPES['SHUTDOWN']
            ))
        except asyncio.QueueFull:
            pass

        if self._task is not None:
            try:
                await asyncio.wait_for(self._task, timeout=ACTOR_SHUTDOWN_TIMEOUT)
            except asyncio.TimeoutError:
                self.logger.error(f"Actor {self.actor_id} loop did not finish, cancelling")
                self._task.cancel()

        await self.shutdown()
        self.logger.info(
            f"Actor {self.actor_id} stopped: {self._processed_count} handled, "
            f"{self._failed_count} failed"
        )

    async def _next_message(self) -> Optional[ActorMessage]:
        try:
            return await asyncio.wait_for(self._message_queue.get(), timeout=ACTOR_MESSAGE_TIMEOUT)
        except asyncio.TimeoutError:
            return None

    async def _message_loop(self) -> None:
        while self.is_running:
            message = await self._next_message()
            if message is None:
                continue
            if message.message_type == MESSAGE_TYPES['SHUTDOWN']:
                break
            await self._dispatch(message)

    async def _dispatch(self, message: ActorMessage) -> None:
        self.logger.debug(f"Handling {message.message_type} from {message.sender_id}")
        try:
            await self.handle_message(message)
        except Exception as error:
            self._failed_count += 1
            await self.handle_error(error, message)
        else:
            self._processed_count += 1

    async def handle_error(self, error: Exception, message: ActorMessage) -> None:
        self.logger.error(f"Handler failed on {message.message_type}: {error}", exc_info=True)

    def set_actor_system(self, actor_system) -> None:
        self._actor_system = actor_system

    def get_actor_system(self):
        return self._actor_system
