"""
RunWorkerActor - актор, выполняющий отдельные запуски обучения.
Счет идет в пуле потоков, цикл сообщений остается свободным.
"""
from typing import Optional
import asyncio
import time
from concurrent.futures import ThreadPoolExecutor

from actors.base_actor import BaseActor
from actors.events import RunCompletedEvent, RunFailedEvent, RunStartedEvent
from actors.messages import ActorMessage, MESSAGE_TYPES
from config.logging import run_context
from config.settings import RUN_WORKER_THREADS
from services.harness import execute_run, run_seeds
from utils.event_utils import EventVersionManager


class RunWorkerActor(BaseActor):
    """
    Воркер пула запусков.

    Обрабатывает RUN_REQUEST с payload {exp, point, run, store, pde} и
    отвечает RUN_COMPLETED или RUN_FAILED по адресу reply_to.
    """

    def __init__(self, actor_id: str):
        """
        Args:
            actor_id: Уникальный идентификатор актора
        """
        super().__init__(actor_id, "RunWorker")
        self._thread_pool: Optional[ThreadPoolExecutor] = None
        self._event_version_manager = EventVersionManager()
        self._run_count = 0
        self._error_count = 0

    async def initialize(self) -> None:
        self._thread_pool = ThreadPoolExecutor(
            max_workers=RUN_WORKER_THREADS,
            thread_name_prefix=f"run-{self.actor_id}"
        )
        self.logger.info(f"RunWorkerActor initialized with {RUN_WORKER_THREADS} thread(s)")

    async def shutdown(self) -> None:
        if self._thread_pool:
            self._thread_pool.shutdown(wait=True)
        self.logger.info(
            f"RunWorkerActor shutdown. Runs: {self._run_count}, Errors: {self._error_count}"
        )

    async def handle_message(self, message: ActorMessage) -> Optional[ActorMessage]:
        if message.message_type != MESSAGE_TYPES['RUN_REQUEST']:
            self.logger.warning(f"Unknown message type: {message.message_type}")
            return None

        exp = message.payload['exp']
        point = message.payload['point']
        run = message.payload['run']
        store = message.payload['store']
        pde = message.payload.get('pde')

        await self._append_event(RunStartedEvent.create(
            point_id=point.point_id,
            run=run,
            worker_id=self.actor_id,
            seeds=run_seeds(exp, point, run),
            correlation_id=message.message_id,
        ))

        context = run_context(point.point_id, run)
        self.logger.info("Run started", extra=context)
        started = time.perf_counter()
        loop = asyncio.get_running_loop()
        try:
            outcome = await loop.run_in_executor(
                self._thread_pool, execute_run, exp, point, run, store, pde
            )
        except Exception as e:
            self._error_count += 1
            wall_time = time.perf_counter() - started
            self.logger.error(
                f"Run failed: {type(e).__name__}: {e}", exc_info=True, extra=context
            )
            await self._append_event(RunFailedEvent.create(
                point_id=point.point_id,
                run=run,
                error_type=type(e).__name__,
                error=str(e),
                wall_time=wall_time,
                correlation_id=message.message_id,
            ))
            await self.reply(message, MESSAGE_TYPES['RUN_FAILED'], {
                'point_id': point.point_id,
                'run': run,
                'error_type': type(e).__name__,
                'error': str(e),
            })
            return None

        self._run_count += 1
        self.logger.info(f"Run completed in {outcome.wall_time:.2f}s", extra=context)
        await self._append_event(RunCompletedEvent.create(
            point_id=outcome.point_id,
            run=run,
            trajectory_path=outcome.trajectory_path,
            wall_time=outcome.wall_time,
            final_values=outcome.final_values,
            correlation_id=message.message_id,
        ))
        await self.reply(message, MESSAGE_TYPES['RUN_COMPLETED'], {
            'point_id': outcome.point_id,
            'run': run,
            'outcome': outcome,
        })
        return None

    async def _append_event(self, event) -> None:
        try:
            await self._event_version_manager.append_event(event, self.get_actor_system())
        except Exception as e:
            self.logger.error(f"Failed to append {event.event_type}: {e}")
