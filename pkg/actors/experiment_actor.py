"""
ExperimentActor - оркестратор развертки.

Готовит эталоны PDE, раздает RUN_REQUEST воркерам по кругу, собирает
ответы и после последнего пишет средние по запускам и манифест.
"""
from collections import deque
from datetime import datetime, timezone
from typing import Any, Deque, Dict, List, Optional, Tuple
import asyncio
import time

from actors.base_actor import BaseActor
from actors.events import run_stream_id
from actors.messages import ActorMessage, MESSAGE_TYPES
from config.experiment_config import ExperimentConfig, ParameterPoint
from services.artifact_store import ArtifactStore
from services.harness import (
    PdeReference,
    RunOutcome,
    SweepResult,
    pde_key,
    prepare_pde_references,
    run_seeds,
)
from utils.digest import config_digest, file_digest

# Запросов в очереди одного воркера одновременно
WORKER_PREFETCH = 2


class ExperimentActor(BaseActor):
    """Оркестратор: один на развертку"""

    def __init__(self, actor_id: str, exp: ExperimentConfig, store: ArtifactStore,
                 worker_ids: List[str], done: asyncio.Future):
        super().__init__(actor_id, "Experiment")
        if not worker_ids:
            raise ValueError("ExperimentActor needs at least one worker")
        self.exp = exp
        self.store = store
        self.worker_ids = list(worker_ids)
        self._done = done
        self._points: Dict[str, ParameterPoint] = {}
        self._pending: Deque[Tuple[ParameterPoint, int]] = deque()
        self._pde: Dict[str, PdeReference] = {}
        self._in_flight = 0
        self._outcomes: Dict[Tuple[str, int], RunOutcome] = {}
        self._failures: Dict[Tuple[str, int], Dict[str, Any]] = {}
        self._started_at: Optional[datetime] = None
        self._started = 0.0

    async def initialize(self) -> None:
        self.logger.info(
            f"ExperimentActor ready: preset {self.exp.preset.value}, "
            f"{len(self.worker_ids)} workers"
        )

    async def shutdown(self) -> None:
        if not self._done.done():
            self._done.cancel()

    async def handle_message(self, message: ActorMessage) -> Optional[ActorMessage]:
        try:
            if message.message_type == MESSAGE_TYPES['START_SWEEP']:
                await self._start_sweep()
            elif message.message_type == MESSAGE_TYPES['RUN_COMPLETED']:
                outcome: RunOutcome = message.payload['outcome']
                self._outcomes[(outcome.point_id, outcome.run)] = outcome
                await self._on_reply(message.sender_id)
            elif message.message_type == MESSAGE_TYPES['RUN_FAILED']:
                key = (message.payload['point_id'], message.payload['run'])
                self._failures[key] = {
                    'error_type': message.payload.get('error_type'),
                    'error': message.payload.get('error'),
                }
                await self._on_reply(message.sender_id)
            else:
                self.logger.warning(f"Unknown message type: {message.message_type}")
        except Exception as e:
            self.logger.error(f"Sweep aborted: {e}", exc_info=True)
            if not self._done.done():
                self._done.set_exception(e)
        return None

    async def _start_sweep(self) -> None:
        self._started_at = datetime.now(timezone.utc)
        self._started = time.perf_counter()
        points = self.exp.parameter_points()
        self._points = {point.point_id: point for point in points}
        self._pending = deque(
            (point, run) for point in points for run in range(self.exp.n_runs)
        )
        self.logger.info(
            f"Sweep started: {len(points)} points x {self.exp.n_runs} runs "
            f"-> {self.store.root}"
        )

        loop = asyncio.get_running_loop()
        self._pde = await loop.run_in_executor(None, prepare_pde_references, self.exp, self.store)

        for _ in range(WORKER_PREFETCH):
            for worker_id in self.worker_ids:
                await self._dispatch_run(worker_id)
        if self._in_flight == 0:
            await self._finish()

    async def _dispatch_run(self, worker_id: str) -> None:
        if not self._pending:
            return
        point, run = self._pending.popleft()
        request = ActorMessage.create(
            sender_id=self.actor_id,
            message_type=MESSAGE_TYPES['RUN_REQUEST'],
            payload={
                'exp': self.exp,
                'point': point,
                'run': run,
                'store': self.store,
                'pde': self._pde.get(pde_key(point)),
            },
            reply_to=self.actor_id,
        )
        await self.get_actor_system().send_message(worker_id, request)
        self._in_flight += 1

    async def _on_reply(self, worker_id: Optional[str]) -> None:
        self._in_flight -= 1
        reported = len(self._outcomes) + len(self._failures)
        self.logger.info(
            f"Progress: {reported} runs reported, {len(self._failures)} failed, "
            f"{len(self._pending)} queued"
        )
        if worker_id in self.worker_ids:
            await self._dispatch_run(worker_id)
        if self._in_flight == 0 and not self._pending:
            await self._finish()

    async def _finish(self) -> None:
        mean_paths = self._write_means()
        manifest = await self._build_manifest(mean_paths)
        self.store.write_manifest(manifest)
        result = SweepResult(
            root=str(self.store.root),
            completed=len(self._outcomes),
            failed=len(self._failures),
        )
        self.logger.info(
            f"Sweep finished: {result.completed} completed, {result.failed} failed, "
            f"{time.perf_counter() - self._started:.1f}s"
        )
        if not self._done.done():
            self._done.set_result(result)

    def _write_means(self) -> Dict[str, str]:
        """Средние только по успешным запускам точки"""
        paths: Dict[str, str] = {}
        for point_id in self._points:
            logs = [
                self._outcomes[(point_id, run)].log
                for run in range(self.exp.n_runs)
                if (point_id, run) in self._outcomes
            ]
            if not logs:
                self.logger.warning(f"No successful runs for {point_id}, mean skipped")
                continue
            path = self.store.write_mean(self.store.point_dir(point_id) / 'mean.csv', logs)
            paths[point_id] = str(path)
        return paths

    async def _run_entry(self, point: ParameterPoint, run: int) -> Dict[str, Any]:
        entry: Dict[str, Any] = {
            'run': run,
            'status': 'missing',
            'seeds': run_seeds(self.exp, point, run),
        }
        event_store = self.get_actor_system().get_event_store()
        events = []
        if event_store is not None:
            events = await event_store.get_stream(run_stream_id(point.point_id, run))
        entry['events'] = [event.event_type for event in events]
        for event in events:
            if event.event_type == 'RunStartedEvent':
                entry['worker_id'] = event.data['worker_id']
            elif event.event_type == 'RunCompletedEvent':
                entry['status'] = 'completed'
                entry['wall_time'] = event.data['wall_time']
                entry['final_values'] = event.data['final_values']
            elif event.event_type == 'RunFailedEvent':
                entry['status'] = 'failed'
                entry['wall_time'] = event.data['wall_time']
                entry['error_type'] = event.data['error_type']
                entry['error'] = event.data['error']

        outcome = self._outcomes.get((point.point_id, run))
        if outcome is not None:
            entry['status'] = 'completed'
            entry['trajectory'] = outcome.trajectory_path
            entry['trajectory_sha256'] = file_digest(outcome.trajectory_path)
            entry['teacher_digest'] = outcome.teacher_digest
        elif (point.point_id, run) in self._failures:
            entry['status'] = 'failed'
            entry.setdefault('error_type', self._failures[(point.point_id, run)]['error_type'])
            entry.setdefault('error', self._failures[(point.point_id, run)]['error'])
        return entry

    async def _build_manifest(self, mean_paths: Dict[str, str]) -> Dict[str, Any]:
        config_payload = self.exp.manifest_payload()
        points = []
        for point_id, point in self._points.items():
            runs = [await self._run_entry(point, run) for run in range(self.exp.n_runs)]
            point_entry = point.model_dump()
            point_entry['regularizer'] = point.regularizer.label
            point_entry['point_id'] = point_id
            point_entry['pde_reference'] = pde_key(point) if pde_key(point) in self._pde else None
            point_entry['mean'] = mean_paths.get(point_id)
            point_entry['runs'] = runs
            points.append(point_entry)

        event_store = self.get_actor_system().get_event_store()
        return {
            'config': config_payload,
            'config_hash': config_digest(config_payload),
            'base_seed': self.exp.base_seed,
            'started_at': self._started_at.isoformat() if self._started_at else None,
            'finished_at': datetime.now(timezone.utc).isoformat(),
            'wall_time': round(time.perf_counter() - self._started, 3),
            'points': points,
            'pde_references': {
                key: {'directory': ref.directory, 'error': ref.error}
                for key, ref in self._pde.items()
            },
            'completed': len(self._outcomes),
            'failures': len(self._failures),
            'event_store': event_store.get_metrics() if event_store else {},
            'dead_letters': self.get_actor_system().get_dlq_metrics(),
        }
