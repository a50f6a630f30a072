# pytest tests/test_event_store.py -v

import asyncio

import pytest

from actors.actor_system import ActorSystem
from actors.events import (
    BaseEvent,
    EventStore,
    EventStoreConcurrencyError,
    RunCompletedEvent,
    RunFailedEvent,
    RunStartedEvent,
    run_stream_id,
)
from actors.messages import ActorMessage, MESSAGE_TYPES
from tests.fixtures import EchoActor
from utils.event_utils import EventVersionManager

TEST_PROCESSING_DELAY = 0.1
POINT_ID = "p00_M8"


def test_base_event_pydantic_validation():
    event = BaseEvent.create(stream_id="test", event_type="TestEvent", data={"key": "value"})
    assert event.stream_id == "test"
    assert event.version == 0

    # Иммутабельность
    with pytest.raises(Exception):
        event.version = 1

    with pytest.raises(ValueError) as exc_info:
        BaseEvent.create(stream_id="test", event_type="TestEvent", version=-1)
    assert "Version must be non-negative" in str(exc_info.value)


def test_run_events_share_stream():
    """События одного запуска пишутся в общий поток"""
    started = RunStartedEvent.create(POINT_ID, 1, "worker_0", {"init": [7, 0, 1, 2]})
    completed = RunCompletedEvent.create(POINT_ID, 1, "p00_M8/run_01/trajectory.csv", 1.23456, {"reduced_risk": 0.5})
    failed = RunFailedEvent.create(POINT_ID, 1, "SolverError", "x" * 1000, 0.1)
    assert started.stream_id == completed.stream_id == failed.stream_id == run_stream_id(POINT_ID, 1)
    assert started.stream_id == "run_p00_M8_01"
    assert completed.data["wall_time"] == 1.235
    assert len(failed.data["error"]) == 500
    assert isinstance(started.with_version(3), RunStartedEvent)


@pytest.mark.asyncio
async def test_run_lifecycle_stream():
    """Запуск: RunStarted, затем RunCompleted в своем потоке"""
    store = EventStore()
    await store.append_event(RunStartedEvent.create(POINT_ID, 0, "worker_0", {"init": [1, 0, 0, 0]}))
    await store.append_event(
        RunCompletedEvent.create(POINT_ID, 0, "trajectory.csv", 0.5, {"reduced_risk": 0.1}).with_version(1)
    )

    events = await store.get_stream(run_stream_id(POINT_ID, 0))
    assert [e.event_type for e in events] == ["RunStartedEvent", "RunCompletedEvent"]
    assert [e.version for e in events] == [0, 1]
    assert events[1].data["final_values"] == {"reduced_risk": 0.1}

    last = await store.get_last_event(run_stream_id(POINT_ID, 0))
    assert last.event_id == events[1].event_id
    assert await store.get_stream(run_stream_id(POINT_ID, 1)) == []
    assert await store.get_last_event(run_stream_id(POINT_ID, 1)) is None
    assert store.get_metrics() == {'total_events': 2, 'total_streams': 1, 'version_conflicts': 0}


@pytest.mark.asyncio
async def test_stream_is_returned_as_copy():
    store = EventStore()
    await store.append_event(RunStartedEvent.create(POINT_ID, 0, "worker_0", {}))
    first = await store.get_stream(run_stream_id(POINT_ID, 0))
    first.clear()
    assert len(await store.get_stream(run_stream_id(POINT_ID, 0))) == 1


@pytest.mark.asyncio
async def test_duplicate_run_event_conflicts():
    """Повторная запись того же шага запуска отклоняется"""
    store = EventStore()
    await store.append_event(RunStartedEvent.create(POINT_ID, 2, "worker_0", {}))

    with pytest.raises(EventStoreConcurrencyError) as exc_info:
        await store.append_event(RunFailedEvent.create(POINT_ID, 2, "SolverError", "boom", 0.0))

    assert exc_info.value.stream_id == run_stream_id(POINT_ID, 2)
    assert exc_info.value.expected_version == 0
    assert exc_info.value.actual_version == 1
    assert store.get_metrics()['version_conflicts'] == 1
    assert len(await store.get_stream(run_stream_id(POINT_ID, 2))) == 1


@pytest.mark.asyncio
async def test_concurrent_runs_keep_their_streams():
    """Воркеры пишут параллельно, каждый в поток своего запуска"""
    system = ActorSystem("concurrent")
    store = EventStore()
    system.set_event_store(store)

    async def lifecycle(run: int):
        manager = EventVersionManager()
        await manager.append_event(RunStartedEvent.create(POINT_ID, run, f"worker_{run % 2}", {}), system)
        await asyncio.sleep(0)
        await manager.append_event(
            RunCompletedEvent.create(POINT_ID, run, f"run_{run:02d}.csv", 0.1, {}), system
        )

    await asyncio.gather(*(lifecycle(run) for run in range(6)))

    for run in range(6):
        events = await store.get_stream(run_stream_id(POINT_ID, run))
        assert [(e.event_type, e.version) for e in events] == \
               [("RunStartedEvent", 0), ("RunCompletedEvent", 1)]
    assert store.get_metrics()['total_streams'] == 6


@pytest.mark.asyncio
async def test_version_manager_continues_existing_stream():
    system = ActorSystem("versions")
    store = EventStore()
    system.set_event_store(store)
    await store.append_event(BaseEvent.create(stream_id="run_x_00", event_type="Seed", version=0))

    manager = EventVersionManager()
    first = await manager.append_event(RunStartedEvent.create("x", 0, "w", {}), system)
    second = await manager.append_event(RunFailedEvent.create("x", 0, "E", "boom", 0.0), system)
    assert (first.version, second.version) == (1, 2)
    assert [e.event_type for e in await store.get_stream("run_x_00")] == \
           ["Seed", "RunStartedEvent", "RunFailedEvent"]

    assert await EventVersionManager().append_event(first, ActorSystem("no-store")) is None


@pytest.mark.asyncio
async def test_undelivered_run_requests_go_to_dlq_stream():
    """Переполненный ящик воркера: запросы уходят в dlq_<actor_id>"""
    system = ActorSystem("dlq")
    event_store = EventStore()
    system.set_event_store(event_store)

    class TinyQueueActor(EchoActor):
        def __init__(self, actor_id: str, name: str):
            super().__init__(actor_id, name)
            self._message_queue = asyncio.Queue(maxsize=1)

    # Система не запущена: ящик никто не разбирает
    await system.register_actor(TinyQueueActor("worker_0", "RunWorker"))

    def request(run: int) -> ActorMessage:
        return ActorMessage.create(
            sender_id="experiment",
            message_type=MESSAGE_TYPES['RUN_REQUEST'],
            payload={'point_id': POINT_ID, 'run': run},
            reply_to="experiment"
        )

    await system.send_message("worker_0", request(0))
    undelivered = [request(1), request(2)]
    for msg in undelivered:
        with pytest.raises(asyncio.QueueFull):
            await system.send_message("worker_0", msg)

    await asyncio.sleep(TEST_PROCESSING_DELAY)

    dlq_events = await event_store.get_stream("dlq_worker_0")
    assert [e.event_type for e in dlq_events] == ["DeadLetterQueuedEvent"] * 2
    assert [e.data["message_id"] for e in dlq_events] == [m.message_id for m in undelivered]
    assert all(e.data["message_type"] == 'run_request' for e in dlq_events)
    assert system.get_dlq_metrics()['total_messages'] == 2
    assert system.get_dlq_metrics()['current_size'] == 2
