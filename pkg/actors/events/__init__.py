from .base_event import BaseEvent
from .event_store import EventStore, EventStoreConcurrencyError
from .run_events import RunStartedEvent, RunCompletedEvent, RunFailedEvent, run_stream_id

__all__ = [
    'BaseEvent',
    'EventStore',
    'EventStoreConcurrencyError',
    'RunStartedEvent',
    'RunCompletedEvent',
    'RunFailedEvent',
    'run_stream_id',
]
