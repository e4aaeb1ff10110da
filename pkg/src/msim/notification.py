"""Event propagation: transactional outbox, publisher, and handling cycles.

Events are written to the publisher's event log in the same atomic install
as the aggregate versions that emitted them (the transactional outbox).
A publisher cycle then marks them published and, in distributed topologies,
copies them into each subscribing service's own log. Downstream aggregates
consume through subscription matching: an event is delivered to a
subscriber when its type and sender match and its publisher version is
strictly newer than what the subscriber has already processed.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, replace

from .aggregate import LifecycleState, SimulationStore
from .clock import Clock
from .errors import DomainError

SHARED_LOG = "shared"


@dataclass(frozen=True)
class DomainEvent:
    event_id: int
    event_type: str
    publisher_aggregate_id: int
    publisher_version: int
    payload: dict
    published: bool = False

    def mark_published(self) -> "DomainEvent":
        return replace(self, published=True)

    def with_publisher_version(self, version: int) -> "DomainEvent":
        return replace(self, publisher_version=version)


class EventIdGenerator:
    def __init__(self):
        self._counter = itertools.count(1)
        self._lock = threading.Lock()

    def new_event_id(self) -> int:
        with self._lock:
            return next(self._counter)


class NotificationService:
    """Event store façade plus the scheduled publisher.

    topology "shared": one log for every service (local deployments).
    topology "per-service": each service owns a log; publishing copies
    events to subscriber logs with the configured delivery latency.
    """

    def __init__(
        self,
        store: SimulationStore,
        clock: Clock,
        topology: str = "shared",
        delivery_latency_ms: float = 0.0,
    ):
        self._store = store
        self._clock = clock
        self.topology = topology
        self.delivery_latency_ms = delivery_latency_ms
        self._subscribed_types: dict[str, set[str]] = {}
        self.event_ids = EventIdGenerator()

    def declare_subscription(self, service: str, event_type: str) -> None:
        self._subscribed_types.setdefault(service, set()).add(event_type)

    def subscribed_types(self, service: str) -> set[str]:
        return set(self._subscribed_types.get(service, ()))

    def log_key(self, service: str) -> str:
        """Which store log a service writes to / reads from."""
        return SHARED_LOG if self.topology == "shared" else service

    # -- publication -----------------------------------------------------

    def publish_pending(self) -> int:
        """Deliver every unpublished event to its subscribers, exactly once.

        Returns the number of events published this cycle.
        """
        published = 0
        if self.topology == "shared":
            pending = [e for e in self._store.events_of(SHARED_LOG) if not e.published]
            if pending:
                published += self._store.publish_batch(
                    SHARED_LOG, [e.event_id for e in pending], deliveries=()
                )
            return published
        for service in list(self._store.event_services()):
            pending = [e for e in self._store.events_of(service) if not e.published]
            if not pending:
                continue
            deliveries = []
            for event in pending:
                for subscriber, types in self._subscribed_types.items():
                    if subscriber != service and event.event_type in types:
                        deliveries.append((subscriber, event.mark_published()))
            if deliveries and self.delivery_latency_ms:
                self._clock.sleep_ms(self.delivery_latency_ms)
            published += self._store.publish_batch(
                service, [e.event_id for e in pending], deliveries
            )
        return published

    # -- subscription queries ----------------------------------------------

    def get_subscribed_events(self, service: str, subscriptions) -> list[DomainEvent]:
        """Events visible to `service` matching any subscription, oldest first."""
        log = self._store.events_of(self.log_key(service))
        matched: dict[int, DomainEvent] = {}
        for event in log:
            if not event.published:
                continue
            if any(sub.matches(event) for sub in subscriptions):
                matched.setdefault(event.event_id, event)
        return sorted(matched.values(), key=lambda e: (e.publisher_version, e.event_id))


class EventHandlingLoop:
    """Runs local consumption cycles: match events to live aggregates and
    dispatch each to its registered handler.

    Handlers launch the corresponding processing functionality. Domain
    errors are recorded and the event is retried on the next cycle;
    processing is at-least-once, so handlers must be idempotent.
    """

    def __init__(self, store: SimulationStore, notification: NotificationService):
        self._store = store
        self._notification = notification
        # aggregate_type -> event_type -> handler(aggregate_id, event)
        self._handlers: dict[str, dict[str, object]] = {}
        self._errors: list[tuple[int, str]] = []
        self._lock = threading.Lock()

    def register(self, aggregate_type: str, event_type: str, handler) -> None:
        self._handlers.setdefault(aggregate_type, {})[event_type] = handler
        self._notification.declare_subscription(aggregate_type, event_type)

    def registered_types(self):
        return list(self._handlers.keys())

    def run_event_handling_cycle(self, aggregate_type: str) -> int:
        """One consumption cycle for every live aggregate of the type."""
        handlers = self._handlers.get(aggregate_type, {})
        if not handlers:
            return 0
        processed = 0
        for aggregate_id in self._store.ids_of_type(aggregate_type):
            latest = self._store.latest(aggregate_id)
            if latest.state is not LifecycleState.ACTIVE:
                continue
            subscriptions = latest.get_event_subscriptions()
            if not subscriptions:
                continue
            events = self._notification.get_subscribed_events(
                aggregate_type, subscriptions
            )
            for event in events:
                handler = handlers.get(event.event_type)
                if handler is None:
                    continue
                try:
                    handler(aggregate_id, event)
                    processed += 1
                except DomainError as exc:
                    with self._lock:
                        self._errors.append((event.event_id, str(exc)))
        return processed

    def handling_errors(self) -> list[tuple[int, str]]:
        with self._lock:
            return list(self._errors)


class EventScheduler:
    """Background publish/handle loop for non-manual mode."""

    def __init__(
        self,
        notification: NotificationService,
        loop: EventHandlingLoop,
        publish_interval_ms: float,
        handle_interval_ms: float,
    ):
        self._notification = notification
        self._loop = loop
        self._publish_interval = publish_interval_ms / 1000.0
        self._handle_interval = handle_interval_ms / 1000.0
        self._stop = threading.Event()
        self._thread = threading.Thread(
            target=self._run, name="event-scheduler", daemon=True
        )

    def start(self) -> None:
        self._thread.start()

    def _run(self) -> None:
        interval = min(self._publish_interval, self._handle_interval)
        while not self._stop.is_set():
            self._notification.publish_pending()
            for aggregate_type in self._loop.registered_types():
                self._loop.run_event_handling_cycle(aggregate_type)
            self._stop.wait(interval)

    def stop(self) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join(timeout=1.0)
