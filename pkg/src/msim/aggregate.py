"""Aggregates: identity, immutable version chains, and the committed store.

Aggregates evolve copy-on-write: every successful commit appends a new
immutable record to the aggregate's version chain, linked to its
predecessor through ``prev_version``. Working copies carry version 0 until
a transaction service assigns the commit version.

The store keeps all committed state for every simulated service: aggregate
chains plus per-service domain event logs. Mutations go through
``install()``, which builds a fresh state structure and publishes it with a
single reference swap. A crash at any intermediate point of a commit
therefore leaves either the complete batch or nothing, which is what makes
the transactional outbox honest under fault injection.
"""

from __future__ import annotations

import copy
import itertools
import threading
from bisect import insort
from dataclasses import dataclass
from enum import Enum

from .errors import (
    AggregateDeleted,
    AggregateNotFound,
    MergeConflictUnresolvable,
    SimulatorError,
)

NOT_IN_SAGA = "NOT_IN_SAGA"


class LifecycleState(str, Enum):
    ACTIVE = "ACTIVE"
    INACTIVE = "INACTIVE"
    DELETED = "DELETED"


@dataclass(frozen=True)
class EventSubscription:
    """Declared interest in an upstream aggregate's events.

    Matches events of event_type published by sender_aggregate_id with a
    publisher version strictly greater than sender_last_version.
    """

    event_type: str
    sender_aggregate_id: int
    sender_last_version: int = 0

    def __post_init__(self):
        if self.sender_last_version < 0:
            raise SimulatorError("sender_last_version must be >= 0")

    def matches(self, event) -> bool:
        return (
            event.event_type == self.event_type
            and event.publisher_aggregate_id == self.sender_aggregate_id
            and event.publisher_version > self.sender_last_version
        )


class Aggregate:
    """Base class for one committed version (or working copy) of an aggregate.

    Concrete aggregates must implement verify_invariants() and may override
    get_event_subscriptions() and merge_fields() to participate in event
    propagation and causal conflict resolution.
    """

    aggregate_type = "aggregate"

    def __init__(self, aggregate_id: int, state: LifecycleState = LifecycleState.ACTIVE):
        self.aggregate_id = aggregate_id
        self.version = 0  # working copy until a transaction service commits it
        self.prev_version: int | None = None
        self.state = state
        self.saga_state = NOT_IN_SAGA

    def verify_invariants(self) -> None:
        raise NotImplementedError

    def get_event_subscriptions(self) -> list[EventSubscription]:
        return []

    def merge_fields(self, committed: "Aggregate", ancestor: "Aggregate | None") -> "Aggregate":
        raise MergeConflictUnresolvable(
            f"{type(self).__name__} does not implement a merge"
        )

    def domain_payload(self) -> dict:
        """Comparable view of the domain state, excluding version bookkeeping."""
        raise NotImplementedError

    def copy_for_write(self) -> "Aggregate":
        dup = copy.deepcopy(self)
        dup.prev_version = self.version
        dup.version = 0
        return dup

    def __repr__(self):
        return (
            f"<{type(self).__name__} id={self.aggregate_id} v={self.version} "
            f"state={self.state.value} saga={self.saga_state}>"
        )


class AggregateIdGenerator:
    """Allocates unique, strictly increasing logical aggregate ids."""

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def new_aggregate_id(self) -> int:
        with self._lock:
            return next(self._counter)


class _StoreState:
    __slots__ = ("records", "events")

    def __init__(self, records: dict, events: dict):
        # records: aggregate_id -> list of records sorted by version
        # events:  service name -> tuple of DomainEvent
        self.records = records
        self.events = events


class SimulationStore:
    """Committed aggregate chains plus per-service event logs.

    Readers take a snapshot of the current state reference and never block.
    install() validates, builds the next state, and swaps it in atomically;
    stage_hook (when given) is called between internal build steps so tests
    can inject crashes at every intermediate point.
    """

    def __init__(self):
        self._state = _StoreState({}, {})
        self._lock = threading.RLock()

    # -- writes ---------------------------------------------------------

    def install(self, records=(), events=(), stage_hook=None) -> None:
        """Atomically append committed records and outbox events.

        records: iterable of Aggregate (version already assigned, > 0)
        events:  iterable of (service_name, DomainEvent)
        """
        hook = stage_hook or (lambda stage: None)
        with self._lock:
            state = self._state
            new_records = dict(state.records)
            new_events = dict(state.events)
            for i, rec in enumerate(records):
                if rec.version <= 0:
                    raise SimulatorError("cannot install an uncommitted working copy")
                chain = list(new_records.get(rec.aggregate_id, ()))
                if chain:
                    latest = chain[-1]
                    if latest.state is LifecycleState.DELETED and rec.version > latest.version:
                        raise AggregateDeleted(
                            f"aggregate {rec.aggregate_id} is deleted; no successors allowed"
                        )
                    if any(r.version == rec.version for r in chain):
                        raise SimulatorError(
                            f"duplicate version {rec.version} for aggregate {rec.aggregate_id}"
                        )
                insort(chain, rec, key=lambda r: r.version)
                new_records[rec.aggregate_id] = chain
                hook(f"install:record:{i}")
            for i, (service, event) in enumerate(events):
                log = list(new_events.get(service, ()))
                if all(e.event_id != event.event_id for e in log):
                    log.append(event)
                new_events[service] = tuple(log)
                hook(f"install:event:{i}")
            hook("install:swap")
            self._state = _StoreState(new_records, new_events)

    def publish_batch(self, publisher_service: str, event_ids, deliveries) -> int:
        """Mark events published and copy them to subscriber logs, atomically.

        deliveries: iterable of (subscriber_service, DomainEvent copy).
        Returns how many events transitioned to published. Idempotent per
        event id on both sides.
        """
        event_ids = set(event_ids)
        with self._lock:
            state = self._state
            new_events = dict(state.events)
            marked = 0
            log = []
            for ev in new_events.get(publisher_service, ()):
                if ev.event_id in event_ids and not ev.published:
                    ev = ev.mark_published()
                    marked += 1
                log.append(ev)
            new_events[publisher_service] = tuple(log)
            for service, ev in deliveries:
                sub_log = list(new_events.get(service, ()))
                if all(e.event_id != ev.event_id for e in sub_log):
                    sub_log.append(ev)
                new_events[service] = tuple(sub_log)
            self._state = _StoreState(state.records, new_events)
            return marked

    # -- reads ------------------------------------------------------------

    def _chain(self, aggregate_id: int):
        chain = self._state.records.get(aggregate_id)
        if not chain:
            raise AggregateNotFound(f"aggregate {aggregate_id} not found")
        return chain

    def exists(self, aggregate_id: int) -> bool:
        return aggregate_id in self._state.records

    def latest(self, aggregate_id: int) -> Aggregate:
        """Most recent record regardless of lifecycle state."""
        return self._chain(aggregate_id)[-1]

    def latest_committed(self, aggregate_id: int) -> Aggregate:
        rec = self.latest(aggregate_id)
        if rec.state is LifecycleState.DELETED:
            raise AggregateDeleted(f"aggregate {aggregate_id} is deleted")
        return rec

    def latest_or_none(self, aggregate_id: int) -> Aggregate | None:
        chain = self._state.records.get(aggregate_id)
        return chain[-1] if chain else None

    def record_at(self, aggregate_id: int, version: int) -> Aggregate:
        for rec in self._chain(aggregate_id):
            if rec.version == version:
                return rec
        raise AggregateNotFound(f"aggregate {aggregate_id} has no version {version}")

    def record_at_or_below(self, aggregate_id: int, max_version: int) -> Aggregate | None:
        """Greatest committed version <= max_version, or None."""
        best = None
        for rec in self._chain(aggregate_id):
            if rec.version <= max_version:
                best = rec
            else:
                break
        return best

    def versions(self, aggregate_id: int) -> list[int]:
        return [r.version for r in self._chain(aggregate_id)]

    def ids_of_type(self, aggregate_type: str) -> list[int]:
        state = self._state
        return [
            aid
            for aid, chain in state.records.items()
            if chain and chain[-1].aggregate_type == aggregate_type
        ]

    def all_records(self):
        state = self._state
        for chain in state.records.values():
            yield from chain

    def events_of(self, service: str):
        return self._state.events.get(service, ())

    def event_services(self):
        return list(self._state.events.keys())
