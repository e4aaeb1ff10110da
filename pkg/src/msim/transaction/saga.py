"""Saga transaction service: semantic locks, per-step persistence,
compensating transactions.

Each service invocation is a local transaction: changes registered during a
command handler buffer in a step frame and install atomically when the
handler finishes, so intermediate states become visible step by step while
a handler failure discards only that step's writes. Isolation comes from
semantic locks: the saga state travels on the aggregate's version chain,
and a command whose envelope forbids the current state is rejected with a
retryable conflict, queuing conflicting functionalities behind the gateway
backoff. Commit releases the locks; abort first runs the registered
compensations in reverse order, each writing a new committed version that
restores the pre-saga domain state.
"""

from __future__ import annotations

import threading
import time
from collections import deque

from ..aggregate import NOT_IN_SAGA
from ..context import ambient
from ..errors import AggregateDeleted, SemanticLockConflict, SimulatorError
from ..messaging import CommandHandlerDecorator, SagaCommandEnvelope, inner_command
from .base import LockRecord, UnitOfWork, UnitOfWorkService, UowStatus


class SagaUnitOfWorkService(UnitOfWorkService):
    model = "saga"

    def __init__(self, *args, lock_wait_ms: float = 100.0, **kwargs):
        super().__init__(*args, **kwargs)
        self._lock_cond = threading.Condition(threading.Lock())
        self._wait_queues: dict[int, deque] = {}
        self.lock_wait_ms = lock_wait_ms

    # -- lifecycle -------------------------------------------------------

    def create_unit_of_work(self) -> UnitOfWork:
        return self._new_uow(snapshot_version=0)

    def aggregate_load(self, uow: UnitOfWork, aggregate_id: int):
        return self._store.latest_committed(aggregate_id).copy_for_write()

    def register_changed(self, uow: UnitOfWork, working_copy) -> None:
        """Validate and persist immediately (at step-frame granularity)."""
        working_copy.verify_invariants()
        working_copy.version = self._versioning.increment_and_get_version_number()
        uow.changed[working_copy.aggregate_id] = working_copy
        frame = uow.current_frame()
        if frame is not None:
            frame[0].append(working_copy)
        else:
            self._store.install(records=[working_copy], stage_hook=self._hook)

    def register_event(self, uow: UnitOfWork, event) -> None:
        publisher = uow.changed.get(event.publisher_aggregate_id)
        if publisher is None or publisher.version == 0:
            raise SimulatorError(
                "register_event requires register_changed on the publisher first"
            )
        event = event.with_publisher_version(publisher.version)
        uow.events.append(event)
        frame = uow.current_frame()
        if frame is not None:
            frame[1].append(event)
        else:
            self._store.install(
                events=self._outbox_entries(uow, [event]), stage_hook=self._hook
            )

    # -- step frames: the local transaction of one service invocation ------

    def begin_step(self, uow: UnitOfWork) -> None:
        uow.begin_step()

    def flush_step(self, uow: UnitOfWork) -> None:
        records, events = uow.pop_frame()
        if records or events:
            self._store.install(
                records=records,
                events=self._outbox_entries(uow, events),
                stage_hook=self._hook,
            )

    def discard_step(self, uow: UnitOfWork) -> None:
        records, events = uow.pop_frame()
        for record in records:
            uow.changed.pop(record.aggregate_id, None)
        for event in events:
            uow.events.remove(event)

    # -- semantic locks ------------------------------------------------------

    def acquire_semantic_lock(self, uow, aggregate_id, forbidden_states, acquire_state):
        """Atomic check-and-set of the aggregate's saga state.

        Waits up to lock_wait_ms for a forbidden state to clear (woken by
        unlock writes) before surfacing SemanticLockConflict; the conflict
        is infrastructure-classified so the gateway queues the caller with
        backoff.
        """
        if any(lock.aggregate_id == aggregate_id for lock in uow.locks):
            return  # re-entrant: this saga already holds the lock
        deadline = time.monotonic() + self.lock_wait_ms / 1000.0
        token = object()
        with self._lock_cond:
            queue = self._wait_queues.setdefault(aggregate_id, deque())
            queue.append(token)
            try:
                while True:
                    latest = self._store.latest_committed(aggregate_id)
                    # FIFO hand-off: only the head of the queue may acquire,
                    # so a waiter cannot starve behind lucky latecomers.
                    if queue[0] is token and latest.saga_state not in forbidden_states:
                        record = latest.copy_for_write()
                        record.saga_state = acquire_state
                        record.version = (
                            self._versioning.increment_and_get_version_number()
                        )
                        self._store.install(records=[record])
                        uow.locks.append(
                            LockRecord(
                                aggregate_id=aggregate_id,
                                previous_saga_state=latest.saga_state,
                                previous_version=latest.version,
                            )
                        )
                        return
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise SemanticLockConflict(
                            f"aggregate {aggregate_id} is in a forbidden saga state"
                        )
                    self._lock_cond.wait(remaining)
            finally:
                try:
                    queue.remove(token)
                except ValueError:
                    pass
                if not queue:
                    self._wait_queues.pop(aggregate_id, None)
                self._lock_cond.notify_all()

    def register_compensation(self, uow: UnitOfWork, action, label: str) -> None:
        uow.compensations.append((label, action))

    # -- commit / abort ----------------------------------------------------------

    def _write_saga_state(self, aggregate_id: int, saga_state: str) -> None:
        with self._lock_cond:
            try:
                latest = self._store.latest_committed(aggregate_id)
            except AggregateDeleted:
                return  # tombstoned mid-saga; nothing left to unlock
            record = latest.copy_for_write()
            record.saga_state = saga_state
            record.version = self._versioning.increment_and_get_version_number()
            self._store.install(records=[record])
            self._lock_cond.notify_all()

    def _do_commit(self, uow: UnitOfWork) -> None:
        """Release every semantic lock; compensations are discarded."""
        if uow.status is UowStatus.COMMITTED:
            return
        while uow.step_frames:
            self.flush_step(uow)
        unlocked = set()
        for lock in uow.locks:
            if lock.aggregate_id not in unlocked:
                self._write_saga_state(lock.aggregate_id, NOT_IN_SAGA)
                unlocked.add(lock.aggregate_id)
        uow.compensations.clear()
        uow.status = UowStatus.COMMITTED

    def _do_abort(self, uow: UnitOfWork) -> None:
        """Run compensations in reverse registration order, then unlock.

        A failing compensation is recorded and the remaining ones still run,
        maximizing the amount of restored state.
        """
        if uow.status is not UowStatus.ACTIVE:
            return
        while uow.step_frames:
            self.discard_step(uow)
        for label, action in reversed(uow.compensations):
            span_id = None
            if self._recorder is not None:
                _, span_id = self._recorder.start_span(
                    ambient.trace_parent, f"compensate:{label}"
                )
            try:
                action(uow)
            except Exception as exc:
                self.compensation_failures.append(f"{label}: {exc}")
            finally:
                if span_id is not None:
                    self._recorder.end_span(span_id)
        released = set()
        for lock in reversed(uow.locks):
            if lock.aggregate_id not in released:
                self._write_saga_state(lock.aggregate_id, lock.previous_saga_state)
                released.add(lock.aggregate_id)
        uow.status = UowStatus.ABORTED

    def decorator(self):
        return SagaCommandDecorator(self)


class SagaCommandDecorator(CommandHandlerDecorator):
    """Installed on every saga-mode handler.

    Enforces semantic locks declared on the envelope before the handler
    runs, and scopes the handler invocation as one local transaction:
    registered changes install atomically on success and are discarded on
    failure.
    """

    def __init__(self, service: SagaUnitOfWorkService):
        self._service = service

    def handle(self, message, proceed):
        command = inner_command(message)
        uow = self._service.lookup(command.unit_of_work_ref)
        if isinstance(message, SagaCommandEnvelope):
            self._service.acquire_semantic_lock(
                uow,
                command.target_aggregate_id,
                message.forbidden_states,
                message.acquire_state,
            )
        self._service.begin_step(uow)
        try:
            result = proceed(command)
        except BaseException:
            self._service.discard_step(uow)
            raise
        self._service.flush_step(uow)
        return result
