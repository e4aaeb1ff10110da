"""Causal transaction service: snapshot reads, deferred persistence, and a
commit-time merge under optimistic concurrency.

A unit of work fixes its snapshot at creation: the version counter's current
value, read inside the commit section so the snapshot is always a consistent
cut. Loads resolve to the greatest committed version at or below the
snapshot and repeat-read from a per-transaction cache. Nothing becomes
visible before commit; abort simply discards the staged state.

Commit is serialized: one committer at a time reserves the next version
number, merges each staged aggregate against any version committed after
the snapshot (three-way, via the aggregate's merge_fields), re-verifies
invariants, and installs all staged versions plus their outbox events in a
single atomic batch, giving the transaction atomic visibility. Entry into
the commit section is bounded: a committer that cannot acquire it in time
fails with a retryable conflict, modeling the optimistic-concurrency aborts
a real store would produce under contention. A merge the domain declares
unresolvable, or an invariant broken after merge, converts the commit into
an abort and returns the reserved version number.

This model needs strictly sequential versions to order causal history, so
it refuses to run on the decentralized snowflake strategy.
"""

from __future__ import annotations

import threading
import time
from collections import deque

from ..aggregate import LifecycleState
from ..errors import (
    AggregateDeleted,
    AggregateNotInSnapshot,
    ConcurrentCommitConflict,
    IncompatibleVersioningStrategy,
    InvariantViolation,
    MergeConflictUnresolvable,
    SimulatorError,
)
from ..messaging import CausalCommandEnvelope, CommandHandlerDecorator, inner_command
from .base import UnitOfWork, UnitOfWorkService, UowStatus


class CausalUnitOfWorkService(UnitOfWorkService):
    model = "causal"

    def __init__(self, *args, commit_wait_ms: float = 70.0, commit_store_ms: float = 5.0,
                 **kwargs):
        super().__init__(*args, **kwargs)
        if self._versioning.strategy == "snowflake":
            raise IncompatibleVersioningStrategy(
                "transactional causal consistency requires centralized versioning"
            )
        self._section_cond = threading.Condition(threading.Lock())
        self._section_busy = False
        self._section_queue: deque = deque()
        # Highest fully installed commit version: the safe snapshot horizon
        # (the raw counter may already name a version still being written).
        self._horizon = 0
        self.commit_wait_ms = commit_wait_ms
        # Modeled store transaction: the atomic multi-aggregate + outbox
        # write, paid while the commit section is held.
        self.commit_store_ms = commit_store_ms

    # -- commit section: fair FIFO admission with a bounded wait -----------

    def _enter_commit_section(self) -> None:
        deadline = time.monotonic() + self.commit_wait_ms / 1000.0
        token = object()
        with self._section_cond:
            self._section_queue.append(token)
            try:
                while True:
                    if self._section_queue[0] is token and not self._section_busy:
                        self._section_busy = True
                        return
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise ConcurrentCommitConflict(
                            f"commit section busy for more than "
                            f"{self.commit_wait_ms}ms"
                        )
                    self._section_cond.wait(remaining)
            finally:
                self._section_queue.remove(token)
                self._section_cond.notify_all()

    def _exit_commit_section(self) -> None:
        with self._section_cond:
            self._section_busy = False
            self._section_cond.notify_all()

    # -- lifecycle -------------------------------------------------------

    def create_unit_of_work(self) -> UnitOfWork:
        # The counter names the newest reserved version; clamp to the
        # horizon so a snapshot never points at a half-installed commit.
        counter = self._versioning.get_version_number()
        with self._section_cond:
            snapshot = min(counter, self._horizon)
        return self._new_uow(snapshot_version=snapshot)

    def aggregate_load(self, uow: UnitOfWork, aggregate_id: int):
        """Working copy consistent with the causal snapshot; repeatable."""
        staged = uow.changed.get(aggregate_id)
        if staged is not None:
            return staged
        record = uow.read_cache.get(aggregate_id)
        if record is None:
            record = self._store.record_at_or_below(aggregate_id, uow.snapshot_version)
            if record is None:
                raise AggregateNotInSnapshot(
                    f"aggregate {aggregate_id} has no version <= snapshot "
                    f"{uow.snapshot_version}"
                )
            if record.state is LifecycleState.DELETED:
                raise AggregateDeleted(f"aggregate {aggregate_id} is deleted")
            uow.read_cache[aggregate_id] = record
            uow.read_set[aggregate_id] = record.version
        return record.copy_for_write()

    def register_changed(self, uow: UnitOfWork, working_copy) -> None:
        """Stage only; nothing is visible until commit."""
        working_copy.verify_invariants()
        uow.changed[working_copy.aggregate_id] = working_copy

    def register_event(self, uow: UnitOfWork, event) -> None:
        if event.publisher_aggregate_id not in uow.changed:
            raise SimulatorError(
                "event publisher is not a changed aggregate in this unit of work"
            )
        uow.events.append(event)

    # -- commit / abort -----------------------------------------------------

    def _do_commit(self, uow: UnitOfWork) -> None:
        if uow.status is UowStatus.COMMITTED:
            return  # retried commit command after a transport hiccup
        self._enter_commit_section()
        try:
            self._hook("commit:begin")
            commit_version = self._versioning.increment_and_get_version_number()
            self._hook("commit:version-reserved")
            try:
                final_records = []
                for aggregate_id, staged in uow.changed.items():
                    latest = self._store.latest_or_none(aggregate_id)
                    working = staged
                    if latest is not None and latest.version > uow.snapshot_version:
                        ancestor = None
                        read_version = uow.read_set.get(aggregate_id)
                        if read_version is not None:
                            ancestor = self._store.record_at(aggregate_id, read_version)
                        working = staged.merge_fields(latest, ancestor)
                        working.verify_invariants()
                        self._hook(f"commit:merged:{aggregate_id}")
                    working.version = commit_version
                    working.prev_version = uow.read_set.get(aggregate_id)
                    final_records.append(working)
                    self._hook(f"commit:staged:{aggregate_id}")
                outbox = self._outbox_entries(
                    uow,
                    [e.with_publisher_version(commit_version) for e in uow.events],
                )
                self._hook("commit:pre-install")
                if self.commit_store_ms > 0:
                    self._clock.sleep_ms(self.commit_store_ms)
                self._store.install(
                    records=final_records, events=outbox, stage_hook=self._hook
                )
                with self._section_cond:
                    self._horizon = max(self._horizon, commit_version)
                uow.status = UowStatus.COMMITTED
            except (InvariantViolation, MergeConflictUnresolvable):
                # Commit converts to abort; hand back the reserved version.
                self._versioning.decrement_version_number()
                uow.status = UowStatus.ABORTED
                raise
        finally:
            self._exit_commit_section()

    def _do_abort(self, uow: UnitOfWork) -> None:
        """Discard staged state; the store was never touched."""
        if uow.status is UowStatus.ACTIVE:
            uow.changed.clear()
            uow.events.clear()
            uow.status = UowStatus.ABORTED

    def decorator(self):
        return CausalCommandDecorator(self)


class CausalCommandDecorator(CommandHandlerDecorator):
    """Installed on every causal-mode handler.

    Unwraps the causal envelope so handler-side loads resolve against the
    caller's snapshot (the envelope's uow reference names the transaction
    context that carries it).
    """

    def __init__(self, service: CausalUnitOfWorkService):
        self._service = service

    def handle(self, message, proceed):
        command = inner_command(message)
        if isinstance(message, CausalCommandEnvelope):
            uow = self._service.lookup(message.uow_id)
            if uow.snapshot_version != message.snapshot_version:
                raise SimulatorError(
                    "causal envelope snapshot does not match its unit of work"
                )
        return proceed(command)
