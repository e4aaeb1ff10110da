"""Unit-of-work lifecycle shared by both transactional models.

A UnitOfWork is the transaction context passed through a functionality's
command chain: it tracks loaded and changed aggregates, events emitted, and
the model-specific coordination state (saga locks and compensations, or the
causal read-set). The service owning it decides when changes become
visible: sagas persist at the end of every service invocation, causal
transactions stage everything until commit.

Commit and abort are themselves dispatched as infrastructure commands
through the gateway, so they inherit transport latency and the retry loop;
handlers on the "transaction" service route them back to the model service.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

from ..errors import SimulatorError
from ..messaging import TRANSACTION_SERVICE, Command


class UowStatus(Enum):
    ACTIVE = "ACTIVE"
    COMMITTED = "COMMITTED"
    ABORTED = "ABORTED"


@dataclass
class LockRecord:
    aggregate_id: int
    previous_saga_state: str
    previous_version: int


@dataclass
class UnitOfWork:
    uow_id: int
    model: str  # "saga" | "causal"
    snapshot_version: int = 0
    status: UowStatus = UowStatus.ACTIVE
    changed: dict = field(default_factory=dict)  # aggregate_id -> working copy
    events: list = field(default_factory=list)
    # saga state
    locks: list = field(default_factory=list)  # LockRecord, acquisition order
    compensations: list = field(default_factory=list)  # (label, callable)
    # causal state
    read_set: dict = field(default_factory=dict)  # aggregate_id -> version read
    read_cache: dict = field(default_factory=dict)  # aggregate_id -> committed record
    # saga step buffers (stack: handler scopes may nest through compensations)
    step_frames: list = field(default_factory=list)

    def begin_step(self) -> None:
        self.step_frames.append(([], []))

    def current_frame(self):
        return self.step_frames[-1] if self.step_frames else None

    def pop_frame(self):
        return self.step_frames.pop()


class UnitOfWorkService:
    """Abstract transaction service: createUnitOfWork / commit / abort plus
    registration of aggregate loads, changes, and emitted events."""

    model = "abstract"

    def __init__(self, store, versioning, notification, gateway, clock, recorder=None):
        self._store = store
        self._versioning = versioning
        self._notification = notification
        self._gateway = gateway
        self._clock = clock
        self._recorder = recorder
        self._registry: dict[int, UnitOfWork] = {}
        self._registry_lock = threading.Lock()
        self._uow_counter = 0
        # Test hook: called with a stage label at each point of a commit.
        self.commit_stage_hook = None
        self.compensation_failures: list[str] = []

    # -- registry ---------------------------------------------------------

    def _new_uow(self, **kwargs) -> UnitOfWork:
        with self._registry_lock:
            self._uow_counter += 1
            uow = UnitOfWork(uow_id=self._uow_counter, model=self.model, **kwargs)
            self._registry[uow.uow_id] = uow
            return uow

    def lookup(self, uow_id: int) -> UnitOfWork:
        with self._registry_lock:
            uow = self._registry.get(uow_id)
        if uow is None:
            raise SimulatorError(f"unknown unit of work: {uow_id}")
        return uow

    def _hook(self, stage: str) -> None:
        if self.commit_stage_hook is not None:
            self.commit_stage_hook(stage)

    # -- contract -----------------------------------------------------------

    def create_unit_of_work(self) -> UnitOfWork:
        raise NotImplementedError

    def aggregate_load(self, uow: UnitOfWork, aggregate_id: int):
        raise NotImplementedError

    def register_changed(self, uow: UnitOfWork, working_copy) -> None:
        raise NotImplementedError

    def register_event(self, uow: UnitOfWork, event) -> None:
        raise NotImplementedError

    def decorator(self):
        raise NotImplementedError

    def _do_commit(self, uow: UnitOfWork) -> None:
        raise NotImplementedError

    def _do_abort(self, uow: UnitOfWork) -> None:
        raise NotImplementedError

    # -- commit / abort via the gateway ---------------------------------------

    def commit(self, uow: UnitOfWork) -> None:
        self._gateway.send(
            Command(
                target_service=TRANSACTION_SERVICE,
                command_type="transaction.commit",
                unit_of_work_ref=uow.uow_id,
                infrastructure=True,
            )
        )

    def abort(self, uow: UnitOfWork) -> None:
        self._gateway.send(
            Command(
                target_service=TRANSACTION_SERVICE,
                command_type="transaction.abort",
                unit_of_work_ref=uow.uow_id,
                infrastructure=True,
            )
        )

    def transaction_handler(self, command: Command):
        """Gateway handler for the transaction service."""
        uow = self.lookup(command.unit_of_work_ref)
        if command.command_type == "transaction.commit":
            self._do_commit(uow)
        elif command.command_type == "transaction.abort":
            self._do_abort(uow)
        else:
            raise SimulatorError(f"unknown transaction op: {command.command_type}")
        return {"status": uow.status.value}

    # -- shared helpers ---------------------------------------------------------

    def _outbox_entries(self, uow: UnitOfWork, events) -> list:
        entries = []
        for event in events:
            publisher = uow.changed.get(event.publisher_aggregate_id)
            if publisher is None:
                raise SimulatorError(
                    "event publisher is not a changed aggregate in this unit of work"
                )
            service = self._notification.log_key(publisher.aggregate_type)
            entries.append((service, event))
        return entries
