"""Command dispatch: one gateway, four simulated transports.

Downstream-to-upstream invocations travel as Command objects through a
single gateway interface. The transport behind it is configuration:

* local            -- direct call on the caller's thread, no serialization.
* local-serialized -- direct call, but commands and responses are forced
  through the canonical byte encoding so payload problems surface locally.
* rpc              -- serialized, with a one-way latency applied to request
  and response.
* broker           -- serialized, queued per service, consumed by a poller
  thread, response routed back by correlation id.

Handlers classify failures: DomainError outcomes are re-raised immediately
on the caller (no retry); infrastructure outcomes are retried with
exponential backoff until the policy is exhausted, at which point the
fallback raises ServiceUnavailable.
"""

from __future__ import annotations

import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from . import serialization
from .clock import Clock
from .context import ambient
from .errors import (
    DomainError,
    DuplicateRegistration,
    ErrorRegistry,
    InvalidConfig,
    InvalidLatencySpec,
    ServiceUnavailable,
    SimulatorError,
)

TRANSACTION_SERVICE = "transaction"


class Outcome(str, Enum):
    OK = "OK"
    DOMAIN_ERROR = "DOMAIN_ERROR"
    INFRA_ERROR = "INFRA_ERROR"


@dataclass
class Command:
    target_service: str
    command_type: str
    payload: dict = field(default_factory=dict)
    command_id: int | None = None
    unit_of_work_ref: int | None = None
    target_aggregate_id: int | None = None
    # Stamped from the ambient workflow context at dispatch time.
    functionality: str | None = None
    step: str | None = None
    trace_parent: tuple | None = None
    # Infrastructure commands (versioning, commit/abort) bypass impairment.
    infrastructure: bool = False

    def to_wire(self) -> dict:
        return {
            "kind": "command",
            "target_service": self.target_service,
            "command_type": self.command_type,
            "payload": self.payload,
            "command_id": self.command_id,
            "unit_of_work_ref": self.unit_of_work_ref,
            "target_aggregate_id": self.target_aggregate_id,
            "functionality": self.functionality,
            "step": self.step,
            "trace_parent": list(self.trace_parent) if self.trace_parent else None,
            "infrastructure": self.infrastructure,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "Command":
        trace = data.get("trace_parent")
        return cls(
            target_service=data["target_service"],
            command_type=data["command_type"],
            payload=data["payload"],
            command_id=data["command_id"],
            unit_of_work_ref=data["unit_of_work_ref"],
            target_aggregate_id=data["target_aggregate_id"],
            functionality=data["functionality"],
            step=data["step"],
            trace_parent=tuple(trace) if trace else None,
            infrastructure=data["infrastructure"],
        )


@dataclass
class SagaCommandEnvelope:
    """Saga wrapper: forbidden states to reject on, state to acquire."""

    inner: Command
    forbidden_states: list
    acquire_state: str

    def __post_init__(self):
        from .aggregate import NOT_IN_SAGA

        if self.acquire_state == NOT_IN_SAGA:
            raise SimulatorError("acquire_state must name an in-saga state")

    def to_wire(self) -> dict:
        return {
            "kind": "saga",
            "inner": self.inner.to_wire(),
            "forbidden_states": list(self.forbidden_states),
            "acquire_state": self.acquire_state,
        }


@dataclass
class CausalCommandEnvelope:
    """Causal wrapper carrying the caller's snapshot and transaction id."""

    inner: Command
    snapshot_version: int
    uow_id: int

    def to_wire(self) -> dict:
        return {
            "kind": "causal",
            "inner": self.inner.to_wire(),
            "snapshot_version": self.snapshot_version,
            "uow_id": self.uow_id,
        }


def message_from_wire(data: dict):
    kind = data.get("kind")
    if kind == "command":
        return Command.from_wire(data)
    if kind == "saga":
        return SagaCommandEnvelope(
            inner=Command.from_wire(data["inner"]),
            forbidden_states=data["forbidden_states"],
            acquire_state=data["acquire_state"],
        )
    if kind == "causal":
        return CausalCommandEnvelope(
            inner=Command.from_wire(data["inner"]),
            snapshot_version=data["snapshot_version"],
            uow_id=data["uow_id"],
        )
    raise SimulatorError(f"unknown message kind: {kind}")


def inner_command(message) -> Command:
    return message.inner if hasattr(message, "inner") else message


@dataclass
class CommandResponse:
    command_id: int
    outcome: Outcome
    payload: object = None
    error_name: str | None = None
    error_message: str | None = None

    def to_wire(self) -> dict:
        return {
            "command_id": self.command_id,
            "outcome": self.outcome.value,
            "payload": self.payload,
            "error_name": self.error_name,
            "error_message": self.error_message,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "CommandResponse":
        return cls(
            command_id=data["command_id"],
            outcome=Outcome(data["outcome"]),
            payload=data["payload"],
            error_name=data["error_name"],
            error_message=data["error_message"],
        )


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff_ms: float = 20.0
    multiplier: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise InvalidConfig("max_attempts must be >= 1")
        if self.multiplier < 1:
            raise InvalidConfig("multiplier must be >= 1")

    def backoff_ms(self, attempt: int) -> float:
        """Backoff after the attempt-th failure (1-based)."""
        return self.base_backoff_ms * self.multiplier ** (attempt - 1)


class CommandHandlerDecorator:
    """Middleware hook around domain command handling.

    handle() receives the (possibly enveloped) message and a proceed
    callable; implementations may unwrap, reject, or augment before
    delegating inward.
    """

    def handle(self, message, proceed):
        return proceed(message)


# ---------------------------------------------------------------------------
# Transports


class Transport:
    serializing = False

    def dispatch(self, message, execute) -> CommandResponse:
        raise NotImplementedError

    def on_service_registered(self, service: str, execute) -> None:
        pass

    def close(self) -> None:
        pass


class LocalTransport(Transport):
    def dispatch(self, message, execute) -> CommandResponse:
        return execute(message)


class SerializedLocalTransport(Transport):
    """Direct call with a mandatory round-trip through the byte encoding."""

    serializing = True

    def dispatch(self, message, execute) -> CommandResponse:
        wire = serialization.roundtrip(message.to_wire())
        response = execute(message_from_wire(wire))
        return CommandResponse.from_wire(serialization.roundtrip(response.to_wire()))


class RpcTransport(Transport):
    """Point-to-point call with a fixed one-way latency each direction."""

    serializing = True

    def __init__(self, clock: Clock, one_way_ms: float):
        if one_way_ms < 0:
            raise InvalidLatencySpec("rpc one-way latency must be >= 0")
        self._clock = clock
        self.one_way_ms = one_way_ms

    def dispatch(self, message, execute) -> CommandResponse:
        wire = serialization.roundtrip(message.to_wire())
        self._clock.sleep_ms(self.one_way_ms)
        response = execute(message_from_wire(wire))
        self._clock.sleep_ms(self.one_way_ms)
        return CommandResponse.from_wire(serialization.roundtrip(response.to_wire()))


class _ServiceQueue:
    def __init__(self):
        self.items = deque()
        self.lock = threading.Lock()


class BrokerTransport(Transport):
    """Per-service queues drained by poller threads; responses correlate by id."""

    serializing = True

    def __init__(
        self,
        clock: Clock,
        delivery_ms: float,
        poll_ms: float,
        response_timeout_s: float = 10.0,
    ):
        if delivery_ms < 0 or poll_ms <= 0:
            raise InvalidLatencySpec("broker latencies must be >= 0 (poll > 0)")
        self._clock = clock
        self.delivery_ms = delivery_ms
        self.poll_ms = poll_ms
        self.response_timeout_s = response_timeout_s
        self._queues: dict[str, _ServiceQueue] = {}
        self._pollers: list[threading.Thread] = []
        self._pending: dict[int, tuple[threading.Event, list]] = {}
        self._pending_lock = threading.Lock()
        self._stop = threading.Event()

    def on_service_registered(self, service: str, execute) -> None:
        if service in self._queues:
            return
        queue = _ServiceQueue()
        self._queues[service] = queue
        poller = threading.Thread(
            target=self._poll_loop,
            args=(service, queue, execute),
            name=f"broker-poller-{service}",
            daemon=True,
        )
        self._pollers.append(poller)
        poller.start()

    def _poll_loop(self, service, queue, execute):
        while not self._stop.is_set():
            entry = None
            with queue.lock:
                if queue.items:
                    entry = queue.items.popleft()
            if entry is None:
                self._stop.wait(self.poll_ms / 1000.0)
                continue
            visible_at_ns, wire = entry
            remaining_ms = (visible_at_ns - self._clock.now_ns()) / 1e6
            if remaining_ms > 0:
                self._clock.sleep_ms(remaining_ms)
            message = message_from_wire(serialization.decode(wire))
            response = execute(message)
            response_wire = serialization.encode(response.to_wire())
            command_id = response.command_id
            with self._pending_lock:
                waiter = self._pending.get(command_id)
            if waiter is not None:
                event, slot = waiter
                slot.append(response_wire)
                event.set()

    def dispatch(self, message, execute) -> CommandResponse:
        command = inner_command(message)
        service = command.target_service
        queue = self._queues.get(service)
        if queue is None:
            raise ServiceUnavailable(f"no queue for service {service}")
        event = threading.Event()
        slot: list = []
        with self._pending_lock:
            self._pending[command.command_id] = (event, slot)
        try:
            wire = serialization.encode(message.to_wire())
            visible_at = self._clock.now_ns() + int(self.delivery_ms * 1e6)
            with queue.lock:
                queue.items.append((visible_at, wire))
            if not event.wait(self.response_timeout_s):
                raise ServiceUnavailable(
                    f"no response from {service} within {self.response_timeout_s}s"
                )
        finally:
            with self._pending_lock:
                self._pending.pop(command.command_id, None)
        self._clock.sleep_ms(self.delivery_ms)
        return CommandResponse.from_wire(serialization.decode(slot[0]))

    def close(self) -> None:
        self._stop.set()
        for poller in self._pollers:
            poller.join(timeout=1.0)


# ---------------------------------------------------------------------------
# Gateway


class CommandGateway:
    """Dispatch entry point shared by every functionality.

    send() is synchronous and applies the retry policy; send_async() wraps
    send() on a worker pool so retries apply to asynchronous dispatch too.
    """

    def __init__(
        self,
        clock: Clock,
        error_registry: ErrorRegistry,
        retry_policy: RetryPolicy | None = None,
        impairment=None,
        recorder=None,
        async_pool_size: int | None = None,
    ):
        self._clock = clock
        self._errors = error_registry
        self.retry_policy = retry_policy or RetryPolicy()
        self._impairment = impairment
        self._recorder = recorder
        self._handlers: dict[str, tuple] = {}
        self._transport: Transport = LocalTransport()
        self._pool = ThreadPoolExecutor(max_workers=async_pool_size or 8)
        self._id_lock = threading.Lock()
        self._next_id = 1

    # -- configuration ---------------------------------------------------

    def configure_transport(self, mode: str, **latency) -> None:
        self._transport.close()
        if mode == "local":
            transport: Transport = LocalTransport()
        elif mode == "local-serialized":
            transport = SerializedLocalTransport()
        elif mode == "rpc":
            transport = RpcTransport(self._clock, latency.get("one_way_ms", 10.0))
        elif mode == "broker":
            transport = BrokerTransport(
                self._clock,
                latency.get("delivery_ms", 5.0),
                latency.get("poll_ms", 5.0),
                latency.get("response_timeout_s", 10.0),
            )
        else:
            raise InvalidLatencySpec(f"unknown transport mode: {mode}")
        self._transport = transport
        for service in self._handlers:
            transport.on_service_registered(service, self._execute)

    def register_handler(self, service: str, handler, decorators=()) -> None:
        if service in self._handlers:
            raise DuplicateRegistration(f"handler already registered for {service}")
        self._handlers[service] = (handler, tuple(decorators))
        self._transport.on_service_registered(service, self._execute)

    # -- dispatch ----------------------------------------------------------

    def _stamp(self, message) -> Command:
        command = inner_command(message)
        if command.command_id is None:
            with self._id_lock:
                command.command_id = self._next_id
                self._next_id += 1
        if not command.infrastructure:
            if command.functionality is None:
                command.functionality = ambient.functionality
            if command.step is None:
                command.step = ambient.step
        if command.trace_parent is None:
            command.trace_parent = ambient.trace_parent
        return command

    def send(self, message):
        """Dispatch and return the handler payload, retrying infra failures."""
        command = self._stamp(message)
        policy = self.retry_policy
        last_response = None
        for attempt in range(1, policy.max_attempts + 1):
            response = self._transport.dispatch(message, self._execute)
            if response.outcome is Outcome.OK:
                return response.payload
            if response.outcome is Outcome.DOMAIN_ERROR:
                raise self._errors.reconstruct(
                    response.error_name, response.error_message
                )
            last_response = response
            if attempt < policy.max_attempts:
                self._clock.sleep_ms(policy.backoff_ms(attempt))
        return self._fallback_send(command, last_response)

    def _fallback_send(self, command: Command, last_response):
        """Safety net once every retry attempt is exhausted."""
        detail = ""
        if last_response is not None:
            detail = f": last error {last_response.error_name} ({last_response.error_message})"
        raise ServiceUnavailable(
            f"{command.target_service} unavailable after "
            f"{self.retry_policy.max_attempts} attempts{detail}"
        )

    def send_async(self, message) -> Future:
        """send() on a worker pool; the future resolves to send()'s result."""
        self._stamp(message)  # capture ambient context on the caller's thread
        return self._pool.submit(self.send, message)

    # -- server side -------------------------------------------------------

    def _execute(self, message) -> CommandResponse:
        command = inner_command(message)
        registration = self._handlers.get(command.target_service)
        if registration is None:
            return CommandResponse(
                command_id=command.command_id,
                outcome=Outcome.INFRA_ERROR,
                error_name="NoHandler",
                error_message=f"no handler for {command.target_service}",
            )
        handler, decorators = registration
        span_id = None
        try:
            if (
                self._impairment is not None
                and not command.infrastructure
                and command.functionality
                and command.step
            ):
                action = self._impairment.consult(command.functionality, command.step)
                if action is not None:
                    if action.kind == "delay":
                        self._clock.sleep_ms(action.delay_ms)
                    else:
                        raise self._errors.reconstruct(action.error_name, "injected fault")
            if self._recorder is not None and command.trace_parent is not None:
                _, span_id = self._recorder.start_span(
                    command.trace_parent,
                    f"handle:{command.command_type}",
                    {"service": command.target_service},
                )
            result = _compose(decorators, handler)(message)
            return CommandResponse(
                command_id=command.command_id, outcome=Outcome.OK, payload=result
            )
        except DomainError as exc:
            return CommandResponse(
                command_id=command.command_id,
                outcome=Outcome.DOMAIN_ERROR,
                error_name=type(exc).__name__,
                error_message=str(exc),
            )
        except Exception as exc:
            return CommandResponse(
                command_id=command.command_id,
                outcome=Outcome.INFRA_ERROR,
                error_name=type(exc).__name__,
                error_message=str(exc),
            )
        finally:
            if span_id is not None:
                self._recorder.end_span(span_id)

    def close(self) -> None:
        self._transport.close()
        self._pool.shutdown(wait=False, cancel_futures=True)


def _compose(decorators, handler):
    def terminal(message):
        return handler(inner_command(message))

    chain = terminal
    for decorator in reversed(decorators):
        def make(layer, nxt):
            return lambda message: layer.handle(message, nxt)

        chain = make(decorator, chain)
    return chain
