"""Pure sequencer (server) and replica (client) state machines.

Both halves are transition functions ``handle(state, event) -> (state', ...)``
over immutable state.  The server assigns dense sequence numbers to global
messages in arrival order and broadcasts each as an :class:`Apply`; clients
deliver Applies strictly in order and fall back to a full snapshot whenever
they detect a gap.  Server pings carry the current sequence number as their
nonce, which lets an idle client notice a lost tail Apply.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping, NamedTuple, Sequence, Union, overload

from lgmvu import codec
from lgmvu.frames import (
    PROTOCOL_VERSION,
    Apply,
    Error,
    ErrorCode,
    Frame,
    Hello,
    Ping,
    Pong,
    ResyncReq,
    ResyncSnapshot,
    Submit,
    Welcome,
)
from lgmvu.mvu import AppFault, AppSpec, step_global
from lgmvu.schema import Schema, fingerprint

ALL = "*"
DEFAULT_PING_MS = 5000
LIVENESS_INTERVALS = 3


class ProtocolViolation(Exception):
    pass


@dataclass(frozen=True)
class LogEntry:
    seq: int
    origin: int
    payload: bytes


class Log(Sequence[LogEntry]):
    """Append-only log with value semantics.

    ``append`` returns a new log; when called on the newest version it shares
    storage with the original, so appends are amortised O(1) while older
    versions keep seeing only their own prefix.
    """

    __slots__ = ("_items", "_n")

    def __init__(self, items: list[LogEntry] | None = None, n: int | None = None):
        self._items = items if items is not None else []
        self._n = len(self._items) if n is None else n

    def append(self, entry: LogEntry) -> Log:
        if entry.seq != self._n + 1:
            raise ValueError(f"log entry seq {entry.seq} does not follow {self._n}")
        if len(self._items) == self._n:
            self._items.append(entry)
            return Log(self._items, self._n + 1)
        return Log(self._items[: self._n] + [entry])

    def __len__(self) -> int:
        return self._n

    @overload
    def __getitem__(self, i: int) -> LogEntry: ...
    @overload
    def __getitem__(self, i: slice) -> list[LogEntry]: ...
    def __getitem__(self, i):
        if isinstance(i, slice):
            return self._items[: self._n][i]
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        return self._items[i]

    def __iter__(self) -> Iterator[LogEntry]:
        for i in range(self._n):
            yield self._items[i]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Log):
            return list(self) == list(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"Log(len={self._n})"


# -- server ------------------------------------------------------------------


@dataclass(frozen=True)
class ClientInfo:
    session: str
    last_seen: int
    max_msg_id: int = 0


@dataclass(frozen=True)
class ClientFrame:
    sender: int
    frame: Frame
    now: int | None = None


@dataclass(frozen=True)
class Tick:
    now: int


@dataclass(frozen=True)
class Outgoing:
    to: int | str
    frame: Frame


@dataclass(frozen=True)
class ServerState:
    app: AppSpec
    schema: Schema
    schema_fingerprint: bytes
    global_model: Any
    log: Log = field(default_factory=Log)
    clients: Mapping[int, ClientInfo] = field(default_factory=dict)
    clock: int = 0
    ping_interval_ms: int = DEFAULT_PING_MS

    @classmethod
    def create(cls, app: AppSpec, schema: Schema, ping_interval_ms: int = DEFAULT_PING_MS) -> ServerState:
        return cls(app, schema, fingerprint(schema), app.init_global(), ping_interval_ms=ping_interval_ms)

    @property
    def seq(self) -> int:
        return len(self.log)

    def snapshot(self) -> bytes:
        return codec.encode(self.schema, self.schema.global_model, self.global_model)


def _reply(sender: int, code: ErrorCode, detail: str) -> list[Outgoing]:
    return [Outgoing(sender, Error(int(code), detail))]


def server_handle(state: ServerState, event: ClientFrame | Tick) -> tuple[ServerState, list[Outgoing]]:
    if isinstance(event, Tick):
        return _server_tick(state, event.now)
    sender, frame = event.sender, event.frame
    now = state.clock if event.now is None else max(state.clock, event.now)
    info = state.clients.get(sender)

    if isinstance(frame, Hello):
        if frame.protocol_version != PROTOCOL_VERSION:
            return state, _reply(sender, ErrorCode.BAD_VERSION, f"server speaks version {PROTOCOL_VERSION}")
        if frame.fingerprint != state.schema_fingerprint:
            return state, _reply(sender, ErrorCode.SCHEMA_MISMATCH, state.schema_fingerprint.hex())
        info = ClientInfo(frame.session, now, info.max_msg_id if info else 0)
        state = replace(state, clients={**state.clients, sender: info}, clock=now)
        return state, [Outgoing(sender, Welcome(sender, state.seq, state.snapshot()))]

    if info is None:
        return state, _reply(sender, ErrorCode.NOT_JOINED, f"send Hello first (got {type(frame).__name__})")

    info = replace(info, last_seen=now)
    state = replace(state, clients={**state.clients, sender: info}, clock=now)

    if isinstance(frame, Submit):
        return _server_submit(state, sender, info, frame)
    if isinstance(frame, ResyncReq):
        return state, [Outgoing(sender, ResyncSnapshot(state.seq, state.snapshot()))]
    if isinstance(frame, Ping):
        return state, [Outgoing(sender, Pong(frame.nonce))]
    if isinstance(frame, (Pong, Error)):
        return state, []
    return state, _reply(sender, ErrorCode.PROTOCOL_VIOLATION, f"clients may not send {type(frame).__name__}")


def _server_submit(state: ServerState, sender: int, info: ClientInfo, frame: Submit) -> tuple[ServerState, list[Outgoing]]:
    # client message ids are increasing, so the high-water mark subsumes any dedup window
    if frame.client_msg_id <= info.max_msg_id:
        return state, _reply(sender, ErrorCode.DUPLICATE, str(frame.client_msg_id))
    try:
        msg = codec.decode(state.schema, state.schema.global_msg, frame.payload)
    except codec.DecodeError as exc:
        return state, _reply(sender, ErrorCode.BAD_PAYLOAD, f"{frame.client_msg_id} {exc}")
    try:
        new_global = step_global(state.app, msg, state.global_model)
    except AppFault as exc:
        return state, _reply(sender, ErrorCode.APP_FAULT, f"{frame.client_msg_id} {exc.cause!r}")
    entry = LogEntry(state.seq + 1, sender, frame.payload)
    clients = {**state.clients, sender: replace(info, max_msg_id=frame.client_msg_id)}
    state = replace(state, global_model=new_global, log=state.log.append(entry), clients=clients)
    return state, [Outgoing(ALL, Apply(entry.seq, entry.origin, entry.payload))]


def _server_tick(state: ServerState, now: int) -> tuple[ServerState, list[Outgoing]]:
    window = LIVENESS_INTERVALS * state.ping_interval_ms
    out: list[Outgoing] = []
    alive: dict[int, ClientInfo] = {}
    for cid in sorted(state.clients):
        info = state.clients[cid]
        if now - info.last_seen > window:
            out.append(Outgoing(cid, Error(int(ErrorCode.EXPIRED), f"silent for {now - info.last_seen} ms")))
        else:
            alive[cid] = info
            out.append(Outgoing(cid, Ping(state.seq)))
    return replace(state, clients=alive, clock=max(state.clock, now)), out


def recipients(state: ServerState, out: Outgoing) -> list[int]:
    """Concrete client ids for an outgoing frame, expanding broadcasts."""
    return sorted(state.clients) if out.to == ALL else [out.to]


# -- client ------------------------------------------------------------------


class Phase(enum.Enum):
    JOINING = "joining"
    SYNCED = "synced"
    RESYNCING = "resyncing"
    CLOSED = "closed"


@dataclass(frozen=True)
class ClientSyncState:
    session: str
    schema_fingerprint: bytes
    phase: Phase = Phase.JOINING
    client_id: int | None = None
    applied_seq: int = 0
    # (clientMsgId, payload), oldest first
    pending: tuple[tuple[int, bytes], ...] = ()
    next_msg_id: int = 1


@dataclass(frozen=True)
class ServerFrame:
    frame: Frame


@dataclass(frozen=True)
class SubmitRequest:
    payload: bytes


@dataclass(frozen=True)
class Connect:
    pass


@dataclass(frozen=True)
class Delivery:
    """A global update for the runtime: a message, or a full snapshot."""

    seq: int
    payload: bytes
    snapshot: bool = False
    origin: int | None = None


class ClientStep(NamedTuple):
    state: ClientSyncState
    send: list[Frame]
    deliver: list[Delivery]
    errors: list[Error]


ClientEvent = Union[ServerFrame, SubmitRequest, Tick, Connect]

FATAL_ERRORS = {
    ErrorCode.SCHEMA_MISMATCH,
    ErrorCode.NOT_JOINED,
    ErrorCode.FRAME_TOO_LARGE,
    ErrorCode.SHUTDOWN,
    ErrorCode.BAD_VERSION,
    ErrorCode.EXPIRED,
    ErrorCode.PROTOCOL_VIOLATION,
}


def _submits(pending: Sequence[tuple[int, bytes]]) -> list[Frame]:
    return [Submit(mid, payload) for mid, payload in pending]


def _drop_pending(pending: tuple[tuple[int, bytes], ...], msg_id: int) -> tuple[tuple[int, bytes], ...]:
    return tuple(p for p in pending if p[0] != msg_id)


def client_handle(state: ClientSyncState, event: ClientEvent) -> ClientStep:
    if isinstance(event, Connect):
        return ClientStep(
            replace(state, phase=Phase.JOINING),
            [Hello(PROTOCOL_VERSION, state.schema_fingerprint, state.session)],
            [],
            [],
        )
    if isinstance(event, Tick):
        return ClientStep(state, [], [], [])
    if isinstance(event, SubmitRequest):
        mid = state.next_msg_id
        state = replace(state, pending=state.pending + ((mid, event.payload),), next_msg_id=mid + 1)
        send = [] if state.phase in (Phase.JOINING, Phase.CLOSED) else [Submit(mid, event.payload)]
        return ClientStep(state, send, [], [])
    return _client_frame(state, event.frame)


def _client_frame(state: ClientSyncState, frame: Frame) -> ClientStep:
    phase = state.phase
    if isinstance(frame, Error):
        return _client_error(state, frame)
    if phase is Phase.CLOSED:
        return ClientStep(state, [], [], [])
    if phase is Phase.JOINING and not isinstance(frame, Welcome):
        raise ProtocolViolation(f"{type(frame).__name__} received before Welcome")

    if isinstance(frame, Welcome):
        if phase is not Phase.JOINING:
            raise ProtocolViolation("Welcome received after joining")
        state = replace(state, phase=Phase.SYNCED, client_id=frame.client_id, applied_seq=frame.seq)
        return ClientStep(state, _submits(state.pending), [Delivery(frame.seq, frame.snapshot, snapshot=True)], [])

    if isinstance(frame, Apply):
        if phase is Phase.RESYNCING or frame.seq <= state.applied_seq:
            return ClientStep(state, [], [], [])
        if frame.seq > state.applied_seq + 1:
            return ClientStep(replace(state, phase=Phase.RESYNCING), [ResyncReq(state.applied_seq)], [], [])
        pending = state.pending
        if frame.origin == state.client_id:
            # per-client FIFO: the oldest pending entry with this payload is the one sequenced;
            # none matches when a DUPLICATE reply already cleared it
            match = next((mid for mid, p in pending if p == frame.payload), None)
            if match is not None:
                pending = _drop_pending(pending, match)
        state = replace(state, applied_seq=frame.seq, pending=pending)
        return ClientStep(state, [], [Delivery(frame.seq, frame.payload, origin=frame.origin)], [])

    if isinstance(frame, ResyncSnapshot):
        if frame.seq < state.applied_seq:
            return ClientStep(replace(state, phase=Phase.SYNCED), [], [], [])
        state = replace(state, phase=Phase.SYNCED, applied_seq=frame.seq)
        return ClientStep(state, _submits(state.pending), [Delivery(frame.seq, frame.snapshot, snapshot=True)], [])

    if isinstance(frame, Ping):
        send: list[Frame] = [Pong(frame.nonce)]
        if phase is Phase.SYNCED and frame.nonce > state.applied_seq:
            send.append(ResyncReq(state.applied_seq))
            state = replace(state, phase=Phase.RESYNCING)
        return ClientStep(state, send, [], [])

    if isinstance(frame, Pong):
        return ClientStep(state, [], [], [])
    raise ProtocolViolation(f"servers may not send {type(frame).__name__}")


def _client_error(state: ClientSyncState, frame: Error) -> ClientStep:
    try:
        code = ErrorCode(frame.code)
    except ValueError:
        code = None
    if code in FATAL_ERRORS or code is None:
        return ClientStep(replace(state, phase=Phase.CLOSED), [], [], [frame])
    # DUPLICATE / BAD_PAYLOAD / APP_FAULT name the rejected clientMsgId first
    head = frame.detail.split(" ", 1)[0]
    if head.isdigit():
        state = replace(state, pending=_drop_pending(state.pending, int(head)))
    if state.phase is Phase.JOINING:
        raise ProtocolViolation(f"error {frame.code} received before Welcome")
    return ClientStep(state, [], [], [frame])
