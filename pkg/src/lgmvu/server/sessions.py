"""Session hosting over TCP.

Each session owns one :class:`ServerState`; all events for a session pass
through an asyncio queue drained by a single actor task, so
``server_handle`` calls for one session never interleave.  Streams carry
frames behind a 4-byte big-endian length prefix.
"""

from __future__ import annotations

import asyncio
import contextlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

from lgmvu.frames import (
    LENGTH_PREFIX,
    Error,
    ErrorCode,
    Frame,
    FrameError,
    Hello,
    decode_frame,
    encode_frame,
    with_length,
)
from lgmvu.mvu import AppSpec
from lgmvu.protocol import (
    DEFAULT_PING_MS,
    LIVENESS_INTERVALS,
    ClientFrame,
    ServerState,
    Tick,
    recipients,
    server_handle,
)
from lgmvu.schema import Schema

log = logging.getLogger(__name__)

DEFAULT_MAX_FRAME = 1 << 20
CLOSING_ERRORS = {
    ErrorCode.SCHEMA_MISMATCH,
    ErrorCode.BAD_VERSION,
    ErrorCode.NOT_JOINED,
    ErrorCode.EXPIRED,
    ErrorCode.FRAME_TOO_LARGE,
    ErrorCode.SHUTDOWN,
}


@dataclass
class ServeConfig:
    bind: tuple[str, int] = ("127.0.0.1", 7777)
    ping_ms: int = DEFAULT_PING_MS
    max_frame: int = DEFAULT_MAX_FRAME
    record: Path | None = None


class Recorder:
    """Line log of every event fed to and frame emitted by the sequencer.

    ``in <session> <now> <client> <hex>``, ``tick <session> <now>`` and
    ``out <session> <client> <hex>`` lines, in processing order.
    """

    def __init__(self, stream: IO[str]):
        self.stream = stream

    def event(self, session: str, event: ClientFrame | Tick) -> None:
        if isinstance(event, Tick):
            self.stream.write(f"tick {session} {event.now}\n")
        else:
            self.stream.write(f"in {session} {event.now} {event.sender} {encode_frame(event.frame).hex()}\n")

    def output(self, session: str, to: int, frame: Frame) -> None:
        self.stream.write(f"out {session} {to} {encode_frame(frame).hex()}\n")
        self.stream.flush()


class Connection:
    def __init__(self, writer: asyncio.StreamWriter):
        self.writer = writer
        self.closed = False

    def send(self, frame: Frame) -> None:
        if not self.closed:
            self.writer.write(with_length(encode_frame(frame)))

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            with contextlib.suppress(Exception):
                self.writer.close()


@dataclass
class Session:
    name: str
    state: ServerState
    conns: dict[int, Connection] = field(default_factory=dict)
    queue: asyncio.Queue = field(default_factory=asyncio.Queue)
    next_id: int = 1
    recorder: Recorder | None = None
    task: asyncio.Task | None = None
    _busy: bool = False

    def allocate(self, conn: Connection) -> int:
        cid = self.next_id
        self.next_id += 1
        self.conns[cid] = conn
        return cid

    async def run(self) -> None:
        while True:
            event = await self.queue.get()
            if event is None:
                return
            self.step(event)

    def step(self, event: ClientFrame | Tick) -> None:
        assert not self._busy, f"re-entrant server_handle on session {self.name!r}"
        self._busy = True
        try:
            if self.recorder:
                self.recorder.event(self.name, event)
            self.state, out = server_handle(self.state, event)
            for item in out:
                for cid in recipients(self.state, item):
                    conn = self.conns.get(cid)
                    if self.recorder:
                        self.recorder.output(self.name, cid, item.frame)
                    if conn is None:
                        continue
                    conn.send(item.frame)
                    if isinstance(item.frame, Error) and item.frame.code in CLOSING_ERRORS:
                        conn.close()
                        self.conns.pop(cid, None)
        finally:
            self._busy = False


@dataclass(frozen=True)
class Stats:
    sessions: int
    clients: int
    total_seq: dict[str, int]


class SessionRegistry:
    def __init__(self, app: AppSpec, schema: Schema, config: ServeConfig | None = None):
        self.app = app
        self.schema = schema
        self.config = config or ServeConfig()
        self.sessions: dict[str, Session] = {}
        self.started = time.monotonic()
        self.server: asyncio.base_events.Server | None = None
        self._tick_task: asyncio.Task | None = None
        self._record_stream: IO[str] | None = None
        self.recorder: Recorder | None = None

    def now(self) -> int:
        return int((time.monotonic() - self.started) * 1000)

    def session(self, name: str) -> Session:
        sess = self.sessions.get(name)
        if sess is None:
            state = ServerState.create(self.app, self.schema, self.config.ping_ms)
            sess = Session(name, state, recorder=self.recorder)
            sess.task = asyncio.get_running_loop().create_task(sess.run())
            # publish only once fully built; readers never see a half-made session
            self.sessions = {**self.sessions, name: sess}
        return sess

    async def start(self) -> tuple[str, int]:
        if self.config.record:
            self._record_stream = open(self.config.record, "w", encoding="utf-8")
            self.recorder = Recorder(self._record_stream)
        host, port = self.config.bind
        self.server = await asyncio.start_server(self._handle_conn, host, port)
        self._tick_task = asyncio.get_running_loop().create_task(self._ticker())
        return self.server.sockets[0].getsockname()[:2]

    async def _ticker(self) -> None:
        while True:
            await asyncio.sleep(self.config.ping_ms / 1000)
            now = self.now()
            for sess in list(self.sessions.values()):
                sess.queue.put_nowait(Tick(now))

    async def _read_frame(self, reader: asyncio.StreamReader, conn: Connection) -> Frame | None:
        try:
            header = await reader.readexactly(LENGTH_PREFIX.size)
        except (asyncio.IncompleteReadError, ConnectionError):
            return None
        (size,) = LENGTH_PREFIX.unpack(header)
        if size > self.config.max_frame:
            conn.send(Error(int(ErrorCode.FRAME_TOO_LARGE), f"{size} > {self.config.max_frame}"))
            return None
        try:
            return decode_frame(await reader.readexactly(size))
        except (asyncio.IncompleteReadError, ConnectionError, FrameError):
            return None

    async def _handle_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = Connection(writer)
        sess: Session | None = None
        cid = 0
        try:
            hello_window = LIVENESS_INTERVALS * self.config.ping_ms / 1000
            try:
                first = await asyncio.wait_for(self._read_frame(reader, conn), hello_window)
            except asyncio.TimeoutError:
                first = None
            if first is None:
                return
            if not isinstance(first, Hello):
                conn.send(Error(int(ErrorCode.NOT_JOINED), "first frame must be Hello"))
                return
            sess = self.session(first.session)
            cid = sess.allocate(conn)
            sess.queue.put_nowait(ClientFrame(cid, first, self.now()))
            while not conn.closed:
                frame = await self._read_frame(reader, conn)
                if frame is None:
                    return
                sess.queue.put_nowait(ClientFrame(cid, frame, self.now()))
        finally:
            with contextlib.suppress(Exception):
                await writer.drain()
            conn.close()
            if sess is not None and sess.conns.get(cid) is conn:
                del sess.conns[cid]

    async def shutdown(self) -> None:
        if self._tick_task:
            self._tick_task.cancel()
        if self.server:
            self.server.close()
        for sess in self.sessions.values():
            sess.queue.put_nowait(None)
            if sess.task:
                with contextlib.suppress(Exception):
                    await sess.task
            for conn in list(sess.conns.values()):
                conn.send(Error(int(ErrorCode.SHUTDOWN), "server shutting down"))
                with contextlib.suppress(Exception):
                    await conn.writer.drain()
                conn.close()
            sess.conns.clear()
        if self.server:
            with contextlib.suppress(Exception):
                await asyncio.wait_for(self.server.wait_closed(), 2)
        if self._record_stream:
            self._record_stream.close()


def snapshot_stats(registry: SessionRegistry) -> Stats:
    sessions = registry.sessions
    return Stats(
        sessions=len(sessions),
        clients=sum(len(s.state.clients) for s in sessions.values()),
        total_seq={name: s.state.seq for name, s in sorted(sessions.items())},
    )
