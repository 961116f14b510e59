"""Headless scripted client over TCP.

Script files hold one step per line::

    /1 click          # dispatch eventKind at a view path
    wait 200          # sleep milliseconds
    await-seq 3       # block until the global log reached seq 3

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import asyncio
import contextlib
from dataclasses import dataclass
from typing import Callable, Sequence

from lgmvu.frames import LENGTH_PREFIX, Error, ErrorCode, Frame, decode_frame, encode_frame, with_length
from lgmvu.mvu import AppSpec, parse_path
from lgmvu.protocol import Phase
from lgmvu.runtime import ClientRuntime, connect, handle_server_frame, handle_user_event
from lgmvu.schema import Schema


class ClientError(Exception):
    pass


@dataclass(frozen=True)
class Step:
    kind: str  # "event" | "wait" | "await-seq"
    path: tuple[int, ...] = ()
    event_kind: str = ""
    amount: int = 0


def parse_script(text: str) -> list[Step]:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "wait" and len(parts) == 2:
                steps.append(Step("wait", amount=int(parts[1])))
            elif parts[0] == "await-seq" and len(parts) == 2:
                steps.append(Step("await-seq", amount=int(parts[1])))
            elif len(parts) == 2:
                steps.append(Step("event", parse_path(parts[0]), parts[1]))
            else:
                raise ValueError
        except ValueError:
            raise ClientError(f"script line {lineno}: cannot parse {raw.strip()!r}") from None
    return steps


def dump_state(rt: ClientRuntime) -> str:
    lines = [
        f"local: {rt.local!r}",
        f"global: {rt.global_model!r}",
        f"seq: {rt.applied_seq}",
        "view:",
    ]
    lines += ["  " + line for line in rt.view.outline()]
    return "\n".join(lines) + "\n"


class _Session:
    def __init__(self, rt: ClientRuntime, writer: asyncio.StreamWriter, log: list[tuple[str, bytes]] | None):
        self.rt = rt
        self.writer = writer
        self.changed = asyncio.Event()
        self.log = log
        self.failure: BaseException | None = None

    def send(self, frames: Sequence[Frame]) -> None:
        for frame in frames:
            data = encode_frame(frame)
            if self.log is not None:
                self.log.append(("send", data))
            self.writer.write(with_length(data))

    async def pump(self, reader: asyncio.StreamReader) -> None:
        try:
            while True:
                header = await reader.readexactly(LENGTH_PREFIX.size)
                data = await reader.readexactly(LENGTH_PREFIX.unpack(header)[0])
                if self.log is not None:
                    self.log.append(("recv", data))
                self.rt, out = handle_server_frame(self.rt, decode_frame(data))
                self.send(out)
                self.changed.set()
                if self.rt.sync.phase is Phase.CLOSED:
                    return
        except asyncio.IncompleteReadError:
            self.failure = ClientError("server closed the connection")
        except Exception as exc:  # surfaced to the waiting script
            self.failure = exc
        finally:
            self.changed.set()

    async def wait_until(self, pred: Callable[[ClientRuntime], bool]) -> None:
        while not pred(self.rt):
            self._check()
            self.changed.clear()
            await self.changed.wait()
        self._check()

    def _check(self) -> None:
        if self.rt.sync.phase is Phase.CLOSED:
            err: Error = self.rt.errors[-1]
            try:
                name = ErrorCode(err.code).name
            except ValueError:
                name = str(err.code)
            raise ClientError(f"server error {name}: {err.detail}")
        if self.failure is not None:
            raise ClientError(str(self.failure))


async def run_client(
    app: AppSpec,
    schema: Schema,
    host: str,
    port: int,
    session: str,
    steps: Sequence[Step],
    settle_ms: int = 300,
    timeout: float = 10.0,
    frame_log: list[tuple[str, bytes]] | None = None,
) -> ClientRuntime:
    """Join ``session``, play the script, wait for own submits to echo, settle."""
    reader, writer = await asyncio.open_connection(host, port)
    rt, hello = connect(ClientRuntime.create(app, schema, session))
    sess = _Session(rt, writer, frame_log)
    sess.send(hello)
    pump = asyncio.create_task(sess.pump(reader))

    async def script() -> None:
        await sess.wait_until(lambda r: r.sync.phase is Phase.SYNCED)
        for step in steps:
            if step.kind == "wait":
                await asyncio.sleep(step.amount / 1000)
            elif step.kind == "await-seq":
                await sess.wait_until(lambda r, n=step.amount: r.applied_seq >= n)
            else:
                sess.rt, out = handle_user_event(sess.rt, step.path, step.event_kind)
                sess.send(out)
            await writer.drain()
        await sess.wait_until(lambda r: not r.sync.pending and r.sync.phase is Phase.SYNCED)
        await asyncio.sleep(settle_ms / 1000)
        sess._check()

    try:
        await asyncio.wait_for(script(), timeout)
    except asyncio.TimeoutError:
        raise ClientError(f"timed out after {timeout} s at seq {sess.rt.applied_seq}") from None
    finally:
        pump.cancel()
        with contextlib.suppress(BaseException):
            await pump
        writer.close()
        with contextlib.suppress(Exception):
            await writer.wait_closed()
    return sess.rt
