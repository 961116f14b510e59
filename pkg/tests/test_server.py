"""Loopback tests for the TCP session host."""

import asyncio
import contextlib

import pytest

from lgmvu.apps import load_example
from lgmvu.codec import Variant
from lgmvu.frames import (
    LENGTH_PREFIX,
    PROTOCOL_VERSION,
    Error,
    ErrorCode,
    Hello,
    Ping,
    Welcome,
    decode_frame,
    encode_frame,
    with_length,
)
from lgmvu.netclient import ClientError, parse_script, run_client
from lgmvu.replay import replay_record
from lgmvu.schema import fingerprint
from lgmvu.server.sessions import ServeConfig, SessionRegistry, snapshot_stats

pytestmark = pytest.mark.network

FIG7 = load_example("fig7-shape-colour")
COUNTER = load_example("shared-counter")


@contextlib.asynccontextmanager
async def hosted(example, **config):
    registry = SessionRegistry(example.app, example.schema, ServeConfig(bind=("127.0.0.1", 0), **config))
    host, port = await registry.start()
    try:
        yield registry, host, port
    finally:
        await registry.shutdown()


async def read_frame(reader, timeout=2.0):
    header = await asyncio.wait_for(reader.readexactly(4), timeout)
    return decode_frame(await reader.readexactly(LENGTH_PREFIX.unpack(header)[0]))


async def raw_join(host, port, example, session="s"):
    reader, writer = await asyncio.open_connection(host, port)
    writer.write(with_length(encode_frame(Hello(PROTOCOL_VERSION, fingerprint(example.schema), session))))
    welcome = await read_frame(reader)
    assert isinstance(welcome, Welcome)
    return reader, writer, welcome


def test_fig7_two_clients_converge():
    async def main():
        async with hosted(FIG7, ping_ms=200) as (registry, host, port):
            a, b = await asyncio.gather(
                run_client(FIG7.app, FIG7.schema, host, port, "fig7", parse_script("/1 click\nawait-seq 1")),
                run_client(FIG7.app, FIG7.schema, host, port, "fig7", parse_script("/4 click")),
            )
            return a, b, snapshot_stats(registry)

    a, b, stats = asyncio.run(main())
    assert a.global_model == b.global_model == Variant("Square")
    assert (a.local, b.local) == ("gold", "purple")
    assert (stats.sessions, stats.clients, stats.total_seq) == (1, 2, {"fig7": 1})


def test_empty_registry_stats():
    registry = SessionRegistry(FIG7.app, FIG7.schema)
    stats = snapshot_stats(registry)
    assert (stats.sessions, stats.clients, stats.total_seq) == (0, 0, {})


def test_sessions_are_independent():
    n = 4
    script = parse_script("\n".join(["/1 click"] * n))

    async def main():
        async with hosted(COUNTER, ping_ms=500) as (registry, host, port):
            runs = [
                run_client(COUNTER.app, COUNTER.schema, host, port, f"room{r}", script, settle_ms=100)
                for _ in range(3)
                for r in range(3)
            ]
            clients = await asyncio.gather(*runs)
            return clients, registry

    clients, registry = asyncio.run(main())
    for name, sess in registry.sessions.items():
        assert [e.seq for e in sess.state.log] == list(range(1, 3 * n + 1))
        assert sess.state.global_model == 3 * n
    assert sorted(registry.sessions) == ["room0", "room1", "room2"]
    assert snapshot_stats(registry).total_seq == {f"room{r}": 3 * n for r in range(3)}
    # each client saw at least its own submits before leaving
    assert all(rt.applied_seq >= n for rt in clients)


def test_connection_without_hello_is_dropped():
    async def main():
        async with hosted(FIG7, ping_ms=50) as (_, host, port):
            reader, writer = await asyncio.open_connection(host, port)
            data = await asyncio.wait_for(reader.read(), 2.0)
            writer.close()
            return data

    assert asyncio.run(main()) == b""


def test_silent_client_expires():
    async def main():
        async with hosted(FIG7, ping_ms=50) as (registry, host, port):
            reader, writer, welcome = await raw_join(host, port, FIG7)
            frames = []
            while True:
                frame = await read_frame(reader)
                frames.append(frame)
                if isinstance(frame, Error):
                    break
            assert await asyncio.wait_for(reader.read(), 2.0) == b""
            writer.close()
            return frames, dict(registry.sessions["s"].state.clients), dict(registry.sessions["s"].conns)

    frames, clients, conns = asyncio.run(main())
    assert all(isinstance(f, Ping) for f in frames[:-1])
    assert frames[-1].code == ErrorCode.EXPIRED
    assert clients == {} and conns == {}


def test_wrong_fingerprint_is_rejected():
    async def main():
        async with hosted(FIG7) as (_, host, port):
            reader, writer = await asyncio.open_connection(host, port)
            writer.write(with_length(encode_frame(Hello(PROTOCOL_VERSION, bytes(32), "s"))))
            frame = await read_frame(reader)
            rest = await asyncio.wait_for(reader.read(), 2.0)
            writer.close()
            return frame, rest

    frame, rest = asyncio.run(main())
    assert frame.code == ErrorCode.SCHEMA_MISMATCH and rest == b""


def test_oversized_frame():
    async def main():
        async with hosted(FIG7, max_frame=64) as (_, host, port):
            reader, writer, _ = await raw_join(host, port, FIG7)
            writer.write(LENGTH_PREFIX.pack(1000) + bytes(1000))
            frame = await read_frame(reader)
            writer.close()
            return frame

    frame = asyncio.run(main())
    assert frame.code == ErrorCode.FRAME_TOO_LARGE


def test_shutdown_notifies_clients():
    async def main():
        registry = SessionRegistry(FIG7.app, FIG7.schema, ServeConfig(bind=("127.0.0.1", 0)))
        host, port = await registry.start()
        reader, writer, _ = await raw_join(host, port, FIG7)
        await registry.shutdown()
        frame = await read_frame(reader)
        writer.close()
        return frame

    assert asyncio.run(main()).code == ErrorCode.SHUTDOWN


def test_client_reports_schema_mismatch():
    async def main():
        async with hosted(FIG7) as (_, host, port):
            await run_client(COUNTER.app, COUNTER.schema, host, port, "s", [], timeout=3)

    with pytest.raises(ClientError, match="SCHEMA_MISMATCH"):
        asyncio.run(main())


def test_recording_replays_cleanly(tmp_path):
    record = tmp_path / "record.log"

    async def main():
        async with hosted(FIG7, ping_ms=100, record=record) as (_, host, port):
            await asyncio.gather(
                run_client(FIG7.app, FIG7.schema, host, port, "fig7", parse_script("/1 click\nawait-seq 1")),
                run_client(FIG7.app, FIG7.schema, host, port, "fig7", parse_script("/4 click")),
            )

    asyncio.run(main())
    text = record.read_text()
    result = replay_record(text, FIG7.app, FIG7.schema, ping_ms=100)
    assert result.ok, result.problems
    assert result.sessions == {"fig7": 1}
    # tampering with an emitted frame is noticed
    lines = text.splitlines()
    i = next(i for i, line in enumerate(lines) if line.startswith("out ") and line.endswith("0001"))
    lines[i] = lines[i][:-4] + "0000"
    assert not replay_record("\n".join(lines), FIG7.app, FIG7.schema, ping_ms=100).ok
