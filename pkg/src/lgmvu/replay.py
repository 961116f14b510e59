"""Replay a recorded server log through the pure state machines.

A recording made by ``serve --record`` lists every event the sequencer saw
and every frame it emitted.  Replaying the events through a fresh
``server_handle`` must reproduce the emitted frames exactly, and feeding
each client's frames through ``client_handle`` must be protocol-clean and
end at the fold of the log.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from lgmvu import codec
from lgmvu.frames import Frame, decode_frame
from lgmvu.mvu import AppSpec, fold_global
from lgmvu.protocol import (
    DEFAULT_PING_MS,
    ClientFrame,
    ClientSyncState,
    Phase,
    ServerFrame,
    ServerState,
    Tick,
    client_handle,
    recipients,
    server_handle,
)
from lgmvu.schema import Schema, fingerprint


@dataclass
class ReplayResult:
    sessions: dict[str, int] = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)
    events: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems


def replay_record(text: str, app: AppSpec, schema: Schema, ping_ms: int = DEFAULT_PING_MS) -> ReplayResult:
    result = ReplayResult()
    servers: dict[str, ServerState] = {}
    expected: dict[str, list[tuple[int, Frame]]] = defaultdict(list)
    produced: dict[str, list[tuple[int, Frame]]] = defaultdict(list)
    to_client: dict[tuple[str, int], list[Frame]] = defaultdict(list)

    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        kind, session = parts[0], parts[1]
        state = servers.get(session) or ServerState.create(app, schema, ping_ms)
        if kind == "out":
            frame = decode_frame(bytes.fromhex(parts[3]))
            expected[session].append((int(parts[2]), frame))
            to_client[(session, int(parts[2]))].append(frame)
            continue
        if kind == "tick":
            event = Tick(int(parts[2]))
        elif kind == "in":
            event = ClientFrame(int(parts[3]), decode_frame(bytes.fromhex(parts[4])), int(parts[2]))
        else:
            result.problems.append(f"line {lineno}: unknown record kind {kind!r}")
            continue
        result.events += 1
        state, out = server_handle(state, event)
        servers[session] = state
        for item in out:
            produced[session] += [(cid, item.frame) for cid in recipients(state, item)]

    for session, state in servers.items():
        result.sessions[session] = state.seq
        if produced[session] != expected[session]:
            result.problems.append(f"session {session!r}: replayed output differs from the recording")
        msgs = [codec.decode(schema, schema.global_msg, e.payload) for e in state.log]
        fold = codec.encode(schema, schema.global_model, fold_global(app, msgs))
        if fold != state.snapshot():
            result.problems.append(f"session {session!r}: server model is not the fold of its log")

    folds: dict[str, list[bytes]] = {}
    for session, state in servers.items():
        model = app.init_global()
        prefix = [codec.encode(schema, schema.global_model, model)]
        for entry in state.log:
            model = app.update_global(codec.decode(schema, schema.global_msg, entry.payload), model)
            prefix.append(codec.encode(schema, schema.global_model, model))
        folds[session] = prefix

    fp = fingerprint(schema)
    for (session, cid), frames in sorted(to_client.items()):
        sync = ClientSyncState(session, fp)
        model = None
        try:
            for frame in frames:
                step = client_handle(sync, ServerFrame(frame))
                sync = step.state
                for d in step.deliver:
                    if d.snapshot:
                        model = codec.decode(schema, schema.global_model, d.payload)
                    else:
                        model = app.update_global(codec.decode(schema, schema.global_msg, d.payload), model)
        except Exception as exc:
            result.problems.append(f"client {cid} in {session!r}: {exc!r}")
            continue
        if model is None or sync.phase is Phase.JOINING:
            continue  # never welcomed (rejected Hello)
        got = codec.encode(schema, schema.global_model, model)
        if got != folds[session][sync.applied_seq]:
            result.problems.append(f"client {cid} in {session!r}: model at seq {sync.applied_seq} is not the fold")
    return result
