"""Deterministic discrete-event simulation of one server and N clients.

Time is virtual (integer milliseconds).  Events are processed in
``(time, insertion order)`` order and every random draw comes from a
counter-based generator keyed by the config seed, so a config always
produces the same trace.  Each directed link is FIFO; Apply frames from the
server may be dropped to exercise the resync path.
"""

from __future__ import annotations

import hashlib
import heapq
import struct
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from lgmvu import codec
from lgmvu.apps import ExampleApp, ScriptLine
from lgmvu.frames import Apply, Error, Frame, Ping, Pong, decode_frame, encode_frame
from lgmvu.mvu import AppFault, AppSpec, NoHandler, NoSuchNode, ViewTree, format_path, parse_path
from lgmvu.protocol import (
    DEFAULT_PING_MS,
    ClientFrame,
    Phase,
    ServerState,
    Tick,
    recipients,
    server_handle,
)
from lgmvu.runtime import ClientRuntime, connect, handle_server_frame, handle_user_event
from lgmvu.schema import Schema


class ConfigError(ValueError):
    pass


class CounterRng:
    """Counter-mode generator: draw ``i`` is ``blake2b(seed || i)``."""

    def __init__(self, seed: int):
        self.seed = seed & 0xFFFFFFFFFFFFFFFF
        self.counter = 0

    def next_u64(self) -> int:
        block = struct.pack(">QQ", self.seed, self.counter)
        self.counter += 1
        return int.from_bytes(hashlib.blake2b(block, digest_size=8).digest(), "big")

    def random(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]``."""
        span = hi - lo + 1
        limit = (1 << 64) - (1 << 64) % span
        while True:
            x = self.next_u64()
            if x < limit:
                return lo + x % span


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    clients: int = 2
    latency_min: int = 0
    latency_max: int = 0
    drop_prob: float = 0.0
    script: tuple[ScriptLine, ...] = ()
    duration_ms: int = 1000
    ping_ms: int = DEFAULT_PING_MS
    # client -> join time; clients not listed join at t=0
    join_ms: Mapping[int, int] = field(default_factory=dict)
    # (client, seq) Apply frames that are always lost
    force_drops: frozenset[tuple[int, int]] = frozenset()
    session: str = "sim"

    def __post_init__(self) -> None:
        if self.clients < 1:
            raise ConfigError("need at least one client")
        if not 0 <= self.latency_min <= self.latency_max:
            raise ConfigError(f"bad latency range {self.latency_min}..{self.latency_max}")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ConfigError(f"drop probability {self.drop_prob} outside [0, 1)")
        if self.ping_ms <= 0:
            raise ConfigError("ping interval must be positive")
        for line in self.script:
            if not 0 <= line.at_ms <= self.duration_ms:
                raise ConfigError(f"script time {line.at_ms} outside 0..{self.duration_ms}")
            if not 1 <= line.client <= self.clients:
                raise ConfigError(f"script names client {line.client} of {self.clients}")
        for c, t in self.join_ms.items():
            if not 1 <= c <= self.clients or not 0 <= t <= self.duration_ms:
                raise ConfigError(f"bad join entry {c} at {t}")


def quiescent_duration(script: Iterable[ScriptLine], latency_max: int, ping_ms: int, join_ms: Iterable[int] = ()) -> int:
    """A duration long enough for every in-flight frame and resync to settle.

    Last activity + 10 max latencies, plus two ping intervals so a lost tail
    Apply is noticed by a ping and repaired.
    """
    last = max([line.at_ms for line in script] + list(join_ms) + [0])
    return last + 10 * max(latency_max, 1) + 2 * ping_ms + 10 * max(latency_max, 1)


@dataclass(frozen=True)
class TraceEvent:
    t_ms: int
    actor: str
    description: str
    state_digest: str

    def line(self) -> str:
        return f"{self.t_ms:08d} {self.actor:<9} {self.description} #{self.state_digest}"


@dataclass(frozen=True)
class ClientSnapshot:
    local: Any
    global_model: Any
    applied_seq: int
    phase: Phase
    view: ViewTree


@dataclass
class SimTrace:
    config: SimConfig
    app: AppSpec
    schema: Schema
    events: list[TraceEvent]
    server: ServerState
    clients: dict[int, ClientRuntime]
    timeline: dict[int, list[tuple[int, ClientSnapshot]]]
    server_timeline: list[tuple[int, int]]
    quiescent: bool
    unroutable: int = 0

    def text(self) -> str:
        lines = [f"# lgmvu sim trace app={self.app.name} seed={self.config.seed} clients={self.config.clients}"]
        lines += [e.line() for e in self.events]
        lines.append(f"# final server seq={self.server.seq} digest={_server_digest(self.schema, self.server)}")
        for cid in sorted(self.clients):
            rt = self.clients[cid]
            lines.append(
                f"# final client{cid} seq={rt.applied_seq} phase={rt.sync.phase.value} "
                f"digest={_client_digest(self.schema, rt)}"
            )
        lines.append(f"# quiescent={str(self.quiescent).lower()}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()


def _h(*parts: bytes) -> str:
    return hashlib.sha256(b"\x00".join(parts)).hexdigest()[:12]


def _client_digest(schema: Schema, rt: ClientRuntime) -> str:
    g = codec.encode(schema, schema.global_model, rt.global_model)
    return _h(repr(rt.local).encode(), g, str(rt.applied_seq).encode(), rt.sync.phase.value.encode())


def _server_digest(schema: Schema, state: ServerState) -> str:
    return _h(str(state.seq).encode(), state.snapshot())


def describe(frame: Frame) -> str:
    name = type(frame).__name__
    if isinstance(frame, Apply):
        return f"{name} seq={frame.seq} origin={frame.origin} payload={frame.payload.hex()}"
    parts = []
    for key, value in vars(frame).items():
        if isinstance(value, bytes):
            value = value.hex() if len(value) <= 16 else f"<{len(value)}B {hashlib.sha256(value).hexdigest()[:8]}>"
        parts.append(f"{key}={value}")
    return f"{name} " + " ".join(parts)


_JOIN, _INPUT, _TO_SERVER, _TO_CLIENT, _TICK = range(5)


class _Sim:
    def __init__(self, config: SimConfig, app: AppSpec, schema: Schema):
        self.config = config
        self.app = app
        self.schema = schema
        self.rng = CounterRng(config.seed)
        self.queue: list[tuple[int, int, int, Any]] = []
        self.order = 0
        self.link_clock: dict[tuple[int, int], int] = {}
        self.server = ServerState.create(app, schema, config.ping_ms)
        self.clients = {c: ClientRuntime.create(app, schema, config.session) for c in range(1, config.clients + 1)}
        self.events: list[TraceEvent] = []
        self.timeline = {c: [(0, self._snap(c))] for c in self.clients}
        self.server_timeline = [(0, 0)]
        self.unroutable = 0

    def push(self, t: int, kind: int, data: Any) -> None:
        heapq.heappush(self.queue, (t, self.order, kind, data))
        self.order += 1

    def send(self, now: int, src: int, dst: int, frame: Frame) -> None:
        """Queue a frame on the FIFO link ``src -> dst`` (0 is the server)."""
        arrival = now + self.rng.randint(self.config.latency_min, self.config.latency_max)
        arrival = max(arrival, self.link_clock.get((src, dst), 0))
        self.link_clock[(src, dst)] = arrival
        data = encode_frame(frame)
        if dst == 0:
            self.push(arrival, _TO_SERVER, (src, data))
        else:
            self.push(arrival, _TO_CLIENT, (dst, data))

    def record(self, t: int, actor: str, description: str, digest: str) -> None:
        self.events.append(TraceEvent(t, actor, description, digest))

    def _snap(self, c: int) -> ClientSnapshot:
        rt = self.clients[c]
        return ClientSnapshot(rt.local, rt.global_model, rt.applied_seq, rt.sync.phase, rt.view)

    def client_changed(self, t: int, c: int, description: str) -> None:
        self.timeline[c].append((t, self._snap(c)))
        self.record(t, f"client{c}", description, _client_digest(self.schema, self.clients[c]))

    def client_sends(self, t: int, c: int, frames: list[Frame]) -> None:
        for frame in frames:
            self.send(t, c, 0, frame)

    def run(self) -> SimTrace:
        cfg = self.config
        for c in self.clients:
            self.push(cfg.join_ms.get(c, 0), _JOIN, c)
        for line in sorted(cfg.script, key=lambda s: s.at_ms):
            self.push(line.at_ms, _INPUT, line)
        self.push(cfg.ping_ms, _TICK, None)

        while self.queue and self.queue[0][0] <= cfg.duration_ms:
            t, _, kind, data = heapq.heappop(self.queue)
            if kind == _JOIN:
                self.clients[data], frames = connect(self.clients[data])
                self.client_changed(t, data, "join")
                self.client_sends(t, data, frames)
            elif kind == _INPUT:
                self.on_input(t, data)
            elif kind == _TO_SERVER:
                self.on_server_frame(t, *data)
            elif kind == _TO_CLIENT:
                self.on_client_frame(t, *data)
            elif kind == _TICK:
                self.server, out = server_handle(self.server, Tick(t))
                self.record(t, "server", "tick", _server_digest(self.schema, self.server))
                self.dispatch(t, out)
                if t + cfg.ping_ms <= cfg.duration_ms:
                    self.push(t + cfg.ping_ms, _TICK, None)

        in_flight = any(self._pending_work(kind, data) for _, _, kind, data in self.queue)
        settled = all(
            rt.sync.phase in (Phase.SYNCED, Phase.CLOSED) and not rt.queued for rt in self.clients.values()
        )
        return SimTrace(
            cfg,
            self.app,
            self.schema,
            self.events,
            self.server,
            self.clients,
            self.timeline,
            self.server_timeline,
            quiescent=not in_flight and settled,
            unroutable=self.unroutable,
        )

    def _pending_work(self, kind: int, data: Any) -> bool:
        """Whether a queued event could still change some state."""
        if kind == _TICK:
            return False
        if kind == _TO_SERVER:
            return not isinstance(decode_frame(data[1]), Pong)
        if kind == _TO_CLIENT:
            frame = decode_frame(data[1])
            return not (isinstance(frame, Ping) and frame.nonce <= self.clients[data[0]].applied_seq)
        return True

    def on_input(self, t: int, line: ScriptLine) -> None:
        c = line.client
        where = f"{format_path(line.path)} {line.event_kind}"
        try:
            self.clients[c], frames = handle_user_event(self.clients[c], line.path, line.event_kind)
        except (NoSuchNode, NoHandler) as exc:
            self.unroutable += 1
            self.record(t, f"client{c}", f"ScriptEventUnroutable {where}: {exc}", "-")
            return
        except (AppFault, codec.TypeMismatch) as exc:
            self.record(t, f"client{c}", f"AppFault {where}: {exc}", "-")
            return
        self.client_changed(t, c, f"user {where} submits={len(frames)}")
        self.client_sends(t, c, frames)

    def on_server_frame(self, t: int, sender: int, data: bytes) -> None:
        frame = decode_frame(data)
        self.server, out = server_handle(self.server, ClientFrame(sender, frame, t))
        self.record(t, "server", f"recv client{sender} {describe(frame)}", _server_digest(self.schema, self.server))
        if self.server.seq != self.server_timeline[-1][1]:
            self.server_timeline.append((t, self.server.seq))
        self.dispatch(t, out)

    def dispatch(self, t: int, out) -> None:
        for item in out:
            for dst in recipients(self.server, item):
                if isinstance(item.frame, Apply):
                    lost = (dst, item.frame.seq) in self.config.force_drops
                    if self.config.drop_prob > 0 and self.rng.random() < self.config.drop_prob:
                        lost = True
                    if lost:
                        self.record(t, "net", f"drop Apply seq={item.frame.seq} to client{dst}", "-")
                        continue
                self.send(t, 0, dst, item.frame)

    def on_client_frame(self, t: int, c: int, data: bytes) -> None:
        frame = decode_frame(data)
        self.clients[c], frames = handle_server_frame(self.clients[c], frame)
        note = ""
        if isinstance(frame, Error):
            note = " (reported)"
        self.client_changed(t, c, f"recv {describe(frame)}{note}")
        self.client_sends(t, c, frames)


def run_sim(config: SimConfig, app: AppSpec, schema: Schema) -> SimTrace:
    return _Sim(config, app, schema).run()


# -- convergence ---------------------------------------------------------------


@dataclass(frozen=True)
class Convergence:
    converged: bool
    first_divergence: int | None
    details: tuple[str, ...]


def fold_prefixes(trace: SimTrace) -> list[bytes]:
    """Encoded global model after each log prefix, from a plain fold."""
    schema, app = trace.schema, trace.app
    model = app.init_global()
    out = [codec.encode(schema, schema.global_model, model)]
    for entry in trace.server.log:
        model = app.update_global(codec.decode(schema, schema.global_msg, entry.payload), model)
        out.append(codec.encode(schema, schema.global_model, model))
    return out


def check_convergence(trace: SimTrace) -> Convergence:
    schema = trace.schema
    folds = fold_prefixes(trace)
    n = trace.server.seq
    details: list[str] = []
    first: int | None = None

    if not trace.quiescent:
        details.append("simulation did not reach quiescence")
    if folds[n] != trace.server.snapshot():
        details.append("server model differs from the fold of its own log")
    for cid, snaps in sorted(trace.timeline.items()):
        for t, snap in snaps:
            got = codec.encode(schema, schema.global_model, snap.global_model)
            if snap.applied_seq > n or got != folds[snap.applied_seq]:
                details.append(f"client{cid} at t={t}: model at seq {snap.applied_seq} is not the fold prefix")
                first = t if first is None else min(first, t)
                break
    for cid, rt in sorted(trace.clients.items()):
        got = codec.encode(schema, schema.global_model, rt.global_model)
        if rt.applied_seq != n:
            details.append(f"client{cid} final seq {rt.applied_seq} != server seq {n}")
        if got != folds[n]:
            details.append(f"client{cid} final model differs from the server fold")
            if first is None:
                first = trace.events[-1].t_ms if trace.events else 0
    return Convergence(not details, first, tuple(details))


# -- split screen ----------------------------------------------------------------

COLUMN_WIDTH = 40


def _at(snaps: list[tuple[int, Any]], t: int) -> Any:
    chosen = snaps[0][1]
    for ts, snap in snaps:
        if ts > t:
            break
        chosen = snap
    return chosen


def _fit(text: str) -> str:
    if len(text) > COLUMN_WIDTH:
        text = text[: COLUMN_WIDTH - 1] + "~"
    return text.ljust(COLUMN_WIDTH)


def render_split_screen(trace: SimTrace, t_ms: int) -> str:
    columns: list[list[str]] = []
    for cid in sorted(trace.timeline):
        snap = _at(trace.timeline[cid], t_ms)
        head = [f"client {cid}", f"{snap.phase.value} seq={snap.applied_seq}"]
        columns.append(head + snap.view.outline())
    seq = _at(trace.server_timeline, t_ms)
    columns.append(["server", f"seq={seq}", f"log length={seq}"])
    height = max(len(col) for col in columns)
    rule = "-+-".join("-" * COLUMN_WIDTH for _ in columns)
    rows = [f"t={t_ms} ms", rule]
    for i in range(height):
        rows.append(" | ".join(_fit(col[i] if i < len(col) else "") for col in columns).rstrip())
        if i == 1:
            rows.append(rule)
    return "\n".join(rows) + "\n"


# -- config files ----------------------------------------------------------------


def parse_config(text: str) -> SimConfig:
    """Parse ``key: value`` lines followed by an optional ``script:`` section.

    Script lines are ``atMs client path eventKind``.
    """
    values: dict[str, Any] = {}
    join: dict[int, int] = {}
    drops: set[tuple[int, int]] = set()
    script: list[ScriptLine] = []
    in_script = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if in_script:
                at, client, path, kind = line.split()
                script.append(ScriptLine(int(at), int(client), parse_path(path), kind))
                continue
            key, _, rest = line.partition(":")
            key, args = key.strip(), rest.split()
            if key == "script":
                in_script = True
            elif key in ("seed", "clients", "duration", "ping"):
                (values[key],) = (int(a) for a in args)
            elif key == "drop":
                (values[key],) = (float(a) for a in args)
            elif key == "latency":
                lo, hi = (int(a) for a in args)
                values["latency_min"], values["latency_max"] = lo, hi
            elif key == "join":
                c, t = (int(a) for a in args)
                join[c] = t
            elif key == "force-drop":
                c, s = (int(a) for a in args)
                drops.add((c, s))
            elif key == "session":
                (values[key],) = args
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
    renames = {"duration": "duration_ms", "ping": "ping_ms", "drop": "drop_prob"}
    kwargs = {renames.get(k, k): v for k, v in values.items()}
    if "duration_ms" not in kwargs:
        kwargs["duration_ms"] = quiescent_duration(
            script, kwargs.get("latency_max", 0), kwargs.get("ping_ms", DEFAULT_PING_MS), join.values()
        )
    return SimConfig(script=tuple(script), join_ms=join, force_drops=frozenset(drops), **kwargs)


def format_config(config: SimConfig) -> str:
    lines = [
        f"seed: {config.seed}",
        f"clients: {config.clients}",
        f"latency: {config.latency_min} {config.latency_max}",
        f"drop: {config.drop_prob!r}",
        f"duration: {config.duration_ms}",
        f"ping: {config.ping_ms}",
        f"session: {config.session}",
    ]
    lines += [f"join: {c} {t}" for c, t in sorted(config.join_ms.items())]
    lines += [f"force-drop: {c} {s}" for c, s in sorted(config.force_drops)]
    lines.append("script:")
    lines += [f"{s.at_ms} {s.client} {format_path(s.path)} {s.event_kind}" for s in config.script]
    return "\n".join(lines) + "\n"


def demo_config(example: ExampleApp, **overrides: Any) -> SimConfig:
    latency_max = overrides.get("latency_max", 0)
    ping = overrides.get("ping_ms", DEFAULT_PING_MS)
    kwargs = dict(
        clients=example.demo_clients,
        script=example.demo_script,
        duration_ms=quiescent_duration(example.demo_script, latency_max, ping),
    )
    kwargs.update(overrides)
    return SimConfig(**kwargs)


def random_config(
    seed: int,
    example: ExampleApp,
    clients: int,
    max_submits: int,
    latency: tuple[int, int],
    drop_prob: float,
    max_events: int = 200,
    ping_ms: int = DEFAULT_PING_MS,
) -> SimConfig:
    """A random script of the example's stable actions, capped in submits."""
    rng = CounterRng(seed ^ 0x5EED5EED)
    script: list[ScriptLine] = []
    submits = 0
    t = 0
    for _ in range(max_events):
        path, kind, submitting = example.actions[rng.randint(0, len(example.actions) - 1)]
        if submitting:
            if submits >= max_submits:
                continue
            submits += 1
        t += rng.randint(0, 40)
        script.append(ScriptLine(t, rng.randint(1, clients), path, kind))
    return SimConfig(
        seed=seed,
        clients=clients,
        latency_min=latency[0],
        latency_max=latency[1],
        drop_prob=drop_prob,
        script=tuple(script),
        duration_ms=quiescent_duration(script, latency[1], ping_ms),
        ping_ms=ping_ms,
    )

