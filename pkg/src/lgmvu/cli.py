"""Command-line entry point.

Every ``serve``/``client``/``stats`` flag can also be given through an
``LGMVU_``-prefixed environment variable (``--ping-ms`` -> ``LGMVU_PING_MS``);
explicit flags win.
"""

from __future__ import annotations

import argparse
import asyncio
import importlib
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from lgmvu.apps import ExampleApp, UnknownExample, list_examples, load_example
from lgmvu.mvu import AppSpec
from lgmvu.protocol import DEFAULT_PING_MS
from lgmvu.schema import Schema, SchemaError, SchemaSyntaxError, fingerprint, parse_schema
from lgmvu.sim import ConfigError, check_convergence, demo_config, format_config, parse_config, render_split_screen, run_sim

ENV_PREFIX = "LGMVU_"
DEFAULT_BIND = "127.0.0.1:7777"
DEFAULT_CONTROL = "127.0.0.1:7878"


class CliError(Exception):
    pass


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def _address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _load_schema(path: str) -> Schema:
    try:
        return parse_schema(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read schema {path}: {exc.strerror}") from None
    except SchemaSyntaxError as exc:
        raise CliError(f"{path}:{exc}") from None
    except SchemaError as exc:
        raise CliError(f"{path}: {exc}") from None


def resolve_app(name: str | None, schema: Schema | None) -> tuple[AppSpec, Schema]:
    """Find the app by example name, ``module:attr`` path, or schema fingerprint."""
    if name and ":" in name:
        module, _, attr = name.partition(":")
        try:
            obj = getattr(importlib.import_module(module), attr)
        except (ImportError, AttributeError) as exc:
            raise CliError(f"cannot import app {name}: {exc}") from None
        if isinstance(obj, ExampleApp):
            app, own = obj.app, obj.schema
        elif isinstance(obj, AppSpec):
            if schema is None:
                raise CliError(f"{name} is a bare AppSpec; pass --schema")
            return obj, schema
        else:
            raise CliError(f"{name} is neither an AppSpec nor an ExampleApp")
    elif name:
        try:
            example = load_example(name)
        except UnknownExample:
            raise CliError(f"unknown example {name!r} (have: {', '.join(list_examples())})") from None
        app, own = example.app, example.schema
    else:
        if schema is None:
            raise CliError("pass --app or --schema")
        for candidate in list_examples():
            example = load_example(candidate)
            if fingerprint(example.schema) == fingerprint(schema):
                return example.app, schema
        raise CliError("no registered app matches this schema; pass --app")
    if schema is not None and fingerprint(schema) != fingerprint(own):
        raise CliError(f"schema does not match app {name!r}")
    return app, schema or own


# -- subcommands ---------------------------------------------------------------


def cmd_schema(args: argparse.Namespace) -> int:
    schema = _load_schema(args.file)
    if args.action == "fingerprint":
        print(fingerprint(schema).hex())
    else:
        print(f"ok: {len(schema.definitions)} types, fingerprint {fingerprint(schema).hex()}")
    return 0


def cmd_examples(args: argparse.Namespace) -> int:
    if args.name is None:
        for name in list_examples():
            print(name)
        return 0
    try:
        example = load_example(args.name)
    except UnknownExample:
        raise CliError(f"unknown example {args.name!r}") from None
    if args.show == "schema":
        sys.stdout.write(example.schema_source)
    else:
        sys.stdout.write(format_config(demo_config(example)))
    return 0


def cmd_sim(args: argparse.Namespace) -> int:
    schema = _load_schema(args.schema) if args.schema else None
    app, schema = resolve_app(args.app, schema)
    try:
        config = parse_config(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config {args.config}: {exc.strerror}") from None
    except ConfigError as exc:
        raise CliError(f"{args.config}: {exc}") from None
    trace = run_sim(config, app, schema)
    if args.trace_out:
        Path(args.trace_out).write_text(trace.text(), encoding="utf-8")
    if args.render_at is not None:
        sys.stdout.write(render_split_screen(trace, args.render_at))
    result = check_convergence(trace)
    print(f"server seq={trace.server.seq} trace={trace.digest()}")
    if result.converged:
        print("converged")
        return 0
    print("diverged: " + "; ".join(result.details))
    return 1


def cmd_serve(args: argparse.Namespace) -> int:
    from lgmvu.server.main import serve
    from lgmvu.server.sessions import ServeConfig

    if not args.schema:
        raise CliError("--schema is required (or set LGMVU_SCHEMA)")
    schema = _load_schema(args.schema)
    app, schema = resolve_app(args.app, schema)
    config = ServeConfig(
        bind=args.bind,
        ping_ms=args.ping_ms,
        max_frame=args.max_frame,
        record=Path(args.record) if args.record else None,
    )
    return serve(app, schema, config, args.control)


def cmd_client(args: argparse.Namespace) -> int:
    from lgmvu.netclient import ClientError, dump_state, parse_script, run_client

    if not args.schema or not args.connect:
        raise CliError("--connect and --schema are required")
    schema = _load_schema(args.schema)
    app, schema = resolve_app(args.app, schema)
    try:
        steps = parse_script(Path(args.script).read_text(encoding="utf-8")) if args.script else []
    except OSError as exc:
        raise CliError(f"cannot read script {args.script}: {exc.strerror}") from None
    except ClientError as exc:
        raise CliError(str(exc)) from None
    host, port = args.connect
    try:
        rt = asyncio.run(
            run_client(app, schema, host, port, args.session, steps, settle_ms=args.settle_ms, timeout=args.timeout)
        )
    except (ClientError, OSError) as exc:
        raise CliError(str(exc)) from None
    sys.stdout.write(dump_state(rt))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    import httpx

    host, port = args.control
    try:
        resp = httpx.get(f"http://{host}:{port}/stats", timeout=5.0)
        resp.raise_for_status()
    except httpx.HTTPError as exc:
        raise CliError(f"stats query failed: {exc}") from None
    data = resp.json()
    if args.json:
        print(json.dumps(data, sort_keys=True))
    else:
        print(f"sessions={data['sessions']} clients={data['clients']}")
        for name, seq in sorted(data["total_seq"].items()):
            print(f"  {name}: seq={seq}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    from lgmvu.replay import replay_record

    schema = _load_schema(args.schema)
    app, schema = resolve_app(args.app, schema)
    result = replay_record(Path(args.record).read_text(encoding="utf-8"), app, schema, args.ping_ms)
    for session, seq in sorted(result.sessions.items()):
        print(f"session {session}: seq={seq}")
    for problem in result.problems:
        print(f"problem: {problem}")
    print("replay ok" if result.ok else "replay FAILED")
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgmvu", description="Local/global MVU runtime, server and simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="host sessions over TCP with an HTTP control API")
    p.add_argument("--bind", type=_address, default=_env("BIND", DEFAULT_BIND), help="frame transport HOST:PORT")
    p.add_argument("--schema", default=_env("SCHEMA"), help="schema file")
    p.add_argument("--app", default=_env("APP"), help="example name or module:attr (default: match by schema)")
    p.add_argument("--ping-ms", type=int, default=_env("PING_MS", str(DEFAULT_PING_MS)), help="ping interval")
    p.add_argument("--max-frame", type=int, default=_env("MAX_FRAME", str(1 << 20)), help="largest accepted frame in bytes")
    p.add_argument("--control", type=_address, default=_env("CONTROL", DEFAULT_CONTROL), help="control API HOST:PORT")
    p.add_argument("--record", default=_env("RECORD"), help="write an event/frame record for replay")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client", help="run a scripted headless client")
    p.add_argument("--connect", type=_address, default=_env("CONNECT", DEFAULT_BIND), help="server HOST:PORT")
    p.add_argument("--session", default=_env("SESSION", "default"))
    p.add_argument("--schema", default=_env("SCHEMA"))
    p.add_argument("--script", help="events file: one 'path eventKind' per line")
    p.add_argument("--app", default=_env("APP"))
    p.add_argument("--settle-ms", type=int, default=300, help="linger after the script for late Applies")
    p.add_argument("--timeout", type=float, default=10.0, help="seconds before giving up")
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("stats", help="query a running server's control API")
    p.add_argument("--control", type=_address, default=_env("CONTROL", DEFAULT_CONTROL))
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sim", help="run a deterministic multi-client simulation")
    p.add_argument("--app", required=True)
    p.add_argument("--schema")
    p.add_argument("--config", required=True, help="sim config file")
    p.add_argument("--render-at", type=int, metavar="MS", help="print the split-screen view at this time")
    p.add_argument("--trace-out", help="write the trace to this file")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("schema", help="schema utilities")
    p.add_argument("action", choices=["fingerprint", "check"])
    p.add_argument("file")
    p.set_defaults(func=cmd_schema)

    p = sub.add_parser("examples", help="list examples or print one's schema or demo config")
    p.add_argument("name", nargs="?")
    p.add_argument("--show", choices=["schema", "demo"], default="schema")
    p.set_defaults(func=cmd_examples)

    p = sub.add_parser("replay", help="check a serve --record file against the pure state machines")
    p.add_argument("--record", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--app")
    p.add_argument("--ping-ms", type=int, default=DEFAULT_PING_MS)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
