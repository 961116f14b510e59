"""Run the frame transport and control API in one event loop."""

from __future__ import annotations

import asyncio
import socket
import sys

import uvicorn

from lgmvu.mvu import AppSpec
from lgmvu.schema import Schema
from lgmvu.server.api import create_app
from lgmvu.server.sessions import ServeConfig, SessionRegistry


def bind_socket(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(128)
    sock.setblocking(False)
    return sock


async def serve_async(app: AppSpec, schema: Schema, config: ServeConfig, control: tuple[str, int]) -> None:
    registry = SessionRegistry(app, schema, config)
    api = create_app(registry)
    sock = bind_socket(*control)
    ctl_host, ctl_port = sock.getsockname()[:2]
    server = uvicorn.Server(uvicorn.Config(api, log_level="warning", lifespan="on"))

    async def announce() -> None:
        while not server.started:
            await asyncio.sleep(0.01)
        host, port = api.state.frame_address
        print(f"listening frames={host}:{port} control={ctl_host}:{ctl_port}", flush=True)

    announcer = asyncio.create_task(announce())
    try:
        await server.serve(sockets=[sock])
    finally:
        announcer.cancel()
        sock.close()


def serve(app: AppSpec, schema: Schema, config: ServeConfig, control: tuple[str, int]) -> int:
    """Block until SIGINT/SIGTERM; sessions are closed with Error(SHUTDOWN)."""
    try:
        asyncio.run(serve_async(app, schema, config, control))
    except KeyboardInterrupt:
        pass
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
