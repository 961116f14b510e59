"""HTTP control plane: stats and session introspection, plus stateless helpers.

The frame transport itself is raw TCP (see :mod:`lgmvu.server.sessions`); it
is started and stopped by this app's lifespan.
"""

from __future__ import annotations

import contextlib
import logging

from fastapi import FastAPI, HTTPException

from lgmvu.apps import UnknownExample, load_example
from lgmvu.schema import SchemaError, fingerprint, parse_schema
from lgmvu.server.schemas import (
    FingerprintRequest,
    FingerprintResponse,
    Health,
    SessionInfo,
    SimRequest,
    SimResponse,
    StatsResponse,
)
from lgmvu.server.sessions import SessionRegistry, snapshot_stats
from lgmvu.sim import ConfigError, check_convergence, parse_config, render_split_screen, run_sim

log = logging.getLogger(__name__)


def create_app(registry: SessionRegistry, start_transport: bool = True) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        if start_transport:
            host, port = await registry.start()
            app.state.frame_address = (host, port)
            log.info("frame transport on %s:%d", host, port)
        try:
            yield
        finally:
            if start_transport:
                await registry.shutdown()

    app = FastAPI(title="lgmvu session server", lifespan=lifespan)
    app.state.registry = registry

    @app.get("/health", response_model=Health)
    def health():
        return Health(fingerprint=fingerprint(registry.schema).hex())

    @app.get("/stats", response_model=StatsResponse)
    def stats():
        s = snapshot_stats(registry)
        return StatsResponse(sessions=s.sessions, clients=s.clients, total_seq=s.total_seq)

    @app.get("/sessions/{name}", response_model=SessionInfo)
    def session(name: str):
        sess = registry.sessions.get(name)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"no session {name!r}")
        return SessionInfo(
            name=name,
            seq=sess.state.seq,
            clients=sorted(sess.state.clients),
            connected=sorted(sess.conns),
        )

    @app.post("/schema/fingerprint", response_model=FingerprintResponse)
    def schema_fingerprint(req: FingerprintRequest):
        try:
            schema = parse_schema(req.source)
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return FingerprintResponse(fingerprint=fingerprint(schema).hex())

    @app.post("/sim", response_model=SimResponse)
    def sim(req: SimRequest):
        try:
            example = load_example(req.app)
            config = parse_config(req.config)
        except UnknownExample:
            raise HTTPException(status_code=404, detail=f"unknown example {req.app!r}") from None
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        trace = run_sim(config, example.app, example.schema)
        result = check_convergence(trace)
        return SimResponse(
            converged=result.converged,
            first_divergence=result.first_divergence,
            details=list(result.details),
            server_seq=trace.server.seq,
            trace_digest=trace.digest(),
            split_screen=None if req.render_at is None else render_split_screen(trace, req.render_at),
        )

    return app
