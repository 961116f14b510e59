"""Request/response models for the control API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class Health(BaseModel):
    status: str = "ok"
    fingerprint: str


class StatsResponse(BaseModel):
    sessions: int
    clients: int
    total_seq: dict[str, int]


class SessionInfo(BaseModel):
    name: str
    seq: int
    clients: list[int]
    connected: list[int]


class FingerprintRequest(BaseModel):
    source: str


class FingerprintResponse(BaseModel):
    fingerprint: str = Field(pattern=r"^[0-9a-f]{64}$")


class SimRequest(BaseModel):
    app: str
    config: str = Field(description="sim config file text")
    render_at: int | None = None


class SimResponse(BaseModel):
    converged: bool
    first_divergence: int | None
    details: list[str]
    server_seq: int
    trace_digest: str
    split_screen: str | None = None
