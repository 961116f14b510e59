"""Client runtime: one app instance wired to the replica state machine.

Local messages are applied immediately; global messages travel to the server
as Submits and only touch the global model when their Apply comes back.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Sequence

from lgmvu import codec
from lgmvu.frames import Error, Frame
from lgmvu.mvu import AppFault, AppSpec, GlobalMsg, LocalMsg, ViewTree, dispatch_event, render, step_global, step_local
from lgmvu.protocol import (
    ClientSyncState,
    Connect,
    Delivery,
    Phase,
    ServerFrame,
    SubmitRequest,
    client_handle,
)
from lgmvu.schema import Schema, fingerprint

MAX_QUEUED_EVENTS = 1024


class EventQueueFull(Exception):
    pass


@dataclass(frozen=True)
class ClientRuntime:
    app: AppSpec
    schema: Schema
    local: Any
    global_model: Any
    sync: ClientSyncState
    view: ViewTree
    # user events held while not synced: (path, eventKind)
    queued: tuple[tuple[tuple[int, ...], str], ...] = ()
    errors: tuple[Error, ...] = ()
    # queued events that failed on replay
    dropped_events: int = 0

    @classmethod
    def create(cls, app: AppSpec, schema: Schema, session: str) -> ClientRuntime:
        local, global_model = app.init_local(), app.init_global()
        sync = ClientSyncState(session, fingerprint(schema))
        return cls(app, schema, local, global_model, sync, render(app, local, global_model))

    @property
    def applied_seq(self) -> int:
        return self.sync.applied_seq

    def _submit(self, payloads: Sequence[Any]) -> tuple[ClientRuntime, list[Frame]]:
        rt, frames = self, []
        for payload in payloads:
            raw = codec.encode(self.schema, self.schema.global_msg, payload)
            step = client_handle(rt.sync, SubmitRequest(raw))
            rt = replace(rt, sync=step.state)
            frames += step.send
        return rt, frames


def connect(rt: ClientRuntime) -> tuple[ClientRuntime, list[Frame]]:
    step = client_handle(rt.sync, Connect())
    return replace(rt, sync=step.state), step.send


def handle_user_event(rt: ClientRuntime, path: Sequence[int], event_kind: str) -> tuple[ClientRuntime, list[Frame]]:
    """Dispatch a user event against the current view.

    Raises NoSuchNode/NoHandler/AppFault/TypeMismatch with ``rt`` untouched.
    While joining or resyncing the event is queued and replayed afterwards.
    """
    path = tuple(path)
    if rt.sync.phase in (Phase.JOINING, Phase.RESYNCING):
        if len(rt.queued) >= MAX_QUEUED_EVENTS:
            raise EventQueueFull(f"{MAX_QUEUED_EVENTS} events already queued")
        return replace(rt, queued=rt.queued + ((path, event_kind),)), []
    msg = dispatch_event(rt.view, path, event_kind)
    if isinstance(msg, GlobalMsg):
        return rt._submit([msg.payload])
    assert isinstance(msg, LocalMsg)
    local, outbox = step_local(rt.app, msg.payload, rt.local, rt.global_model)
    new_rt, frames = rt._submit(outbox)
    view = render(rt.app, local, rt.global_model)
    return replace(new_rt, local=local, view=view), frames


def handle_server_frame(rt: ClientRuntime, frame: Frame) -> tuple[ClientRuntime, list[Frame]]:
    """Feed one server frame; returns the new runtime and frames to send.

    Deliveries are folded through ``update_global`` in order and the view is
    re-rendered once per batch.  ProtocolViolation, DecodeError and AppFault
    propagate with ``rt`` untouched.
    """
    step = client_handle(rt.sync, ServerFrame(frame))
    global_model = _apply_deliveries(rt, step.deliver)
    frames = list(step.send)
    new = replace(rt, sync=step.state, errors=rt.errors + tuple(step.errors))
    if step.deliver:
        new = replace(new, global_model=global_model, view=render(rt.app, rt.local, global_model))
    if new.sync.phase is Phase.SYNCED and new.queued:
        new, more = _replay(new)
        frames += more
    return new, frames


def _apply_deliveries(rt: ClientRuntime, deliveries: Sequence[Delivery]) -> Any:
    model = rt.global_model
    for d in deliveries:
        if d.snapshot:
            model = codec.decode(rt.schema, rt.schema.global_model, d.payload)
        else:
            msg = codec.decode(rt.schema, rt.schema.global_msg, d.payload)
            model = step_global(rt.app, msg, model)
    return model


def _replay(rt: ClientRuntime) -> tuple[ClientRuntime, list[Frame]]:
    queued, rt = rt.queued, replace(rt, queued=())
    frames: list[Frame] = []
    for i, (path, kind) in enumerate(queued):
        if rt.sync.phase is not Phase.SYNCED:
            return replace(rt, queued=rt.queued + queued[i:]), frames
        try:
            rt, more = handle_user_event(rt, path, kind)
        except (LookupError, AppFault, codec.TypeMismatch):
            # the view or models changed while the event waited
            rt = replace(rt, dropped_events=rt.dropped_events + 1)
            continue
        frames += more
    return rt, frames
