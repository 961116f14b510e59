"""Local/global model-view-update runtime with a sequencing server."""

from lgmvu.codec import Variant, decode, encode
from lgmvu.mvu import (
    AppFault,
    AppSpec,
    GlobalMsg,
    LocalMsg,
    NoHandler,
    NoSuchNode,
    ViewTree,
    dispatch_event,
    node,
    render,
    step_global,
    step_local,
)
from lgmvu.schema import Schema, fingerprint, parse_schema

__all__ = [
    "AppFault",
    "AppSpec",
    "GlobalMsg",
    "LocalMsg",
    "NoHandler",
    "NoSuchNode",
    "Schema",
    "Variant",
    "ViewTree",
    "decode",
    "dispatch_event",
    "encode",
    "fingerprint",
    "node",
    "parse_schema",
    "render",
    "step_global",
    "step_local",
]
