"""Pure local/global model-view-update application contract.

An application is five pure functions bundled in :class:`AppSpec`.  Local
models never leave their client; the global model is replicated and only
changes through ``update_global`` applied to server-ordered messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence


class AppFault(Exception):
    """An application function raised.  ``msg`` is the triggering message."""

    def __init__(self, function: str, msg: Any, cause: BaseException):
        super().__init__(f"{function} failed on {msg!r}: {cause!r}")
        self.function = function
        self.msg = msg
        self.cause = cause


class NoSuchNode(LookupError):
    pass


class NoHandler(LookupError):
    pass


@dataclass(frozen=True)
class LocalMsg:
    payload: Any


@dataclass(frozen=True)
class GlobalMsg:
    payload: Any


Message = LocalMsg | GlobalMsg


@dataclass(frozen=True)
class ViewTree:
    tag: str
    attributes: Mapping[str, str] = field(default_factory=dict)
    handlers: Mapping[str, Message] = field(default_factory=dict)
    children: tuple[ViewTree, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))
        for kind, msg in self.handlers.items():
            if not isinstance(msg, (LocalMsg, GlobalMsg)):
                raise TypeError(f"handler {kind!r} must be LocalMsg or GlobalMsg, got {msg!r}")

    def outline(self, indent: int = 0) -> list[str]:
        """Indented tag/attribute lines, attributes and handlers sorted."""
        parts = [self.tag]
        parts += [f"{k}={v}" for k, v in sorted(self.attributes.items())]
        parts += [f"on:{k}" for k in sorted(self.handlers)]
        lines = ["  " * indent + " ".join(parts)]
        for child in self.children:
            lines += child.outline(indent + 1)
        return lines


def node(
    tag: str,
    attributes: Mapping[str, Any] | None = None,
    handlers: Mapping[str, Message] | None = None,
    children: Sequence[ViewTree] = (),
) -> ViewTree:
    """Build a :class:`ViewTree`, stringifying attribute values."""
    attrs = {str(k): str(v) for k, v in (attributes or {}).items()}
    return ViewTree(tag, attrs, dict(handlers or {}), tuple(children))


@dataclass(frozen=True)
class AppSpec:
    """The five pure functions of an application.

    ``update_local(msg, local, global_) -> (local, outbox)`` where outbox is a
    sequence of global-message payloads.  ``update_global(msg, global_)`` never
    sees a local model.
    """

    init_local: Callable[[], Any]
    init_global: Callable[[], Any]
    update_local: Callable[[Any, Any, Any], tuple[Any, Sequence[Any]]]
    update_global: Callable[[Any, Any], Any]
    view: Callable[[Any, Any], ViewTree]
    name: str = "app"


def step_local(app: AppSpec, msg: Any, local: Any, global_: Any) -> tuple[Any, list[Any]]:
    try:
        new_local, outbox = app.update_local(msg, local, global_)
        outbox = list(outbox)
    except Exception as exc:
        raise AppFault("update_local", msg, exc) from exc
    return new_local, outbox


def step_global(app: AppSpec, msg: Any, global_: Any) -> Any:
    try:
        return app.update_global(msg, global_)
    except Exception as exc:
        raise AppFault("update_global", msg, exc) from exc


def render(app: AppSpec, local: Any, global_: Any) -> ViewTree:
    try:
        tree = app.view(local, global_)
    except Exception as exc:
        raise AppFault("view", (local, global_), exc) from exc
    if not isinstance(tree, ViewTree):
        raise AppFault("view", (local, global_), TypeError(f"view returned {type(tree).__name__}"))
    return tree


def dispatch_event(tree: ViewTree, path: Sequence[int], event_kind: str) -> Message:
    target = tree
    for depth, index in enumerate(path):
        if not 0 <= index < len(target.children):
            raise NoSuchNode(f"no child {index} at depth {depth} (path {list(path)})")
        target = target.children[index]
    try:
        return target.handlers[event_kind]
    except KeyError:
        raise NoHandler(f"node {target.tag!r} at {list(path)} has no {event_kind!r} handler") from None


def fold_global(app: AppSpec, msgs: Sequence[Any], start: Any = None) -> Any:
    """Single-threaded fold of ``update_global`` from ``init_global`` (or ``start``)."""
    model = app.init_global() if start is None else start
    for msg in msgs:
        model = step_global(app, msg, model)
    return model


def parse_path(text: str) -> tuple[int, ...]:
    """``/1/0`` -> ``(1, 0)``; ``/`` is the root."""
    text = text.strip()
    if not text.startswith("/"):
        raise ValueError(f"path must start with '/': {text!r}")
    return tuple(int(p) for p in text.split("/") if p)


def format_path(path: Sequence[int]) -> str:
    return "/" + "/".join(str(i) for i in path)
