"""Reference applications and their registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from lgmvu.codec import Variant
from lgmvu.mvu import AppSpec, GlobalMsg, LocalMsg, ViewTree, node
from lgmvu.schema import Schema, parse_schema


class UnknownExample(KeyError):
    pass


@dataclass(frozen=True)
class ScriptLine:
    at_ms: int
    client: int
    path: tuple[int, ...]
    event_kind: str


@dataclass(frozen=True)
class ExampleApp:
    name: str
    app: AppSpec
    schema_source: str
    demo_script: tuple[ScriptLine, ...]
    # (path, eventKind, may submit) triples that resolve in every view state
    actions: tuple[tuple[tuple[int, ...], str, bool], ...]
    demo_clients: int = 2

    @property
    def schema(self) -> Schema:
        return parse_schema(self.schema_source)


# -- shape / colour ------------------------------------------------------------

SHAPE_COLOUR_SCHEMA = """\
type Shape = Circle | Square
global model Shape
global msg SetShape(Shape)
"""

PURPLE, GOLD = "purple", "gold"


@dataclass(frozen=True)
class SetColour:
    colour: str


def _sc_update_local(msg: SetColour, local: str, global_: Variant) -> tuple[str, list]:
    return msg.colour, []


def _sc_update_global(msg: Variant, global_: Variant) -> Variant:
    if msg.tag == "SetShape":
        return msg.value
    return global_


def _sc_view(local: str, global_: Variant) -> ViewTree:
    return node(
        "display",
        children=[
            node("shape", {"shape": global_.tag.lower(), "colour": local}),
            node("button", {"label": GOLD}, {"click": LocalMsg(SetColour(GOLD))}),
            node("button", {"label": PURPLE}, {"click": LocalMsg(SetColour(PURPLE))}),
            node("button", {"label": "circle"}, {"click": GlobalMsg(Variant("SetShape", Variant("Circle")))}),
            node("button", {"label": "square"}, {"click": GlobalMsg(Variant("SetShape", Variant("Square")))}),
        ],
    )


shape_colour = AppSpec(
    init_local=lambda: PURPLE,
    init_global=lambda: Variant("Circle"),
    update_local=_sc_update_local,
    update_global=_sc_update_global,
    view=_sc_view,
    name="fig7-shape-colour",
)

# -- shared counter ------------------------------------------------------------

COUNTER_SCHEMA = """\
global model Int64
global msg Add(Int64) | Reset | BroadcastCount(Int64)
"""

BROADCAST_EVERY = 3


@dataclass(frozen=True)
class LocalIncrement:
    pass


def _ct_update_local(msg: Any, local: int, global_: int) -> tuple[int, list]:
    if isinstance(msg, LocalIncrement):
        local += 1
        if local % BROADCAST_EVERY == 0:
            return local, [Variant("BroadcastCount", BROADCAST_EVERY)]
        return local, []
    return local, []


def _ct_update_global(msg: Variant, total: int) -> int:
    if msg.tag in ("Add", "BroadcastCount"):
        return total + msg.value
    if msg.tag == "Reset":
        return 0
    return total


def _ct_view(local: int, total: int) -> ViewTree:
    return node(
        "counter",
        {"total": total, "local": local},
        children=[
            node("button", {"label": "tap"}, {"click": LocalMsg(LocalIncrement())}),
            node("button", {"label": "+1"}, {"click": GlobalMsg(Variant("Add", 1))}),
            node("button", {"label": "-2"}, {"click": GlobalMsg(Variant("Add", -2))}),
            node("button", {"label": "reset"}, {"click": GlobalMsg(Variant("Reset"))}),
        ],
    )


shared_counter = AppSpec(
    init_local=lambda: 0,
    init_global=lambda: 0,
    update_local=_ct_update_local,
    update_global=_ct_update_global,
    view=_ct_view,
    name="shared-counter",
)

# -- drawing relay -------------------------------------------------------------

RELAY_SCHEMA = """\
type Point = { x: Int64, y: Int64 }
type Stroke = { seat: Int64, points: List Point }
type Drawing = { round: Int64, strokes: List Stroke }
type Relay = {
  seats: Int64,
  turn: Int64,
  round: Int64,
  current: List Stroke,
  finished: List Drawing
}
global model Relay
global msg Draw(Stroke) | Pass(Int64) | Wipe
"""

SEATS = 3


@dataclass(frozen=True)
class Pen:
    seat: int = 0
    draft: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class TakeSeat:
    seat: int


@dataclass(frozen=True)
class Doodle:
    pass


@dataclass(frozen=True)
class Commit:
    pass


@dataclass(frozen=True)
class PassTurn:
    pass


def _rl_update_local(msg: Any, pen: Pen, relay: dict) -> tuple[Pen, list]:
    if isinstance(msg, TakeSeat):
        return Pen(msg.seat, pen.draft), []
    if isinstance(msg, Doodle):
        n = len(pen.draft)
        return Pen(pen.seat, pen.draft + (((n * 7 + pen.seat) % 64, (n * 13 + 5) % 64),)), []
    if isinstance(msg, Commit):
        if not pen.draft:
            return pen, []
        stroke = {"seat": pen.seat, "points": tuple({"x": x, "y": y} for x, y in pen.draft)}
        return Pen(pen.seat), [Variant("Draw", stroke)]
    if isinstance(msg, PassTurn):
        return pen, [Variant("Pass", pen.seat)]
    return pen, []


def _rl_update_global(msg: Variant, relay: dict) -> dict:
    if msg.tag == "Draw":
        if msg.value["seat"] != relay["turn"]:
            return relay
        return {**relay, "current": relay["current"] + (msg.value,)}
    if msg.tag == "Pass":
        if msg.value != relay["turn"]:
            return relay
        turn = (relay["turn"] + 1) % relay["seats"]
        if turn != 0:
            return {**relay, "turn": turn}
        drawing = {"round": relay["round"], "strokes": relay["current"]}
        return {
            **relay,
            "turn": 0,
            "round": relay["round"] + 1,
            "current": (),
            "finished": relay["finished"] + (drawing,),
        }
    if msg.tag == "Wipe":
        return {**relay, "current": ()}
    return relay


def _rl_view(pen: Pen, relay: dict) -> ViewTree:
    seat_buttons = [
        node("button", {"label": f"seat {k}"}, {"click": LocalMsg(TakeSeat(k))}) for k in range(SEATS)
    ]
    canvas = node(
        "canvas",
        {
            "round": relay["round"],
            "turn": relay["turn"],
            "strokes": len(relay["current"]),
            "points": sum(len(s["points"]) for s in relay["current"]),
            "finished": len(relay["finished"]),
        },
    )
    return node(
        "relay",
        {"seat": pen.seat, "draft": len(pen.draft), "my-turn": str(pen.seat == relay["turn"]).lower()},
        children=[
            canvas,
            node("button", {"label": "doodle"}, {"click": LocalMsg(Doodle())}),
            node("button", {"label": "commit"}, {"click": LocalMsg(Commit())}),
            node("button", {"label": "pass"}, {"click": LocalMsg(PassTurn())}),
            node("button", {"label": "wipe"}, {"click": GlobalMsg(Variant("Wipe"))}),
            node("seats", children=seat_buttons),
        ],
    )


drawing_relay = AppSpec(
    init_local=Pen,
    init_global=lambda: {"seats": SEATS, "turn": 0, "round": 0, "current": (), "finished": ()},
    update_local=_rl_update_local,
    update_global=_rl_update_global,
    view=_rl_view,
    name="drawing-relay",
)


def _script(*lines: tuple[int, int, tuple[int, ...], str]) -> tuple[ScriptLine, ...]:
    return tuple(ScriptLine(t, c, p, k) for t, c, p, k in lines)


_EXAMPLES: dict[str, ExampleApp] = {
    "fig7-shape-colour": ExampleApp(
        "fig7-shape-colour",
        shape_colour,
        SHAPE_COLOUR_SCHEMA,
        _script((10, 1, (1,), "click"), (20, 2, (4,), "click")),
        (((1,), "click", False), ((2,), "click", False), ((3,), "click", True), ((4,), "click", True)),
    ),
    "shared-counter": ExampleApp(
        "shared-counter",
        shared_counter,
        COUNTER_SCHEMA,
        _script(
            (5, 1, (1,), "click"),
            (6, 2, (1,), "click"),
            (10, 1, (0,), "click"),
            (11, 1, (0,), "click"),
            (12, 1, (0,), "click"),
            (30, 3, (2,), "click"),
        ),
        # a tap may emit BroadcastCount
        (((0,), "click", True), ((1,), "click", True), ((2,), "click", True), ((3,), "click", True)),
        demo_clients=3,
    ),
    "drawing-relay": ExampleApp(
        "drawing-relay",
        drawing_relay,
        RELAY_SCHEMA,
        _script(
            (5, 2, (5, 1), "click"),
            (10, 1, (1,), "click"),
            (11, 1, (1,), "click"),
            (12, 1, (2,), "click"),
            (20, 1, (3,), "click"),
            (60, 2, (1,), "click"),
            (61, 2, (2,), "click"),
            (70, 2, (3,), "click"),
        ),
        (
            ((1,), "click", False),
            ((2,), "click", True),
            ((3,), "click", True),
            ((4,), "click", True),
            ((5, 0), "click", False),
            ((5, 1), "click", False),
            ((5, 2), "click", False),
        ),
    ),
}


def list_examples() -> list[str]:
    return sorted(_EXAMPLES)


def load_example(name: str) -> ExampleApp:
    try:
        return _EXAMPLES[name]
    except KeyError:
        raise UnknownExample(name) from None
