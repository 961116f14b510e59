import pytest

from lgmvu.apps import (
    SEATS,
    Commit,
    Doodle,
    PassTurn,
    Pen,
    TakeSeat,
    UnknownExample,
    list_examples,
    load_example,
)
from lgmvu.codec import Variant, decode, encode
from lgmvu.mvu import dispatch_event, fold_global, render, step_local
from lgmvu.sim import CounterRng, check_convergence, demo_config, random_config, run_sim

NAMES = ["drawing-relay", "fig7-shape-colour", "shared-counter"]


def test_listing():
    assert list_examples() == NAMES
    assert "fig7-shape-colour" in list_examples()


def test_unknown_example():
    with pytest.raises(UnknownExample):
        load_example("nope")


@pytest.mark.parametrize("name", NAMES)
def test_schema_parses_and_models_encode(name):
    example = load_example(name)
    schema = example.schema
    model = example.app.init_global()
    assert decode(schema, schema.global_model, encode(schema, schema.global_model, model)) == model


@pytest.mark.parametrize("name", NAMES)
def test_demo_script_converges(name):
    example = load_example(name)
    trace = run_sim(demo_config(example, latency_min=1, latency_max=20), example.app, example.schema)
    assert check_convergence(trace).converged
    assert trace.unroutable == 0
    assert trace.server.seq > 0


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("seed", range(20))
def test_random_fault_configs_converge(name, seed):
    example = load_example(name)
    rng = CounterRng(1000 + seed)
    config = random_config(
        1000 + seed,
        example,
        clients=rng.randint(2, 5),
        max_submits=rng.randint(5, 40),
        latency=(rng.randint(0, 10), rng.randint(10, 80)),
        drop_prob=(0.1, 0.3)[seed % 2],
        max_events=60,
    )
    result = check_convergence(run_sim(config, example.app, example.schema))
    assert result.converged, result.details


@pytest.mark.parametrize("name", NAMES)
def test_actions_resolve_in_initial_view(name):
    example = load_example(name)
    view = render(example.app, example.app.init_local(), example.app.init_global())
    for path, kind, _ in example.actions:
        dispatch_event(view, path, kind)


# -- drawing relay ---------------------------------------------------------------


def stroke(seat, *points):
    return {"seat": seat, "points": tuple({"x": x, "y": y} for x, y in points)}


def test_relay_turns_and_rounds(relay):
    msgs = [
        Variant("Draw", stroke(0, (1, 1))),
        Variant("Draw", stroke(1, (9, 9))),  # out of turn: ignored
        Variant("Pass", 0),
        Variant("Draw", stroke(1, (2, 2), (3, 3))),
        Variant("Pass", 1),
        Variant("Pass", 1),  # stale pass: ignored
        Variant("Pass", 2),
    ]
    final = fold_global(relay.app, msgs)
    assert final["round"] == 1 and final["turn"] == 0 and final["current"] == ()
    assert final["finished"] == ({"round": 0, "strokes": (stroke(0, (1, 1)), stroke(1, (2, 2), (3, 3)))},)
    schema = relay.schema
    assert decode(schema, schema.global_model, encode(schema, schema.global_model, final)) == final


def test_relay_wipe(relay):
    final = fold_global(relay.app, [Variant("Draw", stroke(0, (1, 2))), Variant("Wipe")])
    assert final["current"] == ()


def test_relay_pen(relay):
    relay_model = relay.app.init_global()
    pen, out = step_local(relay.app, TakeSeat(2), Pen(), relay_model)
    assert pen == Pen(2) and out == []
    pen, _ = step_local(relay.app, Doodle(), pen, relay_model)
    pen, _ = step_local(relay.app, Doodle(), pen, relay_model)
    assert len(pen.draft) == 2 and all(len(p) == 2 for p in pen.draft)
    pen, out = step_local(relay.app, Commit(), pen, relay_model)
    assert pen.draft == () and out[0].tag == "Draw" and len(out[0].value["points"]) == 2
    encode(relay.schema, relay.schema.global_msg, out[0])
    assert step_local(relay.app, Commit(), pen, relay_model) == (pen, [])
    assert step_local(relay.app, PassTurn(), pen, relay_model)[1] == [Variant("Pass", 2)]
    assert SEATS == 3


def test_counter_fold(counter):
    msgs = [Variant("Add", 4), Variant("BroadcastCount", 3), Variant("Reset"), Variant("Add", -2)]
    assert fold_global(counter.app, msgs) == -2
