import hashlib
from dataclasses import replace

import pytest

from lgmvu.apps import GOLD, PURPLE, ScriptLine
from lgmvu.codec import Variant, decode
from lgmvu.sim import (
    COLUMN_WIDTH,
    ConfigError,
    CounterRng,
    SimConfig,
    check_convergence,
    demo_config,
    format_config,
    parse_config,
    random_config,
    render_split_screen,
    run_sim,
)
from reference import plain_fold


def server_fold(trace):
    schema, app = trace.schema, trace.app
    msgs = [decode(schema, schema.global_msg, e.payload) for e in trace.server.log]
    return plain_fold(app.update_global, app.init_global(), msgs)


def test_fig7_zero_latency(fig7):
    config = SimConfig(clients=2, script=(ScriptLine(10, 1, (4,), "click"),), duration_ms=100)
    trace = run_sim(config, fig7.app, fig7.schema)
    assert trace.quiescent
    assert [rt.global_model for rt in trace.clients.values()] == [Variant("Square")] * 2
    assert check_convergence(trace).converged


def test_fig7_demo(fig7):
    trace = run_sim(demo_config(fig7, latency_min=3, latency_max=9), fig7.app, fig7.schema)
    assert check_convergence(trace).converged
    assert trace.server.seq == 1
    assert (trace.clients[1].local, trace.clients[2].local) == (GOLD, PURPLE)


def test_empty_script_keeps_initial_state(relay):
    trace = run_sim(SimConfig(clients=3, latency_max=20, duration_ms=500), relay.app, relay.schema)
    for rt in trace.clients.values():
        assert rt.local == relay.app.init_local()
        assert rt.global_model == relay.app.init_global()
    assert trace.server.seq == 0


def test_lossy_counter_run_converges_to_fold(counter):
    config = random_config(11, counter, clients=3, max_submits=50, latency=(5, 50), drop_prob=0.2)
    trace = run_sim(config, counter.app, counter.schema)
    assert check_convergence(trace).converged
    assert trace.server.seq > 0
    assert "drop Apply" in trace.text() and "ResyncReq" in trace.text()
    for rt in trace.clients.values():
        assert rt.global_model == server_fold(trace)


def test_determinism(relay):
    config = random_config(5, relay, clients=4, max_submits=30, latency=(1, 60), drop_prob=0.3)
    a = run_sim(config, relay.app, relay.schema)
    b = run_sim(config, relay.app, relay.schema)
    assert a.text() == b.text() and a.digest() == b.digest()


def test_seed_changes_trace(fig7):
    base = demo_config(fig7, latency_min=1, latency_max=50)
    a = run_sim(base, fig7.app, fig7.schema)
    b = run_sim(replace(base, seed=1), fig7.app, fig7.schema)
    assert a.digest() != b.digest()


def test_negative_control_detects_corruption(fig7):
    trace = run_sim(demo_config(fig7), fig7.app, fig7.schema)
    assert check_convergence(trace).converged
    bad = trace.clients[2]
    trace.clients[2] = replace(bad, global_model=Variant("Circle"))
    result = check_convergence(trace)
    assert not result.converged
    assert any("client2" in d for d in result.details)
    assert result.first_divergence is not None


def test_non_quiescent_is_not_converged(fig7):
    config = SimConfig(clients=2, latency_min=50, latency_max=50, script=(ScriptLine(10, 1, (4,), "click"),), duration_ms=60)
    trace = run_sim(config, fig7.app, fig7.schema)
    assert not trace.quiescent
    assert not check_convergence(trace).converged


def test_forced_gap_and_late_join(counter):
    script = tuple(ScriptLine(10 + i, 1, (1,), "click") for i in range(5))
    config = SimConfig(
        clients=3,
        latency_min=2,
        latency_max=5,
        script=script,
        duration_ms=3000,
        ping_ms=500,
        join_ms={3: 1000},
        force_drops=frozenset({(2, 3), (2, 5)}),
    )
    trace = run_sim(config, counter.app, counter.schema)
    assert check_convergence(trace).converged
    assert "drop Apply seq=5 to client2" in trace.text()
    assert all(rt.global_model == 5 for rt in trace.clients.values())


def test_split_screen(fig7):
    trace = run_sim(demo_config(fig7, latency_min=2, latency_max=2), fig7.app, fig7.schema)
    after = render_split_screen(trace, 100)
    assert after == render_split_screen(trace, 100)
    lines = after.splitlines()
    assert lines[0] == "t=100 ms"
    body = "\n".join(lines)
    assert body.count("shape=square") == 2
    assert "colour=gold" in body and "colour=purple" in body
    assert "seq=1" in body
    at_zero = render_split_screen(trace, 0)
    assert at_zero.count("shape=circle") == 2 and at_zero.count("colour=purple") == 2
    for line in (row for row in lines[1:] if "-+-" not in row):
        assert all(len(cell.strip()) <= COLUMN_WIDTH for cell in line.split(" |"))


def test_config_roundtrip(relay):
    config = SimConfig(
        seed=9,
        clients=3,
        latency_min=1,
        latency_max=4,
        drop_prob=0.25,
        script=relay.demo_script,
        duration_ms=900,
        ping_ms=200,
        join_ms={2: 30},
        force_drops=frozenset({(1, 2)}),
        session="room",
    )
    assert parse_config(format_config(config)) == config


def test_config_defaults_duration(fig7):
    config = parse_config("clients: 2\nlatency: 0 10\nping: 100\nscript:\n10 1 /4 click\n")
    assert config.duration_ms >= 10 + 10 * 10
    assert check_convergence(run_sim(config, fig7.app, fig7.schema)).converged


@pytest.mark.parametrize(
    "text",
    [
        "colour: blue",
        "clients: 0",
        "drop: 1.0",
        "latency: 5 1",
        "clients: 2\nscript:\n10 3 /1 click",
        "clients: two",
        "script:\n10 1 /1",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unroutable_script_event_is_logged(fig7):
    config = SimConfig(clients=1, script=(ScriptLine(5, 1, (9,), "click"),), duration_ms=50)
    trace = run_sim(config, fig7.app, fig7.schema)
    assert trace.unroutable == 1 and "ScriptEventUnroutable" in trace.text()


def test_counter_rng_matches_blake2b():
    rng = CounterRng(42)
    for i in range(5):
        block = (42).to_bytes(8, "big") + i.to_bytes(8, "big")
        assert rng.next_u64() == int.from_bytes(hashlib.blake2b(block, digest_size=8).digest(), "big")
    # rejection sampling keeps randint in range
    rng = CounterRng(42)
    assert [rng.randint(0, 99) for _ in range(5)] == [90, 17, 84, 6, 46]


@pytest.mark.parametrize("seed", range(100))
def test_bulk_random_configs(seed, fig7, counter, relay):
    example = (fig7, counter, relay)[seed % 3]
    rng = CounterRng(seed)
    config = random_config(
        seed,
        example,
        clients=rng.randint(2, 5),
        max_submits=rng.randint(1, 60),
        latency=(1, rng.randint(1, 100)),
        drop_prob=(0.0, 0.1, 0.3)[seed % 3],
        max_events=80,
    )
    trace = run_sim(config, example.app, example.schema)
    result = check_convergence(trace)
    assert result.converged, result.details
