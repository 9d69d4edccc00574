import json

import pytest
from conftest import record_types

from entnet import (
    Frame,
    SPEED_OF_LIGHT_M_PER_S,
    Simulation,
    example_scenario,
    with_uniform_distances,
)
from entnet.errors import (
    SchedulingError,
    SessionNotEstablished,
    TickBudgetExceeded,
    UnknownSession,
    ValidationError,
)
from entnet.invariants import check_all, check_causality
from entnet.scenario import (
    ChildSpec,
    LinkSpec,
    PlanetSpec,
    Scenario,
    UserSpec,
    WorkloadItem,
)


def empty_scenario():
    return Scenario(seed=0, planets=(PlanetSpec("m", (
        ChildSpec("q", (UserSpec("a", 1), UserSpec("b", 2))),
    )),))


# scheduler ----------------------------------------------------------------------


def test_empty_workload_finishes_at_tick_zero():
    sim = Simulation(empty_scenario())
    assert sim.run_until_idle() == 0


def test_events_run_in_tick_seq_order():
    sim = Simulation(empty_scenario())
    seen = []

    class Probe:
        def handle(self, _sim, verb, payload):
            seen.append(payload["n"])
            if payload.get("respawn"):
                _sim.schedule(_sim.now, "probe", "poke", {"n": payload["n"] + 100})

    sim.nodes["probe"] = Probe()
    sim.schedule(5, "probe", "poke", {"n": 2})
    sim.schedule(3, "probe", "poke", {"n": 1, "respawn": True})
    sim.schedule(3, "probe", "poke", {"n": 1.5})
    sim.run_until_idle()
    # same-tick respawn lands after everything already queued for that tick
    assert seen == [1, 1.5, 101, 2]


def test_scheduling_in_the_past_is_a_bug():
    sim = Simulation(empty_scenario())

    class Probe:
        def handle(self, _sim, verb, payload):
            with pytest.raises(SchedulingError):
                _sim.schedule(_sim.now - 1, "probe", "poke", {})

    sim.nodes["probe"] = Probe()
    sim.schedule(2, "probe", "poke", {})
    sim.run_until_idle()


def test_per_tick_budget_catches_same_tick_storms():
    sim = Simulation(empty_scenario())
    sim.tick_budget = 50

    class Storm:
        def handle(self, _sim, verb, payload):
            _sim.schedule(_sim.now, "storm", "again", {})

    sim.nodes["storm"] = Storm()
    sim.schedule(1, "storm", "again", {})
    with pytest.raises(TickBudgetExceeded):
        sim.run_until_idle()


def test_run_until_stops_at_limit():
    sim = Simulation(example_scenario("same-qbs"))
    sim.run_until(2)
    assert sim.now <= 2
    assert "ESTABLISHED" not in record_types(sim)
    sim.run_until_idle()
    assert "CLOSED" in record_types(sim)


# topology -----------------------------------------------------------------------


def test_permanent_circuit_count():
    scenario = Scenario(seed=0, planets=(PlanetSpec("m", (
        ChildSpec("q1", (UserSpec("a", 1),)),
        ChildSpec("q2", (UserSpec("b", 2),)),
    )),))
    sim = Simulation(scenario)
    assert len(sim.circuits) == 4  # 2 user<->child + 2 child<->mother


def test_two_planets_get_one_mother_link():
    sim = Simulation(example_scenario("interplanet"))
    mother_links = [c for c in sim.circuits.values()
                    if {c.a, c.b} == {"earth-mother", "mars-mother"}]
    assert len(mother_links) == 1


def test_duplicate_qid_scenario_is_rejected():
    scenario = Scenario(seed=0, planets=(PlanetSpec("m", (
        ChildSpec("q1", (UserSpec("a", 7),)),
        ChildSpec("q2", (UserSpec("b", 7),)),
    )),))
    with pytest.raises(ValidationError) as err:
        Simulation(scenario)
    assert any("7" in f for f in err.value.findings)


# determinism ----------------------------------------------------------------------


def trace_bytes(sim):
    return "\n".join(sim.trace_lines())


def test_same_seed_runs_are_byte_identical():
    first = Simulation(example_scenario("cross-qbs"))
    second = Simulation(example_scenario("cross-qbs"))
    assert first.run_until_idle() == second.run_until_idle()
    assert trace_bytes(first) == trace_bytes(second)


def test_seed_override_keeps_protocol_sequence():
    first = Simulation(example_scenario("cross-qbs"), seed=101)
    second = Simulation(example_scenario("cross-qbs"), seed=202)
    first.run_until_idle()
    second.run_until_idle()
    assert record_types(first) == record_types(second)


def test_distance_independence_of_traces():
    base = example_scenario("cross-qbs")
    near = Simulation(with_uniform_distances(base, 1.0))
    far = Simulation(with_uniform_distances(base, 9.46e15))
    near.run_until_idle()
    far.run_until_idle()
    assert trace_bytes(near) == trace_bytes(far)
    assert near.latency_report(1).classical_baseline_seconds > 0
    ratio = (far.latency_report(1).classical_baseline_seconds
             / near.latency_report(1).classical_baseline_seconds)
    assert ratio == pytest.approx(9.46e15, rel=1e-12)


def test_arrival_is_send_plus_two_regardless_of_distance():
    for distance in (1.0, 9.46e15):
        sim = Simulation(with_uniform_distances(example_scenario("cross-qbs"), distance))
        sim.run_until_idle()
        send_tick = next(r.tick for r in sim.trace if r.type == "SEND")
        arrivals = {r.detail["index"]: r.tick for r in sim.trace
                    if r.type == "DATA" and r.node == "user-c"}
        # frame i leaves i ticks after SEND (channel pacing), then crosses
        # both stations at one processing tick each
        for index, tick in arrivals.items():
            assert tick == send_tick + index + 2


# latency accounting ---------------------------------------------------------------


def test_same_qbs_latency_report(run_example):
    sim = run_example("same-qbs")
    report = sim.latency_report(1)
    assert report.entangled_channel_ticks == 0
    assert report.processing_ticks == 1
    assert report.classical_baseline_seconds == pytest.approx(
        20.0 / SPEED_OF_LIGHT_M_PER_S)


def test_interplanet_latency_report(run_example):
    sim = run_example("interplanet")
    report = sim.latency_report(1)
    assert report.entangled_channel_ticks == 0
    assert report.processing_ticks == 2
    assert report.classical_baseline_seconds == pytest.approx(
        (10 + 1000 + 2.25e11 + 1000 + 10) / SPEED_OF_LIGHT_M_PER_S)
    assert report.classical_baseline_seconds == pytest.approx(750.5, abs=0.1)


def test_zero_distance_baseline_is_zero():
    scenario = Scenario(
        seed=0,
        planets=(PlanetSpec("m", (
            ChildSpec("q", (UserSpec("a", 1), UserSpec("b", 2))),
        )),),
        links=(LinkSpec("a", "q", 0.0), LinkSpec("b", "q", 0.0)),
        workload=(WorkloadItem(0, 1, 2, b"x"),),
    )
    sim = Simulation(scenario)
    sim.run_until_idle()
    report = sim.latency_report(1)
    assert report.classical_baseline_seconds == 0.0
    assert report.entangled_channel_ticks == 0


def test_latency_report_errors():
    sim = Simulation(example_scenario("same-qbs"))
    with pytest.raises(UnknownSession):
        sim.latency_report(99)
    sid = sim.request_session(11, 12)
    with pytest.raises(SessionNotEstablished):
        sim.latency_report(sid)


# trace format ---------------------------------------------------------------------


def test_trace_lines_have_fixed_key_order(run_example):
    sim = run_example("same-qbs")
    for line in sim.trace_lines():
        assert list(json.loads(line)) == ["tick", "seq", "node", "type",
                                          "session", "detail"]


def test_trace_file_round_trip(tmp_path, run_example):
    sim = run_example("cross-qbs")
    path = tmp_path / "trace.ndjson"
    sim.write_trace(str(path))
    lines = path.read_text().splitlines()
    assert len(lines) == len(sim.trace)
    assert json.loads(lines[0])["type"] == "SESSION_REQUEST"


def test_stats_shape(run_example):
    sim = run_example("same-qbs")
    stats = sim.stats()
    assert stats["sessions"] == {"total": 1, "established": 1, "failed": 0,
                                 "rejected": 0, "not_found": 0, "closed": 1}
    assert stats["record_counts"]["DATA"] == 6
    assert stats["final_tick"] == sim.now


def test_causality_and_full_invariants(run_example):
    for kind in ("same-qbs", "cross-qbs", "interplanet"):
        sim = run_example(kind)
        check_causality(sim.trace)
        check_all(sim)


# data plane corner cases -------------------------------------------------------------


def test_raw_relay_data_arrives_identically():
    sim = Simulation(example_scenario("same-qbs"))
    sim.run_until_idle()
    sim.users[12].receive_poll()  # drain the workload transfer
    sid = sim.request_session(11, 12)
    sim.run_until_idle()
    frame = Frame(bytes(range(16)))
    sim.relay_data(sid, frame)
    sim.run_until_idle()
    assert sim.users[12].raw_frames == [(sid, frame)]
    assert sim.users[12].receive_poll() == []  # raw frames are not messages


def test_shared_channel_contention_keeps_messages_intact():
    scenario = Scenario(
        seed=9,
        planets=(PlanetSpec("m", (
            ChildSpec("q1", (UserSpec("a", 1),)),
            ChildSpec("q2", (UserSpec("b", 2), UserSpec("c", 3))),
        )),),
        workload=(
            WorkloadItem(0, 1, 2, bytes(range(90))),
            WorkloadItem(0, 1, 3, bytes(reversed(range(90)))),
        ),
    )
    sim = Simulation(scenario)
    sim.run_until_idle()
    assert sim.users[2].receive_poll() == [(1, bytes(range(90)))]
    assert sim.users[3].receive_poll() == [(2, bytes(reversed(range(90))))]
    check_all(sim)


def test_teardown_with_frames_in_flight_stays_clean():
    sim = Simulation(example_scenario("cross-qbs"))
    sim.run_until_idle()
    sim.users[13].receive_poll()
    sid = sim.request_session(11, 13)
    sim.run_until_idle()
    sim.send_message(sid, bytes(600))  # 39 frames, ~40 ticks of pipeline
    sim.run_until(sim.now + 5)
    sim.teardown_session(sid)
    closed_at = max(r.tick for r in sim.trace if r.type == "CLOSED")
    sim.run_until_idle()
    late_data = [r for r in sim.trace
                 if r.type == "DATA" and r.session == sid and r.tick > closed_at]
    assert late_data == []
    assert sim.users[13].receive_poll() == []  # message never completed
    check_all(sim)


def test_multi_frame_message_survives_pipelining():
    sim = Simulation(example_scenario("cross-qbs"))
    sim.run_until_idle()
    sim.users[13].receive_poll()  # drain the workload transfer
    sid = sim.request_session(11, 13)
    sim.run_until_idle()
    payload = bytes(i % 251 for i in range(1000))
    sim.send_message(sid, payload)
    sim.run_until_idle()
    assert sim.users[13].receive_poll() == [(sid, payload)]
