import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvfsched.graph import TaskGraph, insert_slack_tasks, max_frequency_makespan, power_table
from dvfsched.oracle import Dims, random_instance
from dvfsched.simulator import (
    Schedule, Segment, SimulationError, TaskAssignment, all_max_schedule, check_schedule,
    constant_schedule, energy, simulate, write_gantt,
)

from conftest import graph_of, task, two_freq_machine


def test_single_task_slow(one_task):
    g, m = one_task
    tl = simulate(g, m, constant_schedule(m, 0, 10.0))
    assert tl.end["T1"] == 2.0 and tl.total_time == 2.0
    assert energy(tl, g, m)[1]["T1"] == pytest.approx(20.0)


def test_switch_mid_task(one_task):
    g, m = one_task
    sched = Schedule({0: [Segment(0.0, 0), Segment(1.0, 1)]}, 10.0)
    tl = simulate(g, m, sched)
    assert tl.end["T1"] == pytest.approx(1.5)
    assert tl.time_at["T1"] == pytest.approx({0: 1.0, 1: 0.5})
    # 1 s at 10 W plus 0.5 s at 30 W
    assert energy(tl, g, m)[1]["T1"] == pytest.approx(25.0)


def test_slack_waits_for_message(fig3):
    g, m = fig3
    tl = simulate(g, m, all_max_schedule(m))
    # T3 ends at 1.0, the message from T1 lands at 1.5 + 0.1
    assert tl.begin["Ts_T3"] == pytest.approx(1.0)
    assert tl.end["Ts_T3"] == pytest.approx(1.6)
    assert tl.begin["T4"] == pytest.approx(1.6)
    spans = {tid: (a, b) for tid, a, b in tl.slack_intervals(g)}
    assert spans["Ts_T3"] == pytest.approx((1.0, 1.6))
    assert set(spans) == {"Ts_T3", "Tb_0", "Tb_1"}
    assert tl.total_time == pytest.approx(max_frequency_makespan(g, m))


def test_barrier_released_together(fig3):
    g, m = fig3
    tl = simulate(g, m, all_max_schedule(m))
    assert tl.end["Tb_0"] == tl.end["Tb_1"] == tl.total_time
    # core 0 idles in its barrier from 2.5 while core 1 finishes T4 at 2.4
    assert tl.begin["Tb_0"] == pytest.approx(2.5)
    assert tl.time_at["Tb_1"][1] == pytest.approx(0.1)


def test_short_horizon_reports_unfinished(one_task):
    g, m = one_task
    with pytest.raises(SimulationError, match="unfinished tasks"):
        simulate(g, m, constant_schedule(m, 0, 1.0))


def test_planned_slack_release_honoured(one_task):
    g, m = one_task
    plan = {"Tb_0": TaskAssignment(1.0, 1.4, {0: 0.0, 1: 0.4})}
    tl = simulate(g, m, Schedule({0: [Segment(0.0, 1)]}, 1.4, plan))
    assert tl.end["Tb_0"] == pytest.approx(1.4)
    idle = power_table(insert_slack_tasks(g, m).task("Tb_0"), insert_slack_tasks(g, m), m)
    assert energy(tl, g, m)[0] == pytest.approx(30.0 + 0.4 * idle[1])


def test_check_schedule_flags_short_dwell():
    m = two_freq_machine(th=0.5)
    sched = Schedule({0: [Segment(0.0, 0), Segment(0.3, 1)]}, 2.0)
    report = check_schedule(sched, m, 100.0, 1.0)
    assert not report.ok and "below threshold" in report


def test_check_schedule_horizon_inclusive():
    m = two_freq_machine(th=0.5)
    assert check_schedule(constant_schedule(m, 1, 1.2), m, 20.0, 1.0).ok
    assert "exceeds deadline" in check_schedule(constant_schedule(m, 1, 1.21), m, 20.0, 1.0)


def test_check_schedule_empty():
    m = two_freq_machine()
    sched = Schedule({}, 0.0)
    assert check_schedule(sched, m, 0.0, 0.0).ok
    assert simulate(TaskGraph(()), m, sched).total_time == 0.0


def test_check_schedule_unknown_frequency():
    m = two_freq_machine()
    assert "unknown frequency" in check_schedule(constant_schedule(m, 5, 1.0), m, 0.0, 1.0)


def piecewise(m, cuts, horizon, rng):
    segs = [Segment(0.0, int(rng.integers(0, 2)))]
    for c in sorted(cuts):
        segs.append(Segment(float(c), int(rng.integers(0, 2))))
    return Schedule({p.id: list(segs) for p in m.processors}, horizon)


@settings(max_examples=30)
@given(st.integers(0, 500), st.lists(st.floats(0.01, 8.0), max_size=6))
def test_progress_conservation(seed, cuts):
    g, m = random_instance(seed, Dims(1, 2, 2, 2, 0.5))
    sched = piecewise(m, cuts, 100.0, np.random.default_rng(seed))
    tl = simulate(g, m, sched)
    for t in g.compute_tasks:
        done = sum(tl.time_at[t.id][f] / t.exec[f] for f in m.freq_ids)
        assert done == pytest.approx(1.0, abs=1e-9)
    for t in g.tasks:
        assert tl.begin[t.id] <= tl.end[t.id]
    for e in g.edges:
        assert tl.begin[e.to_task] >= tl.end[e.from_task] + e.transmission - 1e-12


@settings(max_examples=20)
@given(st.integers(0, 500))
def test_all_max_matches_makespan(seed):
    g, m = random_instance(seed, Dims(2, 2, 3, 3, 0.6))
    assert simulate(g, m, all_max_schedule(m)).total_time == max_frequency_makespan(g, m)


def test_schedule_json_round_trip(tmp_path, fig3):
    sched = Schedule({0: [Segment(0.0, 0), Segment(0.75, 1)]}, 3.0,
                     {"T1": TaskAssignment(0.0, 2.0, {0: 0.75, 1: 1.25})})
    sched.save(tmp_path / "s.json")
    assert Schedule.load(tmp_path / "s.json") == sched


def test_gantt_csv(tmp_path, fig3):
    g, m = fig3
    sched = Schedule({0: [Segment(0.0, 0), Segment(1.0, 1)]}, 10.0)
    tl = simulate(g, m, sched)
    write_gantt(tmp_path / "g.csv", tl, g, m, sched)
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert rows[0].keys() == {"task", "core", "kind", "start", "end", "segments"}
    t1 = next(r for r in rows if r["task"] == "T1")
    assert t1["segments"].startswith("f0:0-1;f1:1-")
    assert {r["kind"] for r in rows} == {"compute", "slack", "barrier_slack"}
