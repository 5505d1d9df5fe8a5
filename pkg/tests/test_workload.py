import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvfsched.graph import MessageEdge, insert_slack_tasks
from dvfsched.oracle import Dims, enumerate_optimum, random_instance
from dvfsched.simulator import check_schedule, energy, simulate
from dvfsched.solver import solve_lp, solve_milp
from dvfsched.workload import (
    DecodeError, WorkloadBlowUp, build_workload_milp, check_workload_cap, count_workloads,
    decode_workload_solution, diagnostics, enumerate_workloads, incompatible_pairs,
    vars_per_workload, workload_durations,
)

from conftest import graph_of, task, two_freq_machine


def _pairs(graph, machine, pid=0):
    return [w.members for w in enumerate_workloads(graph, machine, pid)]


def ab_cd(edges=()):
    m = two_freq_machine(((0, 1),))
    g = graph_of([task("A", 0, 2, 1), task("B", 0, 2, 1), task("C", 1, 2, 1),
                  task("D", 1, 2, 1)], edges)
    return g, m


def test_two_cores_without_edges_all_cross_pairs():
    g, m = ab_cd()
    compute = [p for p in _pairs(g, m) if not any(t.startswith("Tb_") for t in p)]
    assert compute == [("A", "C"), ("A", "D"), ("B", "C"), ("B", "D")]
    # barrier slack tasks are members too: (2 + 1) * (2 + 1)
    assert len(_pairs(g, m)) == 9


def test_edge_removes_ordered_pair():
    g, m = ab_cd([MessageEdge("A", "D")])
    pairs = _pairs(g, m)
    compute = [p for p in pairs if set(p) <= set("ABCD")]
    assert compute == [("A", "C"), ("B", "C"), ("B", "D")]
    # A may still run while core 1 waits in the slack before D
    assert ("A", "Ts_C") in pairs and ("B", "Ts_C") in pairs


def workload_figure():
    """Processor 0 runs cores 0 and 1; a task on core 2 sends to T2 and T4."""
    m = two_freq_machine(((0, 1), (2,)))
    g = graph_of([task("T1", 0, 2, 1), task("T2", 0, 2, 1), task("T3", 1, 2, 1),
                  task("T4", 1, 2, 1), task("X", 2, 2, 1)],
                 [MessageEdge("X", "T2", 0.1), MessageEdge("X", "T4", 0.1)])
    return g, m


def test_figure_pairs_enumerated():
    g, m = workload_figure()
    pairs = set(_pairs(g, m))
    assert {("T1", "T3"), ("T1", "Ts_T3"), ("Ts_T1", "Ts_T3"), ("T2", "T4")} <= pairs
    assert len(pairs) == len(_pairs(g, m)) == count_workloads(g, m)[0] == 16
    assert _pairs(g, m, 1) == [("X",), ("Tb_2",)]


def test_members_pairwise_unordered_and_distinct():
    for seed in range(8):
        g, m = random_instance(seed, Dims(1, 3, 3, 2, 0.6))
        full = insert_slack_tasks(g, m)
        wls = enumerate_workloads(g, m, 0)
        assert len({frozenset(w.members) for w in wls}) == len(wls)
        for w in wls:
            for i, a in enumerate(w.members):
                for b in w.members[i + 1:]:
                    assert not full.ordered(a, b)
        # lexicographic by member position
        pos = [tuple(full.core_sequence(full.task(t).core).index(full.task(t)) for t in w.members)
               for w in wls]
        assert pos == sorted(pos)


@given(st.integers(1, 4), st.integers(1, 5))
def test_no_edge_count_is_product(k, n):
    m = two_freq_machine((tuple(range(k)),))
    g = graph_of([task(f"T{c}_{i}", c, 2, 1) for c in range(k) for i in range(n)])
    # each core sequence is n compute tasks plus its barrier slack
    assert count_workloads(g, m) == {0: (n + 1) ** k}
    if (n + 1) ** k <= 300:
        assert len(enumerate_workloads(g, m, 0)) == (n + 1) ** k


@settings(max_examples=25)
@given(st.integers(0, 200), st.sampled_from([0.0, 0.3, 0.7]))
def test_count_matches_enumeration(seed, density):
    g, m = random_instance(seed, Dims(2, 3, 2, 2, density))
    counts = count_workloads(g, m)
    assert counts == {p.id: len(enumerate_workloads(g, m, p.id)) for p in m.processors}


def test_cap_raises_with_counts():
    m = two_freq_machine((tuple(range(6)),))
    g = graph_of([task(f"T{c}_{i}", c, 2, 1) for c in range(6) for i in range(9)])
    with pytest.raises(WorkloadBlowUp) as err:
        build_workload_milp(g, m, 10.0, cap=50_000)
    assert err.value.variables > 50_000 and "workload blow-up" in str(err.value)
    assert check_workload_cap(g, m, cap=10 ** 9) == {0: 10 ** 6}


def test_variable_count_per_workload(fig3):
    g, m = fig3
    model = build_workload_milp(g, m, 10.0)
    nw = len(model.meta["workloads"])
    assert vars_per_workload(m) == 8
    assert sum(v.name.startswith(("bW.", "eW.", "dW.", "tW.", "tWbar.", "gamma."))
               for v in model.variables) == nw * 8
    assert model.n_binary == nw * 3
    assert diagnostics(g, m) == [{"processor": 0, "workloads": nw, "binaries": nw * 3}]


def test_relaxation_feasible(fig3):
    g, m = fig3
    assert solve_lp(build_workload_milp(g, m, 10.0)).status == "optimal"


def test_single_core_is_per_task_choice(one_task):
    g, m = one_task
    assert _pairs(g, m) == [("T1",), ("Tb_0",)]
    # 2 s at 10 W fits the doubled deadline
    res = solve_milp(build_workload_milp(g, m, 100.0))
    assert res.objective == pytest.approx(20.0, abs=1e-7)
    res = solve_milp(build_workload_milp(g, m, 0.0))
    assert res.objective == pytest.approx(30.0, abs=1e-7)


def test_threshold_beyond_deadline_infeasible():
    m = two_freq_machine(th=5.0)
    g = graph_of([task("A", 0, 2.0, 1.0), task("B", 0, 2.0, 1.0)])
    model = build_workload_milp(g, m, 10.0)
    assert solve_milp(model).status == "infeasible"
    assert not enumerate_optimum(model).feasible


def test_decode_single_workload_split():
    m = two_freq_machine(th=0.1)
    g = graph_of([task("T", 0, 1.0, 0.5)])
    model = build_workload_milp(g, m, 100.0)
    res = solve_milp(model)
    sched = decode_workload_solution(model, res.x)
    assert sched.processors[0][0].start == 0.0
    assert [s.freq for s in sched.processors[0]] == [0]
    assert sched.horizon == pytest.approx(1.0)


def test_decode_rejects_inconsistent_point(fig3):
    g, m = fig3
    model = build_workload_milp(g, m, 20.0)
    res = solve_milp(model)
    x = res.x.copy()
    tv = model.meta["task_vars"]
    x[tv.t["T1"][0].id] += 0.01
    with pytest.raises(DecodeError):
        decode_workload_solution(model, x)


def _assert_lemma(model, x):
    dur = workload_durations(model, x)
    for a, b in incompatible_pairs(model):
        assert min(dur[a], dur[b]) <= 1e-9


def test_lemma_pairs_exist_and_hold(fig3):
    g, m = fig3
    model = build_workload_milp(g, m, 20.0)
    pairs = incompatible_pairs(model)
    wls = model.meta["workloads"]
    names = {(wls[a].members, wls[b].members) for a, b in pairs}
    # T1 runs before T2 while Ts_T3 runs after T3
    assert (("T1", "Ts_T3"), ("T2", "T3")) in names
    _assert_lemma(model, solve_milp(model).x)


@pytest.mark.parametrize("seed", range(8))
def test_decoded_optimum_valid_and_reproduced(seed):
    g, m = random_instance(seed, Dims(1, 2, 2, 2, 0.5, 0.05))
    model = build_workload_milp(g, m, 20.0)
    res = solve_milp(model)
    if res.status == "infeasible":
        pytest.skip("instance infeasible under the dwell threshold")
    sched = decode_workload_solution(model, res.x)
    assert check_schedule(sched, m, 20.0, model.meta["exec_time"]).ok
    tl = simulate(g, m, sched)
    tv = model.meta["task_vars"]
    for tid in tv.begin:
        assert tl.begin[tid] == pytest.approx(res.x[tv.begin[tid].id], abs=1e-9)
        assert tl.end[tid] == pytest.approx(res.x[tv.end[tid].id], abs=1e-9)
    assert energy(tl, g, m)[0] == pytest.approx(res.objective, abs=1e-9)
    _assert_lemma(model, res.x)
    delta = [sum(res.x[v.id] for v in d.values()) for d in tv.delta.values()]
    assert np.allclose(delta, 1.0, atol=1e-9)
