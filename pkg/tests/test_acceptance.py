"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``REPORT`` and echoed in the terminal summary
(see ``conftest.py``), so they appear in plain ``pytest -v`` output.
"""

import math
import time

import numpy as np
import pytest

from dvfsched.graph import insert_slack_tasks
from dvfsched.milp import MilpModel
from dvfsched.oracle import Dims, enumerate_optimum, oracle_suite, random_instance
from dvfsched.simulator import check_schedule, energy, simulate
from dvfsched.solver import export_lp, import_solution, solve_milp, write_solution
from dvfsched.switch import (
    adequate_slots, build_switch_milp, decode_switch_solution, estimate_switch_model_size,
)
from dvfsched.workload import (
    WorkloadBlowUp, build_workload_milp, count_workloads, decode_workload_solution,
    incompatible_pairs, workload_durations,
)

import encoding_checks as ec
from conftest import graph_of, task, two_freq_machine

REPORT: list[str] = []
REL = 1e-6


def record(num, ok, detail):
    REPORT.append(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    print(REPORT[-1])
    return ok


def rel_close(a, b, tol=REL):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(abs(a), abs(b), 1e-12)


@pytest.fixture(scope="module")
def suite():
    """Workload (branch and bound) and oracle optimum for every suite case."""
    t0 = time.perf_counter()
    cases = []
    for c in oracle_suite(50):
        model = build_workload_milp(c.graph, c.machine, c.x)
        res = solve_milp(model)
        ref = enumerate_optimum(model)
        cases.append((c, model, res, ref))
    return cases, time.perf_counter() - t0


@pytest.fixture(scope="module")
def switch_results(suite):
    out = []
    for c, _, _, _ in suite[0]:
        model = build_switch_milp(c.graph, c.machine, c.x, adequate_slots(c.graph, c.machine))
        out.append((model, solve_milp(model, engine="highs")))
    return out


def _energy(res):
    return res.objective if res.status == "optimal" else math.inf


def test_c1_oracle_equivalence(suite):
    cases, elapsed = suite
    shapes_ok = all(c.dims.procs <= 2 and c.dims.cores <= 2 and c.dims.tasks_per_core <= 3
                    and c.dims.freqs == 2 and model.n_binary <= 20 for c, model, _, _ in cases)
    bad = [c.seed for c, _, res, ref in cases if not rel_close(_energy(res), ref.energy)]
    feasible = sum(ref.feasible for *_, ref in cases)
    ok = len(cases) >= 50 and shapes_ok and not bad and elapsed < 300
    record(1, ok, f"{len(cases) - len(bad)}/{len(cases)} match the oracle "
                  f"({feasible} feasible), {elapsed:.1f}s; mismatched seeds {bad}")
    assert ok


def test_c2_formulation_agreement(suite, switch_results):
    cases, _ = suite
    bad = []
    for (c, _, res, _), (_, sres) in zip(cases, switch_results):
        if not rel_close(_energy(res), _energy(sres)):
            bad.append((c.seed, _energy(res), _energy(sres)))
    ok = not bad
    never_worse = all(_energy(s) <= _energy(r) * (1 + REL) for (_, _, r, _), (_, s) in
                      zip(cases, switch_results))
    record(2, ok, f"{len(cases) - len(bad)}/{len(cases)} agree within 1e-6; "
                  f"switch <= workload on all: {never_worse}; "
                  f"first disagreements (seed, workload, switch): {bad[:3]}")
    assert ok, bad


def test_c3_binary_count():
    rng = np.random.default_rng(2024)
    pairs = []
    ok = True
    for _ in range(10):
        n, m = int(rng.integers(2, 13)), int(rng.integers(2, 13))
        # n - 1 compute tasks on one core plus its barrier slack
        g = graph_of([task(f"T{i}", 0, 2.0, 1.0) for i in range(n - 1)])
        mach = two_freq_machine()
        size = estimate_switch_model_size(g, mach, m)
        built = build_switch_milp(g, mach, 10.0, m).n_binary
        ok &= size.task_binaries == 5 * n * m and built == size.binary
        pairs.append((n, m, size.task_binaries))
    record(3, ok, f"task binaries == 5*n*m on {pairs}")
    assert ok


def test_c4_blow_up():
    t0 = time.perf_counter()
    ok = True
    checks = []
    for k, n in [(2, 3), (3, 4), (4, 2), (5, 3), (16, 41)]:
        # n - 1 compute tasks per core plus the barrier gives sequences of length n
        mach = two_freq_machine((tuple(range(k)),))
        g = graph_of([task(f"T{c}_{i}", c, 2, 1) for c in range(k) for i in range(n - 1)])
        assert all(len(insert_slack_tasks(g, mach).core_sequence(c)) == n for c in range(k))
        got = count_workloads(g, mach)[0]
        ok &= got == n ** k
        checks.append((k, n, got == n ** k))
    mach = two_freq_machine((tuple(range(16)),))
    g = graph_of([task(f"T{c}_{i}", c, 2, 1) for c in range(16) for i in range(40)])
    try:
        build_workload_milp(g, mach, 10.0)
        raised = False
    except WorkloadBlowUp as exc:
        raised = exc.variables > exc.cap and "workload blow-up" in str(exc)
    elapsed = time.perf_counter() - t0
    ok &= raised and elapsed < 30
    record(4, ok, f"count == n^k for (k, n, ok) {checks}; 16x40 instance raised the cap "
                  f"error: {raised}; {elapsed:.2f}s")
    assert ok


def _reproduced(model, res, sched, case, tol=1e-9):
    tl = simulate(case.graph, case.machine, sched)
    tv = model.meta["task_vars"]
    times = max(max(abs(tl.begin[t] - res.x[tv.begin[t].id]), abs(tl.end[t] - res.x[tv.end[t].id]))
                for t in tv.begin)
    e = abs(energy(tl, case.graph, case.machine)[0] - res.objective)
    return times <= tol and e <= tol, max(times, e)


def test_c5_schedule_validity(suite, switch_results):
    cases, _ = suite
    failures, checked, worst, zero_x = [], 0, 0.0, 0
    for (c, model, res, _), (smodel, sres) in zip(cases, switch_results):
        for mdl, r, decode in ((model, res, decode_workload_solution),
                               (smodel, sres, decode_switch_solution)):
            if r.status != "optimal":
                continue
            checked += 1
            sched = decode(mdl, r.x)
            valid = check_schedule(sched, c.machine, c.x, mdl.meta["exec_time"]).ok
            same, err = _reproduced(mdl, r, sched, c)
            worst = max(worst, err)
            total = r.x[mdl.meta["task_vars"].total_time.id]
            exact = c.x != 0 or total == mdl.meta["exec_time"]
            zero_x += c.x == 0
            if not (valid and same and exact):
                failures.append((c.seed, mdl.name, valid, err, total - mdl.meta["exec_time"]))
    ok = not failures and checked > 0
    record(5, ok, f"{checked} decoded optima valid and reproduced (worst deviation "
                  f"{worst:.2e}); {zero_x} x=0 optima hit exec_Time exactly; failures {failures}")
    assert ok


def test_c6_lemma(suite):
    cases, _ = suite
    pairs, bad = 0, []
    for c, model, res, _ in cases:
        if res.status != "optimal":
            continue
        dur = workload_durations(model, res.x)
        for a, b in incompatible_pairs(model):
            pairs += 1
            if min(dur[a], dur[b]) > 1e-9:
                bad.append((c.seed, a, b))
    ok = not bad and pairs > 0
    record(6, ok, f"{pairs} incompatible workload pairs checked, violations {bad}")
    assert ok


def test_c7_monotone_in_x():
    xs = (0.0, 10.0, 20.0, 50.0, 100.0)
    bad, series = [], []
    for seed in range(10):
        g, m = random_instance(500 + seed, Dims(1, 2, 1, 2, 0.0, 0.05) if seed % 2
                               else Dims(1, 1, 3, 2, 0.0, 0.05))
        values = [_energy(solve_milp(build_workload_milp(g, m, x))) for x in xs]
        series.append(values)
        if any(b > a + REL * abs(a) for a, b in zip(values, values[1:]) if not math.isinf(a)):
            bad.append(seed)
    ok = not bad
    record(7, ok, f"energy non-increasing over x={xs} on 10 instances; violations {bad}")
    assert ok


def test_c8_encoding_soundness():
    rng = np.random.default_rng(8)
    pts = ec.grid(1000, rng)
    side = ec.grid(32, rng)
    pairs = [(a, b) for a in side for b in side]
    counts = {
        "indicator": ec.check_indicator(pts),
        "positive-part": ec.check_positive_part(pairs),
        "max": ec.check_maxmin(pairs, "max"),
        "min": ec.check_maxmin(pairs, "min"),
        "or": ec.check_or(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 248)])),
    }
    ok = all(v >= 1000 for v in counts.values())
    record(8, ok, f"points certified per encoding {counts}")
    assert ok


def _toy_models():
    from test_solver import cover_model, random_milp
    models = [cover_model()] + [random_milp(s, nbin=8) for s in (1, 2, 5, 9)]
    for seed in range(5):
        g, m = random_instance(seed, Dims(1, 1, 2, 2, 0.0, 0.05))
        models.append(build_workload_milp(g, m, 20.0))
    return models


def _external_check(path_lp, model, x):
    """Objective and row activities of ``x`` in the file as HiGHS reads it."""
    import highspy
    from dvfsched.solver import escape_name
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path_lp))
    lp = h.getLp()
    pos = {escape_name(v.name): v.id for v in model.variables}
    col = np.array([x[pos[n]] for n in lp.col_names_])
    obj = float(np.dot(lp.col_cost_, col)) + lp.offset_
    act = np.zeros(lp.num_row_)
    a = lp.a_matrix_
    for j in range(lp.num_col_):
        for k in range(a.start_[j], a.start_[j + 1]):
            act[a.index_[k]] += a.value_[k] * col[j]
    feas = bool(np.all(act >= np.array(lp.row_lower_) - 1e-7)
                and np.all(act <= np.array(lp.row_upper_) + 1e-7))
    return obj, feas


def test_c9_round_trip(tmp_path):
    results = []
    for k, model in enumerate(_toy_models()):
        res = solve_milp(model)
        assert res.status == "optimal"
        export_lp(model, tmp_path / f"m{k}.lp")
        write_solution(model, res.x, tmp_path / f"m{k}.sol")
        x = import_solution(tmp_path / f"m{k}.sol", model)
        ext_obj, ext_feas = _external_check(tmp_path / f"m{k}.lp", model, x)
        same = (abs(model.objective_value(x) - res.objective) <= 1e-9
                and abs(ext_obj - res.objective) <= 1e-9 and ext_feas)
        results.append(same)
    ok = len(results) == 10 and all(results)
    record(9, ok, f"{sum(results)}/{len(results)} toy models re-validated with identical objective")
    assert ok
