"""Solve one small instance with both formulations and replay the schedules.

The workload formulation enforces the dwell threshold on every per-workload
frequency piece; the switch formulation only on processor-level segments.
With a large threshold the two optima can therefore differ, and the switch
optimum is never the larger one.

Run: python3 demos/formulations.py
"""

from dvfsched.oracle import Dims, random_instance
from dvfsched.simulator import check_schedule, energy, simulate
from dvfsched.solver import solve_milp
from dvfsched.switch import adequate_slots, build_switch_milp, decode_switch_solution
from dvfsched.workload import build_workload_milp, decode_workload_solution


def show(name, model, res, decode, graph, machine, x):
    if res.status != "optimal":
        print(f"{name:9s} {res.status}")
        return
    sched = decode(model, res.x)
    tl = simulate(graph, machine, sched)
    ok = check_schedule(sched, machine, x, model.meta["exec_time"]).ok
    segs = ", ".join(f"f{s.freq}@{s.start:.3f}" for s in sched.processors[0])
    print(f"{name:9s} {res.objective:10.4f} J  simulated {energy(tl, graph, machine)[0]:10.4f} J "
          f"valid={ok}  [{segs}]")


def main():
    graph, machine = random_instance(3, Dims(1, 2, 1, 2, 0.0, 0.05))
    for th in (1e-3, 0.2, 0.4):
        machine = type(machine)(machine.processors, machine.frequencies, th,
                                idle_power=machine.idle_power)
        x = 20.0
        print(f"\nthreshold {th} s, x = {x}%")
        wm = build_workload_milp(graph, machine, x)
        show("workload", wm, solve_milp(wm), decode_workload_solution, graph, machine, x)
        sm = build_switch_milp(graph, machine, x, adequate_slots(graph, machine))
        show("switch", sm, solve_milp(sm, engine="highs"), decode_switch_solution,
             graph, machine, x)


if __name__ == "__main__":
    main()
