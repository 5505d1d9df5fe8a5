"""How the workload count grows with cores, and where the variable cap bites.

Run: python3 demos/blowup.py
"""

from dvfsched.graph import FrequencyLevel, MachineModel, MessageEdge, ProcessorSpec, Task, TaskGraph
from dvfsched.switch import estimate_switch_model_size
from dvfsched.workload import WorkloadBlowUp, build_workload_milp, count_workloads


def instance(cores, tasks, chain=False):
    machine = MachineModel((ProcessorSpec(0, tuple(range(cores))),),
                           (FrequencyLevel(0, 1.2e9), FrequencyLevel(1, 2.4e9)), 0.05)
    ts = [Task(f"T{c}_{i}", c, exec={0: 2.0, 1: 1.0}, power={0: 10.0, 1: 30.0}, seq=i)
          for c in range(cores) for i in range(tasks)]
    edges = []
    if chain:
        # each core hands a message to the next one, halfway down its sequence
        edges = [MessageEdge(f"T{c}_{tasks // 2}", f"T{c + 1}_{tasks // 2 + 1}", 0.1)
                 for c in range(cores - 1)]
    return TaskGraph(tuple(ts), tuple(edges)), machine


def main():
    limit = 10 ** 6
    print("cores  tasks  workloads(no edges)  workloads(chained)  switch binaries (m=2F*len)")
    for cores in (1, 2, 4, 8, 16):
        g, m = instance(cores, 6)
        gc, _ = instance(cores, 6, chain=True)
        free = sum(count_workloads(g, m).values())
        # related cores need a real search, so stop counting past the limit
        chained = sum(count_workloads(gc, m, limit=limit).values())
        chained = f">{limit}" if chained > limit else str(chained)
        size = estimate_switch_model_size(g, m, 2 * 2 * 7)
        print(f"{cores:5d}  {6:5d}  {free:19d}  {chained:>18s}  {size.binary:10d}")

    g, m = instance(16, 40)
    try:
        build_workload_milp(g, m, 10.0)
    except WorkloadBlowUp as exc:
        print("\n16 cores x 40 tasks:", exc)


if __name__ == "__main__":
    main()
