import os
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, settings

from dvfsched.graph import FrequencyLevel, MachineModel, MessageEdge, ProcessorSpec, Task, TaskGraph

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", deadline=None, max_examples=10,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def two_freq_machine(cores_per_proc=((0,),), th=0.05, idle=None):
    procs = tuple(ProcessorSpec(p, tuple(cs)) for p, cs in enumerate(cores_per_proc))
    return MachineModel(procs, (FrequencyLevel(0, 1.2e9), FrequencyLevel(1, 2.4e9)), th,
                        idle_power=idle)


def task(tid, core, slow, fast, p_slow=10.0, p_fast=30.0, seq=0):
    return Task(tid, core, exec={0: slow, 1: fast}, power={0: p_slow, 1: p_fast}, seq=seq)


def graph_of(tasks, edges=()):
    """TaskGraph with ``seq`` numbered per core in the order given."""
    counter = {}
    out = []
    for t in tasks:
        out.append(replace(t, seq=counter.get(t.core, 0)))
        counter[t.core] = counter.get(t.core, 0) + 1
    return TaskGraph(tuple(out), tuple(edges))


@pytest.fixture
def one_task():
    """1 core, 1 task: 2 s at 10 W or 1 s at 30 W."""
    machine = two_freq_machine()
    graph = graph_of((task("T1", 0, 2.0, 1.0),))
    return graph, machine


@pytest.fixture
def fig3():
    """core0: T1 (1.5 s @ fmax), T2 (1.0 s); core1: T3 (1.0 s), T4 (0.8 s); T1 -> T4."""
    machine = two_freq_machine(((0, 1),), idle={0: 1.0, 1: 2.0})
    tasks = (
        Task("T1", 0, exec={0: 2.5, 1: 1.5}, power={0: 8.0, 1: 20.0}, seq=0),
        Task("T2", 0, exec={0: 1.6, 1: 1.0}, power={0: 8.0, 1: 20.0}, seq=1),
        Task("T3", 1, exec={0: 1.8, 1: 1.0}, power={0: 8.0, 1: 20.0}, seq=0),
        Task("T4", 1, exec={0: 1.2, 1: 0.8}, power={0: 8.0, 1: 20.0}, seq=1),
    )
    return TaskGraph(tasks, (MessageEdge("T1", "T4", 0.1),)), machine


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.REPORT, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
