"""Energy-minimal DVFS frequency schedules for message-passing task graphs.

Two MILP formulations are provided: :func:`build_workload_milp` shares a
frequency plan per tuple of parallel tasks, :func:`build_switch_milp` places
explicit frequency switch instants. Both are solved with :func:`solve_milp`,
decoded to a :class:`Schedule` and checked with :func:`simulate`.
"""

from .graph import (
    FrequencyLevel, GraphError, MachineModel, MessageEdge, ProcessorSpec, Task, TaskGraph,
    TaskKind, ValidationReport, deadline, insert_slack_tasks, load_instance,
    max_frequency_makespan, validate_graph,
)
from .milp import (
    LinExpr, MilpModel, ModelError, Var, VarKind, add_indicator_nonzero, add_max, add_min,
    add_or, add_positive_part,
)
from .oracle import Dims, OracleRefusal, brute_force_optimum, random_instance
from .simulator import (
    Schedule, Segment, SimulationError, Timeline, all_max_schedule, check_schedule, energy,
    simulate,
)
from .solver import SolveResult, export_lp, import_solution, solve_lp, solve_milp
from .switch import build_switch_milp, decode_switch_solution, estimate_switch_model_size
from .workload import (
    DecodeError, Workload, WorkloadBlowUp, build_workload_milp, count_workloads,
    decode_workload_solution, enumerate_workloads,
)

__version__ = "0.1.0"
