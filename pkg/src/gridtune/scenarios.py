"""Built-in demonstration scenarios.

``scenario1``: a matrix-addition style job starts single-threaded on a
2-processor SMP; the node agent spots the idle processor and the tuning
agent doubles the thread count.

``scenario2``: a sorting job runs 2 threads on a loaded 2-processor server
(Server1) next to an idle 16-processor server (Server2); the job is moved
to Server2 where it uses 4 processors.  It is run for three data sizes and
compared against staying on Server1 and against a serial run there.

The numbers below are chosen for the demonstration, not measured.
"""
from __future__ import annotations

import copy
from dataclasses import replace

from .config import (
    AgentParams, ControlFlags, JobSpec, NodeSpec, PlacementSpec, ResourceSpec, SimSpec, SiteSpec,
    TopologySpec,
)
from .errors import UnknownScenarioError
from .grid_model import sorting_work

SCENARIOS = ("scenario1", "scenario2")

SORT_SIZES = (10**5, 10**6, 10**7)
SERVER_SPEED = 1.0e5          # work units per second per processor
SERVER1_BACKGROUND = 0.5
SORT_SERIAL_FRACTION = 0.05


def scenario1_spec(seed: int = 42) -> SimSpec:
    topo = TopologySpec(sites=[SiteSpec("site-A", [
        ResourceSpec("SMP1", "SMP", [NodeSpec("smp1", processors=2, speed=1.0)]),
    ])])
    job = JobSpec("matadd", total_work=100.0, serial_fraction=0.1,
                  placement=PlacementSpec("SMP1", "smp1", threads=1))
    return SimSpec(topology=topo, jobs=[job], seed=seed, t_end=500.0, name="scenario1")


def scenario2_spec(n: int = SORT_SIZES[0], seed: int = 42) -> SimSpec:
    topo = TopologySpec(sites=[SiteSpec("site-A", [
        ResourceSpec("Server1", "SMP", [NodeSpec("server1", processors=2, speed=SERVER_SPEED,
                                                 background_load=SERVER1_BACKGROUND)]),
        ResourceSpec("Server2", "SMP", [NodeSpec("server2", processors=16, speed=SERVER_SPEED)]),
    ])])
    job = JobSpec("sort", total_work=sorting_work(n), serial_fraction=SORT_SERIAL_FRACTION,
                  min_processors=2, max_threads=4, memory_need=n / 1e6,
                  placement=PlacementSpec("Server1", "server1", threads=2))
    agents = AgentParams(transfer_base=1.0, transfer_per_memory=0.1)
    return SimSpec(topology=topo, jobs=[job], agents=agents, seed=seed, t_end=20000.0,
                   name=f"scenario2-n{n}")


def stay_put(spec: SimSpec) -> SimSpec:
    """Counterfactual with every corrective action switched off."""
    return replace(copy.deepcopy(spec), control=ControlFlags(tuning=False, migration=False),
                   name=f"{spec.name}-stay")


def serial(spec: SimSpec) -> SimSpec:
    """Single-threaded counterfactual of ``spec`` with actions switched off."""
    out = stay_put(spec)
    for job in out.jobs:
        job.placement.threads = 1
    out.name = f"{spec.name}-serial"
    return out


def scenario_specs(name: str, seed: int = 42) -> dict[str, SimSpec]:
    """Every run a built-in scenario consists of, keyed by run label."""
    if name == "scenario1":
        base = scenario1_spec(seed)
        return {"tuned": base, "untouched": stay_put(base)}
    if name == "scenario2":
        runs = {}
        for n in SORT_SIZES:
            base = scenario2_spec(n, seed)
            runs[f"n={n}/migrated"] = base
            runs[f"n={n}/stay"] = stay_put(base)
            runs[f"n={n}/serial"] = serial(base)
        return runs
    raise UnknownScenarioError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
