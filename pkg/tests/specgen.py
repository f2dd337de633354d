"""Seeded random SimSpecs for fuzzing the full simulator.

Topologies are small (1-3 sites, 1-3 resources each) and biased towards
situations where the agents have something to do: loaded nodes next to
idle ones, background spikes, resource faults and imbalanced jobs.
"""
from __future__ import annotations

import random

from gridtune.config import (
    AgentParams, BackgroundChange, ControlFlags, FaultSpec, JobSpec, NodeSpec, PlacementSpec,
    ResourceSpec, SimSpec, SiteSpec, TopologySpec, validate,
)

PROCS = (1, 2, 2, 4, 8, 16)


def _node(rng: random.Random, nid: str, t_end: float) -> NodeSpec:
    node = NodeSpec(nid, processors=rng.choice(PROCS), speed=rng.choice((0.5, 1.0, 1.0, 2.0)),
                    background_load=rng.choice((0.0, 0.0, 0.25, 0.5, 0.9)),
                    memory=rng.choice((1.0, 4.0, 1024.0)))
    if rng.random() < 0.3:
        t = 0.0
        for _ in range(rng.randint(1, 4)):
            t += rng.uniform(5, t_end / 3)
            node.background_schedule.append(BackgroundChange(round(t, 3), rng.choice((0.0, 0.5, 0.97, 1.0))))
    if rng.random() < 0.2:
        node.background_noise = rng.choice((0.02, 0.1))
    return node


def random_spec(seed: int, t_end: float = 150.0) -> SimSpec:
    rng = random.Random(seed)
    sites = []
    n_node = n_res = 0
    for si in range(rng.randint(1, 3)):
        resources = []
        for _ in range(rng.randint(1, 3)):
            kind = rng.choice(("SMP", "Workstation", "Cluster"))
            count = rng.randint(1, 3) if kind == "Cluster" else 1
            nodes = []
            for _ in range(count):
                nodes.append(_node(rng, f"n{n_node}", t_end))
                n_node += 1
            resources.append(ResourceSpec(f"R{n_res}", kind, nodes))
            n_res += 1
        sites.append(SiteSpec(f"S{si}", resources))
    placements = [(r, n) for s in sites for r in s.resources for n in r.nodes]

    jobs = []
    for ji in range(rng.randint(1, 3)):
        res, node = rng.choice(placements)
        threads = rng.randint(1, max(1, node.processors))
        jobs.append(JobSpec(
            id=f"job{ji}",
            total_work=round(rng.uniform(20, 400), 3) * node.speed,
            placement=PlacementSpec(res.id, node.id, threads,
                                    rng.choice(("Static", "Static", "Dynamic"))),
            serial_fraction=rng.choice((0.0, 0.05, 0.1, 0.3)),
            per_thread_overhead=rng.choice((0.0, 0.0, 0.5)),
            min_processors=rng.choice((1, 1, 2)),
            memory_need=rng.choice((0.0, 0.5, 2.0)),
            deadline_promise=rng.choice((None, 50.0, 500.0)),
            max_threads=rng.choice((None, 2, 4)),
            imbalance=rng.choice((0.0, 0.0, 0.7)),
            start_at=rng.choice((0.0, 0.0, 3.5)),
        ))

    faults = []
    if rng.random() < 0.3:
        res = rng.choice([r for s in sites for r in s.resources])
        at = round(rng.uniform(2, t_end / 2), 3)
        faults.append(FaultSpec(res.id, at, rng.choice((None, at + rng.uniform(5, 30)))))

    agents = AgentParams(
        sustain_window=rng.choice((2, 3)),
        cooldown_window=rng.choice((5.0, 10.0)),
        transfer_base=rng.choice((0.0, 1.0, 2.5)),
        transfer_per_memory=rng.choice((0.0, 0.5)),
    )
    control = ControlFlags(restart_migration=rng.random() < 0.1)
    spec = SimSpec(TopologySpec(sites), jobs, faults, agents, control, seed=seed, t_end=t_end,
                   name=f"fuzz-{seed}")
    validate(spec)
    return spec
