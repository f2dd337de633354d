"""Grid topology and the analytic job performance model.

The model is Amdahl's law with a linear per-thread overhead and a
background load that dilutes the node's processing rate::

    T = (s*W + (1-s)*W/p) / (speed*(1-b)) + overhead*threads

with ``p = min(threads, processors)``.  Threads beyond the node's processor
count cost overhead but add no speedup.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import DuplicateIdError, EmptyTopologyError, SaturatedNodeError


class ResourceKind(str, enum.Enum):
    CLUSTER = "Cluster"
    SMP = "SMP"
    WORKSTATION = "Workstation"


class Scheduling(str, enum.Enum):
    STATIC = "Static"
    DYNAMIC = "Dynamic"


class JobStatus(str, enum.Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    MIGRATING = "Migrating"
    DONE = "Done"
    FAILED = "Failed"


@dataclass(frozen=True)
class Node:
    id: str
    processors: int
    speed: float
    background_load: float = 0.0
    memory: float = 1024.0

    def __post_init__(self):
        if self.processors < 1:
            raise ValueError(f"node {self.id}: processors must be >= 1")
        if self.speed <= 0:
            raise ValueError(f"node {self.id}: speed must be > 0")
        if not 0.0 <= self.background_load <= 1.0:
            raise ValueError(f"node {self.id}: background_load must be in [0, 1]")


@dataclass(frozen=True)
class Resource:
    id: str
    kind: ResourceKind
    nodes: tuple[Node, ...]
    healthy: bool = True

    def __post_init__(self):
        if not self.nodes:
            raise EmptyTopologyError(f"resource {self.id} has no nodes")
        if self.kind in (ResourceKind.SMP, ResourceKind.WORKSTATION) and len(self.nodes) != 1:
            raise ValueError(f"{self.kind.value} {self.id} must have exactly one node")

    @property
    def processors(self) -> int:
        return sum(n.processors for n in self.nodes)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


@dataclass(frozen=True)
class Site:
    id: str
    resources: tuple[Resource, ...]


@dataclass(frozen=True)
class Grid:
    id: str
    sites: tuple[Site, ...]

    def resources(self) -> Iterable[Resource]:
        for site in self.sites:
            yield from site.resources

    def nodes(self) -> Iterable[tuple[Site, Resource, Node]]:
        for site in self.sites:
            for res in site.resources:
                for node in res.nodes:
                    yield site, res, node

    def resource(self, resource_id: str) -> Resource:
        for res in self.resources():
            if res.id == resource_id:
                return res
        raise KeyError(resource_id)


@dataclass(frozen=True)
class Job:
    id: str
    total_work: float
    serial_fraction: float = 0.0
    per_thread_overhead: float = 0.0
    min_processors: int = 1
    memory_need: float = 0.0
    deadline_promise: Optional[float] = None
    max_threads: Optional[int] = None
    # Per-thread skew reported by the probes while scheduling is Static.
    imbalance: float = 0.0

    def __post_init__(self):
        if self.total_work <= 0:
            raise ValueError(f"job {self.id}: total_work must be > 0")
        if not 0.0 <= self.serial_fraction <= 1.0:
            raise ValueError(f"job {self.id}: serial_fraction must be in [0, 1]")
        if self.per_thread_overhead < 0:
            raise ValueError(f"job {self.id}: per_thread_overhead must be >= 0")

    def thread_cap(self, processors: int) -> int:
        if self.max_threads is None:
            return processors
        return min(self.max_threads, processors)


@dataclass(frozen=True)
class JobConfig:
    resource_id: str
    node_id: str
    threads: int = 1
    scheduling: Scheduling = Scheduling.STATIC

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class WorkSegment:
    start: float
    end: float
    work: float
    location: str


@dataclass
class JobState:
    progress: float = 0.0
    status: JobStatus = JobStatus.PENDING
    work_done_log: list[WorkSegment] = field(default_factory=list)

    def logged_work(self) -> float:
        return math.fsum(seg.work for seg in self.work_done_log)

    def is_conserved(self, total_work: float, rel_tol: float = 1e-9) -> bool:
        expected = self.progress * total_work
        return math.isclose(self.logged_work(), expected, rel_tol=rel_tol, abs_tol=rel_tol * total_work)


def build_topology(spec) -> Grid:
    """Build a validated :class:`Grid` from a topology spec.

    ``spec`` may be a whole SimSpec (its ``topology`` is used) or a topology
    section with ``grid_id`` and ``sites``.
    """
    topo = getattr(spec, "topology", spec)
    if not topo.sites:
        raise EmptyTopologyError("grid has no sites")
    site_ids: set[str] = set()
    resource_ids: set[str] = set()
    node_ids: set[str] = set()
    sites = []
    for s in topo.sites:
        if s.id in site_ids:
            raise DuplicateIdError(f"duplicate site id {s.id!r}")
        site_ids.add(s.id)
        if not s.resources:
            raise EmptyTopologyError(f"site {s.id} has no resources")
        resources = []
        for r in s.resources:
            if r.id in resource_ids:
                raise DuplicateIdError(f"duplicate resource id {r.id!r}")
            resource_ids.add(r.id)
            if not r.nodes:
                raise EmptyTopologyError(f"resource {r.id} has no nodes")
            nodes = []
            for n in r.nodes:
                if n.id in node_ids:
                    raise DuplicateIdError(f"duplicate node id {n.id!r}")
                node_ids.add(n.id)
                nodes.append(Node(n.id, n.processors, n.speed, n.background_load, n.memory))
            resources.append(Resource(r.id, ResourceKind(r.kind), tuple(nodes), r.healthy))
        sites.append(Site(s.id, tuple(resources)))
    return Grid(topo.grid_id, tuple(sites))


def _background(node: Node, background: Optional[float]) -> float:
    bg = node.background_load if background is None else background
    if bg >= 1.0:
        raise SaturatedNodeError(f"node {node.id} fully consumed by background load ({bg})")
    return bg


def _time_for(work: float, job: Job, node: Node, threads: int, bg: float) -> float:
    p_eff = min(threads, node.processors)
    s = job.serial_fraction
    compute = (s * work + (1.0 - s) * work / p_eff) / (node.speed * (1.0 - bg))
    return compute + job.per_thread_overhead * threads


def predicted_exec_time(job: Job, node: Node, config: JobConfig, background: Optional[float] = None) -> float:
    """Model run time of the whole job on ``node`` under ``config``.

    ``background`` overrides the node's static background load.
    """
    bg = _background(node, background)
    return _time_for(job.total_work, job, node, config.threads, bg)


def remaining_time(job: Job, progress: float, node: Node, config: JobConfig,
                   background: Optional[float] = None) -> float:
    """Model time to finish the work left after ``progress`` (fraction done)."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    bg = _background(node, background)
    if progress >= 1.0:
        return 0.0
    return _time_for((1.0 - progress) * job.total_work, job, node, config.threads, bg)


def speedup(serial_fraction: float, threads: int, processors: int) -> float:
    """Average number of busy processors while the job runs (Amdahl speedup)."""
    p_eff = min(threads, processors)
    return 1.0 / (serial_fraction + (1.0 - serial_fraction) / p_eff)


def best_thread_count(job: Job, node: Node, background: Optional[float] = None) -> int:
    """Thread count in ``1..processors`` minimising the modeled run time."""
    best, best_t = 1, math.inf
    for threads in range(1, node.processors + 1):
        cfg = JobConfig("", node.id, threads)
        t = predicted_exec_time(job, node, cfg, background)
        if t < best_t:
            best, best_t = threads, t
    return best


def effective_load(resource: Resource, running_jobs: Iterable[tuple[Job, JobConfig]],
                   background: Optional[dict[str, float]] = None) -> float:
    """Fraction of the resource's processors occupied by jobs plus background.

    ``background`` maps node id to a live background value; nodes missing
    from it use their static ``background_load``.
    """
    total = resource.processors
    occupied = 0.0
    for job, cfg in running_jobs:
        try:
            node = resource.node(cfg.node_id)
        except KeyError:
            continue
        occupied += min(cfg.threads, node.processors)
    for node in resource.nodes:
        bg = node.background_load if background is None else background.get(node.id, node.background_load)
        occupied += bg * node.processors
    return min(1.0, max(0.0, occupied / total))


def sorting_work(n: int, c: float = 1.0) -> float:
    """Work units for sorting ``n`` elements: ``c * n * log2(n)``."""
    return c * n * math.log2(n)
