"""The four-level analysis hierarchy: node, resource, site and grid agents.

Each level is a pure step function over an explicit state object; the
actors in :mod:`gridtune.actors` feed them from kernel messages.  Node agents pull samples
from their node's buffer and push warnings upward; resource agents aggregate
node reports; site agents summarise resources, answer load queries and push
fault/overload alerts; the grid agent keeps an append-only audit registry.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .config import AgentParams
from .errors import ForeignNodeError, ForeignResourceError, SaturatedNodeError
from .grid_model import Job, JobConfig, Node, Resource, Scheduling, Site, remaining_time
from .monitoring import MetricKind, MetricSample, cpu_usage, load_imbalance


class ProblemClass(str, enum.Enum):
    LOCALLY_TUNABLE = "LocallyTunable"
    RESOURCE_LIMITATION = "ResourceLimitation"
    FAULT = "Fault"
    OVERLOAD = "Overload"


class TuningHint(str, enum.Enum):
    INCREASE_THREADS = "IncreaseThreads"
    CHANGE_SCHEDULING = "ChangeScheduling"


class Severity(str, enum.Enum):
    INFO = "Info"
    WARN = "Warn"
    CRITICAL = "Critical"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]


_SEVERITY_RANK = {Severity.INFO: 0, Severity.WARN: 1, Severity.CRITICAL: 2}


@dataclass(frozen=True)
class Finding:
    at: float
    source: str
    problem: ProblemClass
    node_id: Optional[str] = None
    job_id: Optional[str] = None
    resource_id: Optional[str] = None
    hint: Optional[TuningHint] = None
    episode: Optional[str] = None
    evidence: tuple = ()

    def __post_init__(self):
        if (self.problem is ProblemClass.LOCALLY_TUNABLE) != (self.hint is not None):
            raise ValueError("a tuning hint is carried exactly by LocallyTunable findings")


@dataclass(frozen=True)
class WarningMessage:
    finding: Finding
    severity: Severity
    target: str


@dataclass(frozen=True)
class JobReport:
    job_id: str
    progress: float
    threads: int
    predicted_finish: Optional[float]


@dataclass(frozen=True)
class NodeStatus:
    node_id: str
    processors: int
    speed: float
    background: float
    memory: float
    occupied: float
    free_processors: int
    alive: bool
    cpu_usage: float = 0.0
    mem_pressure: float = 0.0
    jobs: tuple[JobReport, ...] = ()

    def as_node(self) -> Node:
        return Node(self.node_id, self.processors, self.speed, min(self.background, 1.0), self.memory)


@dataclass(frozen=True)
class ResourceStatus:
    resource_id: str
    load: float
    free_processors: int
    healthy: bool
    per_job: tuple[JobReport, ...] = ()
    nodes: tuple[NodeStatus, ...] = ()
    memory: float = 0.0
    findings: tuple[Finding, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.load <= 1.0:
            raise ValueError(f"load out of range: {self.load}")
        total = sum(n.processors for n in self.nodes)
        if self.nodes and self.free_processors > total:
            raise ValueError("free processors exceed total processors")


@dataclass(frozen=True)
class SiteSummary:
    site_id: str
    statuses: tuple[ResourceStatus, ...]
    faults: tuple[str, ...]
    overloaded: tuple[str, ...]


@dataclass(frozen=True)
class Requirement:
    min_processors: int = 1
    memory_need: float = 0.0


@dataclass(frozen=True)
class AuditRecord:
    job_id: str
    promise: float
    actual: Optional[float]
    kept: bool
    registered_by: str
    at: float

    def __post_init__(self):
        within = self.actual is not None and self.actual <= self.promise
        if self.kept != within:
            raise ValueError("kept must hold exactly when the job finished within its promise")

    @classmethod
    def evaluate(cls, job_id, promise, actual, registered_by, at) -> "AuditRecord":
        kept = actual is not None and actual <= promise
        return cls(job_id, promise, actual, kept, registered_by, at)


# messages exchanged by the analysis agents
@dataclass(frozen=True)
class NodeReport:
    round: int
    status: NodeStatus


@dataclass(frozen=True)
class ResourceStatusMsg:
    site_id: str
    status: ResourceStatus


@dataclass(frozen=True)
class LoadQuery:
    query_id: str
    requirement: Requirement
    episode: Optional[str] = None


@dataclass(frozen=True)
class LoadReply:
    query_id: str
    site_id: str
    statuses: tuple[ResourceStatus, ...]


@dataclass(frozen=True)
class Register:
    record: Union[Finding, AuditRecord]


@dataclass(frozen=True)
class JobView:
    """What a node agent can observe about one job placed on its node."""

    job: Job
    config: JobConfig
    progress: float
    running: bool = True


# -- node level -------------------------------------------------------------

@dataclass
class NAState:
    agent_id: str
    node: Node
    resource_id: str
    params: AgentParams
    last_heartbeat: float = 0.0
    cpu_history: deque = field(default_factory=deque)
    episodes: dict = field(default_factory=dict)
    episode_counter: int = 0

    def _open_episode(self, job_id, problem: ProblemClass) -> Optional[str]:
        key = (job_id, problem)
        if key in self.episodes:
            return None
        self.episode_counter += 1
        ep = f"{self.agent_id}#{self.episode_counter}"
        self.episodes[key] = ep
        return ep

    def _close_episodes(self, problem: ProblemClass, keep_jobs=None):
        for key in [k for k in self.episodes if k[1] is problem]:
            if keep_jobs is None or key[0] not in keep_jobs:
                del self.episodes[key]


def free_processors(node: Node, jobs, background: float) -> int:
    occupied = sum(min(v.config.threads, node.processors) for v in jobs if v.running)
    return max(0, node.processors - occupied - math.floor(background * node.processors + 1e-12))


def tuning_candidate(view: JobView, node: Node) -> int:
    """Thread count the doubling policy would move to (may equal current)."""
    return min(2 * view.config.threads, view.job.thread_cap(node.processors))


def modeled_gain(view: JobView, node: Node, threads: int, background: float) -> float:
    """Relative cut in remaining time from running ``view`` with ``threads``."""
    try:
        before = remaining_time(view.job, view.progress, node, view.config, background)
        after_cfg = JobConfig(view.config.resource_id, view.config.node_id, threads, view.config.scheduling)
        after = remaining_time(view.job, view.progress, node, after_cfg, background)
    except SaturatedNodeError:
        return 0.0
    if before <= 0:
        return 0.0
    return 1.0 - after / before


def thread_work(samples, job_id: str, threads: int) -> Optional[list[float]]:
    per_thread = [0.0] * threads
    seen = False
    for s in samples:
        if s.kind is MetricKind.THREAD_WORK and s.job_id == job_id and s.thread is not None:
            if s.thread < threads:
                per_thread[s.thread] += s.value
                seen = True
    return per_thread if seen else None


def na_step(state: NAState, pulled: list[MetricSample], jobs: list[JobView], now: float,
            background: Optional[float] = None) -> list[Finding]:
    """Analyse one pull of samples; at most one finding per job.

    Rules are tried in order per job and the first match wins:
    T1 more threads would pay off, T2 static scheduling is imbalanced,
    M1 the node has been saturated for ``sustain_window`` pulls,
    F1 no heartbeat for ``heartbeat_timeout`` seconds.
    M1 and F1 open an episode and stay silent until it closes.
    """
    p = state.params
    node = state.node
    bg = node.background_load if background is None else background
    beats = [s.at for s in pulled if s.kind is MetricKind.HEARTBEAT]
    if beats:
        state.last_heartbeat = max(state.last_heartbeat, max(beats))
        state._close_episodes(ProblemClass.FAULT)
    alive_now = bool(beats)
    dead = now - state.last_heartbeat >= p.heartbeat_timeout

    if any(s.kind is MetricKind.CPU_BUSY for s in pulled):
        usage = cpu_usage(pulled, p.pull_period, node.processors, now=now)
        state.cpu_history.append(usage)
        while len(state.cpu_history) > p.sustain_window:
            state.cpu_history.popleft()
        if usage < p.saturation_min:
            state._close_episodes(ProblemClass.RESOURCE_LIMITATION)
    saturated = (len(state.cpu_history) >= p.sustain_window
                 and all(u >= p.saturation_min for u in state.cpu_history))

    running = sorted((v for v in jobs if v.running), key=lambda v: v.job.id)
    # a job that left the node ends its episodes here
    present = {v.job.id for v in running}
    state._close_episodes(ProblemClass.RESOURCE_LIMITATION, keep_jobs=present)
    free = free_processors(node, running, bg)

    findings = []

    def make(problem, view=None, hint=None, episode=None, **evidence):
        return Finding(now, state.agent_id, problem, node_id=node.id,
                       job_id=view.job.id if view else None, resource_id=state.resource_id,
                       hint=hint, episode=episode, evidence=tuple(sorted(evidence.items())))

    for view in running:
        # T1
        if alive_now and free > 0:
            cand = tuning_candidate(view, node)
            if cand > view.config.threads:
                gain = modeled_gain(view, node, cand, bg)
                if gain >= p.gain_min:
                    findings.append(make(ProblemClass.LOCALLY_TUNABLE, view, TuningHint.INCREASE_THREADS,
                                         gain=gain, threads=view.config.threads, candidate=cand))
                    continue
        # T2
        if alive_now and view.config.scheduling is Scheduling.STATIC:
            work = thread_work(pulled, view.job.id, view.config.threads)
            if work is not None:
                imb = load_imbalance(work)
                if imb > p.imbalance_max:
                    findings.append(make(ProblemClass.LOCALLY_TUNABLE, view, TuningHint.CHANGE_SCHEDULING,
                                         imbalance=imb))
                    continue
        # M1
        if saturated:
            ep = state._open_episode(view.job.id, ProblemClass.RESOURCE_LIMITATION)
            if ep is not None:
                findings.append(make(ProblemClass.RESOURCE_LIMITATION, view, episode=ep,
                                     cpu_usage=state.cpu_history[-1]))
            continue
        # F1
        if dead:
            ep = state._open_episode(view.job.id, ProblemClass.FAULT)
            if ep is not None:
                findings.append(make(ProblemClass.FAULT, view, episode=ep,
                                     silent_for=now - state.last_heartbeat))
    if dead and not running:
        ep = state._open_episode(None, ProblemClass.FAULT)
        if ep is not None:
            findings.append(make(ProblemClass.FAULT, episode=ep, silent_for=now - state.last_heartbeat))
    return findings


def node_status(state: NAState, jobs: list[JobView], pulled: list[MetricSample], now: float,
                background: float) -> NodeStatus:
    node = state.node
    running = [v for v in jobs if v.running]
    reports = []
    for v in sorted(running, key=lambda v: v.job.id):
        try:
            finish = now + remaining_time(v.job, v.progress, node, v.config, background)
        except SaturatedNodeError:
            finish = None
        reports.append(JobReport(v.job.id, v.progress, v.config.threads, finish))
    mem = [s.value for s in pulled if s.kind is MetricKind.MEM_PRESSURE]
    usage = (cpu_usage(pulled, state.params.pull_period, node.processors, now=now)
             if any(s.kind is MetricKind.CPU_BUSY for s in pulled) else 0.0)
    return NodeStatus(
        node_id=node.id, processors=node.processors, speed=node.speed, background=background,
        memory=node.memory,
        occupied=float(sum(min(v.config.threads, node.processors) for v in running)),
        free_processors=free_processors(node, running, background),
        alive=now - state.last_heartbeat < state.params.heartbeat_timeout,
        cpu_usage=usage, mem_pressure=mem[-1] if mem else 0.0, jobs=tuple(reports))


# -- resource level -------------------------------------------------------

@dataclass
class RAState:
    agent_id: str
    resource: Resource
    params: AgentParams
    latest: dict = field(default_factory=dict)
    imbalanced: bool = False


def ra_aggregate(state: RAState, node_statuses, now: float = 0.0) -> ResourceStatus:
    """Fold node reports into one resource status.

    Single-node resources are passed through.  Clusters are additionally
    checked for imbalance across node loads, reported once per episode as
    an Overload finding.
    """
    members = {n.id for n in state.resource.nodes}
    for st in node_statuses:
        if st.node_id not in members:
            raise ForeignNodeError(f"node {st.node_id} is not part of resource {state.resource.id}")
        state.latest[st.node_id] = st
    statuses = [state.latest[n.id] for n in state.resource.nodes if n.id in state.latest]
    total = sum(s.processors for s in statuses) or 1
    demand = sum(s.occupied + s.background * s.processors for s in statuses)
    load = min(1.0, max(0.0, demand / total))
    alive = [s for s in statuses if s.alive]
    healthy = bool(statuses) and len(alive) == len(state.resource.nodes)
    per_job = tuple(sorted((j for s in statuses for j in s.jobs), key=lambda j: j.job_id))
    findings = ()
    if len(state.resource.nodes) > 1 and statuses:
        node_loads = [min(1.0, (s.occupied + s.background * s.processors) / s.processors) for s in statuses]
        imb = load_imbalance(node_loads)
        if imb > state.params.imbalance_max:
            if not state.imbalanced:
                findings = (Finding(now, state.agent_id, ProblemClass.OVERLOAD,
                                    resource_id=state.resource.id,
                                    evidence=(("imbalance", imb), ("node_loads", tuple(node_loads)))),)
            state.imbalanced = True
        else:
            state.imbalanced = False
    return ResourceStatus(
        resource_id=state.resource.id, load=load,
        free_processors=sum(s.free_processors for s in alive),
        healthy=healthy, per_job=per_job, nodes=tuple(statuses),
        memory=max((s.memory for s in alive), default=0.0), findings=findings)


# -- site level -----------------------------------------------------------

@dataclass
class GSAState:
    agent_id: str
    site: Site
    params: AgentParams
    subscribers: list = field(default_factory=list)
    latest: dict = field(default_factory=dict)
    received: dict = field(default_factory=dict)
    faulted: set = field(default_factory=set)
    overloaded: set = field(default_factory=set)
    forwarded: set = field(default_factory=set)


def _resource_ids(site: Site) -> set[str]:
    return {r.id for r in site.resources}


def gsa_summarize(state: GSAState, resource_statuses, now: float) -> tuple[SiteSummary, list[WarningMessage]]:
    """Record fresh statuses, classify faults and overloads.

    Returns the summary and one Critical warning per subscriber for every
    resource that newly became faulty or overloaded.
    """
    own = _resource_ids(state.site)
    for st in resource_statuses:
        if st.resource_id not in own:
            raise ForeignResourceError(f"resource {st.resource_id} is not part of site {state.site.id}")
        state.latest[st.resource_id] = st
        state.received[st.resource_id] = now
    timeout = state.params.heartbeat_timeout
    faults, overloaded = [], []
    for rid in sorted(state.latest):
        st = state.latest[rid]
        if not st.healthy or now - state.received[rid] >= timeout:
            faults.append(rid)
        if st.load >= state.params.overload_min:
            overloaded.append(rid)
    warnings = []
    for problem, current, seen in ((ProblemClass.FAULT, faults, state.faulted),
                                   (ProblemClass.OVERLOAD, overloaded, state.overloaded)):
        for rid in current:
            if rid in seen:
                continue
            finding = Finding(now, state.agent_id, problem, resource_id=rid,
                              evidence=(("load", state.latest[rid].load),))
            for sub in state.subscribers:
                warnings.append(WarningMessage(finding, Severity.CRITICAL, sub))
        seen.clear()
        seen.update(current)
    summary = SiteSummary(state.site.id, tuple(state.latest[r] for r in sorted(state.latest)),
                          tuple(faults), tuple(overloaded))
    return summary, warnings


def satisfies(status: ResourceStatus, requirement: Requirement) -> bool:
    return (status.healthy and status.free_processors >= requirement.min_processors
            and status.memory >= requirement.memory_need)


def gsa_query_load(state: GSAState, requirement: Requirement, now: Optional[float] = None) -> list[ResourceStatus]:
    """Latest statuses of healthy resources able to host ``requirement``, by id."""
    out = []
    for rid in sorted(state.latest):
        if now is not None and now - state.received[rid] >= state.params.heartbeat_timeout:
            continue
        st = state.latest[rid]
        if satisfies(st, requirement):
            out.append(st)
    return out


# -- grid level -----------------------------------------------------------

@dataclass
class GAState:
    agent_id: str = "ga"
    registry: list = field(default_factory=list)


@dataclass
class AuditReport:
    promises: list
    resources: dict
    totals: dict

    def to_dict(self) -> dict:
        return {"promises": self.promises, "resources": self.resources, "totals": self.totals}


def ga_register(state: GAState, record: Union[Finding, AuditRecord], at: float) -> None:
    state.registry.append((at, record))


def ga_audit(state: GAState) -> AuditReport:
    promises = []
    resources: dict[str, dict[str, int]] = {}
    findings = 0
    for at, rec in state.registry:
        if isinstance(rec, AuditRecord):
            promises.append({"job": rec.job_id, "promise": rec.promise, "actual": rec.actual,
                             "kept": rec.kept, "registered_by": rec.registered_by, "at": rec.at,
                             "received_at": at})
        else:
            findings += 1
            if rec.resource_id is not None:
                counts = resources.setdefault(rec.resource_id, {p.value: 0 for p in ProblemClass})
                counts[rec.problem.value] += 1
    kept = sum(1 for p in promises if p["kept"])
    totals = {"registered": len(state.registry), "findings": findings, "promises": len(promises),
              "kept": kept, "broken": len(promises) - kept}
    return AuditReport(promises, {k: resources[k] for k in sorted(resources)}, totals)
