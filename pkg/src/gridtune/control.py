"""Corrective actions: local tuning, migration advice and resource selection.

The functions here are pure; the actors that drive them from messages live
in :mod:`gridtune.actors`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .analysis_agents import (
    Finding, NodeStatus, ProblemClass, Requirement, ResourceStatus, Severity, TuningHint,
    WarningMessage, satisfies,
)
from .errors import (
    JobNotRunningError, NodeCapacityExceededError, NotTunableError, SaturatedNodeError,
    UnmanagedJobError,
)
from .grid_model import Job, JobConfig, JobStatus, Node, Scheduling, remaining_time


class ActionKind(str, enum.Enum):
    SET_THREADS = "SetThreads"
    SET_SCHEDULING = "SetScheduling"


@dataclass(frozen=True)
class TuningAction:
    kind: ActionKind
    job_id: str
    issued_at: float
    threads: Optional[int] = None
    scheduling: Optional[Scheduling] = None

    def __post_init__(self):
        if self.kind is ActionKind.SET_THREADS and (self.threads is None or self.threads < 1):
            raise ValueError("SetThreads needs a thread count >= 1")
        if self.kind is ActionKind.SET_SCHEDULING and self.scheduling is None:
            raise ValueError("SetScheduling needs a scheduling strategy")

    def describe(self) -> str:
        if self.kind is ActionKind.SET_THREADS:
            return f"SetThreads({self.threads})"
        return f"SetScheduling({self.scheduling.value})"


@dataclass(frozen=True)
class Placement:
    resource_id: str
    node_id: str


@dataclass(frozen=True)
class MigrationPlan:
    job_id: str
    source: Placement
    target: Placement
    threads: int
    transfer_overhead: float
    decided_at: float
    predicted_gain: float
    source_remaining: float
    target_remaining: float
    checkpoint_progress: Optional[float] = None
    episode: Optional[str] = None

    def __post_init__(self):
        if self.target == self.source:
            raise ValueError("migration target equals source")

    @property
    def predicted_completion(self) -> float:
        return self.decided_at + self.transfer_overhead + self.target_remaining


@dataclass(frozen=True)
class Stay:
    reason: str


@dataclass(frozen=True)
class JobSnapshot:
    """Where a job runs and how far it got, as seen by its JEM."""

    job: Job
    progress: float
    placement: Optional[Placement]
    threads: int
    source_node: Optional[NodeStatus] = None


@dataclass(frozen=True)
class ConsultRequest:
    request_id: str
    job_id: str
    requirement: Requirement
    warning: WarningMessage
    snapshot: Optional[JobSnapshot] = None
    # resources the JobController must not pick, e.g. a target that just failed
    exclude: tuple[str, ...] = ()

    @property
    def episode(self) -> Optional[str]:
        return self.warning.finding.episode


@dataclass(frozen=True)
class Advice:
    request_id: str
    job_id: str
    decision: Union[MigrationPlan, Stay]


@dataclass(frozen=True)
class TuningNotice:
    job_id: str
    action: TuningAction


@dataclass(frozen=True)
class JobFinished:
    job_id: str
    completed_at: float


# -- tuning ---------------------------------------------------------------

def apply_tuning(job: Job, config: JobConfig, action: TuningAction, node: Node,
                 status: JobStatus = JobStatus.RUNNING, strict: bool = False) -> JobConfig:
    """New configuration after ``action``; thread counts are clamped to the node."""
    if status is not JobStatus.RUNNING:
        raise JobNotRunningError(f"job {job.id} is {status.value}")
    if action.job_id != job.id:
        raise ValueError(f"action for {action.job_id} applied to {job.id}")
    if action.kind is ActionKind.SET_THREADS:
        threads = action.threads
        if threads > node.processors:
            if strict:
                raise NodeCapacityExceededError(
                    f"{threads} threads requested on {node.processors}-processor node {node.id}")
            threads = node.processors
        return replace(config, threads=threads)
    return replace(config, scheduling=action.scheduling)


def select_tuning_action(finding: Finding, node: Node, config: JobConfig, at: Optional[float] = None,
                         cap: Optional[int] = None) -> TuningAction:
    """Doubling policy for threads; Dynamic scheduling for imbalance."""
    if finding.problem is not ProblemClass.LOCALLY_TUNABLE:
        raise NotTunableError(f"{finding.problem.value} findings are not locally tunable")
    at = finding.at if at is None else at
    if finding.hint is TuningHint.CHANGE_SCHEDULING:
        return TuningAction(ActionKind.SET_SCHEDULING, finding.job_id, at, scheduling=Scheduling.DYNAMIC)
    limit = node.processors if cap is None else min(cap, node.processors)
    threads = min(2 * config.threads, limit)
    if threads <= config.threads:
        raise NotTunableError(f"job {finding.job_id} already runs {config.threads} threads (limit {limit})")
    return TuningAction(ActionKind.SET_THREADS, finding.job_id, at, threads=threads)


# -- job execution manager -------------------------------------------------

@dataclass
class JEMState:
    agent_id: str
    jobs: set
    cooldown_window: float = 10.0
    quiesce_seconds: float = 2.0
    last_consult: dict = field(default_factory=dict)
    last_migration: Optional[float] = None
    last_tuning: Optional[float] = None
    in_flight: Optional[str] = None
    deferred: Optional[tuple] = None
    counter: int = 0


def jem_on_warning(state: JEMState, warning: WarningMessage, now: float,
                   snapshot: Optional[JobSnapshot] = None) -> Optional[ConsultRequest]:
    """Turn a migration-worthy warning into a consult request, or suppress it.

    Repeats of the same problem within ``cooldown_window`` of the previous
    consult are dropped.  Warnings arriving within ``cooldown_window`` of a
    migration or ``quiesce_seconds`` of a tuning action are parked in
    ``state.deferred`` as ``(warning, retry_at)`` for a later retry.
    """
    f = warning.finding
    if f.job_id not in state.jobs:
        raise UnmanagedJobError(f"{state.agent_id} does not manage job {f.job_id}")
    if f.problem not in (ProblemClass.RESOURCE_LIMITATION, ProblemClass.FAULT):
        return None
    if warning.severity.rank < Severity.WARN.rank:
        return None
    if state.in_flight is not None:
        return None
    last = state.last_consult.get((f.job_id, f.problem))
    if last is not None and now - last < state.cooldown_window:
        return None
    retry_at = None
    if state.last_migration is not None and now - state.last_migration < state.cooldown_window:
        retry_at = state.last_migration + state.cooldown_window
    if state.last_tuning is not None and now - state.last_tuning < state.quiesce_seconds:
        retry_at = max(retry_at or 0.0, state.last_tuning + state.quiesce_seconds)
    if retry_at is not None:
        state.deferred = (warning, retry_at)
        return None
    state.counter += 1
    request_id = f"{state.agent_id}/c{state.counter}"
    state.last_consult[(f.job_id, f.problem)] = now
    state.in_flight = request_id
    job = snapshot.job if snapshot is not None else None
    requirement = Requirement(job.min_processors if job else 1, job.memory_need if job else 0.0)
    return ConsultRequest(request_id, f.job_id, requirement, warning, snapshot)


def jem_reconsult(state: JEMState, warning: WarningMessage, now: float,
                  snapshot: Optional[JobSnapshot] = None, exclude: tuple[str, ...] = ()) -> ConsultRequest:
    """Consult again after a failed transfer, bypassing hysteresis.

    ``exclude`` names resources the new advice must avoid.
    """
    state.in_flight = None
    state.last_consult.pop((warning.finding.job_id, warning.finding.problem), None)
    saved = (state.last_migration, state.last_tuning)
    state.last_migration = state.last_tuning = None
    try:
        req = jem_on_warning(state, warning, now, snapshot)
    finally:
        state.last_migration, state.last_tuning = saved
    return replace(req, exclude=tuple(exclude)) if exclude and req is not None else req


# -- job controller -------------------------------------------------------

def ranking_key(status: ResourceStatus) -> tuple:
    return (status.load, -status.free_processors, status.resource_id)


def select_resource(candidates, requirement: Requirement, current: Optional[str]) -> Optional[str]:
    """Best candidate by (lowest load, most free processors, smallest id)."""
    eligible = [c for c in candidates
                if c.resource_id != current and satisfies(c, requirement)]
    if not eligible:
        return None
    return min(eligible, key=ranking_key).resource_id


def pick_node(status: ResourceStatus) -> Optional[NodeStatus]:
    alive = [n for n in status.nodes if n.alive]
    if not alive:
        return None
    return min(alive, key=lambda n: (-n.free_processors, n.background, n.node_id))


def plan_migration(job: Job, progress: float, source: Placement, source_node: Optional[NodeStatus],
                   source_threads: int, target: Placement, target_node: NodeStatus,
                   transfer_overhead: float, min_gain: float, decided_at: float,
                   episode: Optional[str] = None) -> Union[MigrationPlan, Stay]:
    """Migrate iff transfer plus target time beats ``(1 - min_gain)`` of staying.

    ``source_node`` is None when the job is not running anywhere (a failed
    transfer); staying then never finishes.
    """
    if progress >= 1.0:
        return Stay("already done")
    if target == source:
        return Stay("target is the current placement")
    threads = min(job.thread_cap(target_node.processors), target_node.free_processors)
    if threads < max(1, job.min_processors):
        return Stay("no processors free at target")
    src_cfg = JobConfig(source.resource_id, source.node_id, source_threads)
    dst_cfg = JobConfig(target.resource_id, target.node_id, threads)
    stay = float("inf")
    if source_node is not None and source_node.alive:
        try:
            stay = remaining_time(job, progress, source_node.as_node(), src_cfg, source_node.background)
        except SaturatedNodeError:
            pass
    try:
        there = remaining_time(job, progress, target_node.as_node(), dst_cfg, target_node.background)
    except SaturatedNodeError:
        return Stay("target saturated")
    move = transfer_overhead + there
    if not move < (1.0 - min_gain) * stay:
        return Stay("insufficient gain")
    return MigrationPlan(job.id, source, target, threads, transfer_overhead, decided_at,
                         predicted_gain=stay - move, source_remaining=stay,
                         target_remaining=there, episode=episode)
