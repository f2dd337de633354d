"""The simulated grid: jobs progressing under the performance model, node
probes feeding data buffers, scheduled background changes and faults, and
the agent population wired onto one deterministic kernel.

Jobs advance in segments.  Within a segment the configuration, background
load and health of the job's node are constant, so progress is linear in
time and the finish instant is given by :func:`remaining_time`.  Anything
that changes those inputs closes the segment (appending its work to the
job's work log) and opens a new one.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from . import actors
from .analysis_agents import AuditRecord, JobView, ga_audit, ga_register
from .config import SimSpec, validate
from .control import MigrationPlan, Placement, TuningAction, apply_tuning
from .grid_model import (
    Job, JobConfig, JobState, JobStatus, Scheduling, WorkSegment, build_topology, remaining_time,
    speedup,
)
from .monitoring import DataBuffer, MetricKind, MetricSample, record_sample, thread_shares
from .sim_kernel import EventLog, JobPhase, Kernel

INF = math.inf


@dataclass
class JobRuntime:
    job: Job
    placement: Placement
    threads: int
    scheduling: Scheduling
    start_at: float
    config: Optional[JobConfig] = None
    state: JobState = field(default_factory=JobState)
    seg_t: float = 0.0
    seg_p: float = 0.0
    seg_T: float = INF
    version: int = 0
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    probe_progress: float = 0.0
    tunings: int = 0
    migrations: int = 0
    predictions: list = field(default_factory=list)

    @property
    def running(self) -> bool:
        return self.state.status is JobStatus.RUNNING and self.config is not None


@dataclass
class NodeMeter:
    last_t: float = 0.0
    last_probe: float = 0.0
    busy: float = 0.0


@dataclass
class RunResult:
    spec: SimSpec
    log: EventLog
    samples: list
    audit: dict
    jobs: dict
    end_time: float

    def job_summary(self, job_id: str) -> dict:
        return self.jobs[job_id]


class Simulation:
    def __init__(self, spec: SimSpec):
        validate(spec)
        self.spec = spec
        self.params = spec.agents
        self.flags = spec.control
        self.grid = build_topology(spec)
        self.kernel = Kernel(latency=self._latency)
        self.log = self.kernel.log

        self.nodes = {}
        self.node_site = {}
        self.node_resource = {}
        self.resources = {}
        self.resource_site = {}
        self.healthy = {}
        for site, res, node in self.grid.nodes():
            self.nodes[node.id] = node
            self.node_site[node.id] = site.id
            self.node_resource[node.id] = res.id
            self.resources[res.id] = res
            self.resource_site[res.id] = site.id
            self.healthy[res.id] = res.healthy
        self.node_specs = {n.id: n for s in spec.topology.sites for r in s.resources for n in r.nodes}
        self.base_bg = {nid: n.background_load for nid, n in self.node_specs.items()}
        self.bg = dict(self.base_bg)
        self.rngs = {nid: random.Random(f"{spec.seed}:{nid}")
                     for nid, n in self.node_specs.items() if n.background_noise > 0}
        self.buffers = {nid: DataBuffer(nid, self.params.buffer_capacity) for nid in self.nodes}
        self.meters = {nid: NodeMeter() for nid in self.nodes}
        self.samples: list[MetricSample] = []

        self.jobs: dict[str, JobRuntime] = {}
        for js in spec.jobs:
            job = Job(js.id, js.total_work, js.serial_fraction, js.per_thread_overhead, js.min_processors,
                      js.memory_need, js.deadline_promise, js.max_threads, js.imbalance)
            self.jobs[js.id] = JobRuntime(job, Placement(js.placement.resource, js.placement.node),
                                          js.placement.threads, Scheduling(js.placement.scheduling), js.start_at)

        self.location: dict[str, str] = {}
        self.agents = actors.populate(self)
        self.kernel.on_job_phase(self._on_phase)

        for rt in self.jobs.values():
            self.kernel.schedule(rt.start_at, JobPhase(rt.job.id, "start"))
        self._schedule_environment()
        for agent in self.agents.node_agents.values():
            agent.start(0.0)

    # -- plumbing ----------------------------------------------------------
    @property
    def now(self) -> float:
        return self.kernel.now()

    @property
    def active(self) -> bool:
        return any(rt.state.status not in (JobStatus.DONE, JobStatus.FAILED) for rt in self.jobs.values())

    def place(self, agent_id: str, node_id: str) -> None:
        self.location[agent_id] = node_id

    def _latency(self, sender: str, to: str) -> float:
        lat = self.params.latency
        a, b = self.location[sender], self.location[to]
        if a == b:
            return lat.intra_node
        if self.node_site[a] == self.node_site[b]:
            return lat.intra_site
        return lat.inter_site

    def send(self, sender: str, to: str, payload) -> None:
        self.kernel.send(sender, to, payload)

    def record(self, type: str, **fields) -> dict:
        return self.log.append(self.now, type, **fields)

    # -- environment -------------------------------------------------------
    def _schedule_environment(self) -> None:
        for nid, ns in self.node_specs.items():
            if ns.background_schedule:
                self.kernel.timer(actors.WORLD, ns.background_schedule[0].at, "background", (nid, 0))
        for i, fault in enumerate(self.spec.faults):
            self.kernel.timer(actors.WORLD, fault.at, "fail", i)

    def on_world_timer(self, tag: str, data) -> None:
        if not self.active:
            return
        if tag == "background":
            nid, idx = data
            schedule = self.node_specs[nid].background_schedule
            self.base_bg[nid] = schedule[idx].load
            self.set_background(nid, schedule[idx].load, "schedule")
            if idx + 1 < len(schedule):
                self.kernel.timer(actors.WORLD, schedule[idx + 1].at, "background", (nid, idx + 1))
        elif tag == "fail":
            fault = self.spec.faults[data]
            self.set_health(fault.resource, False)
            if fault.recover_at is not None:
                self.kernel.timer(actors.WORLD, fault.recover_at, "recover", data)
        elif tag == "recover":
            self.set_health(self.spec.faults[data].resource, True)

    def set_background(self, node_id: str, value: float, reason: str) -> None:
        value = min(1.0, max(0.0, value))
        if value == self.bg[node_id]:
            return
        self._account(node_id)
        self.bg[node_id] = value
        self.record("background", node=node_id, load=value, reason=reason)
        for rt in self._jobs_on(node_id):
            self._replan(rt)

    def set_health(self, resource_id: str, healthy: bool) -> None:
        if self.healthy[resource_id] == healthy:
            return
        res = self.resources[resource_id]
        for node in res.nodes:
            self._account(node.id)
        self.healthy[resource_id] = healthy
        self.record("fault" if not healthy else "recover", resource=resource_id)
        for node in res.nodes:
            self.meters[node.id].busy = 0.0
            self.meters[node.id].last_probe = self.now
            for rt in self._jobs_on(node.id):
                self._replan(rt)

    def free_processors(self, node_id: str) -> int:
        node = self.nodes[node_id]
        occupied = sum(min(rt.config.threads, node.processors) for rt in self._jobs_on(node_id))
        return max(0, node.processors - occupied - math.floor(self.bg[node_id] * node.processors + 1e-12))

    # -- job progress ------------------------------------------------------
    def _jobs_on(self, node_id: str) -> list[JobRuntime]:
        return [rt for rt in self.jobs.values() if rt.running and rt.config.node_id == node_id]

    def progress_at(self, rt: JobRuntime, t: float) -> float:
        if not rt.running or rt.seg_T == INF:
            return rt.seg_p if rt.running else rt.state.progress
        if rt.seg_T <= 0:
            return 1.0
        return min(1.0, rt.seg_p + (1.0 - rt.seg_p) * (t - rt.seg_t) / rt.seg_T)

    def progress_now(self, rt: JobRuntime) -> float:
        return self.progress_at(rt, self.now)

    def _stalled(self, node_id: str) -> bool:
        return not self.healthy[self.node_resource[node_id]] or self.bg[node_id] >= 1.0

    def _remaining(self, rt: JobRuntime, config: JobConfig, progress: float) -> float:
        if self._stalled(config.node_id):
            return INF
        return remaining_time(rt.job, progress, self.nodes[config.node_id], config, self.bg[config.node_id])

    def _close_segment(self, rt: JobRuntime, done: bool = False) -> None:
        t = self.now
        p = 1.0 if done else self.progress_at(rt, t)
        work = rt.job.total_work * (p - rt.seg_p)
        if t > rt.seg_t or work != 0.0:
            rt.state.work_done_log.append(WorkSegment(rt.seg_t, t, work, rt.config.node_id))
        rt.state.progress = p
        rt.seg_t, rt.seg_p = t, p

    def _replan(self, rt: JobRuntime) -> None:
        self._close_segment(rt)
        rt.seg_T = self._remaining(rt, rt.config, rt.seg_p)
        rt.version += 1
        if rt.seg_T != INF:
            self.kernel.schedule(self.now + rt.seg_T, JobPhase(rt.job.id, "complete", rt.version))

    def _busy_rate(self, node_id: str) -> float:
        if not self.healthy[self.node_resource[node_id]]:
            return 0.0
        node = self.nodes[node_id]
        demand = self.bg[node_id] * node.processors
        if self.bg[node_id] < 1.0:
            for rt in self._jobs_on(node_id):
                demand += speedup(rt.job.serial_fraction, rt.config.threads, node.processors)
        return min(float(node.processors), demand)

    def _account(self, node_id: str) -> None:
        meter = self.meters[node_id]
        meter.busy += self._busy_rate(node_id) * (self.now - meter.last_t)
        meter.last_t = self.now

    def _on_phase(self, phase: JobPhase) -> None:
        rt = self.jobs[phase.job_id]
        if phase.kind == "start":
            self.record("phase", job=phase.job_id, kind="start")
            self._start(rt)
        elif phase.kind == "complete" and phase.version == rt.version and rt.running:
            self.record("phase", job=phase.job_id, kind="complete")
            self._complete(rt)

    def _start(self, rt: JobRuntime) -> None:
        node = rt.placement.node_id
        self._account(node)
        rt.config = JobConfig(rt.placement.resource_id, node, rt.threads, rt.scheduling)
        rt.state.status = JobStatus.RUNNING
        rt.started_at = self.now
        rt.seg_t, rt.seg_p = self.now, rt.state.progress
        rt.probe_progress = rt.state.progress
        rt.seg_T = self._remaining(rt, rt.config, rt.seg_p)
        rt.version += 1
        if rt.seg_T != INF:
            self.kernel.schedule(self.now + rt.seg_T, JobPhase(rt.job.id, "complete", rt.version))
        self.record("job_start", job=rt.job.id, resource=rt.config.resource_id, node=node,
                    threads=rt.config.threads, scheduling=rt.config.scheduling,
                    predicted_finish=_finite(self.now + rt.seg_T))

    def _complete(self, rt: JobRuntime) -> None:
        self._account(rt.config.node_id)
        self._close_segment(rt, done=True)
        rt.state.status = JobStatus.DONE
        rt.finished_at = self.now
        node = rt.config.node_id
        rt.config = None
        rt.version += 1
        self.record("job_done", job=rt.job.id, node=node, completion=self.now,
                    logged_work=rt.state.logged_work(), total_work=rt.job.total_work)
        for kind, ref, predicted in rt.predictions:
            self.record("decision_outcome", job=rt.job.id, decision=kind, ref=ref,
                        predicted_completion=_finite(predicted), realized_completion=self.now)
        self.agents.jems[rt.job.id].on_job_done(self.now)

    # -- probes ------------------------------------------------------------
    def _emit(self, sample: MetricSample) -> None:
        dropped = record_sample(self.buffers[sample.node_id], sample)
        self.samples.append(sample)
        if dropped is not None:
            self.record("sample_drop", node=dropped.node_id, kind=dropped.kind, at=dropped.at)

    def probe(self, node_id: str) -> None:
        """Record the probe samples covering the interval since the last probe."""
        now = self.now
        meter = self.meters[node_id]
        node = self.nodes[node_id]
        if not self.healthy[self.node_resource[node_id]]:
            meter.busy = 0.0
            meter.last_t = meter.last_probe = now
            return
        self._account(node_id)
        dt = now - meter.last_probe
        if dt > 0:
            busy = min(meter.busy, node.processors * dt)
            self._emit(MetricSample(now, node_id, MetricKind.CPU_BUSY, busy))
        meter.busy = 0.0
        meter.last_probe = now
        jobs = self._jobs_on(node_id)
        if node.memory > 0:
            pressure = min(1.0, sum(rt.job.memory_need for rt in jobs) / node.memory)
        else:
            pressure = 1.0 if jobs else 0.0
        self._emit(MetricSample(now, node_id, MetricKind.MEM_PRESSURE, pressure))
        for rt in sorted(jobs, key=lambda r: r.job.id):
            p = self.progress_now(rt)
            work = max(0.0, rt.job.total_work * (p - rt.probe_progress))
            rt.probe_progress = p
            if dt <= 0:
                continue
            skew = rt.job.imbalance if rt.config.scheduling is Scheduling.STATIC else 0.0
            for i, share in enumerate(thread_shares(rt.config.threads, skew)):
                self._emit(MetricSample(now, node_id, MetricKind.THREAD_WORK, work * share,
                                        job_id=rt.job.id, thread=i))
        self._emit(MetricSample(now, node_id, MetricKind.HEARTBEAT, 1))
        ns = self.node_specs[node_id]
        if ns.background_noise > 0:
            jitter = self.rngs[node_id].uniform(-ns.background_noise, ns.background_noise)
            self.set_background(node_id, self.base_bg[node_id] + jitter, "noise")

    def node_jobs(self, node_id: str) -> list[JobView]:
        return [JobView(rt.job, rt.config, self.progress_now(rt))
                for rt in sorted(self._jobs_on(node_id), key=lambda r: r.job.id)]

    # -- corrective actions ------------------------------------------------
    def apply_tuning(self, job_id: str, action: TuningAction) -> JobConfig:
        rt = self.jobs[job_id]
        node = self.nodes[rt.config.node_id]
        new = apply_tuning(rt.job, rt.config, action, node, rt.state.status, self.params.strict_threads)
        progress = self.progress_now(rt)
        before = self.now + self._remaining(rt, rt.config, progress)
        after = self.now + self._remaining(rt, new, progress)
        full_before = self._full_time(rt, rt.config)
        full_after = self._full_time(rt, new)
        old_threads = rt.config.threads
        self._account(node.id)
        rt.config = new
        self._replan(rt)
        rt.tunings += 1
        ref = f"{job_id}/t{rt.tunings}"
        rt.predictions.append(("tuning", ref, after))
        self.record("tuning", job=job_id, node=node.id, ref=ref, action=action.describe(),
                    threads_before=old_threads, threads_after=new.threads,
                    scheduling=new.scheduling, progress=progress,
                    predicted_finish_before=_finite(before), predicted_finish_after=_finite(after),
                    exec_time_before=_finite(full_before), exec_time_after=_finite(full_after))
        return new

    def _full_time(self, rt: JobRuntime, config: JobConfig) -> float:
        return self._remaining(rt, config, 0.0)

    def stop_for_migration(self, job_id: str) -> float:
        rt = self.jobs[job_id]
        node = rt.config.node_id
        self._account(node)
        self._close_segment(rt)
        checkpoint = rt.state.progress
        if self.flags.restart_migration and checkpoint > 0:
            rt.state.work_done_log.append(
                WorkSegment(self.now, self.now, -rt.job.total_work * checkpoint, f"discarded@{node}"))
            rt.state.progress = 0.0
        rt.placement = Placement(rt.config.resource_id, node)
        rt.threads = rt.config.threads
        rt.scheduling = rt.config.scheduling
        rt.config = None
        rt.state.status = JobStatus.MIGRATING
        rt.version += 1
        return checkpoint

    def can_host(self, target: Placement, threads: int) -> bool:
        return self.healthy[target.resource_id] and self.free_processors(target.node_id) >= threads

    def resume(self, job_id: str, target: Placement, threads: int) -> None:
        rt = self.jobs[job_id]
        self._account(target.node_id)
        rt.config = JobConfig(target.resource_id, target.node_id, threads, rt.scheduling)
        rt.placement = target
        rt.threads = threads
        rt.state.status = JobStatus.RUNNING
        rt.seg_t, rt.seg_p = self.now, rt.state.progress
        rt.probe_progress = rt.state.progress
        rt.seg_T = self._remaining(rt, rt.config, rt.seg_p)
        rt.version += 1
        if rt.seg_T != INF:
            self.kernel.schedule(self.now + rt.seg_T, JobPhase(job_id, "complete", rt.version))

    def note_migration(self, job_id: str, plan: MigrationPlan) -> None:
        rt = self.jobs[job_id]
        rt.migrations += 1
        rt.predictions.append(("migration", f"{job_id}/m{rt.migrations}", plan.predicted_completion))

    def remaining_for(self, job_id: str) -> float:
        rt = self.jobs[job_id]
        if not rt.running:
            return INF
        return self._remaining(rt, rt.config, self.progress_now(rt))

    # -- driver ------------------------------------------------------------
    def run(self, t_end: Optional[float] = None) -> RunResult:
        t_end = self.spec.t_end if t_end is None else t_end
        self.kernel.run_until(t_end)
        end = self.now
        ga = self.agents.ga
        for rt in self.jobs.values():
            if rt.job.deadline_promise is not None and rt.state.status is not JobStatus.DONE:
                record = AuditRecord.evaluate(rt.job.id, rt.job.deadline_promise, None,
                                              self.agents.jc.id, end)
                ga_register(ga.state, record, end)
                self.log.append(end, "register", agent=ga.id, record="AuditRecord", job=rt.job.id,
                                problem=None, kept=False)
        jobs = {}
        for jid, rt in self.jobs.items():
            if rt.running:
                self._close_segment(rt)
            jobs[jid] = {
                "status": rt.state.status.value,
                "progress": rt.state.progress,
                "started_at": rt.started_at,
                "completion": rt.finished_at,
                "tunings": rt.tunings,
                "migrations": rt.migrations,
                "total_work": rt.job.total_work,
                "logged_work": rt.state.logged_work(),
                "work_log": [[s.start, s.end, s.work, s.location] for s in rt.state.work_done_log],
            }
        return RunResult(self.spec, self.log, list(self.samples), ga_audit(ga.state).to_dict(), jobs, end)


def _finite(x: float) -> Optional[float]:
    return x if math.isfinite(x) else None


def run_spec(spec: SimSpec, t_end: Optional[float] = None) -> RunResult:
    return Simulation(spec).run(t_end)
