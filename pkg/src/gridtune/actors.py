"""Kernel actors wrapping the analysis and control step functions.

Agent ids: ``na:<node>``, ``tuner:<node>``, ``ra:<resource>``,
``gsa:<site>``, ``ga``, ``jc`` and ``jem:<job>``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .analysis_agents import (
    AuditRecord, Finding, GAState, GSAState, LoadQuery, LoadReply, NAState, NodeReport,
    ProblemClass, RAState, Register, ResourceStatusMsg, Severity, WarningMessage, ga_register,
    gsa_query_load, gsa_summarize, na_step, node_status, ra_aggregate,
)
from .control import (
    Advice, ConsultRequest, JEMState, JobFinished, JobSnapshot, MigrationPlan, Placement, Stay,
    TuningNotice, jem_on_warning, jem_reconsult, pick_node, plan_migration, select_resource,
    select_tuning_action,
)
from .errors import NotTunableError
from .grid_model import JobStatus
from .monitoring import pull

WORLD = "world"


def _finding_fields(f: Finding) -> dict:
    return dict(problem=f.problem, hint=f.hint, job=f.job_id, node=f.node_id,
                resource=f.resource_id, episode=f.episode)


class _Actor:
    def __init__(self, world, agent_id: str, node_id: str):
        self.world = world
        self.id = agent_id
        world.place(agent_id, node_id)
        world.kernel.register(self)

    def receive(self, message) -> None:
        pass

    def on_timer(self, tag, data) -> None:
        pass

    def warn(self, warning: WarningMessage) -> None:
        f = warning.finding
        self.world.record("warning", source=self.id, target=warning.target, severity=warning.severity,
                          **_finding_fields(f))
        self.world.send(self.id, warning.target, warning)


class WorldAgent(_Actor):
    def on_timer(self, tag, data):
        self.world.on_world_timer(tag, data)


class NodeAgent(_Actor):
    def __init__(self, world, site_id, resource_id, node):
        super().__init__(world, f"na:{node.id}", node.id)
        self.node_id = node.id
        self.site_id = site_id
        self.resource_id = resource_id
        self.state = NAState(self.id, node, resource_id, world.params)
        world.buffers[node.id].register(self.id)

    def start(self, at: float) -> None:
        self.world.kernel.timer(self.id, at, "pull", 0)

    def on_timer(self, tag, k):
        w = self.world
        if not w.active:
            return
        now = w.now
        w.probe(self.node_id)
        samples = pull(w.buffers[self.node_id], self.id)
        views = w.node_jobs(self.node_id)
        bg = w.bg[self.node_id]
        for f in na_step(self.state, samples, views, now, bg):
            w.record("finding", source=self.id, **_finding_fields(f), evidence=dict(f.evidence))
            w.send(self.id, "ga", Register(f))
            if f.problem is ProblemClass.LOCALLY_TUNABLE:
                self.warn(WarningMessage(f, Severity.INFO, f"tuner:{self.node_id}"))
            else:
                self.warn(WarningMessage(f, Severity.WARN, f"gsa:{self.site_id}"))
        status = node_status(self.state, views, samples, now, bg)
        w.send(self.id, f"ra:{self.resource_id}", NodeReport(k, status))
        w.kernel.timer(self.id, (k + 1) * w.params.pull_period, "pull", k + 1)


class TuningAgent(_Actor):
    def __init__(self, world, node):
        super().__init__(world, f"tuner:{node.id}", node.id)
        self.node = node

    def receive(self, message):
        warning = message.payload
        if not isinstance(warning, WarningMessage):
            return
        w = self.world
        f = warning.finding
        rt = w.jobs.get(f.job_id)
        if rt is None or not rt.running or rt.config.node_id != self.node.id:
            w.record("tuning_skipped", agent=self.id, job=f.job_id, reason="job not on this node")
            return
        try:
            action = select_tuning_action(f, self.node, rt.config, w.now, cap=rt.job.max_threads)
        except NotTunableError as exc:
            w.record("tuning_skipped", agent=self.id, job=f.job_id, reason=str(exc))
            return
        if not w.flags.tuning:
            w.record("action_suppressed", agent=self.id, job=f.job_id, action=action.describe())
            return
        w.apply_tuning(f.job_id, action)
        w.send(self.id, f"jem:{f.job_id}", TuningNotice(f.job_id, action))


class ResourceAgent(_Actor):
    def __init__(self, world, site_id, resource):
        super().__init__(world, f"ra:{resource.id}", resource.nodes[0].id)
        self.site_id = site_id
        self.state = RAState(self.id, resource, world.params)
        self.rounds: dict[int, dict] = {}

    def receive(self, message):
        report = message.payload
        if not isinstance(report, NodeReport):
            return
        w = self.world
        batch = self.rounds.setdefault(report.round, {})
        batch[report.status.node_id] = report.status
        if len(batch) < len(self.state.resource.nodes):
            return
        del self.rounds[report.round]
        nodes = [batch[n.id] for n in self.state.resource.nodes]
        status = ra_aggregate(self.state, nodes, w.now)
        for f in status.findings:
            w.record("finding", source=self.id, **_finding_fields(f), evidence=dict(f.evidence))
            w.send(self.id, "ga", Register(f))
        w.send(self.id, f"gsa:{self.site_id}", ResourceStatusMsg(self.site_id, status))
        for jr in status.per_job:
            w.send(self.id, f"jem:{jr.job_id}", ResourceStatusMsg(self.site_id, status))


class SiteAgent(_Actor):
    def __init__(self, world, site):
        super().__init__(world, f"gsa:{site.id}", site.resources[0].nodes[0].id)
        self.state = GSAState(self.id, site, world.params, subscribers=["jc"])

    def receive(self, message):
        w = self.world
        payload = message.payload
        if isinstance(payload, ResourceStatusMsg):
            _, warnings = gsa_summarize(self.state, [payload.status], w.now)
            registered = set()
            for warning in warnings:
                self.warn(warning)
                key = (warning.finding.problem, warning.finding.resource_id)
                if key not in registered:
                    registered.add(key)
                    w.send(self.id, "ga", Register(warning.finding))
        elif isinstance(payload, WarningMessage):
            f = payload.finding
            if f.job_id is None or f.episode in self.state.forwarded:
                return
            self.state.forwarded.add(f.episode)
            self.warn(WarningMessage(f, Severity.CRITICAL, f"jem:{f.job_id}"))
        elif isinstance(payload, LoadQuery):
            statuses = gsa_query_load(self.state, payload.requirement, w.now)
            w.send(self.id, message.sender,
                   LoadReply(payload.query_id, self.state.site.id, tuple(statuses)))


class GridAgent(_Actor):
    def __init__(self, world, node_id):
        super().__init__(world, "ga", node_id)
        self.state = GAState(self.id)

    def receive(self, message):
        payload = message.payload
        if not isinstance(payload, Register):
            return
        rec = payload.record
        ga_register(self.state, rec, self.world.now)
        if isinstance(rec, AuditRecord):
            self.world.record("register", agent=self.id, record="AuditRecord", job=rec.job_id,
                              problem=None, kept=rec.kept)
        else:
            self.world.record("register", agent=self.id, record="Finding", job=rec.job_id,
                              problem=rec.problem, kept=None)


@dataclass
class _Consult:
    request: ConsultRequest
    expected: int
    replies: list = field(default_factory=list)


class JobController(_Actor):
    def __init__(self, world, node_id, site_ids):
        super().__init__(world, "jc", node_id)
        self.gsas = [f"gsa:{s}" for s in site_ids]
        self.pending: dict[str, _Consult] = {}
        self.alerts: list = []

    def receive(self, message):
        w = self.world
        payload = message.payload
        if isinstance(payload, ConsultRequest):
            self.pending[payload.request_id] = _Consult(payload, len(self.gsas))
            for gsa in self.gsas:
                w.record("query", agent=self.id, request=payload.request_id, to=gsa,
                         job=payload.job_id, episode=payload.episode)
                w.send(self.id, gsa, LoadQuery(payload.request_id, payload.requirement, payload.episode))
        elif isinstance(payload, LoadReply):
            consult = self.pending.get(payload.query_id)
            if consult is None:
                return
            consult.replies.append(payload)
            if len(consult.replies) == consult.expected:
                del self.pending[payload.query_id]
                self._decide(consult)
        elif isinstance(payload, WarningMessage):
            self.alerts.append(payload.finding)
        elif isinstance(payload, JobFinished):
            job = w.jobs[payload.job_id].job
            if job.deadline_promise is not None:
                rec = AuditRecord.evaluate(job.id, job.deadline_promise, payload.completed_at, self.id, w.now)
                w.send(self.id, "ga", Register(rec))

    def _decide(self, consult: _Consult) -> None:
        w = self.world
        req = consult.request
        snap = req.snapshot
        candidates = [st for reply in consult.replies for st in reply.statuses
                      if st.resource_id not in req.exclude]
        current = snap.placement.resource_id if snap.placement else None
        chosen = select_resource(candidates, req.requirement, current)
        w.record("selection", agent=self.id, request=req.request_id, job=req.job_id, episode=req.episode,
                 candidates=[c.resource_id for c in candidates], chosen=chosen)
        decision = Stay("no suitable resource")
        if chosen is not None:
            status = next(c for c in candidates if c.resource_id == chosen)
            node = pick_node(status)
            if node is None:
                decision = Stay("no live node at target")
            else:
                decision = plan_migration(
                    snap.job, snap.progress, snap.placement, snap.source_node, snap.threads,
                    Placement(chosen, node.node_id), node,
                    w.params.transfer_overhead(snap.job.memory_need), w.params.min_gain, w.now,
                    episode=req.episode)
        if isinstance(decision, MigrationPlan):
            w.record("plan", agent=self.id, request=req.request_id, job=req.job_id, episode=req.episode,
                     decision="Migrate", reason=None, source=decision.source.resource_id,
                     target=decision.target.resource_id, target_node=decision.target.node_id,
                     threads=decision.threads, transfer_overhead=decision.transfer_overhead,
                     source_remaining=_num(decision.source_remaining),
                     target_remaining=decision.target_remaining,
                     predicted_gain=_num(decision.predicted_gain))
        else:
            w.record("plan", agent=self.id, request=req.request_id, job=req.job_id, episode=req.episode,
                     decision="Stay", reason=decision.reason, source=current, target=chosen,
                     target_node=None, threads=None, transfer_overhead=None, source_remaining=None,
                     target_remaining=None, predicted_gain=None)
        w.send(self.id, f"jem:{req.job_id}", Advice(req.request_id, req.job_id, decision))


def _num(x: float):
    return x if x != float("inf") else None


class JobExecutionManager(_Actor):
    def __init__(self, world, job_rt):
        super().__init__(world, f"jem:{job_rt.job.id}", job_rt.placement.node_id)
        self.job_id = job_rt.job.id
        p = world.params
        self.state = JEMState(self.id, {self.job_id}, p.cooldown_window, p.quiesce_seconds)
        self.latest_status = None
        self.warning = None
        self.retry_pending = False
        self.migration_before = None

    # -- helpers -----------------------------------------------------------
    def _rt(self):
        return self.world.jobs[self.job_id]

    def snapshot(self) -> JobSnapshot:
        w = self.world
        rt = self._rt()
        if rt.running:
            placement = Placement(rt.config.resource_id, rt.config.node_id)
            threads = rt.config.threads
            source_node = None
            if self.latest_status is not None and self.latest_status.resource_id == placement.resource_id:
                source_node = next((n for n in self.latest_status.nodes if n.node_id == placement.node_id), None)
        else:
            placement, threads, source_node = rt.placement, rt.threads, None
        return JobSnapshot(rt.job, w.progress_now(rt), placement, threads, source_node)

    def _finished(self) -> bool:
        return self._rt().state.status in (JobStatus.DONE, JobStatus.FAILED)

    def _consult(self, request: ConsultRequest) -> None:
        f = request.warning.finding
        self.world.record("consult", agent=self.id, request=request.request_id, job=self.job_id,
                          episode=f.episode, problem=f.problem)
        self.world.send(self.id, "jc", request)

    def handle_warning(self, warning: WarningMessage) -> None:
        w = self.world
        if self._finished() or self._rt().state.status is JobStatus.PENDING:
            return
        request = jem_on_warning(self.state, warning, w.now, self.snapshot())
        if request is not None:
            self.warning = warning
            self._consult(request)
            return
        f = warning.finding
        if self.state.deferred is not None:
            _, retry_at = self.state.deferred
            self.state.deferred = None
            w.record("suppressed", agent=self.id, job=self.job_id, episode=f.episode,
                     reason="deferred", retry_at=retry_at)
            if not self.retry_pending:
                self.retry_pending = True
                w.kernel.timer(self.id, retry_at, "retry", warning)
        else:
            w.record("suppressed", agent=self.id, job=self.job_id, episode=f.episode,
                     reason="hysteresis", retry_at=None)

    # -- kernel hooks ------------------------------------------------------
    def receive(self, message):
        payload = message.payload
        if isinstance(payload, WarningMessage):
            self.handle_warning(payload)
        elif isinstance(payload, ResourceStatusMsg):
            self.latest_status = payload.status
        elif isinstance(payload, TuningNotice):
            self.state.last_tuning = payload.action.issued_at
        elif isinstance(payload, Advice):
            self.on_advice(payload)

    def on_timer(self, tag, data):
        if tag == "retry":
            self.retry_pending = False
            if not self._finished():
                self.handle_warning(data)
        elif tag == "resume":
            self.on_transfer_done(data)
        elif tag == "reconsult":
            if not self._finished():
                self._consult(jem_reconsult(self.state, self.warning, self.world.now, self.snapshot()))

    def on_advice(self, advice: Advice) -> None:
        w = self.world
        self.state.in_flight = None
        rt = self._rt()
        decision = advice.decision
        suspended = rt.state.status is JobStatus.MIGRATING
        if isinstance(decision, Stay) or not w.flags.migration:
            if isinstance(decision, MigrationPlan):
                w.record("action_suppressed", agent=self.id, job=self.job_id,
                         action=f"Migrate({decision.target.resource_id})")
            if suspended:
                self._resume_in_place()
            return
        if self._finished():
            return
        if rt.running and (rt.config.resource_id, rt.config.node_id) != \
                (decision.source.resource_id, decision.source.node_id):
            w.record("migration_skipped", agent=self.id, job=self.job_id, reason="job moved since consult")
            return
        self.migration_before = self.state.last_migration
        if rt.running:
            checkpoint = w.stop_for_migration(self.job_id)
        else:
            checkpoint = rt.state.progress
        plan = replace(decision, checkpoint_progress=checkpoint)
        self.state.last_migration = w.now
        w.record("migration_start", agent=self.id, job=self.job_id, episode=plan.episode,
                 source=plan.source.resource_id, source_node=plan.source.node_id,
                 target=plan.target.resource_id, target_node=plan.target.node_id,
                 threads=plan.threads, checkpoint_progress=checkpoint,
                 transfer_overhead=plan.transfer_overhead, predicted_gain=_num(plan.predicted_gain),
                 predicted_completion=plan.predicted_completion)
        w.kernel.timer(self.id, w.now + plan.transfer_overhead, "resume", plan)

    def on_transfer_done(self, plan: MigrationPlan) -> None:
        w = self.world
        if w.can_host(plan.target, plan.threads):
            w.resume(self.job_id, plan.target, plan.threads)
            w.note_migration(self.job_id, plan)
            w.record("migration_done", agent=self.id, job=self.job_id, episode=plan.episode,
                     source=plan.source.resource_id, target=plan.target.resource_id,
                     target_node=plan.target.node_id, threads=plan.threads,
                     progress=self._rt().state.progress,
                     predicted_finish=_num(w.now + w.remaining_for(self.job_id)))
            return
        # TargetUnavailable: the job waits, unplaced, for fresh advice
        self.state.last_migration = self.migration_before
        w.record("migration_failed", agent=self.id, job=self.job_id, episode=plan.episode,
                 target=plan.target.resource_id, reason="TargetUnavailable")
        self._consult(jem_reconsult(self.state, self.warning, w.now, self.snapshot(),
                                    exclude=(plan.target.resource_id,)))

    def _resume_in_place(self) -> None:
        w = self.world
        rt = self._rt()
        src = rt.placement
        threads = min(rt.threads, w.free_processors(src.node_id))
        if w.healthy[src.resource_id] and threads >= 1:
            w.resume(self.job_id, src, threads)
            w.record("resumed_in_place", agent=self.id, job=self.job_id, resource=src.resource_id,
                     node=src.node_id, threads=threads)
        else:
            w.kernel.timer(self.id, w.now + w.params.cooldown_window, "reconsult", None)

    def on_job_done(self, at: float) -> None:
        self.world.send(self.id, "jc", JobFinished(self.job_id, at))


@dataclass
class Population:
    world_agent: WorldAgent
    node_agents: dict
    tuners: dict
    ras: dict
    gsas: dict
    ga: GridAgent
    jc: JobController
    jems: dict


def populate(world) -> Population:
    grid = world.grid
    first_node = grid.sites[0].resources[0].nodes[0].id
    world_agent = WorldAgent(world, WORLD, first_node)
    nas, tuners, ras, gsas = {}, {}, {}, {}
    for site in grid.sites:
        gsas[site.id] = SiteAgent(world, site)
        for res in site.resources:
            ras[res.id] = ResourceAgent(world, site.id, res)
            for node in res.nodes:
                nas[node.id] = NodeAgent(world, site.id, res.id, node)
                tuners[node.id] = TuningAgent(world, node)
    ga = GridAgent(world, first_node)
    jc = JobController(world, first_node, [s.id for s in grid.sites])
    jems = {jid: JobExecutionManager(world, rt) for jid, rt in world.jobs.items()}
    return Population(world_agent, nas, tuners, ras, gsas, ga, jc, jems)
