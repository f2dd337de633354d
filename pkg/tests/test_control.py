import copy

import pytest
from hypothesis import given, settings, strategies as st

from gridtune.analysis_agents import (
    Finding, NodeStatus, ProblemClass, Requirement, ResourceStatus, Severity, TuningHint,
    WarningMessage,
)
from gridtune.config import (
    AgentParams, FaultSpec, JobSpec, NodeSpec, PlacementSpec, ResourceSpec, SimSpec, SiteSpec,
    TopologySpec,
)
from gridtune.control import (
    ActionKind, JEMState, MigrationPlan, Placement, Stay, TuningAction, apply_tuning,
    jem_on_warning, jem_reconsult, plan_migration, select_resource, select_tuning_action,
)
from gridtune.errors import (
    JobNotRunningError, NodeCapacityExceededError, NotTunableError, UnmanagedJobError,
)
from gridtune.grid_model import Job, JobConfig, JobStatus, Node, Scheduling, predicted_exec_time
from gridtune.scenarios import scenario2_spec, stay_put
from gridtune.simulation import run_spec

NODE2 = Node("n1", 2, 1.0)


class TestApplyTuning:
    job = Job("j", 100.0, 0.1)

    def test_one_to_two_threads(self):
        cfg = JobConfig("R", "n1", 1)
        new = apply_tuning(self.job, cfg, TuningAction(ActionKind.SET_THREADS, "j", 0.0, threads=2), NODE2)
        assert new.threads == 2
        assert predicted_exec_time(self.job, NODE2, cfg) == 100.0
        assert predicted_exec_time(self.job, NODE2, new) == pytest.approx(55.0, rel=1e-12)

    def test_dynamic_scheduling(self):
        cfg = JobConfig("R", "n1", 2)
        act = TuningAction(ActionKind.SET_SCHEDULING, "j", 0.0, scheduling=Scheduling.DYNAMIC)
        assert apply_tuning(self.job, cfg, act, NODE2).scheduling is Scheduling.DYNAMIC

    def test_clamped_or_strict(self):
        cfg = JobConfig("R", "n1", 1)
        act = TuningAction(ActionKind.SET_THREADS, "j", 0.0, threads=4)
        assert apply_tuning(self.job, cfg, act, NODE2).threads == 2
        with pytest.raises(NodeCapacityExceededError):
            apply_tuning(self.job, cfg, act, NODE2, strict=True)

    def test_not_running(self):
        act = TuningAction(ActionKind.SET_THREADS, "j", 0.0, threads=2)
        with pytest.raises(JobNotRunningError):
            apply_tuning(self.job, JobConfig("R", "n1"), act, NODE2, status=JobStatus.MIGRATING)


def tunable(hint=TuningHint.INCREASE_THREADS):
    return Finding(1.0, "na:n1", ProblemClass.LOCALLY_TUNABLE, "n1", "j", hint=hint)


class TestSelectTuningAction:
    def test_doubling(self):
        act = select_tuning_action(tunable(), Node("n1", 16, 1.0), JobConfig("R", "n1", 1))
        assert act.kind is ActionKind.SET_THREADS and act.threads == 2
        assert act.describe() == "SetThreads(2)"

    def test_doubling_clamped(self):
        act = select_tuning_action(tunable(), Node("n1", 3, 1.0), JobConfig("R", "n1", 2))
        assert act.threads == 3

    def test_at_capacity(self):
        with pytest.raises(NotTunableError):
            select_tuning_action(tunable(), NODE2, JobConfig("R", "n1", 2))

    def test_scheduling(self):
        act = select_tuning_action(tunable(TuningHint.CHANGE_SCHEDULING), NODE2, JobConfig("R", "n1", 2))
        assert act.scheduling is Scheduling.DYNAMIC

    def test_other_classes(self):
        with pytest.raises(NotTunableError):
            select_tuning_action(Finding(0, "na", ProblemClass.FAULT, job_id="j"), NODE2, JobConfig("R", "n1"))


def warning(problem=ProblemClass.RESOURCE_LIMITATION, job="j", severity=Severity.CRITICAL, at=0.0):
    return WarningMessage(Finding(at, "na:n1", problem, "n1", job, "R1", episode="na:n1#1"), severity, "jem:j")


class TestJEM:
    def test_first_warning_consults(self):
        state = JEMState("jem:j", {"j"})
        req = jem_on_warning(state, warning(), 0.0)
        assert req is not None and req.job_id == "j" and req.episode == "na:n1#1"

    def test_duplicate_within_cooldown_suppressed(self):
        state = JEMState("jem:j", {"j"}, cooldown_window=10.0)
        assert jem_on_warning(state, warning(), 0.0) is not None
        state.in_flight = None  # the first consult was answered
        assert jem_on_warning(state, warning(), 1.0) is None
        assert jem_on_warning(state, warning(), 10.0) is not None

    def test_unmanaged(self):
        with pytest.raises(UnmanagedJobError):
            jem_on_warning(JEMState("jem:j", {"j"}), warning(job="other"), 0.0)

    def test_info_and_tunable_ignored(self):
        state = JEMState("jem:j", {"j"})
        assert jem_on_warning(state, warning(severity=Severity.INFO), 0.0) is None
        assert jem_on_warning(state, warning(ProblemClass.OVERLOAD), 0.0) is None

    def test_deferred_after_migration(self):
        state = JEMState("jem:j", {"j"}, cooldown_window=10.0)
        state.last_migration = 5.0
        assert jem_on_warning(state, warning(), 8.0) is None
        assert state.deferred[1] == 15.0

    def test_deferred_after_tuning(self):
        state = JEMState("jem:j", {"j"}, quiesce_seconds=2.0)
        state.last_tuning = 7.0
        assert jem_on_warning(state, warning(), 8.0) is None
        assert state.deferred[1] == 9.0

    def test_reconsult_bypasses_hysteresis(self):
        state = JEMState("jem:j", {"j"})
        jem_on_warning(state, warning(), 0.0)
        state.last_migration = 0.5
        req = jem_reconsult(state, warning(), 1.0)
        assert req is not None and state.last_migration == 0.5


def rs(rid, load, free, healthy=True, memory=1024.0):
    return ResourceStatus(rid, load, free, healthy, memory=memory)


class TestSelectResource:
    def test_example(self):
        cands = [rs("R1", 0.9, 2), rs("R2", 0.2, 8), rs("R3", 0.2, 4)]
        assert select_resource(cands, Requirement(4), current="R0") == "R2"

    def test_only_current(self):
        assert select_resource([rs("R1", 0.0, 8)], Requirement(1), current="R1") is None

    def test_empty(self):
        assert select_resource([], Requirement(1), current=None) is None

    def test_unhealthy_filtered(self):
        assert select_resource([rs("R1", 0.0, 8, healthy=False), rs("R2", 0.5, 2)], Requirement(1), None) == "R2"

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.sampled_from([0.0, 0.25, 0.5]), st.integers(0, 4), st.booleans()),
                    max_size=8), st.integers(1, 4))
    def test_brute_force(self, rows, need):
        cands = [rs(f"R{i}", l, f, h) for i, (l, f, h) in enumerate(rows)]
        ok = [c for c in cands if c.healthy and c.free_processors >= need and c.resource_id != "R0"]
        best = None
        for c in ok:  # pairwise "beats" relation, no sorting
            if all(not (o.load < c.load or (o.load == c.load and o.free_processors > c.free_processors)
                        or (o.load == c.load and o.free_processors == c.free_processors
                            and o.resource_id < c.resource_id)) for o in ok if o is not c):
                best = c.resource_id
        assert select_resource(cands, Requirement(need), "R0") == best


def node_status(nid, procs, speed, bg=0.0, free=None, alive=True):
    free = procs if free is None else free
    return NodeStatus(nid, procs, speed, bg, 1024.0, procs - free, free, alive)


class TestPlanMigration:
    job = Job("j", 100.0, 0.0, max_threads=4)
    src = Placement("Server1", "s1")
    dst = Placement("Server2", "s2")

    def plan(self, progress=0.0, target=None, transfer=2.0, min_gain=0.1, source=None):
        source = source or node_status("s1", 2, 1.0, free=0)
        target = target or node_status("s2", 16, 5.0 / 3.0)
        return plan_migration(self.job, progress, self.src, source, 2, self.dst, target,
                              transfer, min_gain, decided_at=10.0)

    def test_worked_example(self):
        # oracle: stay = 100/2/1 = 50; move = 2 + 100/4/(5/3) = 17
        stay, move = 100 / 2 / 1.0, 2.0 + 100 / 4 / (5 / 3)
        plan = self.plan()
        assert isinstance(plan, MigrationPlan)
        assert plan.threads == 4
        assert plan.source_remaining == pytest.approx(stay)
        assert plan.target_remaining == pytest.approx(move - 2.0)
        assert plan.predicted_gain == pytest.approx(stay - move) == pytest.approx(33.0)
        assert plan.predicted_completion == pytest.approx(10.0 + 17.0)

    def test_insufficient_gain(self):
        # target only 2% faster than staying
        out = self.plan(target=node_status("s2", 2, 1.0 / 0.98), transfer=0.0)
        assert out == Stay("insufficient gain")

    def test_done(self):
        assert self.plan(progress=1.0) == Stay("already done")

    def test_no_room(self):
        assert self.plan(target=node_status("s2", 16, 1.0, free=0)) == Stay("no processors free at target")

    def test_dead_source_always_moves(self):
        out = self.plan(source=node_status("s1", 2, 1.0, free=0, alive=False))
        assert isinstance(out, MigrationPlan)

    @settings(max_examples=200)
    @given(st.floats(0, 0.99), st.floats(0.1, 4), st.integers(1, 16), st.floats(0, 20), st.floats(0, 0.5))
    def test_gain_soundness(self, progress, speed, procs, transfer, min_gain):
        out = self.plan(progress, node_status("s2", procs, speed), transfer, min_gain)
        if isinstance(out, MigrationPlan):
            move = out.transfer_overhead + out.target_remaining
            assert move < (1 - min_gain) * out.source_remaining
            assert out.threads <= procs


# -- migration in the running simulator ------------------------------------

def two_servers(transfer=0.0, fault=None):
    topo = TopologySpec([SiteSpec("S", [
        ResourceSpec("A", "SMP", [NodeSpec("a", 2, 1.0)]),
        ResourceSpec("B", "SMP", [NodeSpec("b", 4, 1.0)]),
    ])])
    job = JobSpec("j", 200.0, PlacementSpec("A", "a", threads=2), max_threads=4)
    return SimSpec(topo, [job], faults=[fault] if fault else [],
                   agents=AgentParams(transfer_base=transfer), t_end=500.0)


def test_migration_halves_remaining_time():
    res = run_spec(two_servers())
    done = res.log.of_type("migration_done")
    assert len(done) == 1 and done[0]["threads"] == 4
    start = res.log.of_type("migration_start")[0]
    left = (1 - start["checkpoint_progress"]) * 200.0
    assert res.jobs["j"]["completion"] - done[0]["t"] == pytest.approx(left / 4, rel=1e-9)
    stay = run_spec(stay_put(two_servers()))
    assert stay.jobs["j"]["completion"] - start["t"] == pytest.approx(left / 2, rel=1e-9)


def test_target_failure_during_transfer_reconsults():
    clean = run_spec(two_servers(transfer=5.0))
    t0 = clean.log.of_type("migration_start")[0]["t"]
    res = run_spec(two_servers(transfer=5.0, fault=FaultSpec("B", t0 + 2.0)))
    failed = res.log.of_type("migration_failed")
    assert len(failed) == 1 and failed[0]["target"] == "B"
    later = [r for r in res.log.of_type("consult") if r["t"] >= failed[0]["t"]]
    assert later, "a new consult follows the failed transfer"
    info = res.jobs["j"]
    assert info["logged_work"] == pytest.approx(info["progress"] * info["total_work"], rel=1e-9)


def test_migrated_beats_stay_put():
    spec = scenario2_spec(10**5)
    moved = run_spec(spec).jobs["sort"]["completion"]
    stayed = run_spec(stay_put(copy.deepcopy(spec))).jobs["sort"]["completion"]
    assert moved < stayed
