"""Run artifacts on disk, log schema checks and comparison tables."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .config import render_config
from .errors import ExportError, MissingJobError
from .sim_kernel import EventLog
from .simulation import RunResult

EVENTS_FILE = "events.jsonl"
METRICS_FILE = "metrics.csv"
AUDIT_FILE = "audit.json"
SUMMARY_FILE = "summary.json"
SPEC_FILE = "spec.yaml"

METRIC_COLUMNS = ("time", "node", "kind", "value")

# Field order of every record type after the common ``seq, t, type`` prefix.
RECORD_FIELDS: dict[str, tuple[str, ...]] = {
    "send": ("sender", "to", "kind", "deliver_at"),
    "deliver": ("sender", "to", "kind"),
    "timer": ("agent", "tag"),
    "phase": ("job", "kind"),
    "job_start": ("job", "resource", "node", "threads", "scheduling", "predicted_finish"),
    "job_done": ("job", "node", "completion", "logged_work", "total_work"),
    "decision_outcome": ("job", "decision", "ref", "predicted_completion", "realized_completion"),
    "background": ("node", "load", "reason"),
    "fault": ("resource",),
    "recover": ("resource",),
    "sample_drop": ("node", "kind", "at"),
    "finding": ("source", "problem", "hint", "job", "node", "resource", "episode", "evidence"),
    "warning": ("source", "target", "severity", "problem", "hint", "job", "node", "resource", "episode"),
    "tuning": ("job", "node", "ref", "action", "threads_before", "threads_after", "scheduling",
               "progress", "predicted_finish_before", "predicted_finish_after",
               "exec_time_before", "exec_time_after"),
    "tuning_skipped": ("agent", "job", "reason"),
    "action_suppressed": ("agent", "job", "action"),
    "register": ("agent", "record", "job", "problem", "kept"),
    "consult": ("agent", "request", "job", "episode", "problem"),
    "suppressed": ("agent", "job", "episode", "reason", "retry_at"),
    "query": ("agent", "request", "to", "job", "episode"),
    "selection": ("agent", "request", "job", "episode", "candidates", "chosen"),
    "plan": ("agent", "request", "job", "episode", "decision", "reason", "source", "target",
             "target_node", "threads", "transfer_overhead", "source_remaining", "target_remaining",
             "predicted_gain"),
    "migration_start": ("agent", "job", "episode", "source", "source_node", "target", "target_node",
                        "threads", "checkpoint_progress", "transfer_overhead", "predicted_gain",
                        "predicted_completion"),
    "migration_done": ("agent", "job", "episode", "source", "target", "target_node", "threads",
                       "progress", "predicted_finish"),
    "migration_failed": ("agent", "job", "episode", "target", "reason"),
    "migration_skipped": ("agent", "job", "reason"),
    "resumed_in_place": ("agent", "job", "resource", "node", "threads"),
}


def record_errors(record: dict) -> list[str]:
    """Schema violations of one event-log record (empty when valid)."""
    keys = list(record)
    if keys[:3] != ["seq", "t", "type"]:
        return [f"record must start with seq, t, type: {keys[:3]}"]
    expected = RECORD_FIELDS.get(record["type"])
    if expected is None:
        return [f"unknown record type {record['type']!r}"]
    if tuple(keys[3:]) != expected:
        return [f"{record['type']}: fields {keys[3:]} != {list(expected)}"]
    errors = []
    if not isinstance(record["seq"], int) or not isinstance(record["t"], (int, float)):
        errors.append("seq must be an int and t a number")
    return errors


def validate_log(records) -> list[str]:
    errors = []
    last_t = -math.inf
    for i, rec in enumerate(records):
        errors.extend(f"record {i}: {e}" for e in record_errors(rec))
        if rec.get("seq") != i:
            errors.append(f"record {i}: seq {rec.get('seq')} out of order")
        if rec.get("t", 0) < last_t:
            errors.append(f"record {i}: time went backwards")
        last_t = rec.get("t", last_t)
    return errors


_PROTOCOL = (
    ("finding", lambda r, m: r["problem"] in ("ResourceLimitation", "Fault")),
    ("warning", lambda r, m: r["source"].startswith("gsa:") and r["target"] == f"jem:{m['job']}"),
    ("consult", lambda r, m: True),
    ("query", lambda r, m: True),
    ("selection", lambda r, m: r["chosen"] == m["target"]),
    ("plan", lambda r, m: r["decision"] == "Migrate" and r["target"] == m["target"]),
)


def protocol_violations(records) -> list[str]:
    """Migrations not preceded by the full detection-to-plan message chain.

    For every ``migration_start`` the earlier records of the same job and
    episode must contain, in order: an NA finding, a GSA warning to the
    job's JEM, a consult, a load query, the selection and a Migrate plan.
    """
    records = list(records)
    violations = []
    for idx, mig in enumerate(records):
        if mig["type"] != "migration_start":
            continue
        need = len(_PROTOCOL) - 1
        for rec in reversed(records[:idx]):
            if need < 0:
                break
            rtype, pred = _PROTOCOL[need]
            if (rec["type"] == rtype and rec.get("job") == mig["job"]
                    and rec.get("episode") == mig["episode"] and pred(rec, mig)):
                need -= 1
        if need >= 0:
            violations.append(f"migration at seq {mig['seq']} (job {mig['job']}) lacks "
                              f"{_PROTOCOL[need][0]} before it")
    return violations


# -- export -------------------------------------------------------------

@dataclass
class RunArtifacts:
    label: str
    out_dir: Path
    event_log: Path
    metrics: Path
    audit: Path
    summary_path: Path
    summary: dict
    figures: list = field(default_factory=list)

    def completion(self, job_id: str) -> Optional[float]:
        jobs = self.summary.get("jobs", {})
        if job_id not in jobs:
            raise MissingJobError(f"job {job_id!r} not in run {self.label!r}")
        return jobs[job_id]["completion"]

    @classmethod
    def load(cls, out_dir, label: Optional[str] = None) -> "RunArtifacts":
        out = Path(out_dir)
        summary = json.loads((out / SUMMARY_FILE).read_text(encoding="utf-8"))
        return cls(label or summary.get("name", out.name), out, out / EVENTS_FILE, out / METRICS_FILE,
                   out / AUDIT_FILE, out / SUMMARY_FILE, summary)


def _metrics_csv(samples) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for s in samples:
        writer.writerow((repr(float(s.at)), s.node_id, s.kind.value, repr(float(s.value))))
    return buf.getvalue()


def summarize(result: RunResult) -> dict:
    counts: dict[str, int] = {}
    for rec in result.log:
        counts[rec["type"]] = counts.get(rec["type"], 0) + 1
    return {
        "name": result.spec.name,
        "seed": result.spec.seed,
        "end_time": result.end_time,
        "records": len(result.log),
        "tuning_actions": counts.get("tuning", 0),
        "migrations": counts.get("migration_done", 0),
        "jobs": {jid: {k: v for k, v in info.items() if k != "work_log"}
                 for jid, info in result.jobs.items()},
    }


def export_trace(result: Union[RunResult, EventLog], out_dir, label: Optional[str] = None,
                 figures: bool = False) -> RunArtifacts:
    """Write the event log, metric trace, audit report and summary of a run.

    Trace files are byte-identical across re-exports of the same run.
    ``figures`` additionally renders PNG plots next to them.
    """
    out = Path(out_dir)
    if isinstance(result, EventLog):
        log, samples, audit, summary, spec = result, [], _empty_audit(), {"jobs": {}}, None
    else:
        log, samples, audit, summary, spec = result.log, result.samples, result.audit, summarize(result), result.spec
    label = label or summary.get("name", out.name)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write(out / EVENTS_FILE, log.to_jsonl())
        _write(out / METRICS_FILE, _metrics_csv(samples))
        _write(out / AUDIT_FILE, json.dumps(audit, indent=2) + "\n")
        _write(out / SUMMARY_FILE, json.dumps(summary, indent=2) + "\n")
        if spec is not None:
            _write(out / SPEC_FILE, render_config(spec))
    except OSError as exc:
        raise ExportError(f"cannot write run artifacts to {out}: {exc}") from exc
    art = RunArtifacts(label, out, out / EVENTS_FILE, out / METRICS_FILE, out / AUDIT_FILE,
                       out / SUMMARY_FILE, summary)
    if figures and isinstance(result, RunResult):
        from . import plotting
        art.figures.append(plotting.plot_progress(result, out / "progress.png"))
        art.figures.append(plotting.plot_cpu(result, out / "cpu.png"))
    return art


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def _empty_audit() -> dict:
    return {"promises": [], "resources": {}, "totals": {"registered": 0, "findings": 0, "promises": 0,
                                                        "kept": 0, "broken": 0}}


def read_events(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as f:
        return [{"time": float(r["time"]), "node": r["node"], "kind": r["kind"], "value": float(r["value"])}
                for r in csv.DictReader(f)]


# -- comparison ---------------------------------------------------------

@dataclass(frozen=True)
class SpeedupRow:
    label: str
    completion: Optional[float]
    ratio: Optional[float]
    speedup: Optional[float]


@dataclass
class SpeedupTable:
    job_id: str
    rows: list
    title: str = ""

    def render(self) -> str:
        lines = [self.title] if self.title else []
        lines.append(f"{'run':<28} {'completion (s)':>16} {'ratio':>8} {'speedup':>8}")
        for r in self.rows:
            comp = "-" if r.completion is None else f"{r.completion:.3f}"
            ratio = "-" if r.ratio is None else f"{r.ratio:.3f}"
            sp = "-" if r.speedup is None else f"{r.speedup:.3f}"
            lines.append(f"{r.label:<28} {comp:>16} {ratio:>8} {sp:>8}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("title", "job", "run", "completion", "ratio", "speedup"))
        for r in self.rows:
            writer.writerow((self.title, self.job_id, r.label, r.completion, r.ratio, r.speedup))
        return buf.getvalue()


def compare_runs(runs: Sequence[RunArtifacts], job_id: str, title: str = "") -> SpeedupTable:
    """Completion time of ``job_id`` per run; ratio and speedup against the first run."""
    times = [run.completion(job_id) for run in runs]
    base = times[0] if times else None
    rows = []
    for run, t in zip(runs, times):
        if t is None or base is None:
            rows.append(SpeedupRow(run.label, t, None, None))
            continue
        ratio = t / base if base else None
        speedup = base / t if t else None
        rows.append(SpeedupRow(run.label, t, ratio, speedup))
    return SpeedupTable(job_id, rows, title)


def audit_table(audit: dict) -> str:
    """Plain-text rendering of an audit report."""
    lines = ["Promises"]
    if audit["promises"]:
        lines.append(f"  {'job':<16} {'promise':>10} {'actual':>10}  kept")
        for p in audit["promises"]:
            actual = "-" if p["actual"] is None else f"{p['actual']:.3f}"
            lines.append(f"  {p['job']:<16} {p['promise']:>10.3f} {actual:>10}  {'yes' if p['kept'] else 'NO'}")
    else:
        lines.append("  (none declared)")
    lines.append("Registered problems per resource")
    if audit["resources"]:
        classes = list(next(iter(audit["resources"].values())))
        lines.append("  " + f"{'resource':<16}" + "".join(f"{c:>20}" for c in classes))
        for rid, counts in audit["resources"].items():
            lines.append("  " + f"{rid:<16}" + "".join(f"{counts[c]:>20}" for c in classes))
    else:
        lines.append("  (none)")
    t = audit["totals"]
    lines.append(f"Totals: registered={t['registered']} findings={t['findings']} "
                 f"promises={t['promises']} kept={t['kept']} broken={t['broken']}")
    return "\n".join(lines)
