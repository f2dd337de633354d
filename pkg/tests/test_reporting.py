import json
import os

import pytest

from gridtune.errors import ExportError, MissingJobError, UnknownScenarioError
from gridtune.reporting import (
    RunArtifacts, audit_table, compare_runs, export_trace, protocol_violations, read_events,
    read_metrics, validate_log,
)
from gridtune.runner import run_scenario
from gridtune.scenarios import scenario1_spec, scenario2_spec
from gridtune.sim_kernel import EventLog
from gridtune.simulation import run_spec


@pytest.fixture(scope="module")
def s1():
    return run_spec(scenario1_spec(42))


def test_export_is_byte_identical(tmp_path, s1):
    a = export_trace(s1, tmp_path / "a")
    b = export_trace(s1, tmp_path / "b")
    for name in ("events.jsonl", "metrics.csv", "audit.json", "summary.json", "spec.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.summary == b.summary


def test_export_round_trip(tmp_path, s1):
    art = export_trace(s1, tmp_path)
    assert read_events(art.event_log) == s1.log.records
    rows = read_metrics(art.metrics)
    assert len(rows) == len(s1.samples)
    assert [r["value"] for r in rows] == [float(s.value) for s in s1.samples]
    assert json.loads(art.audit.read_text()) == s1.audit
    again = RunArtifacts.load(tmp_path)
    assert again.summary == art.summary


def test_empty_log_gives_headers_only(tmp_path):
    art = export_trace(EventLog(), tmp_path)
    assert art.event_log.read_text() == ""
    assert art.metrics.read_text() == "time,node,kind,value\n"
    assert json.loads(art.audit.read_text())["promises"] == []


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_dir_permissions(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    try:
        with pytest.raises(ExportError):
            export_trace(EventLog(), locked / "out")
    finally:
        locked.chmod(0o700)


def test_unwritable_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    with pytest.raises(ExportError) as err:
        export_trace(EventLog(), blocker / "out")
    assert isinstance(err.value, OSError)


def test_logs_validate_against_schema(s1):
    assert validate_log(s1.log.records) == []
    assert validate_log(run_spec(scenario2_spec(10**5)).log.records) == []


def test_schema_rejects_bad_records():
    assert validate_log([{"seq": 0, "t": 0.0, "type": "mystery"}])
    assert validate_log([{"t": 0.0, "seq": 0, "type": "fault", "resource": "A"}])
    assert validate_log([{"seq": 0, "t": 0.0, "type": "fault"}])


def test_protocol_checker_flags_missing_steps():
    res = run_spec(scenario2_spec(10**5))
    records = res.log.records
    assert protocol_violations(records) == []
    pruned = [r for r in records if r["type"] != "query"]
    assert len(protocol_violations(pruned)) == 1


def test_compare_identical(tmp_path, s1):
    a = export_trace(s1, tmp_path / "a", "a")
    b = export_trace(s1, tmp_path / "b", "b")
    table = compare_runs([a, b], "matadd")
    assert [r.ratio for r in table.rows] == [1.0, 1.0]
    assert "matadd" in table.to_csv()


def test_compare_missing_job(tmp_path, s1):
    a = export_trace(s1, tmp_path / "a")
    with pytest.raises(MissingJobError):
        compare_runs([a], "nope")


def test_audit_table(s1):
    text = audit_table(s1.audit)
    assert "(none declared)" in text and "Totals" in text


def test_run_scenario_unknown(tmp_path):
    with pytest.raises(UnknownScenarioError):
        run_scenario("scenario9", out_dir=tmp_path)


def test_run_scenario1(tmp_path):
    report = run_scenario("scenario1", seed=42, out_dir=tmp_path, figures=True)
    assert set(report.runs) == {"tuned", "untouched"}
    rows = report.tables[0].rows
    assert [r.label for r in rows] == ["untouched", "tuned"]
    assert rows[1].ratio == pytest.approx(0.55, rel=1e-9)
    for name in ("comparison.txt", "comparison.csv", "comparison.png"):
        assert (tmp_path / name).stat().st_size > 0
    assert (tmp_path / "tuned" / "progress.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_parallel_runs_match_serial(tmp_path):
    one = run_scenario("scenario1", out_dir=tmp_path / "one", figures=False, workers=1)
    two = run_scenario("scenario1", out_dir=tmp_path / "two", figures=False, workers=2)
    for label in one.runs:
        assert one.runs[label].event_log.read_bytes() == two.runs[label].event_log.read_bytes()
