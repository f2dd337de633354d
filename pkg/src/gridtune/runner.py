"""Running built-in scenarios or spec files end to end and writing reports."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import SimSpec, load_config
from .reporting import RunArtifacts, SpeedupTable, compare_runs, export_trace
from .scenarios import SCENARIOS, SORT_SIZES, scenario_specs
from .simulation import RunResult, run_spec


@dataclass
class ScenarioReport:
    name: str
    out_dir: Path
    runs: dict
    results: dict
    tables: list
    figures: list = field(default_factory=list)

    def render(self) -> str:
        return "\n\n".join(t.render() for t in self.tables)


def _run(spec: SimSpec) -> RunResult:
    return run_spec(spec)


def run_many(specs: dict, workers: int = 1) -> dict:
    """Run independent specs, optionally in worker processes; keyed like ``specs``."""
    labels = list(specs)
    if workers <= 1 or len(labels) < 2:
        return {label: run_spec(specs[label]) for label in labels}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_run, [specs[label] for label in labels]))
    return dict(zip(labels, results))


def _with_overrides(spec: SimSpec, seed: Optional[int], t_end: Optional[float]) -> SimSpec:
    if seed is not None:
        spec.seed = seed
    if t_end is not None:
        spec.t_end = t_end
    return spec


def run_scenario(name: str, seed: int = 42, out_dir=None, t_end: Optional[float] = None,
                 figures: bool = True, workers: int = 1) -> ScenarioReport:
    """Run a built-in scenario (or a spec file path) and export every run.

    Each run lands in its own subdirectory of ``out_dir``; comparison tables
    are written as ``comparison.csv`` / ``comparison.txt``.
    """
    if name in SCENARIOS:
        specs = scenario_specs(name, seed)
        for spec in specs.values():
            _with_overrides(spec, None, t_end)
    elif Path(name).is_file():
        spec = _with_overrides(load_config(name), seed, t_end)
        specs = {spec.name: spec}
    else:
        scenario_specs(name)  # raises UnknownScenarioError
    out = Path(out_dir if out_dir is not None else Path("runs") / Path(name).stem)
    results = run_many(specs, workers)
    runs = {label: export_trace(res, out / label.replace("/", "_").replace("=", ""), label, figures)
            for label, res in results.items()}
    tables = _tables(name, runs)
    report = ScenarioReport(name, out, runs, results, tables)
    if tables:
        (out / "comparison.txt").write_text(report.render() + "\n", encoding="utf-8")
        (out / "comparison.csv").write_text("".join(t.to_csv() for t in tables), encoding="utf-8")
        if figures:
            from .plotting import plot_comparison
            report.figures.append(plot_comparison(tables, out / "comparison.png"))
    return report


def _tables(name: str, runs: dict) -> list[SpeedupTable]:
    if name == "scenario1":
        return [compare_runs([runs["untouched"], runs["tuned"]], "matadd", title="matrix addition")]
    if name == "scenario2":
        return [compare_runs([runs[f"n={n}/serial"], runs[f"n={n}/stay"], runs[f"n={n}/migrated"]],
                             "sort", title=f"n={n:.0e}") for n in SORT_SIZES]
    return []


def load_runs(paths) -> list[RunArtifacts]:
    return [RunArtifacts.load(p) for p in paths]
