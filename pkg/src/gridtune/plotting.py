"""Figures written next to run artifacts."""
from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "svg.hashsalt": "gridtune",
}

COLORS = {"serial": "#7f7f7f", "stay": "#d62728", "migrated": "#2ca02c",
          "untouched": "#d62728", "tuned": "#2ca02c"}


@contextmanager
def style():
    with plt.rc_context(RC):
        yield


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_progress(result, path) -> Path:
    """Cumulative fraction of work done per job, with decision markers."""
    with style():
        fig, ax = plt.subplots()
        for jid, info in result.jobs.items():
            t, p = [], []
            done = 0.0
            for start, end, work, _loc in info["work_log"]:
                if not t:
                    t.append(start)
                    p.append(0.0)
                done += work
                t.append(end)
                p.append(done / info["total_work"])
            if t:
                ax.plot(t, p, label=jid)
        for rec in result.log.of_type("tuning", "migration_done"):
            ax.axvline(rec["t"], color="k", ls=":" if rec["type"] == "tuning" else "--", lw=0.8)
        ax.set_xlabel("simulated time (s)")
        ax.set_ylabel("work done (fraction)")
        ax.set_ylim(0, 1.05)
        ax.set_title(f"{result.spec.name}: job progress")
        if result.jobs:
            ax.legend(loc="lower right")
        return _save(fig, path)


def plot_cpu(result, path) -> Path:
    """Per-node CPU usage derived from the CpuBusy probe samples."""
    from .monitoring import MetricKind

    period = result.spec.agents.pull_period
    procs = {}
    for site in result.spec.topology.sites:
        for res in site.resources:
            for node in res.nodes:
                procs[node.id] = node.processors
    series: dict[str, tuple[list, list]] = {}
    for s in result.samples:
        if s.kind is MetricKind.CPU_BUSY:
            ts, us = series.setdefault(s.node_id, ([], []))
            ts.append(s.at)
            us.append(min(1.0, s.value / (period * procs[s.node_id])))
    with style():
        fig, ax = plt.subplots()
        for nid in sorted(series):
            ax.step(*series[nid], where="post", label=nid)
        ax.set_xlabel("simulated time (s)")
        ax.set_ylabel("CPU usage")
        ax.set_ylim(0, 1.05)
        ax.set_title(f"{result.spec.name}: node CPU usage")
        if series:
            ax.legend(loc="lower right")
        return _save(fig, path)


def plot_comparison(tables, path) -> Path:
    """Grouped bars of completion time, one group per table."""
    import numpy as np

    with style():
        fig, ax = plt.subplots()
        labels = [r.label.split("/")[-1] for r in tables[0].rows] if tables else []
        width = 0.8 / max(1, len(labels))
        x = np.arange(len(tables))
        for i, lab in enumerate(labels):
            vals = [t.rows[i].completion or 0.0 for t in tables]
            ax.bar(x + (i - (len(labels) - 1) / 2) * width, vals, width, label=lab,
                   color=COLORS.get(lab))
        ax.set_xticks(x)
        ax.set_xticklabels([t.title for t in tables])
        ax.set_ylabel("completion time (s)")
        if len(tables) > 1:
            ax.set_yscale("log")
        ax.legend()
        return _save(fig, path)
