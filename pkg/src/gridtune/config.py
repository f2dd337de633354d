"""SimSpec: the YAML run description, with strict parsing and rendering.

Every key is documented in README.md.  Unknown keys are rejected so a
misspelled threshold name fails loudly instead of silently using a default.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .errors import DuplicateIdError, EmptyTopologyError, ParseError, ValidationError

RESOURCE_KINDS = ("Cluster", "SMP", "Workstation")
SCHEDULING = ("Static", "Dynamic")


@dataclass
class BackgroundChange:
    at: float
    load: float


@dataclass
class NodeSpec:
    id: str
    processors: int
    speed: float = 1.0
    background_load: float = 0.0
    memory: float = 1024.0
    background_schedule: list[BackgroundChange] = field(default_factory=list)
    # amplitude of uniform jitter added to the background at every probe
    background_noise: float = 0.0


@dataclass
class ResourceSpec:
    id: str
    kind: str
    nodes: list[NodeSpec]
    healthy: bool = True


@dataclass
class SiteSpec:
    id: str
    resources: list[ResourceSpec]


@dataclass
class TopologySpec:
    sites: list[SiteSpec]
    grid_id: str = "grid"


@dataclass
class PlacementSpec:
    resource: str
    node: str
    threads: int = 1
    scheduling: str = "Static"


@dataclass
class JobSpec:
    id: str
    total_work: float
    placement: PlacementSpec
    serial_fraction: float = 0.0
    per_thread_overhead: float = 0.0
    min_processors: int = 1
    memory_need: float = 0.0
    deadline_promise: Optional[float] = None
    max_threads: Optional[int] = None
    imbalance: float = 0.0
    start_at: float = 0.0


@dataclass
class FaultSpec:
    resource: str
    at: float
    recover_at: Optional[float] = None


@dataclass
class LatencySpec:
    intra_node: float = 0.0
    intra_site: float = 0.01
    inter_site: float = 0.1


@dataclass
class AgentParams:
    pull_period: float = 1.0
    buffer_capacity: int = 4096
    gain_min: float = 0.2
    imbalance_max: float = 0.5
    saturation_min: float = 0.95
    sustain_window: int = 3
    heartbeat_timeout: float = 5.0
    overload_min: float = 0.9
    min_gain: float = 0.1
    cooldown_window: float = 10.0
    quiesce_window: int = 2
    transfer_base: float = 1.0
    transfer_per_memory: float = 0.0
    strict_threads: bool = False
    latency: LatencySpec = field(default_factory=LatencySpec)

    @property
    def quiesce_seconds(self) -> float:
        return self.quiesce_window * self.pull_period

    def transfer_overhead(self, memory_need: float) -> float:
        return self.transfer_base + self.transfer_per_memory * memory_need


@dataclass
class ControlFlags:
    tuning: bool = True
    migration: bool = True
    restart_migration: bool = False


@dataclass
class SimSpec:
    topology: TopologySpec
    jobs: list[JobSpec] = field(default_factory=list)
    faults: list[FaultSpec] = field(default_factory=list)
    agents: AgentParams = field(default_factory=AgentParams)
    control: ControlFlags = field(default_factory=ControlFlags)
    seed: int = 0
    t_end: float = 1000.0
    name: str = "run"


# -- generic conversion ---------------------------------------------------

def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(args[0], value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ValidationError(path, f"expected a list, got {type(value).__name__}")
        (item_tp,) = typing.get_args(tp)
        return [_convert(item_tp, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ValidationError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(path, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ValidationError(path, "must be finite")
        return value
    if tp is str:
        if not isinstance(value, (str, int)) or isinstance(value, bool):
            raise ValidationError(path, f"expected a string, got {value!r}")
        return str(value)
    raise TypeError(f"unsupported field type {tp}")


def _from_dict(cls, data, path: str):
    if not isinstance(data, dict):
        raise ValidationError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ValidationError(f"{path}.{key}" if path else str(key), f"unknown key {key!r}")
    kwargs = {}
    for name, f in fields.items():
        sub = f"{path}.{name}" if path else name
        if name in data:
            kwargs[name] = _convert(hints[name], data[name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ValidationError(sub, "required key missing")
    return cls(**kwargs)


def spec_from_dict(data: Any) -> SimSpec:
    spec = _from_dict(SimSpec, data, "")
    validate(spec)
    return spec


def parse_config(text: str) -> SimSpec:
    """Parse and validate YAML config text into a :class:`SimSpec`."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ParseError(line, str(getattr(exc, "problem", None) or exc)) from None
    if data is None:
        raise ParseError(1, "empty config")
    return spec_from_dict(data)


def load_config(path) -> SimSpec:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def spec_to_dict(spec: SimSpec) -> dict:
    return dataclasses.asdict(spec)


def render_config(spec: SimSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=False)


# -- semantic validation -------------------------------------------------

def _check(cond: bool, path: str, message: str):
    if not cond:
        raise ValidationError(path, message)


def _fraction(value: float, path: str):
    _check(0.0 <= value <= 1.0, path, f"must be in [0, 1], got {value}")


def validate(spec: SimSpec) -> None:
    from .grid_model import build_topology

    topo = spec.topology
    _check(bool(topo.sites), "topology.sites", "at least one site required")
    nodes: dict[str, tuple[str, NodeSpec]] = {}
    resources: dict[str, ResourceSpec] = {}
    for i, site in enumerate(topo.sites):
        sp = f"topology.sites[{i}]"
        for j, res in enumerate(site.resources):
            rp = f"{sp}.resources[{j}]"
            _check(res.kind in RESOURCE_KINDS, f"{rp}.kind", f"must be one of {RESOURCE_KINDS}")
            if res.kind != "Cluster":
                _check(len(res.nodes) == 1, f"{rp}.nodes", f"{res.kind} must have exactly one node")
            resources[res.id] = res
            for k, node in enumerate(res.nodes):
                np_ = f"{rp}.nodes[{k}]"
                _check(node.processors >= 1, f"{np_}.processors", "must be >= 1")
                _check(node.speed > 0, f"{np_}.speed", "must be > 0")
                _check(node.memory >= 0, f"{np_}.memory", "must be >= 0")
                _fraction(node.background_load, f"{np_}.background_load")
                _fraction(node.background_noise, f"{np_}.background_noise")
                last = -math.inf
                for m, change in enumerate(node.background_schedule):
                    cp = f"{np_}.background_schedule[{m}]"
                    _fraction(change.load, f"{cp}.load")
                    _check(change.at >= 0, f"{cp}.at", "must be >= 0")
                    _check(change.at >= last, f"{cp}.at", "schedule must be time-ordered")
                    last = change.at
                nodes[node.id] = (res.id, node)
    try:
        build_topology(topo)
    except (DuplicateIdError, EmptyTopologyError) as exc:
        raise ValidationError("topology", str(exc)) from None

    seen_jobs: set[str] = set()
    for i, job in enumerate(spec.jobs):
        jp = f"jobs[{i}]"
        _check(job.id not in seen_jobs, f"{jp}.id", f"duplicate job id {job.id!r}")
        seen_jobs.add(job.id)
        _check(job.total_work > 0, f"{jp}.total_work", "must be > 0")
        _fraction(job.serial_fraction, f"{jp}.serial_fraction")
        _fraction(job.imbalance, f"{jp}.imbalance")
        _check(job.per_thread_overhead >= 0, f"{jp}.per_thread_overhead", "must be >= 0")
        _check(job.min_processors >= 1, f"{jp}.min_processors", "must be >= 1")
        _check(job.memory_need >= 0, f"{jp}.memory_need", "must be >= 0")
        _check(job.start_at >= 0, f"{jp}.start_at", "must be >= 0")
        if job.max_threads is not None:
            _check(job.max_threads >= 1, f"{jp}.max_threads", "must be >= 1")
        if job.deadline_promise is not None:
            _check(job.deadline_promise > 0, f"{jp}.deadline_promise", "must be > 0")
        pl = job.placement
        pp = f"{jp}.placement"
        _check(pl.resource in resources, f"{pp}.resource", f"unknown resource {pl.resource!r}")
        _check(pl.node in nodes and nodes[pl.node][0] == pl.resource, f"{pp}.node",
               f"node {pl.node!r} is not part of resource {pl.resource!r}")
        _check(pl.threads >= 1, f"{pp}.threads", "must be >= 1")
        _check(pl.scheduling in SCHEDULING, f"{pp}.scheduling", f"must be one of {SCHEDULING}")

    for i, fault in enumerate(spec.faults):
        fp = f"faults[{i}]"
        _check(fault.resource in resources, f"{fp}.resource", f"unknown resource {fault.resource!r}")
        _check(fault.at >= 0, f"{fp}.at", "must be >= 0")
        if fault.recover_at is not None:
            _check(fault.recover_at > fault.at, f"{fp}.recover_at", "must be after at")

    a = spec.agents
    _check(a.pull_period > 0, "agents.pull_period", "must be > 0")
    _check(a.buffer_capacity >= 1, "agents.buffer_capacity", "must be >= 1")
    _check(a.gain_min >= 0, "agents.gain_min", "must be >= 0")
    _fraction(a.imbalance_max, "agents.imbalance_max")
    _fraction(a.saturation_min, "agents.saturation_min")
    _fraction(a.overload_min, "agents.overload_min")
    _check(0.0 <= a.min_gain < 1.0, "agents.min_gain", "must be in [0, 1)")
    _check(a.sustain_window >= 1, "agents.sustain_window", "must be >= 1")
    _check(a.heartbeat_timeout > 0, "agents.heartbeat_timeout", "must be > 0")
    _check(a.cooldown_window >= 0, "agents.cooldown_window", "must be >= 0")
    _check(a.quiesce_window >= 0, "agents.quiesce_window", "must be >= 0")
    _check(a.transfer_base >= 0, "agents.transfer_base", "must be >= 0")
    _check(a.transfer_per_memory >= 0, "agents.transfer_per_memory", "must be >= 0")
    for name in ("intra_node", "intra_site", "inter_site"):
        _check(getattr(a.latency, name) >= 0, f"agents.latency.{name}", "must be >= 0")
    _check(spec.t_end > 0, "t_end", "must be > 0")
