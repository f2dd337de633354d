"""Deterministic discrete-event kernel with latency-separated mailboxes.

Events are processed in lexicographic ``(at, seq)`` order.  ``seq`` is a
monotone counter assigned at scheduling time, so events scheduled for the
same instant run in the order they were scheduled.  Agents are plain
objects registered under an id; they are driven by message deliveries and
timers and never by wall-clock time.
"""
from __future__ import annotations

import enum
from heapq import heappop, heappush
import json
from json.encoder import c_make_encoder, encode_basestring_ascii
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Optional, Protocol, Union

from .errors import PastEventError, UnknownAgentError


@dataclass(frozen=True)
class AgentMessage:
    sender: str
    to: str
    sent_at: float
    latency: float
    payload: Any

    @property
    def deliver_at(self) -> float:
        return self.sent_at + self.latency

    @property
    def kind(self) -> str:
        return type(self.payload).__name__


@dataclass(frozen=True)
class Deliver:
    message: AgentMessage


@dataclass(frozen=True)
class Timer:
    agent_id: str
    tag: str
    data: Any = None


@dataclass(frozen=True)
class JobPhase:
    job_id: str
    kind: str
    version: int = 0


Payload = Union[Deliver, Timer, JobPhase]


class Event(NamedTuple):
    # tuple order doubles as heap order; seq is unique so payload is never compared
    at: float
    seq: int
    payload: Payload


class Agent(Protocol):
    id: str

    def receive(self, message: AgentMessage) -> None: ...

    def on_timer(self, tag: str, data: Any) -> None: ...


_SCALARS = (str, float, int, bool, type(None))
_ENCODER = json.JSONEncoder(separators=(",", ":"))
# JSONEncoder.encode rebuilds its C encoder per call; keep one around for bulk export
if c_make_encoder is not None:
    _encode_one = c_make_encoder(None, _ENCODER.default, encode_basestring_ascii, None,
                                 ":", ",", False, False, True)

    def _encode(record: dict) -> str:
        return "".join(_encode_one(record, 0))
else:  # pragma: no cover - pure-python json build
    _encode = _ENCODER.encode


def _plain(value):
    if type(value) in _SCALARS:
        return value
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


class EventLog:
    """Append-only record list; every record starts with ``seq``, ``t``, ``type``."""

    def __init__(self):
        self.records: list[dict] = []

    def append(self, t: float, type: str, **fields) -> dict:
        rec = {"seq": len(self.records), "t": t, "type": type}
        for key, value in fields.items():
            rec[key] = value if value.__class__ in _SCALARS else _plain(value)
        self.records.append(rec)
        return rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def of_type(self, *types: str) -> list[dict]:
        return [r for r in self.records if r["type"] in types]

    def to_jsonl(self) -> str:
        return "".join([_encode(r) + "\n" for r in self.records])


class Kernel:
    def __init__(self, latency: Optional[Callable[[str, str], float]] = None,
                 log: Optional[EventLog] = None):
        self._queue: list[Event] = []
        self._seq = 0
        self._now = 0.0
        self._agents: dict[str, Agent] = {}
        self._phase_handler: Optional[Callable[[JobPhase], None]] = None
        self._latency = latency or (lambda sender, to: 0.0)
        # last scheduled delivery per (sender, to) pair keeps mailboxes FIFO
        self._last_delivery: dict[tuple[str, str], float] = {}
        self.log = log if log is not None else EventLog()

    # -- registration -------------------------------------------------
    def register(self, agent: Agent) -> None:
        self._agents[agent.id] = agent

    def agent(self, agent_id: str) -> Agent:
        try:
            return self._agents[agent_id]
        except KeyError:
            raise UnknownAgentError(agent_id) from None

    def is_registered(self, agent_id: str) -> bool:
        return agent_id in self._agents

    def on_job_phase(self, handler: Callable[[JobPhase], None]) -> None:
        self._phase_handler = handler

    # -- time and scheduling -----------------------------------------
    def now(self) -> float:
        return self._now

    def schedule(self, at: float, payload: Payload) -> Event:
        if at < self._now:
            raise PastEventError(f"event at {at} is before now={self._now}")
        event = Event(at, self._seq, payload)
        self._seq += 1
        heappush(self._queue, event)
        return event

    def timer(self, agent_id: str, at: float, tag: str, data: Any = None) -> Event:
        return self.schedule(at, Timer(agent_id, tag, data))

    def send(self, sender: str, to: str, payload: Any, latency: Optional[float] = None) -> AgentMessage:
        agents = self._agents
        if sender not in agents:
            raise UnknownAgentError(sender)
        if to not in agents:
            raise UnknownAgentError(to)
        now = self._now
        if latency is None:
            latency = self._latency(sender, to)
        msg = AgentMessage(sender, to, now, latency, payload)
        at = now + latency
        pair = (sender, to)
        last = self._last_delivery.get(pair)
        if last is not None and last > at:
            at = last
        self._last_delivery[pair] = at
        heappush(self._queue, Event(at, self._seq, Deliver(msg)))
        self._seq += 1
        records = self.log.records
        records.append({"seq": len(records), "t": now, "type": "send", "sender": sender, "to": to,
                        "kind": type(payload).__name__, "deliver_at": at})
        return msg

    def pending(self) -> int:
        return len(self._queue)

    # -- main loop ----------------------------------------------------
    def step(self) -> Event:
        event = heappop(self._queue)
        self._now = now = event.at
        payload = event.payload
        records = self.log.records
        cls = payload.__class__
        if cls is Deliver:
            msg = payload.message
            records.append({"seq": len(records), "t": now, "type": "deliver", "sender": msg.sender,
                            "to": msg.to, "kind": type(msg.payload).__name__})
            self._agents[msg.to].receive(msg)
        elif cls is Timer:
            records.append({"seq": len(records), "t": now, "type": "timer",
                            "agent": payload.agent_id, "tag": payload.tag})
            self._agents[payload.agent_id].on_timer(payload.tag, payload.data)
        else:
            if self._phase_handler is not None:
                self._phase_handler(payload)
        return event

    def run_until(self, t_end: float) -> EventLog:
        queue, step = self._queue, self.step
        while queue and queue[0][0] <= t_end:
            step()
        return self.log
