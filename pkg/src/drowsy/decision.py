"""Consecutive-closed-frame drowsiness alarm.

Each frame either carries a closed-eye probability or is a
no-measurement frame (no usable landmarks). A frame counts as closed when
its probability is strictly above the threshold; an open frame resets the
counter. The alarm is raised when the counter reaches ``alarm_frames``
(12 frames = 2 s at 6 fps by default) and cleared by the next open frame.

No-measurement frames hold the closed counter. A run of ``alarm_frames``
of them raises the alarm on its own, so a lost face cannot silently
disable monitoring.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional


class Classification(enum.Enum):
    CLOSED = "CLOSED"
    OPEN = "OPEN"
    NO_MEASUREMENT = "NO_MEASUREMENT"


class Event(enum.Enum):
    NONE = "NONE"
    ALARM_RAISED = "ALARM_RAISED"
    ALARM_CLEARED = "ALARM_CLEARED"


@dataclass(frozen=True)
class DecisionConfig:
    fps: float = 6.0
    alarm_seconds: float = 2.0
    prob_threshold: float = 0.5

    def __post_init__(self):
        if not self.fps > 0 or not self.alarm_seconds > 0:
            raise ValueError("fps and alarm_seconds must be positive")
        if not 0 < self.prob_threshold < 1:
            raise ValueError(f"prob_threshold must be in (0, 1), got {self.prob_threshold}")

    @property
    def alarm_frames(self) -> int:
        # round first so 2.0 * 6.0 style products never ceil up on float noise
        return max(1, math.ceil(round(self.alarm_seconds * self.fps, 9)))


@dataclass(frozen=True)
class DrowsinessState:
    consecutive_closed: int = 0
    consecutive_missing: int = 0
    alarm_active: bool = False
    frames_seen: int = 0


@dataclass(frozen=True)
class FrameVerdict:
    classification: Classification
    p_closed: Optional[float]
    event: Event
    counter: int


def step(state: DrowsinessState, p_closed: float, cfg: DecisionConfig):
    """Advance one measured frame. Returns (new_state, verdict)."""
    if not 0 <= p_closed <= 1:
        raise ValueError(f"p_closed must be in [0, 1], got {p_closed}")
    closed = p_closed > cfg.prob_threshold
    event = Event.NONE
    if closed:
        counter = state.consecutive_closed + 1
        active = state.alarm_active
        if not active and counter >= cfg.alarm_frames:
            active, event = True, Event.ALARM_RAISED
    else:
        counter = 0
        active = False
        if state.alarm_active:
            event = Event.ALARM_CLEARED
    new = DrowsinessState(counter, 0, active, state.frames_seen + 1)
    cls = Classification.CLOSED if closed else Classification.OPEN
    return new, FrameVerdict(cls, p_closed, event, counter)


def step_no_measurement(state: DrowsinessState, cfg: DecisionConfig):
    """Advance one frame without a classification (counter held)."""
    missing = state.consecutive_missing + 1
    event = Event.NONE
    active = state.alarm_active
    if not active and missing >= cfg.alarm_frames:
        active, event = True, Event.ALARM_RAISED
    new = replace(state, consecutive_missing=missing, alarm_active=active, frames_seen=state.frames_seen + 1)
    return new, FrameVerdict(Classification.NO_MEASUREMENT, None, event, state.consecutive_closed)


@dataclass(frozen=True)
class AlarmEvent:
    frame_index: int
    timestamp: float
    event: Event
    counter: int

    def to_json(self) -> str:
        return json.dumps({"frame": self.frame_index, "t": round(self.timestamp, 6),
                           "event": self.event.value, "counter": self.counter})


@dataclass
class StreamResult:
    verdicts: list[FrameVerdict] = field(default_factory=list)
    events: list[AlarmEvent] = field(default_factory=list)
    state: DrowsinessState = field(default_factory=DrowsinessState)

    @property
    def alarms(self) -> int:
        return sum(e.event is Event.ALARM_RAISED for e in self.events)

    @property
    def longest_closed_run(self) -> int:
        return max((v.counter for v in self.verdicts if v.classification is Classification.CLOSED), default=0)


def run_stream(p_closed: Iterable[Optional[float]], cfg: DecisionConfig = DecisionConfig(),
               state: DrowsinessState | None = None) -> StreamResult:
    """Fold :func:`step` over a sequence; ``None`` entries are no-measurement frames.

    Passing the ``state`` of an earlier result continues that stream, so
    running ``a + b`` equals running ``b`` from the state after ``a``. Frame
    indices in the event log count from the start of the whole stream.
    """
    st = DrowsinessState() if state is None else state
    out = StreamResult(state=st)
    for p in p_closed:
        index = st.frames_seen
        if p is None:
            st, verdict = step_no_measurement(st, cfg)
        else:
            st, verdict = step(st, p, cfg)
        out.verdicts.append(verdict)
        if verdict.event is not Event.NONE:
            out.events.append(AlarmEvent(index, index / cfg.fps, verdict.event, verdict.counter))
    out.state = st
    return out
