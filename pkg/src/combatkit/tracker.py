"""Input tracking: raw edge capture, coalescing, frame alignment, session IO.

A tracked session pairs a frame stream with a raw keyboard/mouse edge
stream on one millisecond clock. Down/up edges coalesce into action
events, and each action is aligned to the first frame at or after it,
the frame whose content the action responds to.

On disk a session is a directory of four files: ``session.meta``
(key=value lines), ``frames.jsonl``, ``events.jsonl``, and
``intervals.jsonl``. Every timestamp is written both as authoritative
integer milliseconds and as an ISO 8601 string with millisecond
precision; exports are canonical so re-exporting an imported session is
byte-identical.
"""

from __future__ import annotations

import bisect
import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from .actions import ActionEvent, ActionMode, binding_to_category
from .errors import (
    DanglingPress,
    NoFrames,
    OrderingViolation,
    OrphanRelease,
    ParseError,
)

__all__ = [
    "Edge",
    "RawInputEvent",
    "FrameRecord",
    "TrackSession",
    "SessionRecorder",
    "TimedAction",
    "AlignedSample",
    "AlignmentResult",
    "DEFAULT_TAP_THRESHOLD_MS",
    "coalesce_events",
    "align_actions_to_frames",
    "gate_session",
    "export_session",
    "import_session",
]

DEFAULT_TAP_THRESHOLD_MS = 200


class Edge(Enum):
    DOWN = "down"
    UP = "up"


@dataclass(frozen=True, slots=True)
class RawInputEvent:
    """One device edge: a key or button going down or up."""

    device: str
    binding: str
    edge: Edge
    t_ms: int


@dataclass(frozen=True, slots=True)
class FrameRecord:
    """One captured frame; payload is an observation dict or image path."""

    index: int
    t_ms: int
    payload: Any = None


@dataclass(frozen=True, slots=True)
class TrackSession:
    frames: tuple[FrameRecord, ...]
    raw_events: tuple[RawInputEvent, ...]
    active_intervals: tuple[tuple[int, int], ...] = ()
    meta: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        prev_idx, prev_t = 0, None
        for fr in self.frames:
            if fr.index <= prev_idx:
                raise OrderingViolation(f"frame index {fr.index} not strictly increasing")
            if prev_t is not None and fr.t_ms < prev_t:
                raise OrderingViolation(f"frame t_ms {fr.t_ms} decreases")
            prev_idx, prev_t = fr.index, fr.t_ms
        prev_t = None
        for ev in self.raw_events:
            if prev_t is not None and ev.t_ms < prev_t:
                raise OrderingViolation(f"event t_ms {ev.t_ms} decreases")
            prev_t = ev.t_ms
        prev_end = None
        for start, end in self.active_intervals:
            if end < start:
                raise OrderingViolation(f"interval [{start}, {end}] is inverted")
            if prev_end is not None and start < prev_end:
                raise OrderingViolation("intervals overlap or are unsorted")
            prev_end = end


class SessionRecorder:
    """Thread-safe collector; frame and event producers may append concurrently."""

    def __init__(self, meta: dict[str, str] | None = None):
        self._lock = threading.Lock()
        self._frames: list[FrameRecord] = []
        self._events: list[RawInputEvent] = []
        self._intervals: list[tuple[int, int]] = []
        self._meta = dict(meta or {})

    def add_frame(self, t_ms: int, payload: Any = None) -> FrameRecord:
        with self._lock:
            record = FrameRecord(len(self._frames) + 1, t_ms, payload)
            self._frames.append(record)
            return record

    def add_event(self, device: str, binding: str, edge: Edge, t_ms: int) -> None:
        with self._lock:
            self._events.append(RawInputEvent(device, binding, edge, t_ms))

    def add_interval(self, start_ms: int, end_ms: int) -> None:
        with self._lock:
            self._intervals.append((start_ms, end_ms))

    def freeze(self) -> TrackSession:
        with self._lock:
            events = sorted(self._events, key=lambda e: e.t_ms)
            session = TrackSession(
                tuple(self._frames),
                tuple(events),
                tuple(sorted(self._intervals)),
                dict(self._meta),
            )
        session.validate()
        return session


# ------------------------------------------------------------- coalescing

@dataclass(frozen=True, slots=True)
class TimedAction:
    """A coalesced action stamped at its down edge."""

    event: ActionEvent
    t_ms: int


def coalesce_events(
    raw: Sequence[RawInputEvent], tap_threshold_ms: int = DEFAULT_TAP_THRESHOLD_MS
) -> list[TimedAction]:
    """Pair down/up edges per binding into timestamped action events.

    Tap-only categories always become taps (the threshold marks the
    nominal press length); hold-capable categories always carry their
    held duration. Unmatched edges raise.
    """
    held: dict[str, list[int]] = {}
    out: list[TimedAction] = []
    for ev in raw:
        if ev.edge is Edge.DOWN:
            held.setdefault(ev.binding, []).append(ev.t_ms)
            continue
        stack = held.get(ev.binding)
        if not stack:
            raise OrphanRelease(f"up edge for {ev.binding!r} at {ev.t_ms} with no press")
        down_t = stack.pop()
        category = binding_to_category(ev.binding)
        if category.tap_only:
            action = ActionEvent.tap(category)
        else:
            # Zero-length holds are clamped to 1 ms so the event stays a hold.
            action = ActionEvent.hold_ms(category, max(1, ev.t_ms - down_t))
        out.append(TimedAction(action, down_t))
    for binding, stack in held.items():
        if stack:
            raise DanglingPress(f"{binding!r} pressed at {stack[-1]} and never released")
    out.sort(key=lambda ta: (ta.t_ms, ta.event.category.priority_rank))
    return out


# -------------------------------------------------------------- alignment

@dataclass(frozen=True, slots=True)
class AlignedSample:
    """An action attached to the first frame at or after it."""

    action: ActionEvent
    action_t_ms: int
    frame_index: int


@dataclass(frozen=True, slots=True)
class AlignmentResult:
    samples: tuple[AlignedSample, ...]
    dropped: tuple[TimedAction, ...]


def align_actions_to_frames(
    actions: Sequence[TimedAction], frames: Sequence[FrameRecord]
) -> AlignmentResult:
    """Attach each action to the earliest frame whose t_ms >= action t_ms.

    Actions after the last frame cannot be aligned; they are dropped and
    reported rather than silently discarded.
    """
    if not frames:
        raise NoFrames("cannot align against an empty frame list")
    frame_ts = [fr.t_ms for fr in frames]
    samples: list[AlignedSample] = []
    dropped: list[TimedAction] = []
    for ta in actions:
        i = bisect.bisect_left(frame_ts, ta.t_ms)
        if i == len(frames):
            dropped.append(ta)
        else:
            samples.append(AlignedSample(ta.event, ta.t_ms, frames[i].index))
    return AlignmentResult(tuple(samples), tuple(dropped))


def gate_session(session: TrackSession) -> TrackSession:
    """Keep only frames and events inside the closed active intervals.

    Sessions without intervals pass through unchanged. Gating twice is a
    no-op.
    """
    if not session.active_intervals:
        return session

    def keep(t: int) -> bool:
        return any(start <= t <= end for start, end in session.active_intervals)

    return replace(
        session,
        frames=tuple(fr for fr in session.frames if keep(fr.t_ms)),
        raw_events=tuple(ev for ev in session.raw_events if keep(ev.t_ms)),
    )


# ------------------------------------------------------------- session IO

_META_NAME = "session.meta"
_FRAMES_NAME = "frames.jsonl"
_EVENTS_NAME = "events.jsonl"
_INTERVALS_NAME = "intervals.jsonl"


def _iso(t_ms: int, epoch_ms: int) -> str:
    dt = datetime.fromtimestamp((epoch_ms + t_ms) / 1000.0, tz=timezone.utc)
    return dt.isoformat(timespec="milliseconds")


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


def export_session(session: TrackSession, path: str | Path) -> Path:
    """Write the four-file session directory in canonical byte-stable form."""
    session.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    epoch_ms = int(session.meta.get("epoch_ms", "0"))

    meta_lines = [f"{k}={session.meta[k]}\n" for k in sorted(session.meta)]
    (root / _META_NAME).write_text("".join(meta_lines), encoding="utf-8")

    with (root / _FRAMES_NAME).open("w", encoding="utf-8") as fh:
        for fr in session.frames:
            fh.write(
                _dump(
                    {
                        "index": fr.index,
                        "t_ms": fr.t_ms,
                        "iso": _iso(fr.t_ms, epoch_ms),
                        "payload": fr.payload,
                    }
                )
                + "\n"
            )
    with (root / _EVENTS_NAME).open("w", encoding="utf-8") as fh:
        for ev in session.raw_events:
            fh.write(
                _dump(
                    {
                        "device": ev.device,
                        "binding": ev.binding,
                        "edge": ev.edge.value,
                        "t_ms": ev.t_ms,
                        "iso": _iso(ev.t_ms, epoch_ms),
                    }
                )
                + "\n"
            )
    with (root / _INTERVALS_NAME).open("w", encoding="utf-8") as fh:
        for start, end in session.active_intervals:
            fh.write(
                _dump(
                    {
                        "start_ms": start,
                        "end_ms": end,
                        "start_iso": _iso(start, epoch_ms),
                        "end_iso": _iso(end, epoch_ms),
                    }
                )
                + "\n"
            )
    return root


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(path), lineno, f"bad JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(str(path), lineno, "expected a JSON object")
            yield lineno, obj


def _require(obj: dict, key: str, path: Path, lineno: int) -> Any:
    if key not in obj:
        raise ParseError(str(path), lineno, f"missing field {key!r}")
    return obj[key]


def import_session(path: str | Path) -> TrackSession:
    """Load a session directory. t_ms fields are authoritative; ISO strings
    are regenerated on export rather than trusted."""
    root = Path(path)
    meta_path = root / _META_NAME
    meta: dict[str, str] = {}
    if meta_path.exists():
        for lineno, line in enumerate(meta_path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            if "=" not in line:
                raise ParseError(str(meta_path), lineno, "expected key=value")
            key, value = line.split("=", 1)
            meta[key] = value

    frames: list[FrameRecord] = []
    fpath = root / _FRAMES_NAME
    if fpath.exists():
        for lineno, obj in _read_jsonl(fpath):
            frames.append(
                FrameRecord(
                    int(_require(obj, "index", fpath, lineno)),
                    int(_require(obj, "t_ms", fpath, lineno)),
                    obj.get("payload"),
                )
            )

    events: list[RawInputEvent] = []
    epath = root / _EVENTS_NAME
    if epath.exists():
        for lineno, obj in _read_jsonl(epath):
            edge_raw = _require(obj, "edge", epath, lineno)
            try:
                edge = Edge(edge_raw)
            except ValueError:
                raise ParseError(str(epath), lineno, f"bad edge {edge_raw!r}") from None
            events.append(
                RawInputEvent(
                    str(_require(obj, "device", epath, lineno)),
                    str(_require(obj, "binding", epath, lineno)),
                    edge,
                    int(_require(obj, "t_ms", epath, lineno)),
                )
            )

    intervals: list[tuple[int, int]] = []
    ipath = root / _INTERVALS_NAME
    if ipath.exists():
        for lineno, obj in _read_jsonl(ipath):
            intervals.append(
                (
                    int(_require(obj, "start_ms", ipath, lineno)),
                    int(_require(obj, "end_ms", ipath, lineno)),
                )
            )

    session = TrackSession(tuple(frames), tuple(events), tuple(intervals), meta)
    session.validate()
    return session
