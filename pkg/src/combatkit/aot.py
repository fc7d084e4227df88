"""Three-stage action-of-thought dataset construction.

Stage 1 summarizes fixed windows of a session's frame stream: every
action falling inside a window, listed chronologically. Stage 2 attaches
each decision instant (simultaneous events merged) to the few frames
just before it. Stage 3 re-serializes stage-2 records so the action
clause comes first, fenced off by a truncation sentinel that lets a
decoder stop before the explanation.

Serialized forms::

    stage 1/2:  [explanation] [action clause] <eos>
    stage 3:    [action clause] <trunc> [explanation] <eos>

where ``<trunc>``/``<eos>`` are configurable literal sentinel strings.
The action clause of every record parses back to the record's actions.
"""

from __future__ import annotations

import bisect
import importlib.resources
import json
import random
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .actions import (
    NO_ACTION_TEXT,
    ActionEvent,
    ActionSet,
    parse_action_events,
    render_action,
    render_explanation,
)
from .errors import EmptyDatasetWarning, ParseError
from .tracker import (
    AlignedSample,
    AlignmentResult,
    FrameRecord,
    TimedAction,
    TrackSession,
    align_actions_to_frames,
    coalesce_events,
    gate_session,
)

__all__ = [
    "QUESTION_TEXT",
    "TRUNC_TOKEN",
    "EOS_TOKEN",
    "StageConfig",
    "AoTRecord",
    "AlignedSession",
    "FramesAotResult",
    "serialize_stage3",
    "align_session",
    "build_video_aot",
    "build_frames_aot",
    "to_truncated_form",
    "split_dataset",
    "write_records",
    "read_records",
    "dataset_stats",
    "bundled_stage3_path",
    "load_bundled_stage3",
]

QUESTION_TEXT = "Please predict the next actions based on the frame sequence."

TRUNC_TOKEN = "⟨TRUNC⟩"
EOS_TOKEN = "⟨EOS⟩"


@dataclass(frozen=True, slots=True)
class StageConfig:
    """Knobs shared by the dataset builders.

    n frames per stage-1 window at m frames/sec, k_frames of history per
    stage-2 record, and a train fraction for splitting.
    """

    n: int = 20
    m: int = 10
    k_frames: int = 4
    split_fraction: float = 0.95
    seed: int = 0
    merge_window_ms: int = 50
    tap_threshold_ms: int = 200
    trunc_token: str = TRUNC_TOKEN
    eos_token: str = EOS_TOKEN

    def __post_init__(self) -> None:
        if self.n <= 0 or self.m <= 0 or self.k_frames <= 0:
            raise ValueError("n, m, and k_frames must be positive")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must be inside (0, 1)")
        if self.merge_window_ms < 0:
            raise ValueError("merge_window_ms cannot be negative")


@dataclass(frozen=True, slots=True)
class AoTRecord:
    """One training sample: frames in, action text and explanation out."""

    stage: int
    frame_refs: tuple[int, ...]
    question: str
    actions: tuple[ActionEvent, ...]
    action_text: str
    explanation: str
    serialized: str

    def action_set(self) -> ActionSet:
        return ActionSet(self.actions)

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage,
            "frame_refs": list(self.frame_refs),
            "question": self.question,
            "action_text": self.action_text,
            "explanation": self.explanation,
            "serialized": self.serialized,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "AoTRecord":
        action_text = str(obj["action_text"])
        return cls(
            stage=int(obj["stage"]),
            frame_refs=tuple(int(i) for i in obj["frame_refs"]),
            question=str(obj["question"]),
            actions=parse_action_events(action_text),
            action_text=action_text,
            explanation=str(obj["explanation"]),
            serialized=str(obj["serialized"]),
        )


def serialize_stage3(
    action_text: str,
    explanation: str,
    trunc_token: str = TRUNC_TOKEN,
    eos_token: str = EOS_TOKEN,
) -> str:
    """Action-first serialization with the truncation sentinel."""
    if explanation:
        return f"[{action_text}] {trunc_token} [{explanation}] {eos_token}"
    return f"[{action_text}] {trunc_token} {eos_token}"


def _serialize(
    stage: int, action_text: str, explanation: str, cfg: StageConfig
) -> str:
    if stage == 3:
        return serialize_stage3(action_text, explanation, cfg.trunc_token, cfg.eos_token)
    if explanation:
        return f"[{explanation}] [{action_text}] {cfg.eos_token}"
    return f"[{action_text}] {cfg.eos_token}"


# ------------------------------------------------------------- alignment

@dataclass(frozen=True, slots=True)
class AlignedSession:
    """A gated session with its coalesced actions and frame alignment."""

    session: TrackSession
    actions: tuple[TimedAction, ...]
    alignment: AlignmentResult


def align_session(session: TrackSession, cfg: StageConfig | None = None) -> AlignedSession:
    cfg = cfg or StageConfig()
    gated = gate_session(session)
    actions = coalesce_events(gated.raw_events, cfg.tap_threshold_ms)
    alignment = align_actions_to_frames(actions, gated.frames)
    return AlignedSession(gated, tuple(actions), alignment)


# --------------------------------------------------------------- stage 1

def _resample(frames: Sequence[FrameRecord], m: int) -> list[FrameRecord]:
    """Pick the nearest frame for each slot of an m frames/sec grid."""
    if not frames:
        return []
    step = 1000.0 / m
    t0, t_last = frames[0].t_ms, frames[-1].t_ms
    out: list[FrameRecord] = []
    i = 0
    slot = 0
    while t0 + slot * step <= t_last + 1e-9:
        target = t0 + slot * step
        while i + 1 < len(frames) and abs(frames[i + 1].t_ms - target) < abs(
            frames[i].t_ms - target
        ):
            i += 1
        out.append(frames[i])
        slot += 1
    return out


def build_video_aot(aligned: AlignedSession, cfg: StageConfig | None = None) -> list[AoTRecord]:
    """Stage 1: one record per full window of n grid slots, stride n.

    Windows partition the resampled timeline; a trailing remainder
    shorter than n slots is discarded. Windows without actions are kept
    as explicit no-action samples.
    """
    cfg = cfg or StageConfig()
    frames = aligned.session.frames
    slots = _resample(frames, cfg.m)
    n_windows = len(slots) // cfg.n
    if n_windows == 0:
        warnings.warn(
            f"fewer than n={cfg.n} frame slots available; no stage-1 records",
            EmptyDatasetWarning,
        )
        return []
    step = 1000.0 / cfg.m
    t0 = frames[0].t_ms
    context = dict(aligned.session.meta)
    records: list[AoTRecord] = []
    for w in range(n_windows):
        start = t0 + w * cfg.n * step
        end = t0 + (w + 1) * cfg.n * step
        window_actions = tuple(
            ta.event for ta in aligned.actions if start - 1e-9 <= ta.t_ms < end - 1e-9
        )
        refs = tuple(fr.index for fr in slots[w * cfg.n : (w + 1) * cfg.n])
        if window_actions:
            action_text = render_action(window_actions)
            explanation = " ".join(
                # chronological join: a window spans many decision instants
                render_explanation([ev], context)
                for ev in window_actions
            )
        else:
            action_text = NO_ACTION_TEXT
            explanation = NO_ACTION_TEXT
        records.append(
            AoTRecord(
                stage=1,
                frame_refs=refs,
                question=QUESTION_TEXT,
                actions=window_actions,
                action_text=action_text,
                explanation=explanation,
                serialized=_serialize(1, action_text, explanation, cfg),
            )
        )
    return records


# --------------------------------------------------------------- stage 2

@dataclass(frozen=True, slots=True)
class FramesAotResult:
    records: tuple[AoTRecord, ...]
    skipped: tuple[AlignedSample, ...]


def _merge_groups(
    samples: Sequence[AlignedSample], window_ms: int
) -> list[list[AlignedSample]]:
    groups: list[list[AlignedSample]] = []
    for sample in sorted(samples, key=lambda s: s.action_t_ms):
        if groups and sample.action_t_ms - groups[-1][0].action_t_ms <= window_ms:
            groups[-1].append(sample)
        else:
            groups.append([sample])
    return groups


def build_frames_aot(aligned: AlignedSession, cfg: StageConfig | None = None) -> FramesAotResult:
    """Stage 2: one record per decision instant with k_frames of history.

    Simultaneous events (within the merge window of the first event)
    form one action set. Instants too early to have k_frames of history
    are skipped and reported, never silently dropped.
    """
    cfg = cfg or StageConfig()
    frames = aligned.session.frames
    frame_ts = [fr.t_ms for fr in frames]
    context = dict(aligned.session.meta)
    records: list[AoTRecord] = []
    skipped: list[AlignedSample] = []
    for group in _merge_groups(aligned.alignment.samples, cfg.merge_window_ms):
        anchor_t = group[0].action_t_ms
        # history = the k_frames most recent frames at or before the instant
        hi = bisect.bisect_right(frame_ts, anchor_t)
        if hi < cfg.k_frames:
            skipped.extend(group)
            continue
        refs = tuple(fr.index for fr in frames[hi - cfg.k_frames : hi])
        events: list[ActionEvent] = []
        seen = set()
        for sample in group:
            if sample.action.category in seen:
                continue
            seen.add(sample.action.category)
            events.append(sample.action)
        action_set = ActionSet(tuple(events)).in_priority_order()
        action_text = render_action(action_set)
        explanation = render_explanation(action_set, context) or NO_ACTION_TEXT
        records.append(
            AoTRecord(
                stage=2,
                frame_refs=refs,
                question=QUESTION_TEXT,
                actions=action_set.events,
                action_text=action_text,
                explanation=explanation,
                serialized=_serialize(2, action_text, explanation, cfg),
            )
        )
    return FramesAotResult(tuple(records), tuple(skipped))


# --------------------------------------------------------------- stage 3

def to_truncated_form(record: AoTRecord, cfg: StageConfig | None = None) -> AoTRecord:
    """Reorder a stage-2 record to action-first truncated form.

    Idempotent on stage-3 records.
    """
    cfg = cfg or StageConfig()
    if record.stage not in (2, 3):
        raise ValueError(f"truncated form applies to stage 2/3 records, got stage {record.stage}")
    return replace(
        record,
        stage=3,
        serialized=_serialize(3, record.action_text, record.explanation, cfg),
    )


# ------------------------------------------------------------------ split

def split_dataset(
    records: Sequence[AoTRecord], cfg: StageConfig | None = None
) -> tuple[list[AoTRecord], list[AoTRecord]]:
    """Deterministic seeded shuffle, then train/validation partition.

    The validation side gets round(0.05 * N) records (half-up), the rest
    train. Same seed, same partition.
    """
    cfg = cfg or StageConfig()
    indices = list(range(len(records)))
    random.Random(cfg.seed).shuffle(indices)
    n_val = int(len(records) * (1.0 - cfg.split_fraction) + 0.5)
    val = [records[i] for i in indices[:n_val]]
    train = [records[i] for i in indices[n_val:]]
    return train, val


# --------------------------------------------------------------------- IO

def write_records(records: Iterable[AoTRecord], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")
    return p


def read_records(path: str | Path) -> list[AoTRecord]:
    p = Path(path)
    records: list[AoTRecord] = []
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(p), lineno, f"bad JSON: {exc.msg}") from None
            try:
                records.append(AoTRecord.from_json_dict(obj))
            except (KeyError, TypeError) as exc:
                raise ParseError(str(p), lineno, f"bad record: {exc}") from None
    return records


def dataset_stats(records: Sequence[AoTRecord]) -> dict:
    """Small summary used by the CLI stats command."""
    by_stage: dict[int, int] = {}
    action_counts: list[int] = []
    token_counts: list[int] = []
    for record in records:
        by_stage[record.stage] = by_stage.get(record.stage, 0) + 1
        action_counts.append(len(record.actions))
        token_counts.append(len(record.serialized.split()))
    total = len(records)
    return {
        "records": total,
        "by_stage": {str(k): by_stage[k] for k in sorted(by_stage)},
        "mean_actions": (sum(action_counts) / total) if total else 0.0,
        "mean_serialized_tokens": (sum(token_counts) / total) if total else 0.0,
    }


def bundled_stage3_path() -> Path:
    """Location of the truncation-format dataset shipped with the package."""
    return Path(str(importlib.resources.files("combatkit") / "data" / "stage3_sample.jsonl"))


def load_bundled_stage3() -> list[AoTRecord]:
    return read_records(bundled_stage3_path())
