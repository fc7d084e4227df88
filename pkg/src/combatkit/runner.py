"""Pause-infer-act episode loop, transcripts, session export, and suites.

Each decision cycle: the arena accumulates frames into the ring buffer,
3 of the last 9 are sampled, the sim clock freezes while the policy
streams its answer and the decoder recovers an action set, then the set
executes tick by tick until done. Inference time never leaks into the
sim clock, so paced and unpaced runs of the same policy produce the
same world trajectory.

Suite reports are byte-identical across reruns with the same seed:
their latency column is simulated from emitted token counts at a fixed
pace, while real wall-clock inference time stays on the per-episode
reports only.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .actions import ActionCategory, ActionMode, ActionSet
from .arena import (
    ArenaConfig,
    ArenaState,
    FrameRing,
    GameMode,
    ObservationFrame,
    TaskConfig,
    new_arena,
    render_observation,
    sample_frames,
    step,
)
from .decoding import DecodeMode, decode
from .errors import ActionParseError
from .policies import Policy, RandomPolicy, ScriptedPolicy
from .tracker import Edge, SessionRecorder, TrackSession, export_session

__all__ = [
    "CycleRecord",
    "EpisodeReport",
    "EpisodeTranscript",
    "SuiteRow",
    "SuiteReport",
    "REFERENCE_LATENCIES",
    "DEFAULT_PACE_TOKENS_PER_SECOND",
    "run_episode",
    "transcript_to_session",
    "run_suite",
    "collect_transcripts",
    "make_policy",
]

# Published reference latencies echoed in reports for context; never
# asserted against measurements.
REFERENCE_LATENCIES = (
    {"system": "cradle", "latency_s": 61.68, "model_calls": 5},
    {"system": "varp", "latency_s": 90.23, "model_calls": 10},
    {"system": "truncated_reference", "latency_s": 1.85, "model_calls": 1},
)

DEFAULT_PACE_TOKENS_PER_SECOND = 40.0


@dataclass(frozen=True, slots=True)
class CycleRecord:
    cycle: int
    t_ms: int
    actions: ActionSet | None
    emitted_tokens: int
    stop_reason: str
    inference_wall_ms: float


@dataclass(frozen=True, slots=True)
class EpisodeReport:
    task_id: int
    mode: str
    seed: int
    success: bool
    failure_reason: str | None
    decision_cycles: int
    policy_calls: int
    mean_inference_wall_ms: float
    mean_emitted_tokens: float
    sim_duration_ms: int

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "mode": self.mode,
            "seed": self.seed,
            "success": self.success,
            "failure_reason": self.failure_reason,
            "decision_cycles": self.decision_cycles,
            "policy_calls": self.policy_calls,
            "mean_inference_wall_ms": round(self.mean_inference_wall_ms, 3),
            "mean_emitted_tokens": round(self.mean_emitted_tokens, 3),
            "sim_duration_ms": self.sim_duration_ms,
        }


@dataclass(frozen=True, slots=True)
class EpisodeTranscript:
    """Everything needed to rebuild datasets and benchmarks offline."""

    task: TaskConfig
    seed: int
    frames: tuple[ObservationFrame, ...]
    cycles: tuple[CycleRecord, ...]
    action_log: tuple[dict, ...]
    report: EpisodeReport

    @property
    def episode_key(self) -> str:
        return f"t{self.task.task_id}s{self.seed}"


def _busy_ms(cfg: ArenaConfig, actions: ActionSet) -> int:
    worst = 0
    for event in actions:
        if event.mode is ActionMode.HOLD:
            worst = max(worst, event.duration_ms or 0)
        elif event.category is ActionCategory.HEAL:
            worst = max(worst, cfg.heal_cast_ms)
        elif event.category is ActionCategory.DODGE:
            worst = max(worst, cfg.iframe_ms)
        elif event.category is ActionCategory.LIGHT_ATTACK:
            worst = max(worst, cfg.light_attack_delay_ms)
        else:
            worst = max(worst, cfg.tap_press_ms)
    return max(cfg.min_cycle_ms, worst)


class _FrameClock:
    """Records an observation every frame interval of sim time."""

    def __init__(self, cfg: ArenaConfig, ring: FrameRing, sink: list[ObservationFrame]):
        self._interval = cfg.frame_interval_ms
        self._next_at = 0
        self._ring = ring
        self._sink = sink

    def capture(self, state: ArenaState) -> None:
        while state.clock_ms >= self._next_at:
            frame = render_observation(state)
            # stamp the frame at its scheduled boundary
            if frame.t_ms != self._next_at:
                frame = ObservationFrame(
                    t_ms=self._next_at,
                    player_hp=frame.player_hp,
                    enemy_hp=frame.enemy_hp,
                    player_pos=frame.player_pos,
                    enemy_pos=frame.enemy_pos,
                    enemy_telegraph=frame.enemy_telegraph,
                    player_status=frame.player_status,
                    heal_charges=frame.heal_charges,
                    immobilize_ready=frame.immobilize_ready,
                    enemy_stunned_ms=frame.enemy_stunned_ms,
                )
            self._ring.record(frame)
            self._sink.append(frame)
            self._next_at += self._interval


def run_episode(
    task: TaskConfig,
    policy: Policy,
    mode: DecodeMode = DecodeMode.TRUNCATED,
    seed: int = 0,
    cfg: ArenaConfig | None = None,
) -> tuple[EpisodeReport, EpisodeTranscript]:
    """Run one duel to success, defeat, or the cycle cap."""
    cfg = cfg or ArenaConfig()
    state = new_arena(task, cfg, seed)
    ring = FrameRing(cfg.buffer_frames)
    frames: list[ObservationFrame] = []
    clock = _FrameClock(cfg, ring, frames)
    clock.capture(state)  # frame at t=0

    calls_before = policy.call_count
    cycles: list[CycleRecord] = []
    success = False
    failure_reason: str | None = None

    def advance(commands: ActionSet | None, duration_ms: int) -> None:
        target = state.clock_ms + duration_ms
        first = commands
        while state.clock_ms < target:
            step(state, first, cfg.tick_ms)
            first = None
            clock.capture(state)

    while True:
        if not state.enemy_alive:
            success = True
            break
        if not state.player_alive:
            failure_reason = "player_defeated"
            break
        if len(cycles) >= cfg.cycle_cap:
            failure_reason = "cycle_cap"
            break

        while len(ring) < 9:
            advance(None, cfg.tick_ms)
        sampled = sample_frames(ring)

        # sim clock pauses here: inference happens between ticks
        decision_t = state.clock_ms
        wall_start = time.perf_counter()
        stream = policy.observe(sampled)
        try:
            result = decode(stream, mode, cfg.token_budget)
            actions: ActionSet | None = result.actions
            emitted = result.emitted_count
            stop_reason = result.stop_reason.value
        except ActionParseError as exc:
            actions = None
            emitted = len(exc.raw_text.split())
            stop_reason = f"parse_error:{exc.stop_reason}"
            state.log("decode_parse_error", raw=exc.raw_text[:120])
        wall_ms = (time.perf_counter() - wall_start) * 1000.0

        if actions is not None and len(actions) > 0:
            advance(actions, _busy_ms(cfg, actions) + cfg.tick_ms)
        else:
            advance(None, cfg.min_cycle_ms)

        cycles.append(
            CycleRecord(
                cycle=len(cycles) + 1,
                t_ms=decision_t,
                actions=actions,
                emitted_tokens=emitted,
                stop_reason=stop_reason,
                inference_wall_ms=wall_ms,
            )
        )

    n = len(cycles)
    report = EpisodeReport(
        task_id=task.task_id,
        mode=mode.value,
        seed=seed,
        success=success,
        failure_reason=failure_reason,
        decision_cycles=n,
        policy_calls=policy.call_count - calls_before,
        mean_inference_wall_ms=(sum(c.inference_wall_ms for c in cycles) / n) if n else 0.0,
        mean_emitted_tokens=(sum(c.emitted_tokens for c in cycles) / n) if n else 0.0,
        sim_duration_ms=state.clock_ms,
    )
    transcript = EpisodeTranscript(
        task=task,
        seed=seed,
        frames=tuple(frames),
        cycles=tuple(cycles),
        action_log=tuple(state.action_log),
        report=report,
    )
    return report, transcript


# ------------------------------------------------------- session export

def transcript_to_session(
    transcript: EpisodeTranscript, cfg: ArenaConfig | None = None
) -> TrackSession:
    """Rebuild the raw input/frame record a tracker would have captured.

    Taps become short down/up pairs, holds keep their exact duration, so
    coalescing the exported session reproduces the commanded events.
    """
    cfg = cfg or ArenaConfig()
    recorder = SessionRecorder(
        meta={
            "epoch_ms": "0",
            "game_mode": transcript.task.game_mode.value,
            "seed": str(transcript.seed),
            "task_id": str(transcript.task.task_id),
            "task_name": transcript.task.name,
        }
    )
    for frame in transcript.frames:
        recorder.add_frame(frame.t_ms, frame.to_payload())
    for cycle in transcript.cycles:
        if cycle.actions is None:
            continue
        for event in cycle.actions.in_priority_order():
            binding = event.category.binding
            device = "mouse" if "mouse" in binding else "keyboard"
            span = cfg.tap_press_ms if event.mode is ActionMode.TAP else (event.duration_ms or 1)
            recorder.add_event(device, binding, Edge.DOWN, cycle.t_ms)
            recorder.add_event(device, binding, Edge.UP, cycle.t_ms + span)
    recorder.add_interval(0, transcript.report.sim_duration_ms)
    return recorder.freeze()


def export_transcript(
    transcript: EpisodeTranscript, out_dir: str | Path, cfg: ArenaConfig | None = None
) -> Path:
    return export_session(transcript_to_session(transcript, cfg), out_dir)


# ----------------------------------------------------------------- suite

@dataclass(frozen=True, slots=True)
class SuiteRow:
    task_id: int
    mode: str
    repeats: int
    success_rate: float
    mean_latency_ms: float
    mean_cycles: float


@dataclass(frozen=True, slots=True)
class SuiteReport:
    policy: str
    seed: int
    pace_tokens_per_second: float
    rows: tuple[SuiteRow, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["task_id", "mode", "repeats", "success_rate", "mean_latency_ms", "mean_cycles"]
        )
        for row in self.rows:
            writer.writerow(
                [
                    row.task_id,
                    row.mode,
                    row.repeats,
                    f"{row.success_rate:.4f}",
                    f"{row.mean_latency_ms:.3f}",
                    f"{row.mean_cycles:.2f}",
                ]
            )
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "pace_tokens_per_second": self.pace_tokens_per_second,
            "reference_latencies": list(REFERENCE_LATENCIES),
            "rows": [
                {
                    "task_id": row.task_id,
                    "mode": row.mode,
                    "repeats": row.repeats,
                    "success_rate": round(row.success_rate, 4),
                    "mean_latency_ms": round(row.mean_latency_ms, 3),
                    "mean_cycles": round(row.mean_cycles, 2),
                }
                for row in self.rows
            ],
        }


def episode_seed(base_seed: int, task_id: int, repeat: int) -> int:
    # stable arithmetic derivation; no hashing so reruns match exactly
    return base_seed * 1_000_003 + task_id * 1_009 + repeat


def make_policy(name: str, task: TaskConfig, seed: int) -> Policy:
    if name == "scripted":
        return ScriptedPolicy(game_mode=task.game_mode.value)
    if name == "random":
        return RandomPolicy(seed=seed)
    raise ValueError(f"unknown policy {name!r} (expected scripted or random)")


def run_suite(
    tasks: Sequence[TaskConfig],
    mode: DecodeMode = DecodeMode.TRUNCATED,
    repeats: int = 10,
    seed: int = 0,
    policy_name: str = "scripted",
    cfg: ArenaConfig | None = None,
    pace_tokens_per_second: float = DEFAULT_PACE_TOKENS_PER_SECOND,
) -> SuiteReport:
    """Run every task `repeats` times and aggregate per-task rows.

    Latency is simulated (emitted tokens at the fixed pace), keeping the
    report independent of host speed; rerunning with the same seed
    yields byte-identical CSV/JSON.
    """
    cfg = cfg or ArenaConfig()
    rows: list[SuiteRow] = []
    for task in tasks:
        successes = 0
        latency_total = 0.0
        cycles_total = 0.0
        for repeat in range(repeats):
            ep_seed = episode_seed(seed, task.task_id, repeat)
            policy = make_policy(policy_name, task, ep_seed)
            report, _ = run_episode(task, policy, mode, ep_seed, cfg)
            successes += int(report.success)
            latency_total += (
                report.mean_emitted_tokens / pace_tokens_per_second * 1000.0
            )
            cycles_total += report.decision_cycles
        rows.append(
            SuiteRow(
                task_id=task.task_id,
                mode=mode.value,
                repeats=repeats,
                success_rate=successes / repeats,
                mean_latency_ms=latency_total / repeats,
                mean_cycles=cycles_total / repeats,
            )
        )
    return SuiteReport(policy_name, seed, pace_tokens_per_second, tuple(rows))


def write_suite_report(report: SuiteReport, out_csv: str | Path) -> tuple[Path, Path]:
    """Write the CSV and its JSON sibling next to each other."""
    csv_path = Path(out_csv)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    json_path = csv_path.with_suffix(".json")
    json_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return csv_path, json_path


def collect_transcripts(
    tasks: Sequence[TaskConfig],
    seed: int = 0,
    episodes_per_task: int = 1,
    policy_names: Sequence[str] = ("scripted", "random"),
    mode: DecodeMode = DecodeMode.TRUNCATED,
    cfg: ArenaConfig | None = None,
) -> list[EpisodeTranscript]:
    """Deterministic transcript corpus for dataset and benchmark builds."""
    cfg = cfg or ArenaConfig()
    transcripts: list[EpisodeTranscript] = []
    for task in tasks:
        for name in policy_names:
            for repeat in range(episodes_per_task):
                ep_seed = episode_seed(seed, task.task_id, repeat) + (
                    0 if name == "scripted" else 500_009
                )
                policy = make_policy(name, task, ep_seed)
                _, transcript = run_episode(task, policy, mode, ep_seed, cfg)
                transcripts.append(transcript)
    return transcripts
