"""Deterministic combat arena: state, tick engine, observation, tasks.

The arena is a small two-actor duel on a flat plane. The enemy runs a
fixed phase loop (idle, telegraph, strike, recovery) whose durations and
power come from the task config; the player acts through the ten-action
vocabulary. Everything advances on a fixed tick, all randomness flows
from one seeded generator, and observations are rendered at a fixed
8-frames-per-second cadence into a bounded ring buffer.

Numbers not pinned by the task grid (speeds, ranges, cast times, damage
scaling) are invented constants, kept configurable on ``ArenaConfig``
and in the versioned task file.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from .actions import ActionCategory, ActionMode, ActionSet
from .errors import InsufficientHistory

__all__ = [
    "GameMode",
    "Difficulty",
    "PlayerStatus",
    "Telegraph",
    "ObservationFrame",
    "ArenaConfig",
    "TaskConfig",
    "ArenaState",
    "FrameRing",
    "load_task_configs",
    "iter_tasks",
    "new_arena",
    "step",
    "render_observation",
    "sample_frames",
    "FRAME_SAMPLE_WINDOW",
    "FRAME_SAMPLE_OFFSETS",
]


class GameMode(Enum):
    BMW = "BMW"
    SSDT = "SSDT"


class Difficulty(Enum):
    EASY = "easy"
    MIDDLE = "middle"
    HARD = "hard"
    VERY_HARD = "very_hard"


class PlayerStatus(Enum):
    NORMAL = "normal"
    BURNING = "burning"


@dataclass(frozen=True, slots=True)
class Telegraph:
    kind: str
    remaining_ms: int


@dataclass(frozen=True, slots=True)
class ObservationFrame:
    """One rendered snapshot of the duel, health normalized to [0, 1]."""

    t_ms: int
    player_hp: float
    enemy_hp: float
    player_pos: tuple[float, float]
    enemy_pos: tuple[float, float]
    enemy_telegraph: Telegraph | None
    player_status: PlayerStatus
    heal_charges: int
    immobilize_ready: bool
    enemy_stunned_ms: int

    def to_payload(self) -> dict:
        return {
            "t_ms": self.t_ms,
            "player_hp": round(self.player_hp, 6),
            "enemy_hp": round(self.enemy_hp, 6),
            "player_pos": [round(self.player_pos[0], 4), round(self.player_pos[1], 4)],
            "enemy_pos": [round(self.enemy_pos[0], 4), round(self.enemy_pos[1], 4)],
            "enemy_telegraph": (
                None
                if self.enemy_telegraph is None
                else {
                    "kind": self.enemy_telegraph.kind,
                    "remaining_ms": self.enemy_telegraph.remaining_ms,
                }
            ),
            "player_status": self.player_status.value,
            "heal_charges": self.heal_charges,
            "immobilize_ready": self.immobilize_ready,
            "enemy_stunned_ms": self.enemy_stunned_ms,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "ObservationFrame":
        tele = obj.get("enemy_telegraph")
        return cls(
            t_ms=int(obj["t_ms"]),
            player_hp=float(obj["player_hp"]),
            enemy_hp=float(obj["enemy_hp"]),
            player_pos=(float(obj["player_pos"][0]), float(obj["player_pos"][1])),
            enemy_pos=(float(obj["enemy_pos"][0]), float(obj["enemy_pos"][1])),
            enemy_telegraph=(
                None if tele is None else Telegraph(str(tele["kind"]), int(tele["remaining_ms"]))
            ),
            player_status=PlayerStatus(obj["player_status"]),
            heal_charges=int(obj["heal_charges"]),
            immobilize_ready=bool(obj["immobilize_ready"]),
            enemy_stunned_ms=int(obj["enemy_stunned_ms"]),
        )


@dataclass(frozen=True, slots=True)
class ArenaConfig:
    """Engine constants. Defaults are the shipped balance."""

    tick_ms: int = 25
    frame_interval_ms: int = 125          # 8 frames per second
    walk_speed_mps: float = 3.0
    sprint_multiplier: float = 1.6
    iframe_ms: int = 400                  # dodge invulnerability window
    block_window_ms: int = 600            # SSDT: block arms for this long
    heal_fraction: float = 0.30
    heal_charges: int = 3
    heal_cast_ms: int = 500
    immobilize_cooldown_ms: int = 20_000
    immobilize_stun_ms: int = 4_000
    player_attack: float = 100.0
    player_defense: float = 600.0
    defense_constant: float = 1000.0      # incoming = power * K / (K + defense)
    attack_range_m: float = 2.2
    light_attack_delay_ms: int = 250
    tap_press_ms: int = 50                # synthesized tap edge length
    min_cycle_ms: int = 250               # every action set advances at least this
    burn_duration_ms: int = 3_000
    burn_dps: float = 20.0
    player_max_hp: float = 1000.0
    cycle_cap: int = 200
    buffer_frames: int = 32
    token_budget: int = 256

    def __post_init__(self) -> None:
        if self.tick_ms <= 0 or self.frame_interval_ms <= 0:
            raise ValueError("tick_ms and frame_interval_ms must be positive")
        if self.frame_interval_ms % self.tick_ms != 0:
            raise ValueError("frame_interval_ms must be a multiple of tick_ms")
        if self.buffer_frames < 9:
            raise ValueError("buffer must hold at least the 9-frame sampling window")


@dataclass(frozen=True, slots=True)
class TaskConfig:
    """One duel in the task grid."""

    task_id: int
    name: str
    game_mode: GameMode
    difficulty: Difficulty
    enemy_max_hp: float
    strike_power: float
    strike_range_m: float
    telegraph_ms: int
    idle_ms: int
    recovery_ms: int
    chase_speed_mps: float
    strike_kind: str
    applies_burning: bool
    initial_distance_m: float

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TaskConfig":
        return cls(
            task_id=int(obj["task_id"]),
            name=str(obj["name"]),
            game_mode=GameMode(obj["game_mode"]),
            difficulty=Difficulty(obj["difficulty"]),
            enemy_max_hp=float(obj["enemy_max_hp"]),
            strike_power=float(obj["strike_power"]),
            strike_range_m=float(obj["strike_range_m"]),
            telegraph_ms=int(obj["telegraph_ms"]),
            idle_ms=int(obj["idle_ms"]),
            recovery_ms=int(obj["recovery_ms"]),
            chase_speed_mps=float(obj["chase_speed_mps"]),
            strike_kind=str(obj["strike_kind"]),
            applies_burning=bool(obj["applies_burning"]),
            initial_distance_m=float(obj["initial_distance_m"]),
        )


def load_task_configs(path: str | Path | None = None) -> dict[int, TaskConfig]:
    """Load the versioned task file; defaults to the bundled grid."""
    if path is None:
        text = resources.files("combatkit.data").joinpath("tasks.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    obj = json.loads(text)
    if obj.get("version") != 1:
        raise ValueError(f"unsupported task file version: {obj.get('version')!r}")
    tasks = {}
    for entry in obj["tasks"]:
        task = TaskConfig.from_json_dict(entry)
        if task.task_id in tasks:
            raise ValueError(f"duplicate task_id {task.task_id}")
        tasks[task.task_id] = task
    return tasks


class _Phase(Enum):
    IDLE = "idle"
    TELEGRAPH = "telegraph"
    RECOVERY = "recovery"


@dataclass
class ArenaState:
    """Mutable duel state. All times are sim-clock milliseconds."""

    cfg: ArenaConfig
    task: TaskConfig
    rng: random.Random
    clock_ms: int = 0
    player_hp: float = 0.0
    enemy_hp: float = 0.0
    player_pos: list[float] = field(default_factory=lambda: [0.0, 0.0])
    enemy_pos: list[float] = field(default_factory=lambda: [0.0, 0.0])
    heal_charges: int = 0
    pending_heal_at: int | None = None
    immobilize_ready_at: int = 0
    enemy_stunned_until: int = 0
    iframes_until: int = 0
    block_until: int = 0
    burning_until: int = 0
    # movement hold windows: category -> [start, end)
    move_until: dict[ActionCategory, int] = field(default_factory=dict)
    sprint_until: int = 0
    # queued player attacks: (lands_at_ms, damage)
    pending_attacks: list[tuple[int, float]] = field(default_factory=list)
    phase: _Phase = _Phase.IDLE
    phase_ends_at: int = 0
    action_log: list[dict] = field(default_factory=list)

    def log(self, kind: str, **detail: Any) -> None:
        self.action_log.append({"t_ms": self.clock_ms, "kind": kind, **detail})

    def distance(self) -> float:
        return math.hypot(
            self.enemy_pos[0] - self.player_pos[0], self.enemy_pos[1] - self.player_pos[1]
        )

    @property
    def player_alive(self) -> bool:
        return self.player_hp > 0.0

    @property
    def enemy_alive(self) -> bool:
        return self.enemy_hp > 0.0


def _jitter_ticks(rng: random.Random, cfg: ArenaConfig, spread_ticks: int = 3) -> int:
    return rng.randint(-spread_ticks, spread_ticks) * cfg.tick_ms


def new_arena(task: TaskConfig, cfg: ArenaConfig | None = None, seed: int = 0) -> ArenaState:
    cfg = cfg or ArenaConfig()
    rng = random.Random(seed)
    distance = task.initial_distance_m + rng.uniform(-0.5, 0.5)
    state = ArenaState(
        cfg=cfg,
        task=task,
        rng=rng,
        player_hp=cfg.player_max_hp,
        enemy_hp=task.enemy_max_hp,
        player_pos=[0.0, 0.0],
        enemy_pos=[0.0, max(1.0, distance)],
        heal_charges=cfg.heal_charges,
    )
    state.phase = _Phase.IDLE
    state.phase_ends_at = task.idle_ms + _jitter_ticks(rng, cfg)
    return state


_MOVE_DIRECTION = {
    ActionCategory.MOVE_FWD: (0.0, 1.0),
    ActionCategory.MOVE_BACK: (0.0, -1.0),
    ActionCategory.MOVE_LEFT: (-1.0, 0.0),
    ActionCategory.MOVE_RIGHT: (1.0, 0.0),
}


def _apply_commands(state: ArenaState, commands: ActionSet) -> None:
    cfg, now = state.cfg, state.clock_ms
    for event in commands.in_priority_order():
        cat = event.category
        if cat is ActionCategory.HEAL:
            if state.heal_charges > 0:
                state.heal_charges -= 1
                state.pending_heal_at = now + cfg.heal_cast_ms
                state.log("heal_start", charges_left=state.heal_charges)
            else:
                state.log("heal_noop", reason="no charges")
        elif cat is ActionCategory.IMMOBILIZE:
            if now >= state.immobilize_ready_at:
                state.enemy_stunned_until = now + cfg.immobilize_stun_ms
                state.immobilize_ready_at = now + cfg.immobilize_cooldown_ms
                if state.phase is _Phase.TELEGRAPH:
                    # freezing mid-windup cancels the strike outright
                    state.phase = _Phase.RECOVERY
                state.phase_ends_at = state.enemy_stunned_until + state.task.recovery_ms
                state.log("immobilize", stun_ms=cfg.immobilize_stun_ms)
            else:
                state.log("immobilize_noop", ready_in_ms=state.immobilize_ready_at - now)
        elif cat is ActionCategory.DODGE:
            if state.task.game_mode is GameMode.SSDT:
                state.block_until = now + cfg.block_window_ms
                state.log("block_armed", window_ms=cfg.block_window_ms)
            else:
                state.iframes_until = now + cfg.iframe_ms
                state.log("dodge", iframe_ms=cfg.iframe_ms)
        elif cat is ActionCategory.LIGHT_ATTACK:
            state.pending_attacks.append((now + cfg.light_attack_delay_ms, cfg.player_attack))
            state.log("light_attack_started")
        elif cat is ActionCategory.HEAVY_ATTACK:
            held_s = (event.duration_ms or 0) / 1000.0
            damage = cfg.player_attack * (1.0 + held_s)
            state.pending_attacks.append((now + (event.duration_ms or 0), damage))
            state.log("heavy_attack_started", held_s=held_s, damage=damage)
        elif cat in _MOVE_DIRECTION:
            state.move_until[cat] = now + (event.duration_ms or 0)
        elif cat is ActionCategory.SPRINT:
            state.sprint_until = now + (event.duration_ms or 0)
    state.pending_attacks.sort()


def _resolve_strike(state: ArenaState) -> None:
    cfg, task, now = state.cfg, state.task, state.clock_ms
    if state.distance() > task.strike_range_m:
        state.log("enemy_strike", outcome="out_of_range", strike=task.strike_kind)
        return
    if task.game_mode is GameMode.SSDT and state.block_until >= now:
        state.block_until = 0  # a block absorbs exactly one strike
        state.log("enemy_strike", outcome="blocked", strike=task.strike_kind)
        return
    if task.game_mode is GameMode.BMW and state.iframes_until >= now:
        state.log("enemy_strike", outcome="dodged", strike=task.strike_kind)
        return
    damage = task.strike_power * cfg.defense_constant / (
        cfg.defense_constant + cfg.player_defense
    )
    state.player_hp = max(0.0, state.player_hp - damage)
    if task.applies_burning:
        state.burning_until = now + cfg.burn_duration_ms
    state.log("enemy_strike", outcome="hit", strike=task.strike_kind, damage=damage)


def _advance_enemy(state: ArenaState, t0: int, t1: int) -> None:
    task = state.task
    if state.enemy_stunned_until > t0 or not state.enemy_alive:
        return
    if state.phase in (_Phase.IDLE, _Phase.RECOVERY):
        # chase: close toward the player at the task's speed
        dist = state.distance()
        if dist > 0.8:
            step_m = task.chase_speed_mps * (t1 - t0) / 1000.0
            frac = min(1.0, step_m / dist)
            state.enemy_pos[0] += (state.player_pos[0] - state.enemy_pos[0]) * frac
            state.enemy_pos[1] += (state.player_pos[1] - state.enemy_pos[1]) * frac
    if t1 < state.phase_ends_at:
        return
    if state.phase is _Phase.IDLE:
        state.phase = _Phase.TELEGRAPH
        state.phase_ends_at = t1 + task.telegraph_ms
    elif state.phase is _Phase.TELEGRAPH:
        _resolve_strike(state)
        state.phase = _Phase.RECOVERY
        state.phase_ends_at = t1 + task.recovery_ms
    else:
        state.phase = _Phase.IDLE
        state.phase_ends_at = t1 + task.idle_ms + _jitter_ticks(state.rng, state.cfg)


def step(state: ArenaState, commands: ActionSet | None, dt_ms: int | None = None) -> ArenaState:
    """Apply a command set's onsets, then advance one tick.

    ``commands`` may be None for a plain time step. Taps take effect at
    the current clock; holds open timed windows that later ticks honor.
    """
    cfg = state.cfg
    dt = cfg.tick_ms if dt_ms is None else dt_ms
    if dt <= 0:
        raise ValueError("dt_ms must be positive")
    if commands is not None:
        _apply_commands(state, commands)

    t0 = state.clock_ms
    t1 = t0 + dt

    # player movement from open hold windows
    dx = dy = 0.0
    for cat, until in state.move_until.items():
        overlap = min(until, t1) - t0
        if overlap <= 0:
            continue
        speed = cfg.walk_speed_mps
        if state.sprint_until > t0:
            speed *= cfg.sprint_multiplier
        direction = _MOVE_DIRECTION[cat]
        dx += direction[0] * speed * overlap / 1000.0
        dy += direction[1] * speed * overlap / 1000.0
    state.player_pos[0] += dx
    state.player_pos[1] += dy

    # scheduled heal
    if state.pending_heal_at is not None and t0 < state.pending_heal_at <= t1:
        healed = cfg.heal_fraction * cfg.player_max_hp
        state.player_hp = min(cfg.player_max_hp, state.player_hp + healed)
        state.pending_heal_at = None
        state.log("heal_applied", amount=healed)

    # scheduled player attacks
    while state.pending_attacks and state.pending_attacks[0][0] <= t1:
        _, damage = state.pending_attacks.pop(0)
        if state.distance() <= cfg.attack_range_m:
            state.enemy_hp = max(0.0, state.enemy_hp - damage)
            state.log("player_hit", damage=damage, enemy_hp=state.enemy_hp)
        else:
            state.log("player_miss", distance=round(state.distance(), 3))

    _advance_enemy(state, t0, t1)

    # burning damage over time
    if state.burning_until > t0 and state.player_hp > 0:
        burn_overlap = min(state.burning_until, t1) - t0
        state.player_hp = max(0.0, state.player_hp - cfg.burn_dps * burn_overlap / 1000.0)

    state.clock_ms = t1
    return state


def render_observation(state: ArenaState) -> ObservationFrame:
    cfg, now = state.cfg, state.clock_ms
    telegraph = None
    if state.phase is _Phase.TELEGRAPH and state.enemy_stunned_until <= now and state.enemy_alive:
        telegraph = Telegraph(state.task.strike_kind, max(0, state.phase_ends_at - now))
    status = PlayerStatus.BURNING if state.burning_until > now else PlayerStatus.NORMAL
    return ObservationFrame(
        t_ms=now,
        player_hp=max(0.0, state.player_hp / cfg.player_max_hp),
        enemy_hp=max(0.0, state.enemy_hp / state.task.enemy_max_hp),
        player_pos=(state.player_pos[0], state.player_pos[1]),
        enemy_pos=(state.enemy_pos[0], state.enemy_pos[1]),
        enemy_telegraph=telegraph,
        player_status=status,
        heal_charges=state.heal_charges,
        immobilize_ready=now >= state.immobilize_ready_at,
        enemy_stunned_ms=max(0, state.enemy_stunned_until - now),
    )


# --------------------------------------------------------- frame buffer

FRAME_SAMPLE_WINDOW = 9
FRAME_SAMPLE_OFFSETS = (0, 4, 8)


class FrameRing:
    """Bounded buffer of the most recent observation frames."""

    def __init__(self, capacity: int = 32):
        if capacity < FRAME_SAMPLE_WINDOW:
            raise ValueError("ring must hold at least the sampling window")
        self._capacity = capacity
        self._frames: list[ObservationFrame] = []
        self.total_recorded = 0

    def record(self, frame: ObservationFrame) -> None:
        self._frames.append(frame)
        if len(self._frames) > self._capacity:
            del self._frames[0]
        self.total_recorded += 1

    def __len__(self) -> int:
        return len(self._frames)

    def last(self, n: int) -> list[ObservationFrame]:
        return self._frames[-n:]


def sample_frames(ring: FrameRing) -> list[ObservationFrame]:
    """Evenly pick 3 of the last 9 frames (window offsets 0, 4, 8)."""
    if len(ring) < FRAME_SAMPLE_WINDOW:
        raise InsufficientHistory(
            f"need {FRAME_SAMPLE_WINDOW} buffered frames, have {len(ring)}"
        )
    window = ring.last(FRAME_SAMPLE_WINDOW)
    return [window[i] for i in FRAME_SAMPLE_OFFSETS]


def iter_tasks(
    tasks: dict[int, TaskConfig], selector: str | Iterable[int] = "all"
) -> list[TaskConfig]:
    """Resolve a task selector: 'all' or an id list like '1,2,11'."""
    if selector == "all":
        return [tasks[k] for k in sorted(tasks)]
    if isinstance(selector, str):
        ids = [int(part) for part in selector.split(",") if part.strip()]
    else:
        ids = list(selector)
    missing = [i for i in ids if i not in tasks]
    if missing:
        raise KeyError(f"unknown task ids: {missing}")
    return [tasks[i] for i in ids]
