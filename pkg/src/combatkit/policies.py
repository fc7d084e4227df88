"""Policies that answer observation frames with serialized action streams.

Every policy speaks the stage-3 wire format: an action clause, the
truncation sentinel, an explanation, then end-of-sequence. The scripted
policy is a deterministic rule table over the latest frame; the replay
policy feeds a recorded dataset back; the random policy is the
uniform-choice baseline.
"""

from __future__ import annotations

import math
import random
from typing import Any, Sequence

from .actions import (
    ActionCategory,
    ActionEvent,
    ActionSet,
    render_action,
    render_explanation,
)
from .aot import AoTRecord, serialize_stage3
from .decoding import TokenStream
from .errors import ObservationSchemaError, ReplayExhausted

__all__ = ["Policy", "ScriptedPolicy", "ReplayPolicy", "RandomPolicy"]

_REQUIRED_FEATURES = (
    "player_hp",
    "enemy_hp",
    "player_pos",
    "enemy_pos",
    "enemy_telegraph",
    "heal_charges",
    "immobilize_ready",
    "enemy_stunned_ms",
)


def _feature(obs: Any, name: str) -> Any:
    if hasattr(obs, name):
        return getattr(obs, name)
    try:
        return obs[name]
    except (TypeError, KeyError):
        raise ObservationSchemaError(f"observation lacks feature {name!r}") from None


class Policy:
    """Base class: one ``observe`` call per decision cycle."""

    def __init__(self, tokens_per_second: float | None = None):
        self.tokens_per_second = tokens_per_second
        self.call_count = 0

    def observe(self, frames: Sequence[Any]) -> TokenStream:
        if not frames:
            raise ObservationSchemaError("observe needs at least one frame")
        self.call_count += 1
        return TokenStream(self._tokens(frames), self.tokens_per_second)

    def _tokens(self, frames: Sequence[Any]) -> list[str]:
        raise NotImplementedError

    def _serialize(self, actions: ActionSet, context: dict | None = None) -> list[str]:
        ordered = actions.in_priority_order()
        clause = render_action(ordered)
        explanation = render_explanation(ordered, context) or clause
        return serialize_stage3(clause, explanation).split()


def _telegraph_remaining(telegraph: Any) -> int:
    if telegraph is None:
        return -1
    if hasattr(telegraph, "remaining_ms"):
        return int(telegraph.remaining_ms)
    return int(telegraph["remaining_ms"])


class ScriptedPolicy(Policy):
    """Deterministic rule table over the most recent frame.

    Rules, first match wins: heal (backing off) when health is low and
    charges remain; dodge or block a strike about to land; open with the
    immobilize-plus-light-attack combo when the skill is ready in range;
    otherwise attack, closing distance first when out of range and
    keeping actions short while a far-off strike winds up.
    """

    def __init__(
        self,
        game_mode: str = "BMW",
        tokens_per_second: float | None = None,
        low_hp: float = 0.3,
        attack_range: float = 2.2,
        sprint_range: float = 6.0,
        dodge_window_ms: int = 400,
    ):
        super().__init__(tokens_per_second)
        self.game_mode = game_mode.upper()
        self.low_hp = low_hp
        self.attack_range = attack_range
        self.sprint_range = sprint_range
        self.dodge_window_ms = dodge_window_ms

    def decide(self, obs: Any) -> ActionSet:
        for name in _REQUIRED_FEATURES:
            _feature(obs, name)
        if _feature(obs, "player_hp") < self.low_hp and _feature(obs, "heal_charges") > 0:
            return ActionSet.of(
                ActionEvent.tap(ActionCategory.HEAL),
                ActionEvent.hold(ActionCategory.MOVE_BACK, 1.0),
            )
        remaining = _telegraph_remaining(_feature(obs, "enemy_telegraph"))
        if 0 <= remaining <= self.dodge_window_ms:
            return ActionSet.of(ActionEvent.tap(ActionCategory.DODGE))
        px, py = _feature(obs, "player_pos")
        ex, ey = _feature(obs, "enemy_pos")
        distance = math.hypot(ex - px, ey - py)
        in_range = distance <= self.attack_range
        if (
            _feature(obs, "immobilize_ready")
            and _feature(obs, "enemy_stunned_ms") <= 0
            and in_range
        ):
            return ActionSet.of(
                ActionEvent.tap(ActionCategory.IMMOBILIZE),
                ActionEvent.tap(ActionCategory.LIGHT_ATTACK),
            )
        if remaining > self.dodge_window_ms:
            # strike still winding up: stay on short actions so the next
            # decision lands inside the dodge window
            if in_range:
                return ActionSet.of(ActionEvent.tap(ActionCategory.LIGHT_ATTACK))
            return ActionSet.of(ActionEvent.hold(ActionCategory.MOVE_FWD, 0.25))
        # approach commitments stay short: a telegraph may have started
        # just after the sampled frame, and the strike must not land
        # before the next decision can react
        if distance > self.sprint_range:
            return ActionSet.of(
                ActionEvent.hold(ActionCategory.MOVE_FWD, 0.4),
                ActionEvent.hold(ActionCategory.SPRINT, 0.4),
            )
        if not in_range:
            return ActionSet.of(ActionEvent.hold(ActionCategory.MOVE_FWD, 0.25))
        if _feature(obs, "enemy_stunned_ms") > 0:
            return ActionSet.of(ActionEvent.hold(ActionCategory.HEAVY_ATTACK, 1.0))
        return ActionSet.of(ActionEvent.tap(ActionCategory.LIGHT_ATTACK))

    def _tokens(self, frames: Sequence[Any]) -> list[str]:
        actions = self.decide(frames[-1])
        return self._serialize(actions, {"game_mode": self.game_mode})


class ReplayPolicy(Policy):
    """Feed a recorded dataset's serializations back, one per cycle."""

    def __init__(
        self,
        records: Sequence[AoTRecord],
        wrap: bool = False,
        tokens_per_second: float | None = None,
    ):
        super().__init__(tokens_per_second)
        if not records:
            raise ReplayExhausted("replay needs at least one record")
        self._records = list(records)
        self._cursor = 0
        self.wrap = wrap

    def _tokens(self, frames: Sequence[Any]) -> list[str]:
        if self._cursor >= len(self._records):
            if not self.wrap:
                raise ReplayExhausted(
                    f"replay dataset exhausted after {len(self._records)} records"
                )
            self._cursor = 0
        record = self._records[self._cursor]
        self._cursor += 1
        return record.serialized.split()


class RandomPolicy(Policy):
    """Uniform-random single action per cycle; the comparison baseline."""

    _HOLD_CHOICES = (0.25, 0.5, 1.0)

    def __init__(self, seed: int = 0, tokens_per_second: float | None = None):
        super().__init__(tokens_per_second)
        self._rng = random.Random(seed)

    def _tokens(self, frames: Sequence[Any]) -> list[str]:
        category = self._rng.choice(list(ActionCategory))
        if category.hold_capable:
            event = ActionEvent.hold(category, self._rng.choice(self._HOLD_CHOICES))
        else:
            event = ActionEvent.tap(category)
        return self._serialize(ActionSet.of(event))
