"""Scripted rule table, replay source, and the random baseline."""

import pytest

from combatkit.actions import ActionCategory, ActionMode, parse_action_text
from combatkit.aot import TRUNC_TOKEN, serialize_stage3
from combatkit.decoding import DecodeMode, decode
from combatkit.errors import ObservationSchemaError, ReplayExhausted
from combatkit.policies import Policy, RandomPolicy, ReplayPolicy, ScriptedPolicy


def _obs(**overrides):
    base = {
        "player_hp": 1.0,
        "enemy_hp": 1.0,
        "player_pos": (0.0, 0.0),
        "enemy_pos": (10.0, 0.0),
        "enemy_telegraph": None,
        "heal_charges": 3,
        "immobilize_ready": False,
        "enemy_stunned_ms": 0,
    }
    base.update(overrides)
    return base


def _cats(actions):
    return {ev.category for ev in actions}


def test_heal_rule_takes_priority():
    p = ScriptedPolicy()
    obs = _obs(
        player_hp=0.2,
        enemy_telegraph={"remaining_ms": 100},  # even with a strike incoming
        enemy_pos=(1.0, 0.0),
    )
    actions = p.decide(obs)
    assert _cats(actions) == {ActionCategory.HEAL, ActionCategory.MOVE_BACK}
    # no charges left: fall through to the dodge rule
    actions = p.decide(_obs(player_hp=0.2, heal_charges=0, enemy_telegraph={"remaining_ms": 100}))
    assert _cats(actions) == {ActionCategory.DODGE}


def test_dodge_rule_window():
    p = ScriptedPolicy()
    for remaining in (0, 1, 399, 400):
        actions = p.decide(_obs(enemy_telegraph={"remaining_ms": remaining}, enemy_pos=(1.0, 0.0)))
        assert _cats(actions) == {ActionCategory.DODGE}, remaining
    # winding up beyond the window: keep attacking, stay mobile
    actions = p.decide(_obs(enemy_telegraph={"remaining_ms": 401}, enemy_pos=(1.0, 0.0)))
    assert _cats(actions) == {ActionCategory.LIGHT_ATTACK}
    actions = p.decide(_obs(enemy_telegraph={"remaining_ms": 900}, enemy_pos=(5.0, 0.0)))
    assert _cats(actions) == {ActionCategory.MOVE_FWD}
    assert actions.events[0].duration_ms == 250


def test_immobilize_combo_requires_range_and_readiness():
    p = ScriptedPolicy()
    actions = p.decide(_obs(immobilize_ready=True, enemy_pos=(2.0, 0.0)))
    assert _cats(actions) == {ActionCategory.IMMOBILIZE, ActionCategory.LIGHT_ATTACK}
    # out of range: close in instead
    actions = p.decide(_obs(immobilize_ready=True, enemy_pos=(3.0, 0.0)))
    assert _cats(actions) == {ActionCategory.MOVE_FWD}
    # already stunned: don't waste the skill
    actions = p.decide(_obs(immobilize_ready=True, enemy_pos=(2.0, 0.0), enemy_stunned_ms=1000))
    assert _cats(actions) == {ActionCategory.HEAVY_ATTACK}


def test_movement_tiers():
    p = ScriptedPolicy()
    far = p.decide(_obs(enemy_pos=(8.0, 0.0)))
    assert _cats(far) == {ActionCategory.MOVE_FWD, ActionCategory.SPRINT}
    assert {ev.duration_ms for ev in far} == {400}
    near = p.decide(_obs(enemy_pos=(4.0, 0.0)))
    assert _cats(near) == {ActionCategory.MOVE_FWD}
    assert near.events[0].duration_ms == 250
    # boundary: sprint only beyond 6.0
    edge = p.decide(_obs(enemy_pos=(6.0, 0.0)))
    assert _cats(edge) == {ActionCategory.MOVE_FWD}


def test_attack_rules_in_range():
    p = ScriptedPolicy()
    assert _cats(p.decide(_obs(enemy_pos=(2.2, 0.0)))) == {ActionCategory.LIGHT_ATTACK}
    heavy = p.decide(_obs(enemy_pos=(1.0, 0.0), enemy_stunned_ms=2000))
    assert _cats(heavy) == {ActionCategory.HEAVY_ATTACK}
    assert heavy.events[0].duration_ms == 1000


def test_decide_validates_observation_schema():
    p = ScriptedPolicy()
    with pytest.raises(ObservationSchemaError):
        p.decide({"player_hp": 1.0})


def test_observe_serializes_decision_round_trip():
    p = ScriptedPolicy(game_mode="BMW")
    stream = p.observe([_obs(enemy_telegraph={"remaining_ms": 200}, enemy_pos=(1.0, 0.0))])
    res = decode(stream, DecodeMode.TRUNCATED)
    assert res.actions.categories() == {ActionCategory.DODGE}
    assert p.call_count == 1
    with pytest.raises(ObservationSchemaError):
        p.observe([])
    assert p.call_count == 1  # failed call not counted


def test_observe_full_stream_carries_mode_specific_explanation():
    ssdt = ScriptedPolicy(game_mode="SSDT")
    stream = ssdt.observe([_obs(enemy_telegraph={"remaining_ms": 100}, enemy_pos=(1.0, 0.0))])
    tokens = list(stream)
    text = " ".join(tokens)
    assert "needs to block to avoid" in text
    assert TRUNC_TOKEN in tokens


def test_replay_policy_plays_records_in_order():
    from combatkit.aot import AoTRecord, QUESTION_TEXT

    records = [
        AoTRecord(3, (1,), QUESTION_TEXT, (), "press r", "", serialize_stage3("press r", "")),
        AoTRecord(3, (2,), QUESTION_TEXT, (), "press space", "", serialize_stage3("press space", "")),
    ]
    p = ReplayPolicy(records)
    first = decode(p.observe([_obs()]), DecodeMode.TRUNCATED)
    second = decode(p.observe([_obs()]), DecodeMode.TRUNCATED)
    assert first.actions.categories() == {ActionCategory.HEAL}
    assert second.actions.categories() == {ActionCategory.DODGE}
    with pytest.raises(ReplayExhausted):
        list(p.observe([_obs()]))
    wrapping = ReplayPolicy(records, wrap=True)
    seen = [
        decode(wrapping.observe([_obs()]), DecodeMode.TRUNCATED).actions.key()
        for _ in range(4)
    ]
    assert seen[0] == seen[2] and seen[1] == seen[3]
    with pytest.raises(ReplayExhausted):
        ReplayPolicy([])


def test_random_policy_deterministic_per_seed():
    a = [tuple(RandomPolicy(seed=7).observe([_obs()])) for _ in range(1)][0]
    b = tuple(RandomPolicy(seed=7).observe([_obs()]))
    assert a == b
    seq_a = [tuple(p.observe([_obs()])) for p in [RandomPolicy(seed=7)] for _ in range(5)]
    seq_b = [tuple(p.observe([_obs()])) for p in [RandomPolicy(seed=7)] for _ in range(5)]
    assert seq_a == seq_b
    c = tuple(RandomPolicy(seed=8).observe([_obs()]))
    assert a != c


def test_random_policy_emits_one_valid_action():
    p = RandomPolicy(seed=3)
    for _ in range(50):
        res = decode(p.observe([_obs()]), DecodeMode.TRUNCATED)
        assert len(res.actions) == 1
        ev = res.actions.events[0]
        if ev.category.tap_only:
            assert ev.mode is ActionMode.TAP
        else:
            assert ev.duration_ms in (250, 500, 1000)


def test_base_policy_is_abstract():
    with pytest.raises(NotImplementedError):
        Policy()._tokens([_obs()])


def test_serialized_action_clause_parses_back():
    p = ScriptedPolicy()
    stream = p.observe([_obs(player_hp=0.1, enemy_pos=(1.0, 0.0))])
    text = " ".join(stream)
    head = text.split(TRUNC_TOKEN)[0].strip()
    actions = parse_action_text(head)
    # priority order in the clause: heal before the retreat hold
    assert [ev.category for ev in actions] == [ActionCategory.HEAL, ActionCategory.MOVE_BACK]
