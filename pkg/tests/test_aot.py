"""Three-stage dataset construction, serialization, split, and files."""

import json
import random

import pytest

from combatkit.actions import ActionCategory, parse_action_text
from combatkit.aot import (
    EOS_TOKEN,
    QUESTION_TEXT,
    TRUNC_TOKEN,
    AoTRecord,
    StageConfig,
    align_session,
    build_frames_aot,
    build_video_aot,
    dataset_stats,
    load_bundled_stage3,
    read_records,
    serialize_stage3,
    split_dataset,
    to_truncated_form,
    write_records,
)
from combatkit.errors import EmptyDatasetWarning, ParseError
from combatkit.tracker import Edge, SessionRecorder


def _session(frame_ts, presses, meta=None):
    """presses: (binding, down_ms, up_ms) triples."""
    rec = SessionRecorder(meta=meta or {"game_mode": "BMW"})
    for t in frame_ts:
        rec.add_frame(t, {"t": t})
    for binding, down, up in presses:
        rec.add_event("keyboard", binding, Edge.DOWN, down)
        rec.add_event("keyboard", binding, Edge.UP, up)
    return rec.freeze()


def test_stage_config_validation():
    with pytest.raises(ValueError):
        StageConfig(n=0)
    with pytest.raises(ValueError):
        StageConfig(m=-1)
    with pytest.raises(ValueError):
        StageConfig(split_fraction=1.0)
    with pytest.raises(ValueError):
        StageConfig(merge_window_ms=-5)
    cfg = StageConfig()
    assert (cfg.n, cfg.m, cfg.k_frames) == (20, 10, 4)
    assert cfg.split_fraction == 0.95


def test_serialize_stage3_forms():
    s = serialize_stage3("press space", "Step away.")
    assert s == f"[press space] {TRUNC_TOKEN} [Step away.] {EOS_TOKEN}"
    s = serialize_stage3("press space", "")
    assert s == f"[press space] {TRUNC_TOKEN} {EOS_TOKEN}"


def test_align_session_pipeline():
    session = _session(
        range(0, 1000, 125),
        [("space", 40, 90), ("w", 120, 620)],
    )
    aligned = align_session(session)
    assert [ta.t_ms for ta in aligned.actions] == [40, 120]
    assert aligned.actions[1].event.duration_ms == 500
    # dodge at 40 lands on the 125 ms frame (index 2), w at 120 likewise
    assert [s.frame_index for s in aligned.alignment.samples] == [2, 2]


def test_stage1_windows_and_boundaries():
    # 41 frames at 100 ms spacing, n=20 at m=10: two windows, one leftover slot
    frame_ts = list(range(0, 4100, 100))
    session = _session(
        frame_ts,
        [
            ("space", 40, 90),  # window 0
            ("w", 1999, 2100),  # starts in window 0 (t < 2000)
            ("1", 2000, 2050),  # exactly the boundary: window 1
        ],
    )
    records = build_video_aot(align_session(session))
    assert len(records) == 2
    assert all(r.stage == 1 and r.question == QUESTION_TEXT for r in records)
    assert len(records[0].frame_refs) == 20
    assert records[0].frame_refs[0] == 1
    w0 = [ev.category for ev in records[0].actions]
    w1 = [ev.category for ev in records[1].actions]
    assert w0 == [ActionCategory.DODGE, ActionCategory.MOVE_FWD]
    assert w1 == [ActionCategory.IMMOBILIZE]
    assert records[0].serialized.endswith(EOS_TOKEN)
    assert TRUNC_TOKEN not in records[0].serialized


def test_stage1_chronological_not_priority_order():
    # dodge (rank 2) happens after move (rank 7); stage 1 lists by time
    frame_ts = list(range(0, 2000, 100))
    session = _session(frame_ts, [("w", 100, 400), ("space", 900, 950)])
    records = build_video_aot(align_session(session))
    cats = [ev.category for ev in records[0].actions]
    assert cats == [ActionCategory.MOVE_FWD, ActionCategory.DODGE]
    # serialized form: [explanation] [action] <eos>
    assert records[0].serialized == (
        f"[{records[0].explanation}] [{records[0].action_text}] {EOS_TOKEN}"
    )


def test_stage1_empty_window_kept():
    frame_ts = list(range(0, 4000, 100))  # exactly two windows
    session = _session(frame_ts, [("space", 40, 90)])
    records = build_video_aot(align_session(session))
    assert len(records) == 2
    assert records[1].actions == ()
    assert records[1].action_text == "no action"
    assert records[1].serialized == f"[no action] [no action] {EOS_TOKEN}"


def test_stage1_short_session_warns_and_returns_empty():
    session = _session([0, 100, 200], [])
    with pytest.warns(EmptyDatasetWarning):
        records = build_video_aot(align_session(session))
    assert records == []


def test_stage1_resample_prefers_nearest_frame():
    # 125 ms capture resampled onto a 100 ms grid; equidistant targets
    # keep the earlier frame (the advance requires strictly closer).
    frame_ts = list(range(0, 2550, 125))
    session = _session(frame_ts, [("space", 40, 90)])
    cfg = StageConfig(n=10, m=10)
    records = build_video_aot(align_session(session, cfg), cfg)
    refs = records[0].frame_refs
    # grid targets 0,100,...,900; nearest frames: 0,125,250,250,375,500,625,750,750,875
    assert refs == (1, 2, 3, 3, 4, 5, 6, 7, 7, 8)


def test_stage2_history_merge_and_skip():
    frame_ts = list(range(0, 5001, 125))
    session = _session(
        frame_ts,
        [
            ("space", 40, 90),  # only one frame at or before 40: skipped
            ("w", 500, 700),  # anchor of a merged group
            ("space", 540, 560),  # within 50 ms of anchor
            ("1", 551, 580),  # 51 ms after anchor: its own instant
        ],
    )
    result = build_frames_aot(align_session(session))
    assert len(result.skipped) == 1
    assert result.skipped[0].action_t_ms == 40
    assert len(result.records) == 2
    first, second = result.records
    # history = the 4 frames at or before the instant, chronological
    assert first.frame_refs == (2, 3, 4, 5)
    assert [ev.category for ev in first.actions] == [
        ActionCategory.DODGE,
        ActionCategory.MOVE_FWD,
    ]
    assert second.frame_refs == (2, 3, 4, 5)
    assert [ev.category for ev in second.actions] == [ActionCategory.IMMOBILIZE]
    assert first.stage == 2
    assert first.serialized == f"[{first.explanation}] [{first.action_text}] {EOS_TOKEN}"


def test_stage2_dedupes_repeated_category_keeps_earliest():
    # two sequential presses of the same key inside one merge window
    frame_ts = list(range(0, 2001, 125))
    session = _session(frame_ts, [("w", 600, 620), ("w", 640, 940)])
    result = build_frames_aot(align_session(session))
    assert len(result.records) == 1
    actions = result.records[0].actions
    assert len(actions) == 1
    assert actions[0].duration_ms == 20  # the earlier press wins


def test_stage2_explanation_uses_session_mode():
    frame_ts = list(range(0, 2001, 125))
    presses = [("space", 600, 650)]
    bmw = build_frames_aot(
        align_session(_session(frame_ts, presses, meta={"game_mode": "BMW"}))
    ).records[0]
    ssdt = build_frames_aot(
        align_session(_session(frame_ts, presses, meta={"game_mode": "SSDT"}))
    ).records[0]
    assert "dodge(or block in SSDT)" in bmw.explanation
    assert "needs to block to avoid" in ssdt.explanation


def test_truncated_form_reorders_and_is_idempotent():
    frame_ts = list(range(0, 2001, 125))
    session = _session(frame_ts, [("space", 600, 650), ("w", 610, 910)])
    stage2 = build_frames_aot(align_session(session)).records[0]
    stage3 = to_truncated_form(stage2)
    assert stage3.stage == 3
    assert stage3.action_text == stage2.action_text
    assert stage3.explanation == stage2.explanation
    assert stage3.serialized == (
        f"[{stage2.action_text}] {TRUNC_TOKEN} [{stage2.explanation}] {EOS_TOKEN}"
    )
    assert to_truncated_form(stage3) == stage3
    # prefix property: everything before the sentinel is the action clause
    head = stage3.serialized.split(TRUNC_TOKEN)[0].strip()
    assert parse_action_text(head).key() == stage2.action_set().key()


def test_truncated_form_rejects_stage1():
    session = _session(list(range(0, 2000, 100)), [("space", 40, 90)])
    record = build_video_aot(align_session(session))[0]
    with pytest.raises(ValueError):
        to_truncated_form(record)


def _dummy_records(n):
    return [
        AoTRecord(
            stage=2,
            frame_refs=(1, 2, 3, 4),
            question=QUESTION_TEXT,
            actions=(),
            action_text="no action",
            explanation="no action",
            serialized=f"[no action] [no action] {EOS_TOKEN}",
        )
        for _ in range(n)
    ]


def test_split_sizes_round_half_up():
    for n, expected_val in ((100, 5), (10, 1), (9, 0), (30, 2), (0, 0)):
        train, val = split_dataset(_dummy_records(n))
        assert len(val) == expected_val
        assert len(train) + len(val) == n


def test_split_deterministic_and_seed_sensitive():
    records = _dummy_records(0)
    # need distinguishable records for this check
    records = []
    for i in range(40):
        records.append(
            AoTRecord(2, (i,), QUESTION_TEXT, (), "no action", "x", "s")
        )
    a_train, a_val = split_dataset(records, StageConfig(seed=5))
    b_train, b_val = split_dataset(records, StageConfig(seed=5))
    assert a_train == b_train and a_val == b_val
    c_train, _ = split_dataset(records, StageConfig(seed=6))
    assert c_train != a_train
    # partition: nothing lost, nothing duplicated
    key = lambda r: r.frame_refs
    assert sorted(map(key, a_train + a_val)) == sorted(map(key, records))


def test_write_read_round_trip(tmp_path):
    session = _session(list(range(0, 3001, 125)), [("space", 600, 650), ("w", 700, 1000)])
    records = [to_truncated_form(r) for r in build_frames_aot(align_session(session)).records]
    path = write_records(records, tmp_path / "out.jsonl")
    back = read_records(path)
    assert back == records
    # file is stable json-per-line with sorted keys
    first = json.loads(path.read_text().splitlines()[0])
    assert list(first) == sorted(first)
    assert set(first) == {
        "action_text",
        "explanation",
        "frame_refs",
        "question",
        "serialized",
        "stage",
    }


def test_read_records_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"stage": 2}\n')
    with pytest.raises(ParseError):
        read_records(p)
    p.write_text("{broken\n")
    with pytest.raises(ParseError) as err:
        read_records(p)
    assert "bad JSON" in str(err.value)


def test_dataset_stats():
    session = _session(list(range(0, 3001, 125)), [("space", 600, 650)])
    records = build_frames_aot(align_session(session)).records
    stats = dataset_stats(records)
    assert stats["records"] == 1
    assert stats["by_stage"] == {"2": 1}
    assert stats["mean_actions"] == 1.0
    assert stats["mean_serialized_tokens"] == len(records[0].serialized.split())
    assert dataset_stats([]) == {
        "records": 0,
        "by_stage": {},
        "mean_actions": 0.0,
        "mean_serialized_tokens": 0.0,
    }


def test_bundled_stage3_dataset():
    records = load_bundled_stage3()
    assert len(records) >= 50
    for r in records:
        assert r.stage == 3
        assert r.serialized.count(TRUNC_TOKEN) == 1
        assert r.serialized.count(EOS_TOKEN) == 1
        assert r.question == QUESTION_TEXT
        # the action clause before the sentinel parses to the record's actions
        head = r.serialized.split(TRUNC_TOKEN)[0].strip()
        assert parse_action_text(head).key() == r.action_set().key()
        assert r.serialized.endswith(EOS_TOKEN)
