"""Streaming decode, truncation stop, pacing, and the savings report."""

import pytest

from combatkit.actions import ActionCategory
from combatkit.aot import (
    EOS_TOKEN,
    QUESTION_TEXT,
    TRUNC_TOKEN,
    AoTRecord,
    load_bundled_stage3,
    serialize_stage3,
)
from combatkit.decoding import (
    DEFAULT_TOKEN_BUDGET,
    DecodeMode,
    DecodeResult,
    StopReason,
    TokenStream,
    decode,
    token_savings_report,
)
from combatkit.errors import ActionParseError, EmptyDataset

SAMPLE = serialize_stage3("press space, hold w for 0.5 seconds", "Step away from the enemy.")


def test_truncated_stops_at_sentinel_excluded():
    res = decode(TokenStream.from_text(SAMPLE), DecodeMode.TRUNCATED)
    assert res.stop_reason is StopReason.TRUNC
    assert TRUNC_TOKEN not in res.emitted_tokens
    assert EOS_TOKEN not in res.emitted_tokens
    assert " ".join(res.emitted_tokens) == "[press space, hold w for 0.5 seconds]"
    assert res.actions.categories() == {ActionCategory.DODGE, ActionCategory.MOVE_FWD}


def test_full_runs_to_eos_included():
    res = decode(TokenStream.from_text(SAMPLE), DecodeMode.FULL)
    assert res.stop_reason is StopReason.EOS
    assert res.emitted_tokens[-1] == EOS_TOKEN
    assert TRUNC_TOKEN in res.emitted_tokens
    assert res.actions.categories() == {ActionCategory.DODGE, ActionCategory.MOVE_FWD}


def test_modes_recover_identical_actions():
    for record_text in (
        SAMPLE,
        serialize_stage3("press r", ""),
        serialize_stage3("no action", "Nothing to do."),
    ):
        t = decode(TokenStream.from_text(record_text), DecodeMode.TRUNCATED)
        f = decode(TokenStream.from_text(record_text), DecodeMode.FULL)
        assert t.actions.key() == f.actions.key()
        assert t.emitted_count < f.emitted_count


def test_budget_stop():
    text = "[press space] " + "filler " * 300 + EOS_TOKEN
    res = decode(TokenStream.from_text(text), DecodeMode.FULL, budget=20)
    assert res.stop_reason is StopReason.BUDGET
    assert res.emitted_count == 20
    assert res.actions.categories() == {ActionCategory.DODGE}
    with pytest.raises(ValueError):
        decode(TokenStream.from_text(text), budget=0)


def test_unparseable_emission_raises():
    with pytest.raises(ActionParseError) as err:
        decode(TokenStream.from_text(f"nothing bracketed here {EOS_TOKEN}"))
    assert err.value.stop_reason == "eos"
    # budget exhausted before the clause closes
    with pytest.raises(ActionParseError) as err:
        decode(TokenStream.from_text("[press space, hold w"), DecodeMode.FULL, budget=3)
    assert err.value.stop_reason == "budget"


def test_extractor_skips_non_action_brackets():
    text = f"[not an action] [press r] {EOS_TOKEN}"
    res = decode(TokenStream.from_text(text), DecodeMode.FULL)
    assert res.actions.categories() == {ActionCategory.HEAL}


def test_token_stream_pacing_uses_injected_sleep():
    naps = []
    stream = TokenStream("a b c".split(), tokens_per_second=40.0, sleep=naps.append)
    assert list(stream) == ["a", "b", "c"]
    assert naps == [0.025, 0.025, 0.025]
    # unpaced stream never sleeps
    naps.clear()
    assert list(TokenStream("a b".split(), sleep=naps.append)) == ["a", "b"]
    assert naps == []
    with pytest.raises(ValueError):
        TokenStream(["a"], tokens_per_second=0.0)


def test_truncated_decode_skips_post_sentinel_pacing():
    # the decoder stops pulling at the sentinel, so explanation tokens
    # of a paced stream never cost their sleep
    naps = []
    tokens = SAMPLE.split()
    stream = TokenStream(tokens, tokens_per_second=100.0, sleep=naps.append)
    res = decode(stream, DecodeMode.TRUNCATED)
    assert len(naps) == res.emitted_count + 1  # sentinel itself was pulled
    naps.clear()
    stream = TokenStream(tokens, tokens_per_second=100.0, sleep=naps.append)
    res_full = decode(stream, DecodeMode.FULL)
    assert len(naps) == res_full.emitted_count
    assert res_full.emitted_count > res.emitted_count + 1


def test_decode_result_count_property():
    res = DecodeResult(("a", "b"), decode(TokenStream.from_text(SAMPLE)).actions, StopReason.EOS, 0.0)
    assert res.emitted_count == 2
    assert DEFAULT_TOKEN_BUDGET == 256


def _record(action_text, explanation):
    return AoTRecord(
        stage=3,
        frame_refs=(1, 2, 3, 4),
        question=QUESTION_TEXT,
        actions=(),
        action_text=action_text,
        explanation=explanation,
        serialized=serialize_stage3(action_text, explanation),
    )


def test_savings_report_means():
    records = [
        _record("press space", "one two three four five six seven"),
        _record("press r", ""),
    ]
    report = token_savings_report(records)
    # "[press space]" = 2 whitespace tokens before the sentinel; full = 11
    # "[press r]" = 2 tokens; full = 4
    assert report.records == 2
    assert report.mean_full_tokens == pytest.approx((11 + 4) / 2)
    assert report.mean_truncated_tokens == pytest.approx(2.0)
    assert report.ratio == pytest.approx(4 / 15)
    d = report.to_json_dict()
    assert set(d) == {"records", "mean_full_tokens", "mean_truncated_tokens", "ratio"}


def test_savings_missing_sentinel_counts_full_both_sides():
    rec = _record("press r", "x")
    no_sentinel = AoTRecord(
        stage=2,
        frame_refs=(1, 2, 3, 4),
        question=QUESTION_TEXT,
        actions=(),
        action_text="press r",
        explanation="x",
        serialized=f"[x] [press r] {EOS_TOKEN}",
    )
    report = token_savings_report([rec, no_sentinel])
    assert report.mean_full_tokens == pytest.approx((5 + 4) / 2)
    assert report.mean_truncated_tokens == pytest.approx((2 + 4) / 2)


def test_savings_requires_records():
    with pytest.raises(EmptyDataset):
        token_savings_report([])


def test_savings_on_bundled_dataset():
    report = token_savings_report(load_bundled_stage3())
    assert report.ratio < 0.45
    assert report.mean_truncated_tokens < report.mean_full_tokens
