"""Streaming token decoding with early truncation.

A policy answers an observation with a stream of whitespace tokens in
action-first serialized form. Truncated decoding stops at the first
truncation sentinel, so the actionable clause is available without
waiting for the explanation; full decoding runs to the end-of-sequence
sentinel. Both modes recover the same action set, and the truncated
emission is always a prefix of the full one.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from .actions import ActionSet, parse_action_text
from .aot import AoTRecord, EOS_TOKEN, TRUNC_TOKEN, read_records
from .errors import ActionParseError, CombatkitError, EmptyDataset

__all__ = [
    "DEFAULT_TOKEN_BUDGET",
    "TokenStream",
    "DecodeMode",
    "StopReason",
    "DecodeResult",
    "decode",
    "SavingsReport",
    "token_savings_report",
]

DEFAULT_TOKEN_BUDGET = 256

_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")


class DecodeMode(Enum):
    TRUNCATED = "truncated"
    FULL = "full"


class StopReason(Enum):
    TRUNC = "trunc"
    EOS = "eos"
    BUDGET = "budget"


class TokenStream:
    """Pull-based token source, optionally paced at a fixed rate.

    Pacing sleeps 1/rate before each token, emulating generation
    cadence. The clock and sleep functions are injectable so tests can
    run paced streams without real delays.
    """

    def __init__(
        self,
        tokens: Iterable[str],
        tokens_per_second: float | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if tokens_per_second is not None and tokens_per_second <= 0:
            raise ValueError("tokens_per_second must be positive")
        self._tokens = iter(tokens)
        self._interval = None if tokens_per_second is None else 1.0 / tokens_per_second
        self._sleep = sleep

    @classmethod
    def from_text(
        cls, text: str, tokens_per_second: float | None = None
    ) -> "TokenStream":
        return cls(text.split(), tokens_per_second)

    def __iter__(self) -> Iterator[str]:
        return self

    def __next__(self) -> str:
        token = next(self._tokens)
        if self._interval is not None:
            self._sleep(self._interval)
        return token


@dataclass(frozen=True, slots=True)
class DecodeResult:
    emitted_tokens: tuple[str, ...]
    actions: ActionSet
    stop_reason: StopReason
    wall_ms: float

    @property
    def emitted_count(self) -> int:
        return len(self.emitted_tokens)


def _extract_actions(emitted: Sequence[str], stop_reason: StopReason) -> ActionSet:
    text = " ".join(emitted)
    for match in _BRACKET_RE.finditer(text):
        try:
            return parse_action_text(match.group(1))
        except CombatkitError:
            continue
    raise ActionParseError(text, stop_reason.value)


def decode(
    stream: Iterable[str],
    mode: DecodeMode = DecodeMode.TRUNCATED,
    budget: int = DEFAULT_TOKEN_BUDGET,
    trunc_token: str = TRUNC_TOKEN,
    eos_token: str = EOS_TOKEN,
) -> DecodeResult:
    """Consume a token stream and recover the decision's action set.

    Truncated mode stops at the first truncation sentinel (excluded from
    the emission); full mode runs through the end-of-sequence sentinel
    (included). Either mode stops when the token budget is exhausted; a
    stop that leaves no complete bracketed action clause raises
    ``ActionParseError`` rather than guessing.
    """
    if budget <= 0:
        raise ValueError("token budget must be positive")
    emitted: list[str] = []
    stop = StopReason.BUDGET
    start = time.perf_counter()
    for token in stream:
        if mode is DecodeMode.TRUNCATED and token == trunc_token:
            stop = StopReason.TRUNC
            break
        emitted.append(token)
        if token == eos_token:
            stop = StopReason.EOS
            break
        if len(emitted) >= budget:
            stop = StopReason.BUDGET
            break
    wall_ms = (time.perf_counter() - start) * 1000.0
    actions = _extract_actions(emitted, stop)
    return DecodeResult(tuple(emitted), actions, stop, wall_ms)


# ---------------------------------------------------------- token savings

@dataclass(frozen=True, slots=True)
class SavingsReport:
    records: int
    mean_full_tokens: float
    mean_truncated_tokens: float

    @property
    def ratio(self) -> float:
        return self.mean_truncated_tokens / self.mean_full_tokens

    def to_json_dict(self) -> dict:
        return {
            "records": self.records,
            "mean_full_tokens": self.mean_full_tokens,
            "mean_truncated_tokens": self.mean_truncated_tokens,
            "ratio": self.ratio,
        }


def token_savings_report(
    records: Sequence[AoTRecord] | str | Path,
    trunc_token: str = TRUNC_TOKEN,
) -> SavingsReport:
    """Mean whitespace-token counts: full serialization vs. pre-sentinel.

    Records without the sentinel contribute their full length to both
    sides.
    """
    if isinstance(records, (str, Path)):
        records = read_records(records)
    if not records:
        raise EmptyDataset("token savings need at least one record")
    full_total = 0
    trunc_total = 0
    for record in records:
        tokens = record.serialized.split()
        full_total += len(tokens)
        trunc_total += tokens.index(trunc_token) if trunc_token in tokens else len(tokens)
    n = len(records)
    return SavingsReport(n, full_total / n, trunc_total / n)
