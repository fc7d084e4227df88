"""Exception and warning types shared across the toolkit."""

from __future__ import annotations


class CombatkitError(Exception):
    """Base class for all toolkit errors."""


# ---------------------------------------------------------------- actions

class InvalidArity(CombatkitError):
    """Weight schedule requested for a non-positive number of ranks."""


class EmptyLabel(CombatkitError):
    """Priority matching needs at least one labelled action."""


class UnknownAction(CombatkitError):
    """Action text names a binding outside the vocabulary."""

    def __init__(self, token: str):
        super().__init__(f"unknown action binding: {token!r}")
        self.token = token


class MissingDuration(CombatkitError):
    """A hold clause left out its duration."""


class BadDuration(CombatkitError):
    """A hold duration was zero, negative, or not a number."""


class InvalidActionMode(CombatkitError):
    """Tap/hold mode is incompatible with the action category."""


class DuplicateAction(CombatkitError):
    """An action set carried the same category twice."""


# ---------------------------------------------------------------- tracker

class DanglingPress(CombatkitError):
    """A down edge never saw its matching up edge."""


class OrphanRelease(CombatkitError):
    """An up edge arrived for a binding that was not held."""


class NoFrames(CombatkitError):
    """Alignment needs a non-empty frame list."""


class ParseError(CombatkitError):
    """A session file line could not be parsed."""

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class OrderingViolation(CombatkitError):
    """Timestamps or indices are out of order."""


# ---------------------------------------------------------------- loss

class DegenerateEmbedding(CombatkitError):
    """An embedding vector has zero norm."""


class NumericFailure(CombatkitError):
    """A numeric check produced a non-finite value."""


class ClampedProbability(UserWarning):
    """A zero probability was clamped before taking its log."""


# ---------------------------------------------------------------- decoder

class ActionParseError(CombatkitError):
    """No complete action clause could be recovered from emitted tokens."""

    def __init__(self, raw_text: str, stop_reason: str | None = None):
        detail = f" (stop={stop_reason})" if stop_reason else ""
        super().__init__(f"no parseable action clause in {raw_text!r}{detail}")
        self.raw_text = raw_text
        self.stop_reason = stop_reason


class ReplayExhausted(CombatkitError):
    """A replay policy ran past the end of its dataset."""


class EmptyDataset(CombatkitError):
    """An operation needs at least one record."""


class EmptyDatasetWarning(UserWarning):
    """A builder produced zero records."""


# ---------------------------------------------------------------- arena

class ObservationSchemaError(CombatkitError):
    """A policy received frames missing required features."""


class InsufficientHistory(CombatkitError):
    """The frame buffer does not yet hold enough frames to sample."""


# ------------------------------------------------------------------- cli

class ConfigError(CombatkitError):
    """The config file is malformed or names an unknown setting."""


# ---------------------------------------------------------------- bench

class ValidationError(CombatkitError):
    """A benchmark item violated the schema."""

    def __init__(self, line: int, field: str, reason: str = ""):
        msg = f"line {line}: field {field!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.line = line
        self.field = field
        self.reason = reason


class GenerationShortfall(CombatkitError):
    """Transcripts lack enough material to meet a target count."""

    def __init__(self, category: str, wanted: int, available: int):
        super().__init__(
            f"category {category}: wanted {wanted} items, only {available} candidates"
        )
        self.category = category
        self.wanted = wanted
        self.available = available


class Unparseable:
    """Sentinel for an answer that contains no canonical token."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return "UNPARSEABLE"


UNPARSEABLE = Unparseable()
