"""Combat-understanding benchmark: schema, scoring, synthetic generation.

Items test three skills: information gathering (single-frame yes/no),
state comprehension (multi-frame yes/no), and action reasoning
(multi-frame, three options). Scoring normalizes free-text answers to
canonical tokens, reports per-category accuracy on a 0-100 scale, and
macro-averages the three categories with equal weight.

``generate_synthetic`` builds items from arena episode transcripts, so
every gold answer is recomputable from the referenced frames: health
judgments from the 0.5 threshold, state judgments from the telegraph
and stun flags, reasoning golds from the scripted policy's rule table.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .arena import ObservationFrame, PlayerStatus
from .errors import GenerationShortfall, ParseError, UNPARSEABLE, ValidationError
from .policies import ScriptedPolicy
from .actions import ActionCategory
from .runner import EpisodeTranscript

__all__ = [
    "Category",
    "BenchItem",
    "ValidationReport",
    "BenchReport",
    "CANONICAL_COUNTS",
    "SUBTASK_COUNTS",
    "HEALTH_HIGH_THRESHOLD",
    "validate_dataset",
    "normalize_answer",
    "score",
    "generate_synthetic",
    "derive_gold",
    "frame_lookup",
    "write_items",
    "read_items",
    "read_predictions",
    "write_predictions",
]

HEALTH_HIGH_THRESHOLD = 0.5


class Category(Enum):
    GATHERING = "gathering"
    COMPREHENSION = "comprehension"
    REASONING = "reasoning"


# Canonical volume grid; generation defaults and fraction checks use it.
CANONICAL_COUNTS = {
    Category.GATHERING: 360,
    Category.COMPREHENSION: 204,
    Category.REASONING: 350,
}

SUBTASK_COUNTS = {
    Category.GATHERING: {"enemy_health": 217, "own_health": 107, "own_abnormal_status": 36},
    Category.COMPREHENSION: {"action_intention": 123, "current_state": 81},
    Category.REASONING: {
        "answer_restore_health": 50,
        "answer_dodge_attack": 150,
        "answer_attack_enemy": 150,
    },
}

_BINARY_CHOICES = ("Yes", "No")
_REASONING_CHOICES = (
    "A. Restore health",
    "B. Dodge the enemy's attack",
    "C. Attack the enemy",
)

_QUESTIONS = {
    "enemy_health": (
        "Is the enemy's health high? Answer with only Yes or No. The best answer is:"
    ),
    "own_health": (
        "Is the game character's health high? Answer with only Yes or No. "
        "The best answer is:"
    ),
    "own_abnormal_status": (
        "Is the game character in an abnormal status (such as burning)? "
        "Answer with only Yes or No. The best answer is:"
    ),
    "action_intention": (
        "Based on the frame sequence, is the enemy about to attack or attacking "
        "right now? Answer with only Yes or No. The best answer is:"
    ),
    "current_state": (
        "Based on the frame sequence, is the enemy currently immobilized? "
        "Answer with only Yes or No. The best answer is:"
    ),
    "reasoning": (
        "Based on the frame sequence, what should the game character do next? "
        "Ensure your health is prioritized while depleting the enemy's health. "
        "A. Restore health. B. Dodge the enemy's attack. C. Attack the enemy. "
        "Respond with only the letter of your choice. The best answer is:"
    ),
}

_GOLD_TO_SUBTASK = {
    "A": "answer_restore_health",
    "B": "answer_dodge_attack",
    "C": "answer_attack_enemy",
}


@dataclass(frozen=True, slots=True)
class BenchItem:
    item_id: str
    category: Category
    subtask: str
    frame_refs: tuple[str, ...]
    question: str
    choices: tuple[str, ...]
    gold: str

    def to_json_dict(self) -> dict:
        return {
            "id": self.item_id,
            "category": self.category.value,
            "subtask": self.subtask,
            "frame_refs": list(self.frame_refs),
            "question": self.question,
            "choices": list(self.choices),
            "gold": self.gold,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "BenchItem":
        return cls(
            item_id=str(obj["id"]),
            category=Category(obj["category"]),
            subtask=str(obj["subtask"]),
            frame_refs=tuple(str(r) for r in obj["frame_refs"]),
            question=str(obj["question"]),
            choices=tuple(str(c) for c in obj["choices"]),
            gold=str(obj["gold"]),
        )


# ------------------------------------------------------------- validation

@dataclass(frozen=True, slots=True)
class ValidationReport:
    total: int
    counts: dict[str, int]
    fractions: dict[str, float]
    subtask_counts: dict[str, int]
    violations: tuple[ValidationError, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": self.counts,
            "fractions": {k: round(v, 4) for k, v in self.fractions.items()},
            "subtask_counts": self.subtask_counts,
            "violations": [str(v) for v in self.violations],
        }


def _check_item(obj: dict, line: int) -> BenchItem | ValidationError:
    for field in ("id", "category", "subtask", "frame_refs", "question", "choices", "gold"):
        if field not in obj:
            return ValidationError(line, field, "missing")
    try:
        category = Category(obj["category"])
    except ValueError:
        return ValidationError(line, "category", f"unknown {obj['category']!r}")
    refs = obj["frame_refs"]
    if not isinstance(refs, list) or not 1 <= len(refs) <= 4:
        return ValidationError(line, "frame_refs", "need 1..4 refs")
    if category is Category.GATHERING and len(refs) != 1:
        return ValidationError(line, "frame_refs", "gathering judges a single frame")
    if category is not Category.GATHERING and len(refs) < 2:
        return ValidationError(line, "frame_refs", f"{category.value} needs 2+ frames")
    choices = obj["choices"]
    if category is Category.REASONING:
        if not isinstance(choices, list) or len(choices) != 3:
            return ValidationError(line, "choices", "reasoning needs exactly 3 options")
        if obj["gold"] not in ("A", "B", "C"):
            return ValidationError(line, "gold", "must be A, B, or C")
    else:
        if list(choices) != list(_BINARY_CHOICES):
            return ValidationError(line, "choices", "binary items offer Yes/No")
        if obj["gold"] not in _BINARY_CHOICES:
            return ValidationError(line, "gold", "must be Yes or No")
    return BenchItem.from_json_dict(obj)


def validate_dataset(source: str | Path | Sequence[dict] | Sequence[BenchItem]) -> ValidationReport:
    """Check schema line by line; always returns counts for the clean rows."""
    rows: list[tuple[int, dict]] = []
    if isinstance(source, (str, Path)):
        path = Path(source)
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(str(path), lineno, f"bad JSON: {exc.msg}") from None
                rows.append((lineno, obj))
    else:
        for lineno, entry in enumerate(source, start=1):
            obj = entry.to_json_dict() if isinstance(entry, BenchItem) else entry
            rows.append((lineno, obj))

    counts = {c.value: 0 for c in Category}
    subtask_counts: dict[str, int] = {}
    violations: list[ValidationError] = []
    total = 0
    for lineno, obj in rows:
        checked = _check_item(obj, lineno)
        if isinstance(checked, ValidationError):
            violations.append(checked)
            continue
        total += 1
        counts[checked.category.value] += 1
        subtask_counts[checked.subtask] = subtask_counts.get(checked.subtask, 0) + 1
    fractions = {k: (v / total if total else 0.0) for k, v in counts.items()}
    return ValidationReport(
        total=total,
        counts=counts,
        fractions=fractions,
        subtask_counts={k: subtask_counts[k] for k in sorted(subtask_counts)},
        violations=tuple(violations),
    )


# ---------------------------------------------------------------- scoring

def normalize_answer(raw: str, kind: str) -> str | object:
    """Reduce free text to the first canonical token it contains.

    kind is 'binary' (Yes/No) or 'choice' (A/B/C); matching is
    case-insensitive on standalone word tokens.
    """
    if kind == "binary":
        vocab = {"yes": "Yes", "no": "No"}
    elif kind == "choice":
        vocab = {"a": "A", "b": "B", "c": "C"}
    else:
        raise ValueError(f"unknown answer kind {kind!r}")
    token = ""
    for ch in str(raw):
        if ch.isalnum():
            token += ch.lower()
            continue
        if token in vocab:
            return vocab[token]
        token = ""
    if token in vocab:
        return vocab[token]
    return UNPARSEABLE


@dataclass(frozen=True, slots=True)
class BenchReport:
    total: int
    per_category_correct: dict[str, int]
    per_category_total: dict[str, int]
    accuracies: dict[str, float]          # 0-100 scale, unrounded
    macro_average: float
    missing_predictions: int
    unparseable_predictions: int

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "per_category_correct": self.per_category_correct,
            "per_category_total": self.per_category_total,
            "accuracies": {k: round(v, 2) for k, v in self.accuracies.items()},
            "macro_average": round(self.macro_average, 2),
            "missing_predictions": self.missing_predictions,
            "unparseable_predictions": self.unparseable_predictions,
        }


def score(items: Sequence[BenchItem], predictions: Mapping[str, str]) -> BenchReport:
    """Accuracy per category plus their arithmetic mean (macro average).

    Missing or unparseable predictions count as wrong; every category
    contributes equally to the macro average regardless of size.
    """
    correct = {c.value: 0 for c in Category}
    totals = {c.value: 0 for c in Category}
    missing = 0
    unparseable = 0
    for item in items:
        totals[item.category.value] += 1
        raw = predictions.get(item.item_id)
        if raw is None:
            missing += 1
            continue
        kind = "choice" if item.category is Category.REASONING else "binary"
        norm = normalize_answer(raw, kind)
        if norm is UNPARSEABLE:
            unparseable += 1
            continue
        if norm == item.gold:
            correct[item.category.value] += 1
    accuracies = {
        name: (100.0 * correct[name] / totals[name]) if totals[name] else 0.0
        for name in totals
    }
    macro = sum(accuracies.values()) / len(accuracies)
    return BenchReport(
        total=sum(totals.values()),
        per_category_correct=correct,
        per_category_total=totals,
        accuracies=accuracies,
        macro_average=macro,
        missing_predictions=missing,
        unparseable_predictions=unparseable,
    )


# ------------------------------------------------------------- generation

def frame_lookup(transcripts: Sequence[EpisodeTranscript]) -> dict[str, ObservationFrame]:
    """Map 'episodekey:frameindex' refs to their observation frames."""
    table: dict[str, ObservationFrame] = {}
    for transcript in transcripts:
        for i, frame in enumerate(transcript.frames):
            table[f"{transcript.episode_key}:{i}"] = frame
    return table


def _rule_table_gold(frame: ObservationFrame, judge: ScriptedPolicy) -> str:
    lead = judge.decide(frame).in_priority_order().events[0].category
    if lead is ActionCategory.HEAL:
        return "A"
    if lead is ActionCategory.DODGE:
        return "B"
    return "C"


def derive_gold(
    item: BenchItem, frames: Mapping[str, ObservationFrame], judge: ScriptedPolicy | None = None
) -> str:
    """Recompute an item's gold from its referenced frames."""
    last = frames[item.frame_refs[-1]]
    if item.subtask == "enemy_health":
        return "Yes" if last.enemy_hp >= HEALTH_HIGH_THRESHOLD else "No"
    if item.subtask == "own_health":
        return "Yes" if last.player_hp >= HEALTH_HIGH_THRESHOLD else "No"
    if item.subtask == "own_abnormal_status":
        return "Yes" if last.player_status is not PlayerStatus.NORMAL else "No"
    if item.subtask == "action_intention":
        return "Yes" if last.enemy_telegraph is not None else "No"
    if item.subtask == "current_state":
        return "Yes" if last.enemy_stunned_ms > 0 else "No"
    if item.category is Category.REASONING:
        return _rule_table_gold(last, judge or ScriptedPolicy())
    raise ValueError(f"unknown subtask {item.subtask!r}")


def _allocate(targets: Mapping[str, int], total: int) -> dict[str, int]:
    """Largest-remainder scaling of canonical subtask volumes to a total."""
    base_total = sum(targets.values())
    quotas = {k: total * v / base_total for k, v in targets.items()}
    alloc = {k: int(q) for k, q in quotas.items()}
    leftover = total - sum(alloc.values())
    for k in sorted(quotas, key=lambda k: quotas[k] - int(quotas[k]), reverse=True):
        if leftover <= 0:
            break
        alloc[k] += 1
        leftover -= 1
    return alloc


def _pick_balanced(
    pools: dict[str, list], want: int, rng: random.Random, subtask: str, category: str
) -> list:
    """Draw `want` items, alternating golds while supplies last."""
    available = sum(len(p) for p in pools.values())
    if available < want:
        raise GenerationShortfall(f"{category}/{subtask}", want, available)
    for pool in pools.values():
        rng.shuffle(pool)
    order = sorted(pools)
    out: list = []
    cursors = {k: 0 for k in order}
    while len(out) < want:
        progressed = False
        for k in order:
            if len(out) >= want:
                break
            if cursors[k] < len(pools[k]):
                out.append(pools[k][cursors[k]])
                cursors[k] += 1
                progressed = True
        if not progressed:
            break
    return out


def generate_synthetic(
    transcripts: Sequence[EpisodeTranscript],
    target_counts: Mapping[Category, int] | None = None,
    seed: int = 0,
) -> list[BenchItem]:
    """Build a benchmark from episode transcripts, deterministically.

    Subtask volumes follow the canonical grid scaled to the requested
    category totals. Raises GenerationShortfall when the transcripts
    cannot supply a subtask.
    """
    targets = dict(target_counts or CANONICAL_COUNTS)
    rng = random.Random(seed)
    judge = ScriptedPolicy()

    # candidate pools: subtask -> gold -> list of (refs, gold)
    pools: dict[str, dict[str, list[tuple[tuple[str, ...], str]]]] = {
        name: {} for cat in SUBTASK_COUNTS for name in SUBTASK_COUNTS[cat]
    }

    def put(subtask: str, gold: str, refs: tuple[str, ...]) -> None:
        pools[subtask].setdefault(gold, []).append((refs, gold))

    for transcript in transcripts:
        key = transcript.episode_key
        frames = transcript.frames
        for i, frame in enumerate(frames):
            ref = (f"{key}:{i}",)
            put("enemy_health", "Yes" if frame.enemy_hp >= HEALTH_HIGH_THRESHOLD else "No", ref)
            put("own_health", "Yes" if frame.player_hp >= HEALTH_HIGH_THRESHOLD else "No", ref)
            put(
                "own_abnormal_status",
                "Yes" if frame.player_status is not PlayerStatus.NORMAL else "No",
                ref,
            )
            if i >= 2:
                window3 = tuple(f"{key}:{j}" for j in range(i - 2, i + 1))
                put(
                    "action_intention",
                    "Yes" if frame.enemy_telegraph is not None else "No",
                    window3,
                )
                put("current_state", "Yes" if frame.enemy_stunned_ms > 0 else "No", window3)
            if i >= 3:
                window4 = tuple(f"{key}:{j}" for j in range(i - 3, i + 1))
                gold = _rule_table_gold(frame, judge)
                put(_GOLD_TO_SUBTASK[gold], gold, window4)

    items: list[BenchItem] = []
    seq = 0

    def emit(category: Category, subtask: str, refs: tuple[str, ...], gold: str) -> None:
        nonlocal seq
        seq += 1
        question = _QUESTIONS["reasoning" if category is Category.REASONING else subtask]
        choices = _REASONING_CHOICES if category is Category.REASONING else _BINARY_CHOICES
        items.append(
            BenchItem(
                item_id=f"{category.value}-{seq:05d}",
                category=category,
                subtask=subtask,
                frame_refs=refs,
                question=question,
                choices=choices,
                gold=gold,
            )
        )

    for category in (Category.GATHERING, Category.COMPREHENSION, Category.REASONING):
        total = int(targets.get(category, 0))
        alloc = _allocate(SUBTASK_COUNTS[category], total)
        for subtask, want in alloc.items():
            if category is Category.REASONING:
                # subtask is the gold option; no cross-gold balancing
                gold = {v: k for k, v in _GOLD_TO_SUBTASK.items()}[subtask]
                pool = pools[subtask].get(gold, [])
                if len(pool) < want:
                    raise GenerationShortfall(
                        f"{category.value}/{subtask}", want, len(pool)
                    )
                rng.shuffle(pool)
                chosen = pool[:want]
            else:
                chosen = _pick_balanced(
                    pools[subtask], want, rng, subtask, category.value
                )
            for refs, gold in chosen:
                emit(category, subtask, refs, gold)
    return items


# --------------------------------------------------------------------- IO

def write_items(items: Iterable[BenchItem], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_json_dict(), sort_keys=True) + "\n")
    return p


def read_items(path: str | Path) -> list[BenchItem]:
    report = validate_dataset(path)
    if not report.ok:
        raise report.violations[0]
    items: list[BenchItem] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                items.append(BenchItem.from_json_dict(json.loads(line)))
    return items


def write_predictions(predictions: Mapping[str, str], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as fh:
        for item_id in predictions:
            fh.write(
                json.dumps({"id": item_id, "raw_answer": predictions[item_id]}, sort_keys=True)
                + "\n"
            )
    return p


def read_predictions(path: str | Path) -> dict[str, str]:
    p = Path(path)
    out: dict[str, str] = {}
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(p), lineno, f"bad JSON: {exc.msg}") from None
            if "id" not in obj or "raw_answer" not in obj:
                raise ParseError(str(p), lineno, "need id and raw_answer fields")
            out[str(obj["id"])] = str(obj["raw_answer"])
    return out
