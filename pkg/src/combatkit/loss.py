"""Action-weighted loss terms and a finite-difference gradient checker.

A decision is scored against its label in embedding space and in
category space. When the model's output contains the critical labelled
action, a pull term tightens the embedding of the emitted action toward
the label embedding; when it misses, the pull flips sign into a push and
a category alignment penalty is added. The combined action loss is
scaled by the critical action's priority weight and added to the plain
language-model loss.

Every analytic gradient here is verified against central differences;
``finite_diff_check`` is the reusable checker behind the ``loss check``
CLI command and the acceptance suite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .actions import (
    PRIORITY_ORDER,
    ActionCategory,
    ActionSet,
    PrioritySchedule,
    default_schedule,
    priority_match,
)
from .errors import ClampedProbability, DegenerateEmbedding, NumericFailure

__all__ = [
    "PROB_CLAMP",
    "EmbeddingPair",
    "ActionPrediction",
    "LossBreakdown",
    "cosine_similarity",
    "contrastive_term",
    "contrastive_gradients",
    "alignment_term",
    "alignment_gradient",
    "composite_loss",
    "central_difference_gradient",
    "finite_diff_check",
    "gradient_check_rows",
    "random_pair",
]

PROB_CLAMP = 1e-12

_NORM_FLOOR = 0.0  # any strictly positive norm is accepted


def _as_vector(x: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise DegenerateEmbedding(f"{name} must be a 1-D vector of dim >= 2")
    if not np.all(np.isfinite(v)):
        raise NumericFailure(f"{name} contains non-finite values")
    if np.linalg.norm(v) <= _NORM_FLOOR:
        raise DegenerateEmbedding(f"{name} has zero norm")
    return v


@dataclass(frozen=True, eq=False)
class EmbeddingPair:
    """Terminal-token embeddings of the emitted and labelled action text."""

    v_eos: np.ndarray
    a_eos: np.ndarray

    def __post_init__(self) -> None:
        v = _as_vector(self.v_eos, "v_eos")
        a = _as_vector(self.a_eos, "a_eos")
        if v.shape != a.shape:
            raise DegenerateEmbedding("v_eos and a_eos must share a dimension")
        object.__setattr__(self, "v_eos", v)
        object.__setattr__(self, "a_eos", a)


@dataclass(frozen=True, eq=False)
class ActionPrediction:
    """Category distribution plus the decoded output set of one decision.

    ``probs[i]`` is the probability of ``PRIORITY_ORDER[i]``.
    """

    probs: np.ndarray
    output_set: ActionSet

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (len(PRIORITY_ORDER),):
            raise ValueError(f"probs must have shape ({len(PRIORITY_ORDER)},)")
        if not np.all(np.isfinite(p)):
            raise NumericFailure("probs contain non-finite values")
        if np.any(p < 0.0):
            raise ValueError("probs cannot be negative")
        if abs(float(p.sum()) - 1.0) > 1e-8:
            raise ValueError(f"probs must sum to 1, got {float(p.sum())!r}")
        object.__setattr__(self, "probs", p)

    def prob_of(self, category: ActionCategory) -> float:
        return float(self.probs[category.priority_rank])


@dataclass(frozen=True, slots=True)
class LossBreakdown:
    l_lang: float
    l_con: float
    l_align: float
    l_act: float
    alpha: float
    total: float
    c_star: ActionCategory
    matched: bool


# ------------------------------------------------------------ loss terms

def cosine_similarity(v: np.ndarray, a: np.ndarray) -> float:
    v = _as_vector(v, "v")
    a = _as_vector(a, "a")
    return float(np.dot(v, a) / (np.linalg.norm(v) * np.linalg.norm(a)))


def contrastive_term(pair: EmbeddingPair, matched: bool) -> float:
    """1 - cos(v, a) on a match; its negation on a miss."""
    pull = 1.0 - cosine_similarity(pair.v_eos, pair.a_eos)
    return pull if matched else -pull


def contrastive_gradients(pair: EmbeddingPair, matched: bool) -> tuple[np.ndarray, np.ndarray]:
    """Analytic d(term)/dv and d(term)/da for ``contrastive_term``."""
    v, a = pair.v_eos, pair.a_eos
    nv, na = np.linalg.norm(v), np.linalg.norm(a)
    cos = float(np.dot(v, a) / (nv * na))
    dcos_dv = a / (nv * na) - cos * v / (nv * nv)
    dcos_da = v / (nv * na) - cos * a / (na * na)
    sign = -1.0 if matched else 1.0
    return sign * dcos_dv, sign * dcos_da


def alignment_term(pred: ActionPrediction, c_star: ActionCategory) -> float:
    """Negative log-probability of the critical category, clamped at 1e-12."""
    p = pred.prob_of(c_star)
    if p < PROB_CLAMP:
        warnings.warn(
            f"p({c_star.name}) = {p!r} clamped to {PROB_CLAMP}", ClampedProbability
        )
        p = PROB_CLAMP
    return -math.log(p)


def alignment_gradient(pred: ActionPrediction, c_star: ActionCategory) -> np.ndarray:
    """Analytic gradient of ``alignment_term`` w.r.t. the raw probabilities."""
    grad = np.zeros_like(pred.probs)
    p = max(pred.prob_of(c_star), PROB_CLAMP)
    grad[c_star.priority_rank] = -1.0 / p
    return grad


def composite_loss(
    pair: EmbeddingPair,
    pred: ActionPrediction,
    label: ActionSet,
    l_lang: float,
    schedule: PrioritySchedule | None = None,
) -> LossBreakdown:
    """Weighted action loss on top of the language loss.

    Matched decisions pay only the pull; mismatched decisions pay the
    push plus the category alignment penalty. The weight is the critical
    action's schedule entry.
    """
    sched = schedule or default_schedule()
    c_star, matched = priority_match(label, pred.output_set, sched)
    l_con = contrastive_term(pair, matched)
    l_align = 0.0 if matched else alignment_term(pred, c_star)
    l_act = l_con + l_align
    alpha = sched.weight(c_star)
    total = l_lang + alpha * l_act
    if not math.isfinite(total):
        raise NumericFailure(f"composite loss is non-finite: {total!r}")
    return LossBreakdown(
        l_lang=float(l_lang),
        l_con=l_con,
        l_align=l_align,
        l_act=l_act,
        alpha=alpha,
        total=total,
        c_star=c_star,
        matched=matched,
    )


# ------------------------------------------------------- gradient checks

def central_difference_gradient(
    fn: Callable[[np.ndarray], float], point: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Numeric gradient via symmetric differences, one coordinate at a time."""
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h must lie in [1e-7, 1e-3], got {h!r}")
    x = np.asarray(point, dtype=np.float64)
    numeric = np.empty_like(x)
    for i in range(x.size):
        bump = np.zeros_like(x)
        bump[i] = h
        numeric[i] = (fn(x + bump) - fn(x - bump)) / (2.0 * h)
    return numeric


def finite_diff_check(
    fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between an analytic gradient and central differences.

    Relative error per coordinate uses the larger of the two magnitudes
    as denominator; coordinates where both are below 1e-8 compare by
    absolute difference.
    """
    x = np.asarray(point, dtype=np.float64)
    analytic = np.asarray(grad_fn(x), dtype=np.float64)
    if analytic.shape != x.shape:
        raise NumericFailure("analytic gradient shape mismatch")
    numeric = central_difference_gradient(fn, x, h)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise NumericFailure("non-finite gradient encountered")
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        scale = max(abs(ga), abs(gn))
        err = abs(ga - gn) if scale < 1e-8 else abs(ga - gn) / scale
        worst = max(worst, err)
    return worst


def random_pair(rng: np.random.Generator, dim: int) -> EmbeddingPair:
    v = rng.normal(size=dim)
    a = rng.normal(size=dim)
    return EmbeddingPair(v / np.linalg.norm(v), a / np.linalg.norm(a))


def gradient_check_rows(
    seed: int = 0, points: int = 100, dim: int = 64, h: float = 1e-5
) -> list[dict]:
    """Sweep random points and report per-component worst errors.

    One row per checked component: the pull and push branches of the
    contrastive term (w.r.t. both embeddings jointly) and the alignment
    term (w.r.t. the probability vector).
    """
    rng = np.random.default_rng(seed)
    worst = {"contrastive_pull": 0.0, "contrastive_push": 0.0, "alignment": 0.0}
    analytic_norms = {k: 0.0 for k in worst}
    fd_norms = {k: 0.0 for k in worst}

    for _ in range(points):
        pair = random_pair(rng, dim)
        flat = np.concatenate([pair.v_eos, pair.a_eos])

        for name, matched in (("contrastive_pull", True), ("contrastive_push", False)):

            def value(x: np.ndarray, m: bool = matched) -> float:
                return contrastive_term(EmbeddingPair(x[:dim], x[dim:]), m)

            def grad(x: np.ndarray, m: bool = matched) -> np.ndarray:
                dv, da = contrastive_gradients(EmbeddingPair(x[:dim], x[dim:]), m)
                return np.concatenate([dv, da])

            worst[name] = max(worst[name], finite_diff_check(value, grad, flat, h))
            analytic_norms[name] += float(np.linalg.norm(grad(flat)))
            fd_norms[name] += float(
                np.linalg.norm(central_difference_gradient(value, flat, h))
            )

        probs = rng.exponential(size=len(PRIORITY_ORDER))
        probs = probs / probs.sum()
        c_star = PRIORITY_ORDER[int(rng.integers(len(PRIORITY_ORDER)))]
        idx = c_star.priority_rank

        def align_value(p: np.ndarray, i: int = idx) -> float:
            return -math.log(max(float(p[i]), PROB_CLAMP))

        def align_grad(p: np.ndarray, i: int = idx) -> np.ndarray:
            g = np.zeros_like(p)
            g[i] = -1.0 / max(float(p[i]), PROB_CLAMP)
            return g

        worst["alignment"] = max(
            worst["alignment"], finite_diff_check(align_value, align_grad, probs, h)
        )
        analytic_norms["alignment"] += float(np.linalg.norm(align_grad(probs)))
        fd_norms["alignment"] += float(
            np.linalg.norm(central_difference_gradient(align_value, probs, h))
        )

    return [
        {
            "component": name,
            "points": points,
            "dim": dim,
            "step": h,
            "analytic_grad_norm": analytic_norms[name] / points,
            "fd_grad_norm": fd_norms[name] / points,
            "max_rel_error": worst[name],
        }
        for name in ("contrastive_pull", "contrastive_push", "alignment")
    ]
