"""Stand-in expert inference engine over a knowledge base.

Scores a disease against observed findings with a smoothed log-likelihood:

    score(d) = sum_{f in pos} ln(eps + FREQ(d, f))
             + sum_{f in neg} ln(eps + 1 - FREQ(d, f)),   eps = 1e-3

A demographic finding observed present with FREQ(d, f) = 0 excludes the
disease outright (score -inf): a patient whose demographics a disease has
never been seen with cannot have it. The differential diagnosis keeps the
top-k finite-scored diseases and renormalizes their raw scores with a
softmax, mirroring how a short retained list is reported as probabilities.

This is a simple, monotone, brute-force-verifiable scoring rule, not a
reconstruction of any production inference engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .kb import DEMOGRAPHIC, KnowledgeBase, frequency

SMOOTHING_EPS = 1e-3
DEFAULT_DDX_TOP_K = 5
_PROB_TOL = 1e-9


@dataclass(frozen=True)
class DifferentialDiagnosis:
    """Ranked (disease id, probability) pairs with the raw scores behind them.

    Probabilities are positive, sum to 1 within 1e-9, and are ordered by
    descending probability with ties broken by ascending disease id. The
    raw scores are kept for inspection but are not part of a differential's
    identity; serialized case records store probabilities only.
    """

    entries: tuple[tuple[str, float], ...]
    raw_scores: tuple[float, ...] = field(compare=False)

    def __post_init__(self):
        if len(self.entries) != len(self.raw_scores):
            raise ValueError("entries and raw_scores must be parallel")
        if not self.entries:
            raise ValueError("empty differential")
        total = 0.0
        prev: tuple[float, str] | None = None
        for disease, p in self.entries:
            if not p > 0.0:
                raise ValueError(f"probability for {disease!r} must be > 0, got {p}")
            key = (-p, disease)
            if prev is not None and key < prev:
                raise ValueError("entries must be sorted by descending probability, ties by id")
            prev = key
            total += p
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    @property
    def diseases(self) -> tuple[str, ...]:
        return tuple(d for d, _ in self.entries)

    def probability(self, disease_id: str) -> float:
        for d, p in self.entries:
            if d == disease_id:
                return p
        return 0.0

    def top(self) -> str:
        return self.entries[0][0]


def score_disease(
    kb: KnowledgeBase, disease_id: str, pos: set[str] | frozenset[str], neg: set[str] | frozenset[str]
) -> float:
    """Raw expert score of one disease; -inf when a demographic excludes it."""
    overlap = set(pos) & set(neg)
    if overlap:
        raise ValueError(f"findings in both pos and neg: {sorted(overlap)}")
    score = 0.0
    for fid in sorted(pos):
        q = frequency(kb, disease_id, fid)
        if q == 0.0 and kb.finding(fid).kind == DEMOGRAPHIC:
            return -math.inf
        score += math.log(SMOOTHING_EPS + q)
    for fid in sorted(neg):
        q = frequency(kb, disease_id, fid)
        score += math.log(SMOOTHING_EPS + 1.0 - q)
    return score


def softmax_normalize(scores: list[float]) -> list[float]:
    """Softmax with -inf mapping to probability 0; needs one finite score."""
    if not scores:
        raise ValueError("no scores to normalize")
    for s in scores:
        if math.isnan(s) or s == math.inf:
            raise ValueError(f"scores must be finite or -inf, got {s}")
    finite = [s for s in scores if s != -math.inf]
    if not finite:
        raise ValueError("all scores are -inf")
    m = max(finite)
    weights = [0.0 if s == -math.inf else math.exp(s - m) for s in scores]
    total = sum(weights)
    return [w / total for w in weights]


def expert_inference(
    kb: KnowledgeBase,
    pos: set[str] | frozenset[str],
    neg: set[str] | frozenset[str],
    k: int = DEFAULT_DDX_TOP_K,
) -> DifferentialDiagnosis:
    """Score every disease and keep the k best finite ones, renormalized.

    The softmax runs over the retained raw scores only, so the reported
    probabilities are relative weights within the short list.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scored = [(d.id, score_disease(kb, d.id, pos, neg)) for d in kb.diseases]
    finite = [(did, s) for did, s in scored if s != -math.inf]
    if not finite:
        raise ValueError("all diseases excluded: empty differential")
    finite.sort(key=lambda t: (-t[1], t[0]))
    kept = finite[:k]
    probs = softmax_normalize([s for _, s in kept])
    # A retained score hundreds of nats below the best underflows to exactly
    # 0 in the softmax; such entries carry no differential mass and are dropped.
    order = sorted((i for i in range(len(kept)) if probs[i] > 0.0), key=lambda i: (-probs[i], kept[i][0]))
    return DifferentialDiagnosis(
        entries=tuple((kept[i][0], probs[i]) for i in order),
        raw_scores=tuple(kept[i][1] for i in order),
    )
