from __future__ import annotations

from collections import Counter
from typing import Optional, Sequence

import numpy as np

from .labelspace import LabelCatalog, prediction_from_probs
from .types import MemberPredictionSet, Prediction, ProbabilityVector, VoteOutcome


def probabilistic_average(
    pset: MemberPredictionSet,
    weights: Optional[Sequence[float]] = None,
) -> ProbabilityVector:
    """Weighted elementwise mean of the members' vectors (uniform by default)."""
    probs = pset.matrix()
    n = probs.shape[0]
    if weights is None:
        avg = probs.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape[0] != n:
            raise ValueError(f"Expected {n} weights, got {w.shape[0]}")
        if np.any(w < 0):
            raise ValueError(f"Member weights must be non-negative, got {w.tolist()}")
        total = w.sum()
        if not total > 0:
            raise ValueError("Member weights must sum to a positive value")
        avg = (w[:, None] * probs).sum(axis=0) / total

    s = avg.sum()
    if s > 0:
        avg = avg / s
    return avg


def member_votes(pset: MemberPredictionSet) -> list[int]:
    """Each member's own argmax (lowest index on ties)."""
    return [int(np.argmax(p)) for p in pset.matrix()]


def majority_vote(labels: Sequence[int]) -> VoteOutcome:
    if len(labels) == 0:
        raise ValueError("majority_vote needs at least one label")
    counts = Counter(int(x) for x in labels)
    cls, votes = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    if 2 * votes > len(labels):
        return VoteOutcome.decision(cls)
    return VoteOutcome.no_majority()


def plurality_vote(labels: Sequence[int]) -> VoteOutcome:
    if len(labels) == 0:
        raise ValueError("plurality_vote needs at least one label")
    counts = Counter(int(x) for x in labels)
    top = max(counts.values())
    modal = sorted(c for c, v in counts.items() if v == top)
    if len(modal) == 1:
        return VoteOutcome.decision(modal[0])
    return VoteOutcome.tie(modal)


def ensemble_predict(
    pset: MemberPredictionSet,
    catalog: Optional[LabelCatalog] = None,
    weights: Optional[Sequence[float]] = None,
) -> Prediction:
    return prediction_from_probs(probabilistic_average(pset, weights), catalog)
