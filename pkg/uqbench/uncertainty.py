"""Ensemble uncertainty: average probability, spread across members and entropy.

All three metrics are computed for one image's committee. Average probability
and variance are taken at the class the ensemble decides on; entropy is taken
on the averaged (predictive) distribution, in bits.
"""

from __future__ import annotations

import math
from typing import Iterable, List, Optional

import numpy as np

from .ensemble import ensemble_predict, probabilistic_average
from .labelspace import AcceptedClassSet, LabelCatalog, is_correct
from .types import MemberPredictionSet, ProbabilityVector, UncertaintyRecord

NORMALIZATION_ATOL = 1e-5


def _class_column(pset: MemberPredictionSet, class_index: int) -> np.ndarray:
    if not 0 <= int(class_index) < pset.num_classes:
        raise ValueError(f"Class index out of range: {class_index} (K={pset.num_classes})")
    return pset.matrix()[:, int(class_index)]


def average_probability(pset: MemberPredictionSet, class_index: int) -> float:
    return float(np.mean(_class_column(pset, class_index)))


def probability_variance(pset: MemberPredictionSet, class_index: int, *, ddof: int = 0) -> float:
    """Population variance across members by default; ``ddof=1`` for the sample variance."""
    column = _class_column(pset, class_index)
    if ddof < 0 or ddof >= column.size:
        raise ValueError(f"ddof={ddof} needs more than {ddof} members, got {column.size}")
    return float(np.var(column, ddof=ddof))


def entropy(p: ProbabilityVector, *, atol: float = NORMALIZATION_ATOL) -> float:
    """Shannon entropy in bits, with 0 * log2(0) = 0."""
    probs = np.asarray(p, dtype=np.float64).ravel()
    if probs.size == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ValueError("Entropy needs a non-empty, finite, non-negative vector")
    total = probs.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"Probability vector is not normalized (sum={total:.8f})")
    nz = probs[probs > 0]
    return max(0.0, float(-(nz * np.log2(nz)).sum()))


def max_entropy(num_classes: int) -> float:
    """Entropy of the uniform distribution over ``num_classes`` classes."""
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    return math.log2(num_classes)


def build_record(
    pset: MemberPredictionSet,
    ground_truth: str,
    *,
    catalog: Optional[LabelCatalog] = None,
    accepted: Optional[AcceptedClassSet] = None,
    weights=None,
    ddof: int = 0,
) -> UncertaintyRecord:
    decision = ensemble_predict(pset, catalog=catalog, weights=weights)
    h = entropy(probabilistic_average(pset, weights))
    h_max = max_entropy(pset.num_classes)
    return UncertaintyRecord(
        image_id=pset.image_id,
        ground_truth=ground_truth,
        ensemble_class=decision.class_index,
        ensemble_name=decision.class_name,
        avg_probability=average_probability(pset, decision.class_index),
        variance=probability_variance(pset, decision.class_index, ddof=ddof),
        entropy_bits=h,
        entropy_ratio=h / h_max if h_max > 0 else 0.0,
        ensemble_correct=is_correct(decision.class_index, accepted) if accepted is not None else None,
    )


def rank_by_uncertainty(records: Iterable[UncertaintyRecord]) -> List[UncertaintyRecord]:
    """Most uncertain first: entropy descending, then avg probability ascending, then input order."""
    return sorted(records, key=lambda r: (-r.entropy_bits, r.avg_probability))
