from __future__ import annotations

import math

import numpy as np
import pytest

from uqbench.labelspace import build_accepted_set
from uqbench.types import MemberPredictionSet, UncertaintyRecord
from uqbench.uncertainty import (
    average_probability,
    build_record,
    entropy,
    max_entropy,
    probability_variance,
    rank_by_uncertainty,
)

MEMBERS = ("resnet50", "vgg16", "densenet121", "alexnet", "googlenet")


def committee(column, k=4, cls=0, image_id="img"):
    """Members whose probability for ``cls`` is given by ``column``, rest spread evenly."""
    entries = []
    for member, p in zip(MEMBERS, column):
        v = np.full(k, (1.0 - p) / (k - 1))
        v[cls] = p
        entries.append((member, v))
    return MemberPredictionSet(image_id, tuple(entries))


def test_entropy_reference_values():
    assert entropy(np.array([1.0, 0.0, 0.0])) == 0.0
    assert entropy(np.array([0.5, 0.5])) == pytest.approx(1.0)
    assert entropy(np.full(1000, 1.0 / 1000)) == pytest.approx(9.965784, abs=1e-6)


def test_max_entropy():
    assert max_entropy(1000) == pytest.approx(math.log2(1000))
    assert max_entropy(1) == 0.0
    with pytest.raises(ValueError):
        max_entropy(0)


@pytest.mark.parametrize("vector", [[0.5, 0.6], [1.2, -0.2], [], [np.nan, 1.0]])
def test_entropy_rejects_invalid_vectors(vector):
    with pytest.raises(ValueError):
        entropy(np.array(vector, dtype=np.float64))


def test_entropy_tolerates_small_normalization_error():
    assert entropy(np.array([0.5, 0.5 + 5e-6])) == pytest.approx(1.0, abs=1e-4)


def test_average_and_variance_across_members():
    s = committee([0.9, 0.7, 0.5, 0.3, 0.1])
    assert average_probability(s, 0) == pytest.approx(0.5)
    assert probability_variance(s, 0) == pytest.approx(0.08)
    assert probability_variance(s, 0, ddof=1) == pytest.approx(0.1)


def test_variance_rejects_ddof_without_enough_members():
    s = committee([0.9])
    assert probability_variance(s, 0) == 0.0
    with pytest.raises(ValueError):
        probability_variance(s, 0, ddof=1)


def test_class_out_of_range():
    with pytest.raises(ValueError, match="out of range"):
        average_probability(committee([0.5, 0.5]), 4)


def test_unanimous_confident_committee_has_no_uncertainty():
    s = committee([1.0] * 5)
    rec = build_record(s, "x")
    assert rec.ensemble_class == 0
    assert rec.avg_probability == pytest.approx(1.0)
    assert rec.variance == pytest.approx(0.0)
    assert rec.entropy_bits == pytest.approx(0.0)
    assert rec.ensemble_correct is None


def test_build_record_uses_ensemble_class(catalog):
    rng = np.random.default_rng(3)
    vectors = rng.dirichlet(np.ones(1000) * 0.05, size=5)
    s = MemberPredictionSet("img", tuple(zip(MEMBERS, vectors)))
    avg = vectors.mean(axis=0)
    cls = int(np.argmax(avg))
    accepted = build_accepted_set(catalog, "gt", [cls])

    rec = build_record(s, "gt", catalog=catalog, accepted=accepted)
    assert rec.ensemble_class == cls
    assert rec.ensemble_name == catalog.name(cls)
    assert rec.avg_probability == pytest.approx(avg[cls])
    assert rec.variance == pytest.approx(np.var(vectors[:, cls]))
    assert rec.entropy_bits == pytest.approx(entropy(avg / avg.sum()))
    assert rec.entropy_ratio == pytest.approx(rec.entropy_bits / math.log2(1000))
    assert rec.ensemble_correct is True


def _rec(image_id, avg, h):
    return UncertaintyRecord(image_id, "gt", 0, "c", avg, 0.0, h, h / 10)


def test_rank_by_uncertainty_orders_entropy_then_probability_then_input():
    records = [_rec("a", 0.9, 0.5), _rec("b", 0.4, 2.0), _rec("c", 0.2, 2.0), _rec("d", 0.2, 2.0), _rec("e", 0.5, 1.0)]
    assert [r.image_id for r in rank_by_uncertainty(records)] == ["c", "d", "b", "e", "a"]


def test_worked_example_mean_and_variance():
    s = committee([0.9, 0.8, 1.0, 0.7, 0.6])
    assert average_probability(s, 0) == pytest.approx(0.8, abs=1e-12)
    assert probability_variance(s, 0) == pytest.approx(0.02, abs=1e-12)


def test_two_opposed_members_give_one_bit():
    s = MemberPredictionSet("img", (("resnet50", np.array([1.0, 0.0])), ("vgg16", np.array([0.0, 1.0]))))
    rec = build_record(s, "x")
    assert rec.ensemble_class == 0
    assert rec.avg_probability == pytest.approx(0.5)
    assert rec.variance == pytest.approx(0.25)
    assert rec.entropy_bits == pytest.approx(1.0)


def test_entropy_bounds_and_permutation_invariance_on_random_vectors():
    rng = np.random.default_rng(7)
    upper = math.log2(1000) + 1e-9
    for alpha in rng.choice([0.1, 1.0, 10.0], size=10_000):
        p = rng.dirichlet(np.full(1000, alpha))
        h = entropy(p)
        assert 0.0 <= h <= upper
        assert entropy(rng.permutation(p)) == pytest.approx(h, abs=1e-9)
    assert entropy(np.eye(1000)[17]) == 0.0


def test_metrics_match_mean_and_population_variance_on_random_committees():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        k = int(rng.integers(2, 11))
        n = int(rng.integers(1, 8))
        vectors = rng.dirichlet(np.ones(k), size=n)
        s = MemberPredictionSet("img", tuple((f"m{i}", v) for i, v in enumerate(vectors)))
        c = int(rng.integers(0, k))
        column = [float(v[c]) for v in vectors]
        mean = sum(column) / n
        var = sum((x - mean) ** 2 for x in column) / n
        assert average_probability(s, c) == pytest.approx(mean, abs=1e-12)
        assert probability_variance(s, c) == pytest.approx(var, abs=1e-12)


def test_record_variance_stays_within_feasible_bound():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        k = int(rng.integers(2, 50))
        vectors = rng.dirichlet(np.full(k, rng.choice([0.1, 0.5, 5.0])), size=n)
        rec = build_record(MemberPredictionSet("img", tuple((f"m{i}", v) for i, v in enumerate(vectors))), "x")
        assert 0.0 <= rec.avg_probability <= 1.0
        assert rec.variance <= rec.avg_probability * (1.0 - rec.avg_probability) + 1e-12
        assert rec.variance <= 0.25 + 1e-12
        assert rec.entropy_bits <= math.log2(k) + 1e-9


def test_ranking_of_reference_entropies():
    entropies = {"chainsaw": 2.560379, "lion": 2.781448, "snail": 4.408561, "car": 3.306526, "dam": 0.043793}
    records = [_rec(name, 0.5, h) for name, h in entropies.items()]
    ranked = rank_by_uncertainty(records)
    assert [r.image_id for r in ranked] == ["snail", "car", "lion", "chainsaw", "dam"]
    assert sorted(r.image_id for r in ranked) == sorted(entropies)
