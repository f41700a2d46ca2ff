import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraudnetsim.errors import DegenerateInputError
from fraudnetsim.featurize import (
    FEATURE_NAMES,
    FRAUD,
    NONFRAUD,
    UNLABELED,
    _row_summaries,
    compute_features,
    fraud_score_features,
    neighborhood_features,
    normalize_or_zero,
    normalize_signed_unit,
    quartile_summary,
)
from fraudnetsim.network import BipartiteGraph, birank, neighborhood, toy_graph


def brute_midmean(values):
    # order statistics strictly inside the quartile positions, plus both interpolated quartiles
    x = sorted(values)
    n = len(x)
    q1 = float(np.percentile(x, 25))
    q3 = float(np.percentile(x, 75))
    inner = [x[i] for i in range(n) if (n - 1) * 0.25 < i < (n - 1) * 0.75]
    return (sum(inner) + q1 + q3) / (len(inner) + 2)


class TestQuartiles:
    def test_constant(self):
        assert quartile_summary([0.2, 0.2, 0.2]) == pytest.approx((0.2, 0.2, 0.2))

    def test_one_to_eight(self):
        q1, med, mid = quartile_summary(range(1, 9))
        assert (q1, med) == pytest.approx((2.75, 4.5))
        assert mid == pytest.approx(4.5)
        assert mid == pytest.approx(brute_midmean(range(1, 9)))

    def test_empty(self):
        assert quartile_summary([]) == (0.0, 0.0, 0.0)

    def test_singleton(self):
        assert quartile_summary([3.0]) == pytest.approx((3.0, 3.0, 3.0))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
    def test_against_numpy_and_brute_force(self, values):
        q1, med, mid = quartile_summary(values)
        assert q1 == pytest.approx(np.percentile(values, 25), abs=1e-9)
        assert med == pytest.approx(np.median(values), abs=1e-9)
        assert mid == pytest.approx(brute_midmean(values), abs=1e-9)
        assert min(values) - 1e-9 <= mid <= max(values) + 1e-9

    def test_vectorised_rows_match_scalar(self):
        rng = np.random.default_rng(0)
        groups = [rng.normal(size=k) for k in (0, 1, 2, 5, 9, 0, 13)]
        indptr = np.concatenate([[0], np.cumsum([len(g) for g in groups])])
        flat = np.concatenate([np.sort(g) for g in groups])
        out = _row_summaries(flat, indptr)
        for i, g in enumerate(groups):
            assert out[:, i] == pytest.approx(quartile_summary(g))


class TestNormalize:
    def test_examples(self):
        assert list(normalize_signed_unit([2, 4, 6])) == [-1.0, 0.0, 1.0]
        assert list(normalize_signed_unit([0, 10])) == [-1.0, 1.0]

    def test_constant_rejected(self):
        with pytest.raises(DegenerateInputError):
            normalize_signed_unit([5, 5, 5])
        with pytest.raises(DegenerateInputError):
            normalize_signed_unit([])
        assert list(normalize_or_zero([5, 5])) == [0.0, 0.0]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50).filter(lambda v: max(v) - min(v) > 1e-3))
    def test_properties(self, values):
        z = normalize_signed_unit(values)
        assert z.min() == pytest.approx(-1.0) and z.max() == pytest.approx(1.0)
        assert np.allclose(normalize_signed_unit(z), z, atol=1e-9)
        order = np.argsort(values, kind="stable")
        assert np.all(np.diff(z[order]) >= -1e-12)


class TestNeighborhoodFeatures:
    def test_toy_c7(self):
        g, fraud = toy_graph()
        labels = np.where(fraud, FRAUD, NONFRAUD)
        f = neighborhood_features(g, labels, 6)
        assert f["n1.size"] == 2 and f["n2.size"] == 2
        assert f["n2.ratioFraud"] == 1.0 and f["n2.ratioNonFraud"] == 0.0
        assert f["n2.binFraud"] is True

    def test_toy_c5_by_enumeration(self):
        g, fraud = toy_graph()
        labels = np.where(fraud, FRAUD, NONFRAUD)
        n2 = neighborhood(g, 4, 2)
        f = neighborhood_features(g, labels, 4)
        assert f["n2.size"] == len(n2)
        assert f["n2.ratioFraud"] == pytest.approx(sum(fraud[j] for j in n2) / len(n2))

    def test_unlabeled_neighbours_excluded_from_ratios(self):
        g, fraud = toy_graph()
        labels = np.full(7, UNLABELED)
        labels[5] = FRAUD
        f = neighborhood_features(g, labels, 4)
        assert f["n2.ratioFraud"] + f["n2.ratioNonFraud"] < 1
        assert f["n2.ratioFraud"] == pytest.approx(1 / f["n2.size"])

    def test_isolated_claim_all_zero(self):
        g = BipartiteGraph(np.array([[1.0, 1.0, 0.0]]))
        scores = birank(g, np.array([1.0, 0.0, 0.0]))
        row = compute_features(g, np.array([FRAUD, NONFRAUD, UNLABELED]), scores, rows=[2]).iloc[0]
        assert (row == 0).all()

    def test_column_names_and_ratio_bounds(self):
        rng = np.random.default_rng(2)
        g = BipartiteGraph((rng.random((30, 80)) < 0.05).astype(float))
        labels = rng.choice([UNLABELED, NONFRAUD, FRAUD], size=80)
        scores = birank(g, (labels == FRAUD).astype(float))
        feats = compute_features(g, labels, scores)
        assert tuple(feats.columns) == FEATURE_NAMES
        assert (feats["n2.ratioFraud"] + feats["n2.ratioNonFraud"] <= 1 + 1e-12).all()
        assert ((feats["n2.ratioFraud"] > 0) == (feats["n2.binFraud"] == 1)).all()
        assert np.array_equal(feats["n1.size"], g.claim_degree)

    def test_score_features_brute_force(self):
        g, fraud = toy_graph()
        scores = birank(g, fraud.astype(float))
        for c in range(7):
            f = fraud_score_features(g, scores, c)
            n1 = sorted(neighborhood(g, c, 1))
            n2 = sorted(neighborhood(g, c, 2))
            assert f["scores0"] == scores.claim_scores[c]
            assert (f["n1.q1"], f["n1.med"], f["n1.midmean"]) == pytest.approx(
                quartile_summary(scores.party_scores[n1]))
            assert (f["n2.q1"], f["n2.med"], f["n2.midmean"]) == pytest.approx(
                quartile_summary(scores.claim_scores[n2]))
