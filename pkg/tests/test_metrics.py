import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avoidrec.corpus import ImpressionLog, ImpressionRecord
from avoidrec.metrics import (RankedImpression, auc, evaluate, mrr, ndcg_at_k)


def imp(scores, labels):
    return RankedImpression(np.asarray(scores, dtype=float),
                            np.asarray(labels, dtype=int))


# -- independent oracles ------------------------------------------------------

def brute_force_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    if not pos or not neg:
        return None
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_force_mrr(scores, labels):
    if 1 not in labels:
        return None
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    rr = [1.0 / (rank + 1) for rank, i in enumerate(order) if labels[i] == 1]
    return sum(rr) / len(rr)


def brute_force_ndcg(scores, labels, k):
    if 1 not in labels:
        return None
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    dcg = sum((2 ** labels[i] - 1) / math.log2(rank + 2)
              for rank, i in enumerate(order[:k]))
    ideal_labels = sorted(labels, reverse=True)
    idcg = sum((2 ** l - 1) / math.log2(rank + 2)
               for rank, l in enumerate(ideal_labels[:k]))
    return dcg / idcg


class TestAuc:
    def test_perfect_order(self):
        assert auc(imp([0.9, 0.1], [1, 0])) == 1.0

    def test_all_ties_half(self):
        assert auc(imp([0.5, 0.5], [1, 0])) == 0.5

    def test_worst_order(self):
        assert auc(imp([0.2, 0.5, 0.4], [1, 0, 0])) == 0.0

    def test_single_class_excluded(self):
        assert auc(imp([0.2, 0.5], [1, 1])) is None
        assert auc(imp([0.2, 0.5], [0, 0])) is None

    def test_matches_brute_force_on_random_impressions(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 21))
            scores = rng.choice([0.1, 0.25, 0.5, 0.9], size=n)  # force ties
            labels = rng.integers(0, 2, size=n)
            mine = auc(imp(scores, labels))
            oracle = brute_force_auc(list(scores), list(labels))
            if oracle is None:
                assert mine is None
            else:
                assert mine == pytest.approx(oracle, abs=1e-9)


class TestMrr:
    def test_positive_first(self):
        assert mrr(imp([0.9, 0.1], [1, 0])) == 1.0

    def test_positive_second(self):
        assert mrr(imp([0.1, 0.9], [1, 0])) == 0.5

    def test_two_positives_ranks_one_and_three(self):
        value = mrr(imp([0.9, 0.5, 0.4], [1, 0, 1]))
        assert value == pytest.approx((1.0 + 1.0 / 3.0) / 2.0)

    def test_no_positive_excluded(self):
        assert mrr(imp([0.9, 0.1], [0, 0])) is None

    def test_tie_break_is_stable_by_index(self):
        # equal scores: the earlier candidate wins the better rank
        assert mrr(imp([0.5, 0.5], [0, 1])) == 0.5
        assert mrr(imp([0.5, 0.5], [1, 0])) == 1.0


class TestNdcg:
    def test_perfect_ranking_is_one(self):
        for k in (1, 2, 5, 10):
            assert ndcg_at_k(imp([0.9, 0.8, 0.1], [1, 1, 0]), k) == pytest.approx(1.0)

    def test_single_positive_rank_two(self):
        value = ndcg_at_k(imp([0.9, 0.8], [0, 1]), 5)
        assert value == pytest.approx(1.0 / math.log2(3.0))

    def test_k_beyond_length_equals_full_list(self):
        ranked = imp([0.3, 0.9, 0.5], [1, 0, 1])
        assert ndcg_at_k(ranked, 50) == ndcg_at_k(ranked, 3)

    def test_no_positive_excluded(self):
        assert ndcg_at_k(imp([0.9], [0]), 5) is None

    def test_bad_k(self):
        with pytest.raises(ValueError):
            ndcg_at_k(imp([0.9], [1]), 0)


def test_all_metrics_match_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        scores = np.round(rng.random(size=n), 2)  # rounded to produce ties
        labels = rng.integers(0, 2, size=n)
        ranked = imp(scores, labels)
        cases = [
            (auc(ranked), brute_force_auc(list(scores), list(labels))),
            (mrr(ranked), brute_force_mrr(list(scores), list(labels))),
            (ndcg_at_k(ranked, 5), brute_force_ndcg(list(scores), list(labels), 5)),
            (ndcg_at_k(ranked, 10), brute_force_ndcg(list(scores), list(labels), 10)),
        ]
        for mine, oracle in cases:
            if oracle is None:
                assert mine is None
            else:
                assert mine == pytest.approx(oracle, abs=1e-9)


@given(st.lists(st.tuples(st.integers(-320, 320), st.integers(0, 1)),
                min_size=2, max_size=12),
       st.floats(0.1, 3.0), st.floats(-2, 2))
@settings(max_examples=150, deadline=None)
def test_monotone_transform_invariance(pairs, scale_factor, shift):
    # grid-valued scores keep distinct values distinct under the transform
    scores = np.array([s / 64.0 for s, _ in pairs])
    labels = np.array([l for _, l in pairs])
    ranked = imp(scores, labels)
    transformed = imp(scores * scale_factor + shift, labels)
    for metric in (auc, mrr, lambda r: ndcg_at_k(r, 5)):
        a, b = metric(ranked), metric(transformed)
        if a is None:
            assert b is None
        else:
            assert b == pytest.approx(a, abs=1e-9)


# -- dataset-level evaluation -------------------------------------------------

class _StubConfig:
    grid_d = 5


class _StubModel:
    """Deterministic scorer for evaluate(): score = f(news_id)."""

    config = _StubConfig()

    def __init__(self, fn):
        self.fn = fn

    def score_impression(self, history, candidates, feats, mode="full"):
        import avoidrec.autodiff as ad
        return [ad.constant([[self.fn(a.news_id)]], dtype=np.float64)
                for a in candidates]


class _StubCatalog:
    def __init__(self, ids):
        from avoidrec.corpus import NewsArticle
        self.articles = {i: NewsArticle(i, 0, 0, [0]) for i in ids}

    def __contains__(self, news_id):
        return news_id in self.articles

    def get(self, news_id):
        return self.articles.get(news_id)


def _log(rows):
    records = [ImpressionRecord(str(i), "U", 1000 + i, [], shown)
               for i, shown in enumerate(rows)]
    return ImpressionLog(records)


def _timeline():
    from avoidrec.stats import build_timeline
    return build_timeline(ImpressionLog([]), 3600)


class TestEvaluate:
    def test_constant_model_gives_half_auc(self):
        log = _log([[("A", 1), ("B", 0)], [("A", 0), ("B", 1)]])
        catalog = _StubCatalog(["A", "B"])
        report = evaluate(_StubModel(lambda _: 0.5), log, _timeline(), catalog)
        assert report.metrics["auc"] == 0.5

    def test_oracle_model_maxes_all_metrics(self):
        log = _log([[("P", 1), ("N", 0)], [("N", 0), ("P", 1)]])
        catalog = _StubCatalog(["P", "N"])
        report = evaluate(_StubModel(lambda nid: 1.0 if nid == "P" else 0.0),
                          log, _timeline(), catalog)
        for name in ("auc", "mrr", "ndcg5", "ndcg10"):
            assert report.metrics[name] == 1.0

    def test_missing_candidate_skips_impression(self):
        log = _log([[("A", 1), ("GONE", 0)], [("A", 1), ("B", 0)]])
        catalog = _StubCatalog(["A", "B"])
        report = evaluate(_StubModel(lambda _: 0.1), log, _timeline(), catalog)
        assert report.n_skipped_missing == 1
        assert report.n_scored == 1

    def test_report_means_match_csv_dump(self, tmp_path):
        rng = np.random.default_rng(1)
        rows = []
        for _ in range(30):
            n = int(rng.integers(2, 6))
            rows.append([(f"A{j}", int(rng.integers(0, 2))) for j in range(n)])
        catalog = _StubCatalog([f"A{j}" for j in range(6)])
        scores = {f"A{j}": float(rng.random()) for j in range(6)}
        report = evaluate(_StubModel(lambda nid: scores[nid]), _log(rows),
                          _timeline(), catalog)
        path = tmp_path / "per_imp.csv"
        report.write_per_impression_csv(path)
        with open(path) as fh:
            dumped = list(csv.DictReader(fh))
        for name in ("auc", "mrr", "ndcg5", "ndcg10"):
            values = [float(r[name]) for r in dumped if r[name] != ""]
            if values:
                assert report.metrics[name] == pytest.approx(
                    sum(values) / len(values), abs=1e-12)
            else:
                assert math.isnan(report.metrics[name])
        assert report.excluded["auc"] == sum(1 for r in dumped if r["auc"] == "")
