"""Per-impression ranking metrics and dataset-level evaluation.

AUC is the probability that a uniformly random positive outranks a
uniformly random negative, with ties worth half; it is computed from
tie-averaged ranks.  MRR and nDCG order candidates by descending score
with ties broken by the original candidate index (stable), which keeps
every metric reproducible.  Impressions that cannot support a metric
(no positive, or single-class for AUC) are excluded from that metric's
mean rather than zero-filled.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .features import impression_features


@dataclass
class RankedImpression:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError(
                f"scores {self.scores.shape} and labels {self.labels.shape} must be equal 1-D")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")


def _tie_averaged_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks in ascending score order; tied scores share the mean rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc(impression: RankedImpression):
    """Rank-sum AUC with half-credit for ties; None if single-class."""
    pos = impression.labels == 1
    n_pos = int(pos.sum())
    n_neg = len(impression.labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _tie_averaged_ranks(impression.scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _descending_order(scores: np.ndarray) -> np.ndarray:
    # Stable descending sort: ties keep the original candidate order.
    return np.argsort(-scores, kind="stable")


def mrr(impression: RankedImpression):
    """Mean reciprocal 1-based rank over the positives; None if no positive."""
    if not (impression.labels == 1).any():
        return None
    order = _descending_order(impression.scores)
    ranked_labels = impression.labels[order]
    ranks = np.flatnonzero(ranked_labels == 1) + 1
    return float(np.mean(1.0 / ranks))


def ndcg_at_k(impression: RankedImpression, k: int):
    """Normalized discounted cumulative gain over the top k; None if no positive."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not (impression.labels == 1).any():
        return None
    order = _descending_order(impression.scores)
    gains = (2.0 ** impression.labels - 1.0)
    discounts = 1.0 / np.log2(np.arange(2, len(order) + 2))
    dcg = float((gains[order] * discounts)[:k].sum())
    ideal = float((np.sort(gains)[::-1] * discounts)[:k].sum())
    return dcg / ideal


@dataclass
class EvalReport:
    metrics: dict[str, float]
    n_impressions: int
    n_scored: int
    n_skipped_missing: int
    excluded: dict[str, int]
    config_fingerprint: str
    per_impression: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "metrics": self.metrics,
            "n_impressions": self.n_impressions,
            "n_scored": self.n_scored,
            "n_skipped_missing": self.n_skipped_missing,
            "excluded": self.excluded,
            "config_fingerprint": self.config_fingerprint,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_per_impression_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["impression_id", "auc", "mrr", "ndcg5", "ndcg10"])
            for row in self.per_impression:
                writer.writerow([
                    row["impression_id"],
                    "" if row["auc"] is None else repr(row["auc"]),
                    "" if row["mrr"] is None else repr(row["mrr"]),
                    "" if row["ndcg5"] is None else repr(row["ndcg5"]),
                    "" if row["ndcg10"] is None else repr(row["ndcg10"]),
                ])


def config_fingerprint(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def score_log_impression(model, catalog, timeline, record, mode="full"):
    """Scores + labels for one log record, or None if a candidate is unknown."""
    candidate_ids = [news_id for news_id, _ in record.shown]
    if any(news_id not in catalog for news_id in candidate_ids):
        return None
    history = [catalog.get(news_id) for news_id in record.history]
    history = [a for a in history if a is not None]
    feats = impression_features(
        timeline, record.time,
        [a.news_id for a in history] + candidate_ids,
        model.config.grid_d, catalog)
    candidates = [catalog.get(news_id) for news_id in candidate_ids]
    tensors = model.score_impression(history, candidates, feats, mode=mode)
    scores = np.array([float(t.data.reshape(())) for t in tensors], dtype=np.float64)
    labels = np.array([label for _, label in record.shown], dtype=np.int64)
    return RankedImpression(scores, labels)


def evaluate(model, test_log, timeline, catalog, mode="full",
             config_dict=None) -> EvalReport:
    """Mean metrics over all scorable impressions of a log."""
    metric_sums = {"auc": 0.0, "mrr": 0.0, "ndcg5": 0.0, "ndcg10": 0.0}
    metric_counts = {name: 0 for name in metric_sums}
    per_impression = []
    n_skipped = 0
    n_scored = 0
    for record in test_log:
        ranked = score_log_impression(model, catalog, timeline, record, mode=mode)
        if ranked is None:
            n_skipped += 1
            continue
        n_scored += 1
        values = {
            "auc": auc(ranked),
            "mrr": mrr(ranked),
            "ndcg5": ndcg_at_k(ranked, 5),
            "ndcg10": ndcg_at_k(ranked, 10),
        }
        for name, value in values.items():
            if value is not None:
                metric_sums[name] += value
                metric_counts[name] += 1
        per_impression.append({"impression_id": record.impression_id, **values})
    means = {name: (metric_sums[name] / metric_counts[name] if metric_counts[name] else math.nan)
             for name in metric_sums}
    excluded = {name: n_scored - metric_counts[name] for name in metric_sums}
    return EvalReport(
        metrics=means,
        n_impressions=len(test_log),
        n_scored=n_scored,
        n_skipped_missing=n_skipped,
        excluded=excluded,
        config_fingerprint=config_fingerprint(config_dict or {}),
        per_impression=per_impression,
    )
