"""Synthetic news-click corpus generator.

Produces a catalog (news.tsv) and an impression log (behaviors.tsv) whose
click behavior is driven by the engagement grid: at each bucket start the
per-article statistics are frozen, every article is placed in its
(avoidance, exposure-per-impression) cell, and a user's click probability
on a shown article is the base rate times the cell's propensity
multiplier (normalized by the mean multiplier so the base rate stays the
average).  Articles enter the pool on staggered schedules and their
exposure weight decays afterwards, so they wander across grid cells as
buckets pass.  Optional knobs:

* ``affinity_user_fraction`` -- only the first fraction of users follow
  the cell propensities; the rest ignore them (their multiplier is 1).
* ``freshness_boost`` -- a >1 value multiplies everyone's click
  probability on recently surfaced articles, decaying with the article's
  age in buckets.

The first impression lands exactly on the first bucket boundary, so a
timeline built from the emitted log with the same bucket width freezes
statistics at exactly the boundaries this generator used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ImpressionRecord, format_behaviors_line
from .grid import engagement_index

# 2019-11-09 00:00:00 UTC; arbitrary but fixed so outputs are reproducible.
DEFAULT_ORIGIN = 1573257600

_CATEGORIES = ["sports", "finance", "tech", "health", "travel", "food"]
_FILLER_WORDS = [
    "market", "season", "report", "update", "record", "study", "launch",
    "review", "guide", "deal", "rally", "crisis", "debate", "award",
    "match", "plan", "price", "storm", "vote", "trial",
]


@dataclass
class SyntheticSpec:
    n_users: int = 100
    n_articles: int = 60
    n_buckets: int = 16
    grid_d: int = 5
    affinity: list = field(default_factory=list)  # D x D, indexed [av_idx][epi_idx]
    base_click_rate: float = 0.15
    seed: int = 0
    bucket_width: int = 3600
    impressions_per_bucket: int = 30
    n_shown: int = 6
    affinity_user_fraction: float = 1.0
    freshness_boost: float = 1.0
    freshness_halflife_buckets: float = 2.0
    origin: int = DEFAULT_ORIGIN

    def __post_init__(self):
        if not self.affinity:
            self.affinity = [[1.0] * self.grid_d for _ in range(self.grid_d)]
        matrix = np.asarray(self.affinity, dtype=np.float64)
        if matrix.shape != (self.grid_d, self.grid_d):
            raise ValueError(
                f"affinity must be {self.grid_d}x{self.grid_d}, got {matrix.shape}")
        if (matrix < 0).any():
            raise ValueError("affinity propensities must be nonnegative")
        if matrix.max() <= 0:
            raise ValueError("infeasible spec: all cell propensities are zero")
        if not 0 <= self.affinity_user_fraction <= 1:
            raise ValueError("affinity_user_fraction must lie in [0, 1]")
        if not 0 < self.base_click_rate < 1:
            raise ValueError("base_click_rate must lie in (0, 1)")

    @classmethod
    def from_json_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SyntheticArticle:
    news_id: str
    category: str
    title: str


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    articles: list[SyntheticArticle]
    records: list[ImpressionRecord]
    # Parallel to records: per shown slot, (flat cell index, click probability).
    shown_probs: list[list[tuple[int, float]]]
    affinity_users: set[str]


def _make_articles(spec: SyntheticSpec, rng) -> list[SyntheticArticle]:
    articles = []
    for i in range(spec.n_articles):
        category = _CATEGORIES[int(rng.integers(0, len(_CATEGORIES)))]
        n_words = int(rng.integers(3, 7))
        words = [category] + [
            _FILLER_WORDS[int(rng.integers(0, len(_FILLER_WORDS)))] for _ in range(n_words)]
        extra = int(rng.integers(0, 1000))
        articles.append(SyntheticArticle(
            news_id=f"N{i:05d}",
            category=category,
            title=" ".join(words) + f" w{extra:03d}",
        ))
    return articles


def generate(spec: SyntheticSpec) -> SyntheticDataset:
    """Simulate the impression log described by ``spec`` (fully seeded)."""
    rng = np.random.default_rng(spec.seed)
    articles = _make_articles(spec, rng)
    matrix = np.asarray(spec.affinity, dtype=np.float64)
    cell_mult = matrix / matrix.mean() if matrix.mean() > 0 else matrix

    # Staggered entries with decaying exposure weight per article.
    entry_bucket = rng.integers(0, max(1, int(spec.n_buckets * 0.75)), size=spec.n_articles)
    entry_bucket[0] = 0  # the pool is never empty
    decay = rng.uniform(1.5, 4.0, size=spec.n_articles)

    n_affinity = int(round(spec.n_users * spec.affinity_user_fraction))
    users = [f"U{i:04d}" for i in range(spec.n_users)]
    affinity_users = set(users[:n_affinity])
    user_history: dict[str, list[str]] = {u: [] for u in users}

    # Running cumulative counters (record granularity) and their frozen
    # bucket-start copies, which drive the click propensities.
    n_impressions = 0
    exposures = np.zeros(spec.n_articles, dtype=np.int64)
    clicks = np.zeros(spec.n_articles, dtype=np.int64)
    first_seen = np.full(spec.n_articles, -1, dtype=np.int64)

    records = []
    shown_probs = []
    impression_no = 0
    for bucket in range(spec.n_buckets):
        frozen_n_imp = n_impressions
        frozen_exp = exposures.copy()
        frozen_clk = clicks.copy()
        frozen_seen = first_seen.copy()

        frozen_cells = np.empty(spec.n_articles, dtype=np.int64)
        frozen_fresh = np.empty(spec.n_articles, dtype=np.float64)
        bucket_start = spec.origin + bucket * spec.bucket_width
        for a in range(spec.n_articles):
            av = 1.0 if frozen_exp[a] == 0 else 1.0 - frozen_clk[a] / frozen_exp[a]
            epi_val = 0.0 if frozen_n_imp == 0 else frozen_exp[a] / frozen_n_imp
            frozen_cells[a] = engagement_index(av, epi_val, spec.grid_d).i_ue
            if frozen_seen[a] < 0:
                age_buckets = 0.0
            else:
                age_buckets = (bucket_start - frozen_seen[a]) / spec.bucket_width
            frozen_fresh[a] = 1.0 + (spec.freshness_boost - 1.0) * (
                0.5 ** (age_buckets / spec.freshness_halflife_buckets))

        available = np.flatnonzero(entry_bucket <= bucket)
        weights = np.exp(-(bucket - entry_bucket[available]) / decay[available])
        weights = np.maximum(weights, 1e-6)

        offsets = np.sort(rng.integers(0, spec.bucket_width, size=spec.impressions_per_bucket))
        if bucket == 0:
            offsets[0] = 0
        # one impression per user within a bucket when the user pool allows it
        if spec.n_users >= spec.impressions_per_bucket:
            bucket_users = rng.choice(spec.n_users, size=spec.impressions_per_bucket,
                                      replace=False)
        else:
            bucket_users = rng.integers(0, spec.n_users, size=spec.impressions_per_bucket)
        for offset, user_idx in zip(offsets, bucket_users):
            t = bucket_start + int(offset)
            user = users[int(user_idx)]
            n_show = min(spec.n_shown, len(available))
            probs = weights / weights.sum()
            chosen = rng.choice(available, size=n_show, replace=False, p=probs)
            prior_history = list(user_history[user])

            shown = []
            slot_probs = []
            for a in chosen:
                # cell = D * epi_idx + av_idx; affinity is indexed [av_idx][epi_idx]
                av_idx = int(frozen_cells[a]) % spec.grid_d
                epi_idx = int(frozen_cells[a]) // spec.grid_d
                mult = cell_mult[av_idx][epi_idx] if user in affinity_users else 1.0
                p = min(0.95, spec.base_click_rate * mult * frozen_fresh[a])
                label = int(rng.random() < p)
                shown.append((articles[a].news_id, label))
                slot_probs.append((int(frozen_cells[a]), float(p)))
                exposures[a] += 1
                clicks[a] += label
                if first_seen[a] < 0:
                    first_seen[a] = t
                if label:
                    user_history[user].append(articles[a].news_id)

            impression_no += 1
            records.append(ImpressionRecord(
                impression_id=str(impression_no),
                user_id=user,
                time=t,
                history=prior_history,
                shown=shown,
            ))
            shown_probs.append(slot_probs)
            n_impressions += 1

    return SyntheticDataset(spec=spec, articles=articles, records=records,
                            shown_probs=shown_probs, affinity_users=affinity_users)


def write_mind_files(dataset: SyntheticDataset, out_dir):
    """Write news.tsv and behaviors.tsv in the standard tab-separated layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    news_path = out / "news.tsv"
    behaviors_path = out / "behaviors.tsv"
    with open(news_path, "w", encoding="utf-8", newline="\n") as fh:
        for article in dataset.articles:
            abstract = f"about {article.title}"
            fh.write("\t".join([article.news_id, article.category, article.category,
                                article.title, abstract]) + "\n")
    with open(behaviors_path, "w", encoding="utf-8", newline="\n") as fh:
        for record in dataset.records:
            fh.write(format_behaviors_line(record) + "\n")
    return news_path, behaviors_path
