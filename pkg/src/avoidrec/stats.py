"""Cumulative, time-bucketed exposure and avoidance statistics.

The impression log is folded into a sequence of snapshots, one per bucket
boundary.  A snapshot at boundary ``b`` counts only records with
``time < b``: the total number of impression records seen (``n_impressions``),
and per article how often it was shown (``exposures``) and clicked
(``clicks``).  From those counters two ratios are derived per article:

* exposure per impression: ``exposures / n_impressions`` -- how broadly
  the article has been shown so far;
* avoidance: ``1 - clicks / exposures`` -- the fraction of showings that
  did not convert (1 means never clicked, 0 means always clicked).

Counters are cumulative from the start of the log, never windowed, and
per-article counters are stored sparsely (only articles seen so far).
Snapshots are immutable once built and safe to share across threads.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass, field

from .corpus import ImpressionLog

STATS_SCHEMA_VERSION = "stats-v1"

# Sentinel news_id for the per-bucket global row in CSV exports; its
# exposures column carries the bucket's total impression count.
GLOBAL_ROW_ID = ""


@dataclass(frozen=True)
class StatsSnapshot:
    """Counters aggregated over all records strictly before boundary ``t``."""

    t: int
    n_impressions: int
    exposures: dict[str, int] = field(default_factory=dict)
    clicks: dict[str, int] = field(default_factory=dict)
    first_seen: dict[str, int] = field(default_factory=dict)

    def max_clicks(self) -> int:
        return max(self.clicks.values(), default=0)


ZERO_SNAPSHOT = StatsSnapshot(t=0, n_impressions=0)


@dataclass(frozen=True)
class BucketTimeline:
    bucket_width: int
    origin: int
    buckets: list[StatsSnapshot]

    def boundaries(self):
        return [snap.t for snap in self.buckets]


def build_timeline(log: ImpressionLog, bucket_width: int) -> BucketTimeline:
    """Fold a time-sorted log into per-boundary snapshots.

    Boundaries run at ``origin + k * bucket_width`` for ``k >= 1`` up to
    one full width past the last record, so every record lands strictly
    before at least one boundary.  A record contributes to all snapshots
    whose boundary lies strictly after its time.
    """
    if bucket_width <= 0:
        raise ValueError("bucket_width must be positive")
    records = list(log)
    for prev, cur in zip(records, records[1:]):
        if cur.time < prev.time:
            raise ValueError("impression log is not sorted by time")
    if not records:
        return BucketTimeline(bucket_width, 0, [])

    origin = records[0].time
    last = records[-1].time
    n_buckets = (last - origin) // bucket_width + 1

    n_impressions = 0
    exposures: dict[str, int] = {}
    clicks: dict[str, int] = {}
    first_seen: dict[str, int] = {}

    buckets = []
    rec_iter = iter(records)
    pending = next(rec_iter, None)
    for k in range(1, n_buckets + 1):
        boundary = origin + k * bucket_width
        while pending is not None and pending.time < boundary:
            n_impressions += 1
            for news_id, label in pending.shown:
                exposures[news_id] = exposures.get(news_id, 0) + 1
                if label:
                    clicks[news_id] = clicks.get(news_id, 0) + 1
                if news_id not in first_seen:
                    first_seen[news_id] = pending.time
            pending = next(rec_iter, None)
        buckets.append(StatsSnapshot(
            t=boundary,
            n_impressions=n_impressions,
            exposures=dict(exposures),
            clicks=dict(clicks),
            first_seen=dict(first_seen),
        ))
    assert pending is None, "record past the final boundary"
    return BucketTimeline(bucket_width, origin, buckets)


def epi(snapshot: StatsSnapshot, news_id: str) -> float:
    """Exposure-per-impression ratio in [0, 1]; 0 when nothing was recorded."""
    if snapshot.n_impressions == 0:
        return 0.0
    return snapshot.exposures.get(news_id, 0) / snapshot.n_impressions


def avoidance(snapshot: StatsSnapshot, news_id: str) -> float:
    """Share of exposures that did not convert, in [0, 1].

    An article with no exposures yet counts as totally avoided (1.0),
    which places cold articles in the low-exposure / high-avoidance
    corner of the engagement grid.
    """
    n_exp = snapshot.exposures.get(news_id, 0)
    if n_exp == 0:
        return 1.0
    return 1.0 - snapshot.clicks.get(news_id, 0) / n_exp


def snapshot_at(timeline: BucketTimeline, t: int) -> StatsSnapshot:
    """Snapshot with the largest boundary <= t (all-zero before the first).

    Because a snapshot at boundary ``b`` excludes records at times in
    ``[b, t]``, the result never leaks information from ``t`` itself:
    it is safe to use for features of an impression happening at ``t``.
    """
    buckets = timeline.buckets
    idx = bisect_right(buckets, t, key=lambda snap: snap.t) - 1
    if idx < 0:
        return ZERO_SNAPSHOT
    return buckets[idx]


def export_snapshot_rows(snapshot: StatsSnapshot, normalized_clicks: bool = False):
    """Rows for the CSV export schema.

    The first row per bucket is a global one (empty news id) whose
    exposures column holds the bucket's impression total.  With
    ``normalized_clicks`` an extra column scales click counts to [0, 1]
    by the bucket's maximum.
    """
    header = ["t", "news_id", "n_E", "n_clk", "epi", "avoidance"]
    if normalized_clicks:
        header = header + ["clicks_norm"]
    yield header
    global_row = [snapshot.t, GLOBAL_ROW_ID, snapshot.n_impressions, "", "", ""]
    if normalized_clicks:
        global_row.append("")
    yield global_row
    max_clk = snapshot.max_clicks()
    for news_id in sorted(snapshot.exposures):
        row = [
            snapshot.t,
            news_id,
            snapshot.exposures[news_id],
            snapshot.clicks.get(news_id, 0),
            repr(epi(snapshot, news_id)),
            repr(avoidance(snapshot, news_id)),
        ]
        if normalized_clicks:
            row.append(repr(snapshot.clicks.get(news_id, 0) / max_clk) if max_clk else "0.0")
        yield row


def write_snapshot_csv(snapshot: StatsSnapshot, path, normalized_clicks: bool = False):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema: {STATS_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        for row in export_snapshot_rows(snapshot, normalized_clicks=normalized_clicks):
            writer.writerow(row)
