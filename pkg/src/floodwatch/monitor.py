"""Bucketed match-count time series and the event-onset trigger.

Counting needs no post content beyond the text match, so a monitoring
deployment can watch many (country, language) series cheaply. The trigger
compares each bucket against the mean of the preceding baseline window and
fires at the first bucket where both the growth ratio and an absolute
minimum count are exceeded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Post, TimeWindow, format_utc
from .lexicon import Query, match_text, normalize, tokenize

DAY_SECONDS = 86400


class MonitorError(Exception):
    pass


@dataclass(frozen=True)
class CountSeries:
    """Match counts per bucket. Bucket i covers [origin + i*w, origin + (i+1)*w).

    `origin` is aligned to the bucket grid anchored at the Unix epoch, which
    for daily buckets means UTC midnight. `last_truncated` flags a final
    bucket cut short by the window end.
    """

    bucket_width: int
    origin: int
    counts: tuple[int, ...]
    last_truncated: bool = False

    def __post_init__(self):
        if self.bucket_width <= 0:
            raise MonitorError("bucket width must be positive")
        if len(self.counts) < 1:
            raise MonitorError("series needs at least one bucket")
        if any(c < 0 for c in self.counts):
            raise MonitorError("counts must be non-negative")
        if self.origin % self.bucket_width != 0:
            raise MonitorError("origin must sit on the bucket grid")

    def bucket_start(self, index: int) -> int:
        return self.origin + index * self.bucket_width

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as out:
            writer = csv.writer(out)
            writer.writerow(["bucket_start", "count"])
            for i, count in enumerate(self.counts):
                writer.writerow([format_utc(self.bucket_start(i)), count])


@dataclass(frozen=True)
class TriggerConfig:
    baseline_window: int = 7
    ratio_threshold: float = 3.0
    min_count: int = 100

    def __post_init__(self):
        if self.baseline_window < 1:
            raise MonitorError("baseline window must be >= 1")
        if self.ratio_threshold <= 1.0:
            raise MonitorError("ratio threshold must be > 1")
        if self.min_count < 0:
            raise MonitorError("min count must be >= 0")


@dataclass(frozen=True)
class TriggerDecision:
    fired: bool
    bucket_index: int | None
    observed: int
    baseline_mean: float
    ratio: float
    config: TriggerConfig

    def to_dict(self) -> dict:
        return {
            "fired": self.fired,
            "bucket_index": self.bucket_index,
            "observed": self.observed,
            "baseline_mean": self.baseline_mean,
            "ratio": self.ratio,
            "config": {
                "baseline_window": self.config.baseline_window,
                "ratio_threshold": self.config.ratio_threshold,
                "min_count": self.config.min_count,
            },
        }


def _matcher(query: Query):
    # Precompute token needles once; per-post matching is the hot path.
    if query.mode == "token":
        needles = [tuple(tokenize(t)) for t in query.terms]

        def matches(text: str) -> bool:
            tokens = tokenize(normalize(text))
            for needle in needles:
                n = len(needle)
                if n and any(tuple(tokens[i:i + n]) == needle
                             for i in range(len(tokens) - n + 1)):
                    return True
            return False
        return matches
    return lambda text: match_text(query, text)


def count_series(posts: Iterable[Post], query: Query | Sequence[Query],
                 width: int, window: TimeWindow) -> CountSeries:
    """Bucket counts of matching posts (retweets included) over the window.

    Accepts one query or several (one per language dictionary); a post
    counts once if any query matches. The bucket grid is epoch-anchored,
    so the first bucket may start before window.start; only posts inside
    the window are counted either way.
    """
    origin = (window.start // width) * width
    n_buckets = -((window.end - origin) // -width)    # ceil division
    last_truncated = (window.end - origin) % width != 0
    counts = [0] * n_buckets

    queries = [query] if isinstance(query, Query) else list(query)
    matchers = [_matcher(q) for q in queries]

    for post in posts:
        if not window.contains(post.created_at):
            continue
        if any(m(post.text) for m in matchers):
            counts[(post.created_at - origin) // width] += 1
    return CountSeries(bucket_width=width, origin=origin, counts=tuple(counts),
                       last_truncated=last_truncated)


def detect_trigger(series: CountSeries, config: TriggerConfig = TriggerConfig()) -> TriggerDecision:
    """First-crossing growth trigger over a count series.

    Evaluates buckets i >= B in order with baseline mean over the previous B
    buckets; fires at the first i where counts[i] >= min_count and
    counts[i] / max(baseline_mean, 1) >= ratio_threshold. The non-fired
    decision reports the maximum ratio seen.
    """
    b = config.baseline_window
    counts = series.counts
    if len(counts) < b + 1:
        raise MonitorError(f"series of {len(counts)} buckets is shorter than "
                           f"baseline window {b} + 1")

    best_ratio = 0.0
    best = (None, 0, 0.0)   # bucket_index, observed, baseline_mean at max ratio
    for i in range(b, len(counts)):
        baseline_mean = sum(counts[i - b:i]) / b
        ratio = counts[i] / max(baseline_mean, 1.0)
        if counts[i] >= config.min_count and ratio >= config.ratio_threshold:
            return TriggerDecision(fired=True, bucket_index=i, observed=counts[i],
                                   baseline_mean=baseline_mean, ratio=ratio,
                                   config=config)
        if ratio > best_ratio:
            best_ratio = ratio
            best = (i, counts[i], baseline_mean)
    index, observed, baseline_mean = best
    return TriggerDecision(fired=False, bucket_index=None, observed=observed,
                           baseline_mean=baseline_mean, ratio=best_ratio,
                           config=config)
