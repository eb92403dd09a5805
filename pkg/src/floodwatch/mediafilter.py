"""Image filtering: near-duplicate removal, non-photo removal, NSFW slot.

Stages run "quickest first" by cost hint, except dedup which is pinned as
the first stage after hashing: it is the only stage whose outcome depends
on other items, and pinning it makes the final kept set independent of
plugin ordering. Per-item predicates fail open so evidence is never lost
silently; failures are counted in the funnel.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import MediaRecord, Post

logger = logging.getLogger(__name__)

DHASH_ALGORITHM = "dhash-9x8"

PHOTO_CHECK = "photo_check"
NSFW_CHECK = "nsfw_check"
_KIND_TO_STAGE = {PHOTO_CHECK: "non_photo", NSFW_CHECK: "nsfw"}


@dataclass(frozen=True)
class PerceptualHash:
    bits: int
    algorithm: str = DHASH_ALGORITHM


@dataclass(frozen=True)
class FilterVerdict:
    media_id: str
    stage: str                  # duplicate | non_photo | nsfw | passed
    detail: str = ""


@dataclass(frozen=True)
class FilterPlugin:
    """Per-item image predicate with a relative cost hint for ordering."""

    name: str
    kind: str                   # photo_check | nsfw_check
    predicate: Callable         # image -> (keep: bool, confidence: float)
    cost_hint: float = 1.0


@dataclass(frozen=True)
class FilterConfig:
    dedup_threshold: int = 10
    unique_color_min: float = 0.05
    flat_fraction_max: float = 0.60
    near_zero_gradient: float = 2.0

    def __post_init__(self):
        if not 0 <= self.dedup_threshold <= 64:
            raise ValueError("dedup threshold must be in [0, 64]")


def _luma(arr: np.ndarray) -> np.ndarray:
    """Integer ITU-R 601 luma of an RGB uint8 array."""
    a = arr.astype(np.uint32)
    return (299 * a[..., 0] + 587 * a[..., 1] + 114 * a[..., 2]) // 1000


def _to_gray(image) -> np.ndarray:
    if isinstance(image, np.ndarray):
        if image.ndim == 2:
            return image.astype(np.float64)
        return _luma(image).astype(np.float64)
    if image.mode == "L":
        return np.asarray(image, dtype=np.float64)
    return _luma(np.asarray(image.convert("RGB"))).astype(np.float64)


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix mapping n_in cells to n_out equal-width boxes."""
    w = np.zeros((n_out, n_in))
    step = n_in / n_out
    for j in range(n_out):
        lo, hi = j * step, (j + 1) * step
        for i in range(int(lo), min(int(np.ceil(hi)), n_in)):
            w[j, i] = min(hi, i + 1) - max(lo, i)
        w[j] /= step
    return w


def area_resize(gray: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact box (area-average) downsample of a 2D array."""
    rows = _overlap_weights(gray.shape[0], out_h)
    cols = _overlap_weights(gray.shape[1], out_w)
    return rows @ gray @ cols.T


def dhash(image) -> PerceptualHash:
    """64-bit difference hash of an image (PIL image or numpy array).

    Grayscale via integer luma, area-average resize to 9 wide by 8 tall,
    bit (r, c) set iff pixel(r, c) > pixel(r, c+1), packed row-major with
    the first bit most significant.
    """
    # Rounding removes sub-ulp noise from the weight sums; without it a
    # uniform image grows spurious bits in flat regions.
    grid = np.round(area_resize(_to_gray(image), 8, 9), 5)
    bits = 0
    for r in range(8):
        for c in range(8):
            bits = (bits << 1) | int(grid[r, c] > grid[r, c + 1])
    return PerceptualHash(bits=bits)


def hamming(a: PerceptualHash | int, b: PerceptualHash | int) -> int:
    x = a.bits if isinstance(a, PerceptualHash) else a
    y = b.bits if isinstance(b, PerceptualHash) else b
    return (x ^ y).bit_count()


@dataclass
class HashedMedia:
    """A readable media record with its decoded image and hash."""

    record: MediaRecord
    image: object
    phash: PerceptualHash
    created_at: int

    @property
    def media_id(self) -> str:
        return self.record.media_id


def hash_media(records: Sequence[MediaRecord], posts_by_id: Mapping[str, Post],
               threads: int = 1) -> tuple[list[HashedMedia], list[MediaRecord]]:
    """Load and hash all records. Returns (hashed readable, unreadable)."""

    def work(record: MediaRecord):
        img = record.load()
        if img is None:
            return None
        return HashedMedia(record=record, image=img, phash=dhash(img),
                           created_at=posts_by_id[record.post_id].created_at)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, records))
    else:
        results = [work(r) for r in records]

    hashed = [r for r in results if r is not None]
    unreadable = [rec for rec, r in zip(records, results) if r is None]
    return hashed, unreadable


def _dedup_order(items: Sequence[HashedMedia]) -> list[HashedMedia]:
    return sorted(items, key=lambda h: (h.created_at, h.record.post_id, h.media_id))


def dedup(items: Sequence[HashedMedia], threshold: int
          ) -> tuple[list[HashedMedia], list[FilterVerdict]]:
    """Greedy in-order near-duplicate removal.

    Items are visited in (created_at, post id, media id) order; an item
    within `threshold` Hamming bits of an earlier-kept item is marked a
    duplicate of the first such item, so each kept item is the canonical
    representative of everything folded into it.
    """
    kept: list[HashedMedia] = []
    verdicts: list[FilterVerdict] = []
    for item in _dedup_order(items):
        canonical = next((k for k in kept
                          if hamming(k.phash.bits, item.phash.bits) <= threshold), None)
        if canonical is None:
            kept.append(item)
        else:
            verdicts.append(FilterVerdict(media_id=item.media_id, stage="duplicate",
                                          detail=canonical.media_id))
    return kept, verdicts


def is_photo_default(image, config: FilterConfig = FilterConfig()) -> tuple[bool, float]:
    """Model-free photo check on a 64x64 thumbnail.

    Flags non-photo when the unique-color ratio is very low (solid fills,
    flat graphics) or when near-zero gradients dominate (screenshots, large
    flat regions). Confidence is the margin from the nearer threshold.
    """
    from PIL import Image

    if isinstance(image, np.ndarray):
        image = Image.fromarray(image.astype(np.uint8))
    thumb = np.asarray(image.convert("RGB").resize((64, 64), Image.Resampling.NEAREST))
    unique_ratio = np.unique(thumb.reshape(-1, 3), axis=0).shape[0] / 4096.0

    gray = _luma(thumb).astype(np.float64)
    gx = np.abs(np.diff(gray, axis=1))[:-1, :]
    gy = np.abs(np.diff(gray, axis=0))[:, :-1]
    magnitude = gx + gy
    flat_fraction = float(np.mean(magnitude <= config.near_zero_gradient))

    t_color, t_flat = config.unique_color_min, config.flat_fraction_max
    if unique_ratio < t_color or flat_fraction > t_flat:
        margins = []
        if unique_ratio < t_color:
            margins.append((t_color - unique_ratio) / t_color)
        if flat_fraction > t_flat:
            margins.append((flat_fraction - t_flat) / (1.0 - t_flat))
        return False, float(np.clip(max(margins), 0.0, 1.0))
    margin = min((unique_ratio - t_color) / t_color, (t_flat - flat_fraction) / t_flat)
    return True, float(np.clip(margin, 0.0, 1.0))


def nsfw_passthrough(image) -> tuple[bool, float]:
    """Default NSFW slot: no model ships with the artifact, keep everything."""
    return True, 0.5


def default_plugins(config: FilterConfig = FilterConfig()) -> list[FilterPlugin]:
    return [
        FilterPlugin(name="photo_default", kind=PHOTO_CHECK,
                     predicate=lambda img: is_photo_default(img, config), cost_hint=1.0),
        FilterPlugin(name="nsfw_passthrough", kind=NSFW_CHECK,
                     predicate=nsfw_passthrough, cost_hint=2.0),
    ]


PLUGIN_REGISTRY: dict[str, Callable[[FilterConfig], FilterPlugin]] = {
    "photo_default": lambda cfg: FilterPlugin(
        name="photo_default", kind=PHOTO_CHECK,
        predicate=lambda img: is_photo_default(img, cfg), cost_hint=1.0),
    "nsfw_passthrough": lambda cfg: FilterPlugin(
        name="nsfw_passthrough", kind=NSFW_CHECK,
        predicate=nsfw_passthrough, cost_hint=2.0),
}


def plugins_from_names(names: Sequence[str], config: FilterConfig) -> list[FilterPlugin]:
    unknown = [n for n in names if n not in PLUGIN_REGISTRY]
    if unknown:
        raise ValueError(f"unknown media filter plugins: {unknown}")
    return [PLUGIN_REGISTRY[n](config) for n in names]


@dataclass
class StageCount:
    name: str
    input: int
    removed: int
    output: int


@dataclass
class FilterResult:
    kept: list[HashedMedia]
    verdicts: list[FilterVerdict]
    stages: list[StageCount]
    input_total: int
    unreadable: int
    plugin_failures: dict[str, int]
    timings_us: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def passed(self) -> int:
        return len(self.kept)


def run_filter_pipeline(records: Sequence[MediaRecord],
                        posts_by_id: Mapping[str, Post],
                        config: FilterConfig = FilterConfig(),
                        plugins: Sequence[FilterPlugin] | None = None,
                        threads: int = 1) -> FilterResult:
    """Hash, dedup, then apply per-item plugins in ascending cost order.

    Every readable input record ends with exactly one verdict; unreadable
    records are excluded up front and surface only in the funnel counts.
    """
    timings: dict[str, dict[str, int]] = {}

    def clock(media_id: str, stage: str, start_ns: int) -> None:
        timings.setdefault(media_id, {})[stage] = (time.perf_counter_ns() - start_ns) // 1000

    t0 = time.perf_counter_ns()
    hashed, unreadable_records = hash_media(records, posts_by_id, threads=threads)
    hash_us = (time.perf_counter_ns() - t0) // 1000
    per_item = hash_us // max(len(records), 1)
    for item in hashed:
        timings.setdefault(item.media_id, {})["hash"] = per_item

    stages: list[StageCount] = []
    verdicts: list[FilterVerdict] = []

    t0 = time.perf_counter_ns()
    current, dup_verdicts = dedup(hashed, config.dedup_threshold)
    verdicts.extend(dup_verdicts)
    dedup_us = (time.perf_counter_ns() - t0) // 1000
    per_item = dedup_us // max(len(hashed), 1)
    for item in hashed:
        timings.setdefault(item.media_id, {})["duplicate"] = per_item
    stages.append(StageCount(name="duplicate", input=len(hashed),
                             removed=len(dup_verdicts), output=len(current)))

    failures: dict[str, int] = {}
    for plugin in sorted(plugins if plugins is not None else default_plugins(config),
                         key=lambda p: (p.cost_hint, p.name)):
        stage = _KIND_TO_STAGE.get(plugin.kind, plugin.kind)
        incoming = len(current)
        surviving = []
        for item in current:
            t0 = time.perf_counter_ns()
            try:
                keep, confidence = plugin.predicate(item.image)
            except Exception as exc:
                logger.warning("plugin %s failed on %s, keeping item: %s",
                               plugin.name, item.media_id, exc)
                failures[plugin.name] = failures.get(plugin.name, 0) + 1
                keep, confidence = True, 0.0
            clock(item.media_id, stage, t0)
            if keep:
                surviving.append(item)
            else:
                verdicts.append(FilterVerdict(
                    media_id=item.media_id, stage=stage,
                    detail=f"{plugin.name} confidence={confidence:.3f}"))
        stages.append(StageCount(name=stage, input=incoming,
                                 removed=incoming - len(surviving), output=len(surviving)))
        current = surviving

    verdicts.extend(FilterVerdict(media_id=item.media_id, stage="passed")
                    for item in current)
    return FilterResult(kept=current, verdicts=verdicts, stages=stages,
                        input_total=len(records), unreadable=len(unreadable_records),
                        plugin_failures=failures, timings_us=timings)


def verdicts_to_csv(result: FilterResult, path: str | Path) -> None:
    """Verdict export with per-stage latency, one row per (media, verdict)."""
    with Path(path).open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["media_id", "stage", "detail", "latency_us"])
        for v in sorted(result.verdicts, key=lambda v: (v.media_id, v.stage)):
            latency = result.timings_us.get(v.media_id, {}).get(v.stage, 0)
            writer.writerow([v.media_id, v.stage, v.detail, latency])
