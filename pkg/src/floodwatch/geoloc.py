"""Offline geolocation: find place names in post text and resolve them.

Matching runs against a local gazetteer file (no network), disambiguation
scores each candidate by spatial coherence with the post's other mentions
plus an admin-rank/importance term, and resolutions are filtered to the
target country's boundary. Native geotags are merged in as a separate
resolution method so both evidence routes stay visible downstream.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import Post
from .lexicon import normalize, prefers_substring_match, tokenize_spans

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
ADMIN_LEVELS = frozenset({2, 4, 6, 8, 10, 15})
COUNTRY_LEVEL = 2
FINEST_LEVEL = 15

METHOD_NATIVE = "native_geotag"
METHOD_TEXT = "text_disambiguation"


class GeolocError(Exception):
    """Raised for unusable gazetteer or boundary inputs."""


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in kilometres."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


@dataclass(frozen=True)
class GazetteerEntry:
    entry_id: int
    name: str                   # normalized
    aliases: tuple[str, ...]    # normalized
    lat: float
    lon: float
    bbox: tuple[float, float, float, float]   # (min_lat, min_lon, max_lat, max_lon)
    admin_level: int
    country: str                # ISO code
    importance: float

    def __post_init__(self):
        min_lat, min_lon, max_lat, max_lon = self.bbox
        if min_lat > max_lat or min_lon > max_lon:
            raise GeolocError(f"entry {self.entry_id}: bbox min exceeds max")
        if not (min_lat <= self.lat <= max_lat and min_lon <= self.lon <= max_lon):
            raise GeolocError(f"entry {self.entry_id}: centroid outside bbox")
        if self.admin_level not in ADMIN_LEVELS:
            raise GeolocError(f"entry {self.entry_id}: admin_level {self.admin_level} "
                              f"not in {sorted(ADMIN_LEVELS)}")
        if not 0.0 <= self.importance <= 1.0:
            raise GeolocError(f"entry {self.entry_id}: importance outside [0, 1]")

    def contains(self, lat: float, lon: float) -> bool:
        min_lat, min_lon, max_lat, max_lon = self.bbox
        return min_lat <= lat <= max_lat and min_lon <= lon <= max_lon

    @property
    def bbox_area(self) -> float:
        min_lat, min_lon, max_lat, max_lon = self.bbox
        return (max_lat - min_lat) * (max_lon - min_lon)


@dataclass(frozen=True)
class Mention:
    post_id: str
    surface: str
    char_range: tuple[int, int]
    candidates: tuple[int, ...]     # entry ids, ascending


@dataclass(frozen=True)
class GeoResolution:
    post_id: str
    entry_id: int
    admin_level: int
    score: float
    method: str                     # native_geotag | text_disambiguation

    def __post_init__(self):
        if self.score < 0:
            raise ValueError("resolution score must be >= 0")
        if self.method not in (METHOD_NATIVE, METHOD_TEXT):
            raise ValueError(f"unknown resolution method {self.method!r}")


class Gazetteer:
    """Immutable, fully-indexed collection of gazetteer entries.

    Indexes support exact normalized name/alias lookup plus longest-match
    scanning in both token and substring modes, so one gazetteer serves
    scripts with and without word separators.
    """

    def __init__(self, entries: Iterable[GazetteerEntry]):
        self.entries: dict[int, GazetteerEntry] = {}
        self._by_name: dict[str, tuple[int, ...]] = {}
        self._token_index: dict[tuple[str, ...], tuple[int, ...]] = {}
        self._max_token_len = 0
        self._char_buckets: dict[str, list[str]] = {}

        by_name: dict[str, set[int]] = {}
        for entry in entries:
            if entry.entry_id in self.entries:
                raise GeolocError(f"duplicate gazetteer entry_id {entry.entry_id}")
            self.entries[entry.entry_id] = entry
            for name in (entry.name, *entry.aliases):
                by_name.setdefault(name, set()).add(entry.entry_id)

        token_index: dict[tuple[str, ...], set[int]] = {}
        for name, ids in by_name.items():
            self._by_name[name] = tuple(sorted(ids))
            tokens = tuple(tok for tok, _, _ in tokenize_spans(name))
            if tokens:
                token_index.setdefault(tokens, set()).update(ids)
                self._max_token_len = max(self._max_token_len, len(tokens))
            if name:
                self._char_buckets.setdefault(name[0], []).append(name)
        self._token_index = {k: tuple(sorted(v)) for k, v in token_index.items()}
        for bucket in self._char_buckets.values():
            bucket.sort(key=lambda n: (-len(n), n))

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, name: str) -> list[GazetteerEntry]:
        """Entries whose normalized name or alias equals normalize(name)."""
        return [self.entries[i] for i in self._by_name.get(normalize(name), ())]

    def entries_at_level(self, admin_level: int) -> list[GazetteerEntry]:
        return [e for _, e in sorted(self.entries.items())
                if e.admin_level == admin_level]

    def enclosing_entries(self, lat: float, lon: float) -> list[GazetteerEntry]:
        """Entries whose bbox contains the point, smallest bbox first."""
        hits = [e for _, e in sorted(self.entries.items()) if e.contains(lat, lon)]
        hits.sort(key=lambda e: (e.bbox_area, -e.admin_level, e.entry_id))
        return hits


def entry_from_record(record: Mapping) -> GazetteerEntry:
    return GazetteerEntry(
        entry_id=int(record["entry_id"]),
        name=normalize(str(record["name"])),
        aliases=tuple(normalize(str(a)) for a in record.get("aliases", [])),
        lat=float(record["lat"]),
        lon=float(record["lon"]),
        bbox=tuple(float(v) for v in record["bbox"]),
        admin_level=int(record["admin_level"]),
        country=str(record["country"]),
        importance=float(record["importance"]),
    )


def load_gazetteer(path: str | Path) -> Gazetteer:
    """Read a gazetteer from a file of one JSON entry per line.

    Entries violating their own invariants are skipped with a warning;
    duplicate entry ids are fatal because silent shadowing would make
    resolutions ambiguous.
    """
    entries = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(entry_from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError,
                    GeolocError) as exc:
                logger.warning("%s:%d: skipping gazetteer entry: %s", path, lineno, exc)
    return Gazetteer(entries)


@dataclass(frozen=True)
class Boundary:
    """National boundary as a bbox or a polygon ring (lat, lon pairs)."""

    country: str
    bbox: tuple[float, float, float, float] | None = None
    polygon: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.bbox is None and self.polygon is None:
            raise ValueError("boundary needs a bbox or a polygon")

    def contains(self, lat: float, lon: float) -> bool:
        if self.polygon is not None:
            return _point_in_ring(lat, lon, self.polygon)
        min_lat, min_lon, max_lat, max_lon = self.bbox
        return min_lat <= lat <= max_lat and min_lon <= lon <= max_lon


def _point_in_ring(lat: float, lon: float, ring: Sequence[tuple[float, float]]) -> bool:
    """Even-odd rule point-in-polygon test on (lat, lon) vertices."""
    inside = False
    n = len(ring)
    for i in range(n):
        lat1, lon1 = ring[i]
        lat2, lon2 = ring[(i + 1) % n]
        if (lat1 > lat) != (lat2 > lat):
            cross = lon1 + (lat - lat1) / (lat2 - lat1) * (lon2 - lon1)
            if lon < cross:
                inside = not inside
    return inside


def load_boundary(path: str | Path) -> Boundary:
    with Path(path).open("r", encoding="utf-8") as handle:
        record = json.load(handle)
    bbox = record.get("bbox")
    polygon = record.get("polygon")
    return Boundary(
        country=str(record["country"]),
        bbox=tuple(float(v) for v in bbox) if bbox else None,
        polygon=tuple((float(a), float(b)) for a, b in polygon) if polygon else None,
    )


NerPlugin = Callable[[str], Iterable[tuple[int, int]]]


def extract_mentions(post: Post, gaz: Gazetteer,
                     ner: NerPlugin | None = None) -> list[Mention]:
    """Find gazetteer-known place names in a post's text.

    The default extractor scans the normalized text for longest
    non-overlapping name matches, choosing substring or token matching by
    the text's script. An NER plugin replaces the scan with its own spans
    over the raw text; spans unknown to the gazetteer are dropped.
    """
    if ner is not None:
        mentions = []
        for start, end in ner(post.text):
            surface = post.text[start:end]
            hits = gaz.lookup(surface)
            if hits:
                mentions.append(Mention(
                    post_id=post.id, surface=surface, char_range=(start, end),
                    candidates=tuple(sorted(e.entry_id for e in hits))))
        return mentions

    text = normalize(post.text)
    if prefers_substring_match(text):
        spans = _scan_substring(text, gaz)
    else:
        spans = _scan_tokens(text, gaz)
    return [Mention(post_id=post.id, surface=text[start:end],
                    char_range=(start, end), candidates=ids)
            for start, end, ids in spans]


def _scan_substring(text: str, gaz: Gazetteer) -> list[tuple[int, int, tuple[int, ...]]]:
    out = []
    pos = 0
    while pos < len(text):
        for name in gaz._char_buckets.get(text[pos], ()):
            if text.startswith(name, pos):
                out.append((pos, pos + len(name), gaz._by_name[name]))
                pos += len(name)
                break
        else:
            pos += 1
    return out


def _scan_tokens(text: str, gaz: Gazetteer) -> list[tuple[int, int, tuple[int, ...]]]:
    spans = tokenize_spans(text)
    out = []
    i = 0
    while i < len(spans):
        matched = False
        for length in range(min(gaz._max_token_len, len(spans) - i), 0, -1):
            key = tuple(tok for tok, _, _ in spans[i:i + length])
            ids = gaz._token_index.get(key)
            if ids:
                out.append((spans[i][1], spans[i + length - 1][2], ids))
                i += length
                matched = True
                break
        if not matched:
            i += 1
    return out


@dataclass(frozen=True)
class ScoringWeights:
    coherence: float = 0.6
    rank: float = 0.4
    rounds: int = 2


def _rank_score(entry: GazetteerEntry, levels_tied: bool) -> float:
    """Rank term: pure importance when the mention's candidates share one
    admin level, otherwise importance blended with fineness so more
    specific places are favoured."""
    if levels_tied:
        return entry.importance
    return (entry.admin_level / FINEST_LEVEL + entry.importance) / 2.0


def _preference_key(score: float, entry: GazetteerEntry):
    # Maximized: ties go to the finer admin level, then higher importance,
    # then the smaller entry id.
    return (score, entry.admin_level, entry.importance, -entry.entry_id)


def disambiguate(mentions: Sequence[Mention], gaz: Gazetteer,
                 weights: ScoringWeights = ScoringWeights()) -> list[GeoResolution]:
    """Choose one gazetteer candidate per mention.

    Candidates are scored as weights.coherence * spatial coherence plus
    weights.rank * rank score, where coherence is 1 / (1 + mean distance
    in km to the currently chosen candidates of the post's other
    mentions). Assignments start from each mention's highest-importance
    candidate and are refined by sequential best response for a fixed
    number of rounds, which keeps the result deterministic.
    """
    by_post: dict[str, list[Mention]] = {}
    for mention in mentions:
        if not mention.candidates:
            raise GeolocError(f"mention {mention.surface!r} has no candidates")
        by_post.setdefault(mention.post_id, []).append(mention)

    resolutions = []
    for post_id, group in by_post.items():
        cands = [[gaz.entries[i] for i in m.candidates] for m in group]
        chosen = [max(c, key=lambda e: (e.importance, e.admin_level, -e.entry_id))
                  for c in cands]
        scores = [0.0] * len(group)
        for _ in range(weights.rounds):
            for i in range(len(group)):
                others = [chosen[j] for j in range(len(group)) if j != i]
                tied = len({e.admin_level for e in cands[i]}) == 1
                best, best_key = None, None
                for entry in cands[i]:
                    if others:
                        mean_km = sum(haversine_km(entry.lat, entry.lon, o.lat, o.lon)
                                      for o in others) / len(others)
                        coherence = 1.0 / (1.0 + mean_km)
                    else:
                        coherence = 1.0
                    score = (weights.coherence * coherence
                             + weights.rank * _rank_score(entry, tied))
                    key = _preference_key(score, entry)
                    if best_key is None or key > best_key:
                        best, best_key = (entry, score), key
                chosen[i], scores[i] = best[0], best[1]
        resolutions.extend(
            GeoResolution(post_id=post_id, entry_id=entry.entry_id,
                          admin_level=entry.admin_level, score=score,
                          method=METHOD_TEXT)
            for entry, score in zip(chosen, scores))
    return resolutions


def geolocate_posts(posts: Sequence[Post], gaz: Gazetteer,
                    weights: ScoringWeights = ScoringWeights(),
                    ner: NerPlugin | None = None,
                    threads: int = 1) -> list[GeoResolution]:
    """Extract and disambiguate mentions for each post.

    Posts are independent, so the work maps over a thread pool; order-
    preserving map keeps output identical for any thread count.
    """
    def work(post: Post) -> list[GeoResolution]:
        found = extract_mentions(post, gaz, ner=ner)
        return disambiguate(found, gaz, weights=weights) if found else []

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, posts))
    else:
        parts = [work(p) for p in posts]
    return [res for part in parts for res in part]


class CountryFilterResult(list):
    """Kept (specific, in-country) resolutions, list-compatible.

    Also carries the two excluded groups so reports can account for every
    input resolution: `generic` country-level self references and
    `outside` resolutions beyond the boundary.
    """

    def __init__(self, kept: Iterable[GeoResolution],
                 generic: Iterable[GeoResolution],
                 outside: Iterable[GeoResolution]):
        super().__init__(kept)
        self.generic = list(generic)
        self.outside = list(outside)


def country_filter(resolutions: Sequence[GeoResolution], gaz: Gazetteer,
                   country: str, boundary: Boundary | None) -> CountryFilterResult:
    """Keep resolutions inside the national boundary.

    Resolutions that name the target country itself (admin level 2) are
    split off as generic: they confirm topic relevance but carry no
    sub-national signal, so aggregation ignores them.
    """
    if boundary is None:
        raise GeolocError(f"no boundary available for country {country!r}")
    kept, generic, outside = [], [], []
    for res in resolutions:
        entry = gaz.entries[res.entry_id]
        if entry.admin_level == COUNTRY_LEVEL and entry.country == country:
            generic.append(res)
        elif boundary.contains(entry.lat, entry.lon):
            kept.append(res)
        else:
            outside.append(res)
    return CountryFilterResult(kept, generic, outside)


def merge_native(posts: Sequence[Post], resolutions: Sequence[GeoResolution],
                 gaz: Gazetteer, boundary: Boundary | None = None
                 ) -> list[GeoResolution]:
    """Union native-geotag resolutions with text resolutions.

    Each post carrying device coordinates (inside the boundary, when one
    is given) resolves to the smallest gazetteer entry whose bbox encloses
    the point. No cross-method dedup: a post with both a geotag and a text
    mention contributes twice, once per evidence route.
    """
    native = []
    for post in posts:
        if post.native_geo is None:
            continue
        lat, lon = post.native_geo
        if boundary is not None and not boundary.contains(lat, lon):
            continue
        enclosing = gaz.enclosing_entries(lat, lon)
        if not enclosing:
            continue
        entry = enclosing[0]
        native.append(GeoResolution(post_id=post.id, entry_id=entry.entry_id,
                                    admin_level=entry.admin_level, score=1.0,
                                    method=METHOD_NATIVE))
    return native + list(resolutions)


def resolutions_from_csv(path: str | Path) -> list[GeoResolution]:
    """Read back a resolution export (inverse of resolutions_to_csv)."""
    out = []
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            out.append(GeoResolution(
                post_id=row["post_id"], entry_id=int(row["entry_id"]),
                admin_level=int(row["admin_level"]), score=float(row["score"]),
                method=row["method"]))
    return out


def resolutions_to_csv(resolutions: Sequence[GeoResolution], gaz: Gazetteer,
                       path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["post_id", "entry_id", "name", "admin_level",
                         "lat", "lon", "method", "score"])
        for res in resolutions:
            entry = gaz.entries[res.entry_id]
            writer.writerow([res.post_id, res.entry_id, entry.name,
                             res.admin_level, f"{entry.lat:.6f}", f"{entry.lon:.6f}",
                             res.method, f"{res.score:.9f}"])
