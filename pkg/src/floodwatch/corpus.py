"""Post/media data model and newline-delimited replay ingestion.

The corpus file is one JSON record per line (schema below), standing in for
a live feed so that runs are deterministic and replayable. Media images are
referenced by path relative to the corpus file.

Record schema:
    id          string, nonempty, unique within the file
    created_at  RFC 3339 timestamp
    text        string
    lang        BCP-47 tag or "und"
    is_retweet  bool
    lat, lon    optional numbers (both or neither)
    media       optional list of {"media_id": str, "path": str}
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)


class CorpusError(Exception):
    """Raised for unusable corpus files or invalid record values."""


def parse_rfc3339(value: str) -> int:
    """Parse an RFC 3339 timestamp to UTC epoch seconds."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise CorpusError(f"invalid timestamp {value!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_utc(epoch: int) -> str:
    """Epoch seconds back to RFC 3339 UTC ("...Z")."""
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class MediaRef:
    media_id: str
    path: str


@dataclass(frozen=True)
class Post:
    """One social-media message, immutable after construction."""

    id: str
    created_at: int             # UTC epoch seconds
    text: str
    lang: str = "und"
    is_retweet: bool = False
    native_geo: tuple[float, float] | None = None   # (lat, lon)
    media: tuple[MediaRef, ...] = ()
    author_id: str = ""

    def __post_init__(self):
        if not self.id:
            raise CorpusError("post id must be nonempty")
        if self.native_geo is not None:
            lat, lon = self.native_geo
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise CorpusError(f"post {self.id}: geo ({lat}, {lon}) out of range")

    @property
    def has_media(self) -> bool:
        return bool(self.media)


@dataclass
class MediaRecord:
    """An image attached to a post. Pixel data loads lazily from path/bytes."""

    media_id: str
    post_id: str
    source: str | bytes         # file path or raw byte payload
    width: int | None = None
    height: int | None = None
    unreadable: bool = False

    def load(self):
        """Decode the image, caching dimensions; mark unreadable on failure."""
        from PIL import Image

        try:
            if isinstance(self.source, bytes):
                img = Image.open(io.BytesIO(self.source))
            else:
                img = Image.open(self.source)
            img.load()
        except Exception as exc:
            logger.warning("media %s unreadable: %s", self.media_id, exc)
            self.unreadable = True
            return None
        self.width, self.height = img.size
        return img


@dataclass(frozen=True)
class TimeWindow:
    """Half-open UTC interval [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise CorpusError(f"empty time window [{self.start}, {self.end})")

    @classmethod
    def from_iso(cls, start: str, end: str) -> "TimeWindow":
        return cls(parse_rfc3339(start), parse_rfc3339(end))

    def contains(self, epoch: int) -> bool:
        return self.start <= epoch < self.end

    def intersect(self, other: "TimeWindow") -> "TimeWindow":
        return TimeWindow(max(self.start, other.start), min(self.end, other.end))


@dataclass
class IngestStats:
    read: int = 0
    skipped: int = 0


def post_from_record(record: dict) -> Post:
    """Build a Post from one parsed corpus record, validating field shapes."""
    lat, lon = record.get("lat"), record.get("lon")
    if (lat is None) != (lon is None):
        raise CorpusError("lat and lon must appear together")
    geo = (float(lat), float(lon)) if lat is not None else None
    media = tuple(
        MediaRef(media_id=str(m["media_id"]), path=str(m["path"]))
        for m in record.get("media") or ()
    )
    return Post(
        id=str(record["id"]),
        created_at=parse_rfc3339(str(record["created_at"])),
        text=str(record["text"]),
        lang=str(record.get("lang", "und")),
        is_retweet=bool(record["is_retweet"]),
        native_geo=geo,
        media=media,
        author_id=str(record.get("author_id", "")),
    )


def post_to_record(post: Post) -> dict:
    record = {
        "id": post.id,
        "created_at": format_utc(post.created_at),
        "text": post.text,
        "lang": post.lang,
        "is_retweet": post.is_retweet,
    }
    if post.native_geo is not None:
        record["lat"], record["lon"] = post.native_geo
    if post.media:
        record["media"] = [{"media_id": m.media_id, "path": m.path} for m in post.media]
    if post.author_id:
        record["author_id"] = post.author_id
    return record


def read_corpus(path: str | Path, stats: IngestStats | None = None) -> Iterator[Post]:
    """Stream posts from a corpus file in file order.

    Malformed lines and duplicate ids are skipped with a warning and counted
    in `stats`; an unreadable file is fatal.
    """
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    seen: set[str] = set()
    with handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                post = post_from_record(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, CorpusError) as exc:
                logger.warning("%s:%d: skipping malformed record: %s", path, lineno, exc)
                if stats:
                    stats.skipped += 1
                continue
            if post.id in seen:
                logger.warning("%s:%d: skipping duplicate post id %s", path, lineno, post.id)
                if stats:
                    stats.skipped += 1
                continue
            seen.add(post.id)
            if stats:
                stats.read += 1
            yield post


def write_corpus(posts: Iterable[Post], path: str | Path) -> int:
    """Serialize posts back to the record format. Returns the record count."""
    count = 0
    with Path(path).open("w", encoding="utf-8") as out:
        for post in posts:
            out.write(json.dumps(post_to_record(post), ensure_ascii=False, sort_keys=True))
            out.write("\n")
            count += 1
    return count


def filter_window(posts: Iterable[Post], window: TimeWindow) -> Iterator[Post]:
    """Posts with window.start <= created_at < window.end, order preserved."""
    return (p for p in posts if window.contains(p.created_at))


def drop_retweets(posts: Iterable[Post]) -> Iterator[Post]:
    return (p for p in posts if not p.is_retweet)


def media_records(posts: Iterable[Post], base_dir: str | Path) -> list[MediaRecord]:
    """Materialize media records for all image refs, paths resolved to base_dir."""
    base = Path(base_dir)
    records = []
    for post in posts:
        for ref in post.media:
            records.append(MediaRecord(media_id=ref.media_id, post_id=post.id,
                                       source=str(base / ref.path)))
    return records
