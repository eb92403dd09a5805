"""Shared fixtures: image factories, toy gazetteers, and a synthetic event
corpus generator whose ground truth is computed from its own construction,
never from running the code under test.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from floodwatch.corpus import parse_rfc3339

# ---------------------------------------------------------------- images

def photo_array(rng: np.random.Generator, width: int = 160,
                height: int = 120) -> np.ndarray:
    """Photo-like image: coarse random patches plus fine pixel noise.

    The patch scale is comparable to the hash grid cells, so different
    images land far apart in hash space while small perturbations do not
    move them.
    """
    patches = rng.integers(20, 200, (12, 16, 3))
    base = np.kron(patches, np.ones((10, 10, 1)))[:height, :width]
    noise = rng.integers(0, 40, (height, width, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def perturb_array(arr: np.ndarray, rng: np.random.Generator,
                  sigma: float = 3.0) -> np.ndarray:
    """Near-duplicate: small additive noise, hash stays within threshold."""
    jitter = rng.normal(0.0, sigma, arr.shape)
    return np.clip(arr.astype(np.float64) + jitter, 0, 255).astype(np.uint8)


def flat_array(color=(30, 60, 200), width: int = 160,
               height: int = 120) -> np.ndarray:
    return np.full((height, width, 3), color, dtype=np.uint8)


def screenshot_array(width: int = 200, height: int = 150) -> np.ndarray:
    """Screenshot-like: white page with a few dark text bars."""
    arr = np.full((height, width, 3), 245, dtype=np.uint8)
    for top in range(20, height - 10, 30):
        arr[top:top + 5, 10:width - 10] = 30
    return arr


def chart_array(bar_cells: tuple[int, int], width: int = 200,
                height: int = 150) -> np.ndarray:
    """Chart-like non-photo: white page with two dark vertical bars.

    Bars are aligned with hash-grid columns, so distinct bar positions
    give hashes well beyond the duplicate threshold of each other and of
    a blank page.
    """
    arr = np.full((height, width, 3), 245, dtype=np.uint8)
    for cell in bar_cells:
        left = int(np.floor(cell * width / 9)) + 2
        right = int(np.ceil((cell + 1) * width / 9)) - 2
        arr[:, left:right] = 25
    return arr


def save_png(arr: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, "RGB").save(path, format="PNG")


# ------------------------------------------------------------ gazetteers

def toy_thailand_entries() -> list[dict]:
    """Country + 3 provinces + 6 districts = 10 entries.

    Two districts share the name "ban mai" (one in Chiang Mai, one in
    Ayutthaya) to exercise coherence disambiguation; the Ayutthaya one has
    the higher importance so coherence must beat importance to pick the
    Chiang Mai one next to a "mae rim" anchor.
    """
    return [
        {"entry_id": 1, "name": "thailand", "aliases": ["ประเทศไทย"],
         "lat": 13.75, "lon": 100.5,
         "bbox": [5.6, 97.3, 20.5, 105.7], "admin_level": 2,
         "country": "TH", "importance": 0.95},
        {"entry_id": 2, "name": "bangkok", "aliases": ["krung thep", "กรุงเทพ"],
         "lat": 13.75, "lon": 100.5,
         "bbox": [13.5, 100.3, 14.0, 100.95], "admin_level": 4,
         "country": "TH", "importance": 0.9},
        {"entry_id": 3, "name": "chiang mai", "aliases": ["เชียงใหม่"],
         "lat": 18.8, "lon": 98.98,
         "bbox": [17.8, 97.9, 19.8, 99.6], "admin_level": 4,
         "country": "TH", "importance": 0.8},
        {"entry_id": 4, "name": "ayutthaya", "aliases": [],
         "lat": 14.35, "lon": 100.55,
         "bbox": [14.0, 100.2, 14.7, 100.9], "admin_level": 4,
         "country": "TH", "importance": 0.7},
        {"entry_id": 10, "name": "mae rim", "aliases": [],
         "lat": 18.92, "lon": 98.94,
         "bbox": [18.85, 98.8, 19.0, 99.05], "admin_level": 6,
         "country": "TH", "importance": 0.5},
        {"entry_id": 11, "name": "ban mai", "aliases": [],
         "lat": 18.96, "lon": 98.97,
         "bbox": [18.9, 98.9, 19.02, 99.05], "admin_level": 6,
         "country": "TH", "importance": 0.45},
        {"entry_id": 12, "name": "ban mai", "aliases": [],
         "lat": 14.4, "lon": 100.5,
         "bbox": [14.35, 100.45, 14.45, 100.55], "admin_level": 6,
         "country": "TH", "importance": 0.5},
        {"entry_id": 13, "name": "mueang chiang mai", "aliases": [],
         "lat": 18.79, "lon": 98.99,
         "bbox": [18.7, 98.9, 18.87, 99.06], "admin_level": 6,
         "country": "TH", "importance": 0.6},
        {"entry_id": 14, "name": "bang rak", "aliases": [],
         "lat": 13.73, "lon": 100.53,
         "bbox": [13.71, 100.5, 13.75, 100.55], "admin_level": 6,
         "country": "TH", "importance": 0.5},
        {"entry_id": 15, "name": "bang pa-in", "aliases": [],
         "lat": 14.23, "lon": 100.58,
         "bbox": [14.18, 100.5, 14.3, 100.65], "admin_level": 6,
         "country": "TH", "importance": 0.5},
    ]


def nepal_entries() -> list[dict]:
    return [
        {"entry_id": 100, "name": "nepal", "aliases": ["नेपाल"],
         "lat": 28.4, "lon": 84.1,
         "bbox": [26.3, 80.0, 30.5, 88.2], "admin_level": 2,
         "country": "NP", "importance": 0.9},
        {"entry_id": 101, "name": "bagmati", "aliases": [],
         "lat": 27.8, "lon": 85.4,
         "bbox": [27.3, 84.8, 28.4, 86.2], "admin_level": 4,
         "country": "NP", "importance": 0.6},
        {"entry_id": 102, "name": "sindhupalchok", "aliases": [],
         "lat": 27.95, "lon": 85.7,
         "bbox": [27.6, 85.3, 28.2, 86.1], "admin_level": 6,
         "country": "NP", "importance": 0.5},
    ]


def write_gazetteer(entries: list[dict], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as out:
        for entry in entries:
            out.write(json.dumps(entry, ensure_ascii=False) + "\n")
    return path


def write_boundary(country: str, bbox: list[float], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"country": country, "bbox": bbox}) + "\n",
                    encoding="utf-8")
    return path


THAILAND_BBOX = [5.6, 97.3, 20.5, 105.7]
NEPAL_BBOX = [26.3, 80.0, 30.5, 88.2]


@pytest.fixture()
def toy_gazetteer():
    from floodwatch.geoloc import Gazetteer, entry_from_record
    return Gazetteer(entry_from_record(e) for e in toy_thailand_entries())


@pytest.fixture()
def thailand_boundary():
    from floodwatch.geoloc import Boundary
    return Boundary(country="TH", bbox=tuple(THAILAND_BBOX))


# ------------------------------------------------- synthetic event corpus

DAY = 86400
EVENT_START = "2021-09-19T00:00:00Z"
BURST_DATE = "2021-09-26"

_FILLERS = ("hits", "covers", "soaks", "enters", "swamps")


def _record(post_id: str, ts: int, text: str, *, retweet=False, lat=None,
            lon=None, media=None) -> dict:
    from floodwatch.corpus import format_utc
    record = {"id": post_id, "created_at": format_utc(ts), "text": text,
              "lang": "en", "is_retweet": retweet}
    if lat is not None:
        record["lat"], record["lon"] = lat, lon
    if media:
        record["media"] = media
    return record


def build_event_fixture(root: Path, seed: int = 20210926) -> dict:
    """Write a complete event replay fixture and return its ground truth.

    Layout: corpus.ndjson, images/, gazetteer.ndjson, boundary.json,
    dict_flood_en.yaml, stopwords.txt, population.csv, config.yaml.
    All expected values are derived from the construction itself.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    d0 = parse_rfc3339(EVENT_START)
    records: list[dict] = []

    def ts(day: int, slot: int) -> int:
        return d0 + day * DAY + 300 + slot * 37

    # Three posts before the window: must be excluded by the window filter.
    for j in range(3):
        records.append(_record(f"pre{j}", d0 - DAY + j * 1000,
                               f"flood archive item {j}"))

    # Baseline days 0..6: 12 matching + 4 noise + 4 retweets each.
    native_baseline = 0
    for day in range(7):
        for j in range(12):
            lat = lon = None
            if day < 4 and j == 0:      # 4 text-only posts with native geo
                lat, lon = 13.74, 100.52
                native_baseline += 1
            records.append(_record(f"b{day}_{j}", ts(day, j),
                                   f"flood update near the river {day}{j}",
                                   lat=lat, lon=lon))
        for j in range(4):
            records.append(_record(f"n{day}_{j}", ts(day, 40 + j),
                                   f"sunny market morning {day}{j}"))
        for j in range(4):
            records.append(_record(f"r{day}_{j}", ts(day, 60 + j),
                                   f"flood update near the river {day}{j}",
                                   retweet=True))

    burst = 7
    images_dir = root / "images"
    media_counter = 0

    def add_image_post(post_id: str, slot: int, text: str, arr, *,
                       lat=None, lon=None) -> str:
        nonlocal media_counter
        media_id = f"m{media_counter:03d}"
        media_counter += 1
        rel = f"images/{media_id}.png"
        if arr is None:
            (images_dir / f"{media_id}.png").parent.mkdir(
                parents=True, exist_ok=True)
            (images_dir / f"{media_id}.png").write_bytes(b"not an image")
        else:
            save_png(arr, images_dir / f"{media_id}.png")
        records.append(_record(post_id, ts(burst, slot), text, lat=lat,
                               lon=lon, media=[{"media_id": media_id,
                                                "path": rel}]))
        return media_id

    # 20 unique photo posts. Texts seed the keyword learner: "water" twice
    # and "house" once per relevant post, filler verbs cycled to stay rare.
    place_plan = (
        [("ban mai and mae rim", None)] * 6
        + [("chiang mai", (18.81 + 0.002 * i, 98.99)) for i in range(5)]
        + [("bangkok", (13.76 + 0.002 * i, 100.52)) for i in range(3)]
        + [("bangkok", None)]
        + [("ayutthaya", None)] * 3
        + [("thailand", None)] * 2
    )
    kept_media = []
    photo_posts = []
    for i, (place, geo) in enumerate(place_plan):
        filler = _FILLERS[i % len(_FILLERS)]
        text = f"flood {filler} {place} - water water house"
        lat, lon = geo if geo else (None, None)
        arr = photo_array(rng)
        media_id = add_image_post(f"p{i:02d}", i, text, arr, lat=lat, lon=lon)
        kept_media.append(media_id)
        photo_posts.append(f"p{i:02d}")

    # 3 duplicate clusters of 5: canonical first by timestamp, then 4 dups.
    for c in range(3):
        base_arr = photo_array(rng)
        filler = _FILLERS[c % len(_FILLERS)]
        text = f"flood {filler} the old town - water water house"
        canonical_media = add_image_post(f"c{c}_0", 30 + c * 10, text, base_arr)
        kept_media.append(canonical_media)
        for d in range(1, 5):
            dup_arr = perturb_array(base_arr, rng)
            add_image_post(f"c{c}_{d}", 30 + c * 10 + d,
                           f"flood spreading fast {c}{d}", dup_arr)

    # 10 non-photo image posts: one blank page plus nine two-bar charts
    # with distinct bar placements (mutually distant hashes).
    bar_pairs = [(1, 3), (1, 5), (1, 7), (2, 4), (2, 6),
                 (3, 5), (3, 7), (4, 6), (5, 7)]
    for i in range(10):
        arr = flat_array((245, 245, 245)) if i == 0 else chart_array(
            bar_pairs[i - 1])
        add_image_post(f"g{i}", 70 + i, f"flood chart for province {i}", arr)

    # 2 unreadable-image posts.
    for i in range(2):
        add_image_post(f"u{i}", 85 + i, f"flood clip {i}", None)

    # Burst-day text-only posts: 24 planted expansion targets (highest
    # scores), then 48 + 48 ordinary posts at two lower score levels.
    planted_places = ["bang pa-in", "bang rak", "mueang chiang mai", "mae rim"]
    for i in range(24):
        place = planted_places[i % len(planted_places)]
        records.append(_record(f"x{i:02d}", ts(burst, 100 + i),
                               f"water water water house flood near {place}"))
    for i in range(48):
        records.append(_record(f"o1_{i:02d}", ts(burst, 130 + i),
                               f"flood situation report {i}"))
    for i in range(48):
        records.append(_record(f"o2_{i:02d}", ts(burst, 180 + i),
                               f"flood flood situation report {i}"))

    for j in range(20):     # burst-day noise without seed terms
        records.append(_record(f"bn{j}", ts(burst, 240 + j),
                               f"market sunny afternoon {j}"))
    for j in range(2):      # burst-day retweets
        records.append(_record(f"br{j}", ts(burst, 270 + j),
                               "flood situation report repost", retweet=True))

    corpus_path = root / "corpus.ndjson"
    with corpus_path.open("w", encoding="utf-8") as out:
        for record in records:
            out.write(json.dumps(record, ensure_ascii=False, sort_keys=True)
                      + "\n")

    write_gazetteer(toy_thailand_entries(), root / "gazetteer.ndjson")
    write_boundary("TH", THAILAND_BBOX, root / "boundary.json")
    (root / "dict_flood_en.yaml").write_text(
        "lang: en\nevent_type: flood\nterms:\n  - flood\n  - flooding\n"
        "  - inundation\n", encoding="utf-8")
    (root / "stopwords.txt").write_text(
        "a\nan\nand\nthe\nin\nnear\nfor\nthis\n", encoding="utf-8")
    (root / "population.csv").write_text(
        "region,population\nbangkok,5500000\nchiang mai,1780000\n"
        "ayutthaya,820000\n", encoding="utf-8")
    (root / "config.yaml").write_text(
        "corpus: corpus.ndjson\n"
        "dictionaries:\n  - dict_flood_en.yaml\n"
        "gazetteer: gazetteer.ndjson\n"
        "boundary: boundary.json\n"
        "country: TH\n"
        "out_dir: out\n"
        "rollup_level: 4\n"
        "population_table: population.csv\n"
        "stopwords: stopwords.txt\n"
        "external_alerts:\n"
        "  - {source: GloFAS, date: '2021-09-24', note: forecast alert}\n"
        "  - {source: GDACS, date: '2021-09-27', note: green alert}\n"
        "  - {source: UNOSAT, date: '2021-09-28', note: satellite flood map}\n",
        encoding="utf-8")

    # Ground truth, from construction only.
    branch_counts = {
        "photo_posts": 20, "cluster_posts": 15, "non_photo_posts": 10,
        "unreadable_posts": 2,
    }
    with_images = sum(branch_counts.values())                        # 47
    baseline_matching_per_day = 16          # 12 posts + 4 retweet copies
    burst_matching = (with_images + 24 + 48 + 48 + 2)                # 169
    all_posts = 3 * 0 + 7 * 20 + with_images + 24 + 48 + 48 + 20 + 2  # 329
    return {
        "root": root,
        "corpus": corpus_path,
        "config": root / "config.yaml",
        "window": (EVENT_START, "2021-09-27T00:00:00Z"),
        "series": [baseline_matching_per_day] * 7 + [burst_matching],
        "burst_bucket": 7,
        "burst_date": BURST_DATE,
        "funnel": {
            "All posts": all_posts,
            "Without reposts": all_posts - (7 * 4 + 2),              # 299
            "With images": with_images,
            "Native geotagged posts": 8 + native_baseline,           # 12
            "Total images": with_images,
            "Passed image filters": 23,
            "Geolocated places": 32,
        },
        "media": {
            "unreadable": 2, "duplicate_removed": 12,
            "non_photo_removed": 10, "nsfw_removed": 0, "passed": 23,
            "kept_media_ids": set(kept_media),
        },
        "geoloc": {"text_specific": 24, "generic": 2, "native": 8,
                   "base_total": 32},
        "expansion": {
            "keywords": ["water", "house"],
            "text_only": 252,
            "promising": 72,
            "planted": 24,
            "extended_total": 56,
        },
    }


@pytest.fixture(scope="session")
def event_fixture(tmp_path_factory) -> dict:
    return build_event_fixture(tmp_path_factory.mktemp("event"))
