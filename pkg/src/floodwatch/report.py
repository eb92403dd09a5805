"""Reporting: region rollups, per-capita normalization, GeoJSON map files,
and the plain-text funnel / admin-level / alert-timeline summaries.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .geoloc import Gazetteer, GeoResolution
from .lexicon import normalize

logger = logging.getLogger(__name__)

UNASSIGNED_ID = -1
UNASSIGNED_NAME = "unassigned"


class ReportError(Exception):
    """Raised for unrenderable report inputs."""


@dataclass(frozen=True)
class RegionAggregate:
    entry_id: int
    region_name: str
    admin_level: int
    count: int
    population: int | None = None
    per_capita: float | None = None

    def __post_init__(self):
        if self.count < 0:
            raise ReportError("aggregate count must be >= 0")
        if (self.per_capita is not None) != (self.population is not None
                                             and self.population > 0):
            raise ReportError("per_capita present iff population present and > 0")


@dataclass(frozen=True)
class TimelineRow:
    source: str
    date: str | None            # ISO date, or None for "no activation"
    note: str = ""

    def __post_init__(self):
        if self.date is not None:
            try:
                dt.date.fromisoformat(self.date)
            except ValueError as exc:
                raise ReportError(f"invalid timeline date {self.date!r}") from exc


@dataclass(frozen=True)
class AlertTimeline:
    rows: tuple[TimelineRow, ...]


def rollup(resolutions: Sequence[GeoResolution], gaz: Gazetteer,
           target_level: int) -> list[RegionAggregate]:
    """Aggregate resolutions into regions at one admin level.

    A resolution already at the target level counts toward itself; a finer
    one counts toward the smallest target-level region whose bbox contains
    its centroid. Anything coarser than the target, or not contained by
    any region, lands in the unassigned bucket so totals stay conserved.
    """
    regions = gaz.entries_at_level(target_level)
    counts: dict[int, int] = {}
    unassigned = 0
    for res in resolutions:
        entry = gaz.entries[res.entry_id]
        if entry.admin_level == target_level:
            counts[entry.entry_id] = counts.get(entry.entry_id, 0) + 1
            continue
        if entry.admin_level < target_level:
            unassigned += 1
            continue
        enclosing = [r for r in regions if r.contains(entry.lat, entry.lon)]
        if not enclosing:
            unassigned += 1
            continue
        region = min(enclosing, key=lambda r: (r.bbox_area, r.entry_id))
        counts[region.entry_id] = counts.get(region.entry_id, 0) + 1

    aggregates = [
        RegionAggregate(entry_id=rid, region_name=gaz.entries[rid].name,
                        admin_level=target_level, count=n)
        for rid, n in counts.items()
    ]
    aggregates.sort(key=lambda a: (-a.count, a.region_name, a.entry_id))
    if unassigned:
        aggregates.append(RegionAggregate(entry_id=UNASSIGNED_ID,
                                          region_name=UNASSIGNED_NAME,
                                          admin_level=target_level,
                                          count=unassigned))
    return aggregates


def load_population_table(path: str | Path) -> dict[int | str, int]:
    """CSV of region,population; region is an entry id or a region name."""
    table: dict[int | str, int] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            key_raw = row["region"].strip()
            key: int | str = int(key_raw) if key_raw.lstrip("-").isdigit() \
                else normalize(key_raw)
            table[key] = int(row["population"])
    return table


def normalize_aggregates(aggregates: Sequence[RegionAggregate],
                         population_table: Mapping[int | str, int]
                         ) -> list[RegionAggregate]:
    """Attach population and per-capita rate where the table knows the
    region; unknown or non-positive populations leave them absent."""
    out = []
    for agg in aggregates:
        population = population_table.get(agg.entry_id,
                                          population_table.get(agg.region_name))
        if population is None:
            out.append(agg)
        elif population <= 0:
            logger.warning("region %s: ignoring non-positive population %d",
                           agg.region_name, population)
            out.append(agg)
        else:
            out.append(replace(agg, population=population,
                               per_capita=agg.count / population))
    return out


def _feature_for_resolution(res: GeoResolution, gaz: Gazetteer) -> dict:
    entry = gaz.entries[res.entry_id]
    return {
        "type": "Feature",
        "geometry": {"type": "Point",
                     "coordinates": [round(entry.lon, 6), round(entry.lat, 6)]},
        "properties": {"post_id": res.post_id, "name": entry.name,
                       "admin_level": res.admin_level, "method": res.method},
    }


def _feature_for_aggregate(agg: RegionAggregate, gaz: Gazetteer) -> dict:
    properties = {"entry_id": agg.entry_id, "name": agg.region_name,
                  "admin_level": agg.admin_level, "count": agg.count,
                  "population": agg.population, "per_capita": agg.per_capita}
    if agg.entry_id == UNASSIGNED_ID:
        return {"type": "Feature", "geometry": None, "properties": properties}
    min_lat, min_lon, max_lat, max_lon = gaz.entries[agg.entry_id].bbox
    ring = [[round(lon, 6), round(lat, 6)]
            for lat, lon in ((min_lat, min_lon), (min_lat, max_lon),
                             (max_lat, max_lon), (max_lat, min_lon),
                             (min_lat, min_lon))]
    return {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [ring]},
        "properties": properties,
    }


def emit_geojson(items: Sequence[GeoResolution] | Sequence[RegionAggregate],
                 gaz: Gazetteer, path: str | Path) -> None:
    """Write resolutions as point features or aggregates as region boxes.

    Output is a FeatureCollection with stably ordered features and sorted
    keys so identical inputs always produce identical bytes.
    """
    features = []
    for item in items:
        if isinstance(item, GeoResolution):
            features.append(_feature_for_resolution(item, gaz))
        elif isinstance(item, RegionAggregate):
            features.append(_feature_for_aggregate(item, gaz))
        else:
            raise ReportError(f"cannot map {type(item).__name__} items")
    collection = {"type": "FeatureCollection", "features": features}
    with Path(path).open("w", encoding="utf-8") as out:
        json.dump(collection, out, ensure_ascii=False, sort_keys=True, indent=2)
        out.write("\n")


def emit_funnel_report(stage_counts: Sequence[tuple[str, int]]) -> str:
    """Two-column funnel: one row per stage, in pipeline order."""
    if not stage_counts:
        return "funnel: no stages\n"
    width = max(len(label) for label, _ in stage_counts)
    lines = [f"{label:<{width}}  {value:>12,}" for label, value in stage_counts]
    return "\n".join(lines) + "\n"


def admin_level_histogram(resolutions: Sequence[GeoResolution]) -> dict[int, int]:
    hist: dict[int, int] = {}
    for res in resolutions:
        hist[res.admin_level] = hist.get(res.admin_level, 0) + 1
    return dict(sorted(hist.items()))


def emit_admin_histogram(histogram: Mapping[int, int]) -> str:
    lines = [f"admin level {level:>2}  {count:>12,}"
             for level, count in sorted(histogram.items())]
    return "\n".join(lines) + "\n" if lines else "admin levels: none\n"


def build_timeline(rows: Sequence[TimelineRow]) -> AlertTimeline:
    """Date-sort rows; rows without a date (no activation) sink to the end."""
    ordered = sorted(rows, key=lambda r: (r.date is None, r.date or "", r.source))
    return AlertTimeline(rows=tuple(ordered))


def emit_alert_timeline(timeline: AlertTimeline) -> str:
    if not timeline.rows:
        return "alert timeline: empty\n"
    width = max(len(r.source) for r in timeline.rows)
    lines = [f"{r.source:<{width}}  {r.date or '-':<10}  {r.note}".rstrip()
             for r in timeline.rows]
    return "\n".join(lines) + "\n"


def aggregates_to_csv(aggregates: Sequence[RegionAggregate],
                      path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["entry_id", "name", "admin_level", "count",
                         "population", "per_capita"])
        for agg in aggregates:
            writer.writerow([
                agg.entry_id, agg.region_name, agg.admin_level, agg.count,
                agg.population if agg.population is not None else "",
                f"{agg.per_capita:.9e}" if agg.per_capita is not None else "",
            ])
