"""End-to-end orchestration of the replay pipeline.

Each stage reads and writes plain files under the run's output directory,
so stages can be re-run independently and every artifact can be diffed.
All outputs except the latency column of verdicts.csv are byte-identical
across reruns and thread counts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .config import PipelineConfig
from .corpus import (Post, TimeWindow, format_utc, media_records, read_corpus,
                     write_corpus)
from .expand import (build_term_stats, extract_keywords, keyword_report,
                     load_stopwords, score_posts, scored_to_csv,
                     select_promising)
from .geoloc import (Boundary, Gazetteer, GeoResolution, country_filter,
                     geolocate_posts, load_boundary, load_gazetteer,
                     merge_native, resolutions_from_csv, resolutions_to_csv)
from .lexicon import TOKEN, Query, build_query, load_dictionary
from .mediafilter import (FilterResult, plugins_from_names,
                          run_filter_pipeline, verdicts_to_csv)
from .monitor import CountSeries, TriggerDecision, count_series, detect_trigger
from .report import (RegionAggregate, TimelineRow, admin_level_histogram,
                     aggregates_to_csv, build_timeline, emit_admin_histogram,
                     emit_alert_timeline, emit_funnel_report, emit_geojson,
                     load_population_table, normalize_aggregates, rollup)

logger = logging.getLogger(__name__)

FUNNEL_LABELS = (
    "All posts",
    "Without reposts",
    "With images",
    "Native geotagged posts",
    "Total images",
    "Passed image filters",
    "Geolocated places",
)


class PipelineError(Exception):
    """Raised with a stage-identifying message when a stage fails."""


class TriggerNotFired(PipelineError):
    """cmd_run precondition: the window's trigger did not fire and no
    --force was given."""

    def __init__(self, decision: TriggerDecision):
        self.decision = decision
        super().__init__(
            f"trigger did not fire (max ratio {decision.ratio:.3f}); "
            "pass --force to run the pipeline anyway")


def load_queries(config: PipelineConfig) -> list[Query]:
    return [build_query(load_dictionary(p)) for p in config.dictionaries]


def _write_json(payload, path: Path) -> None:
    with path.open("w", encoding="utf-8") as out:
        json.dump(payload, out, ensure_ascii=False, sort_keys=True, indent=2)
        out.write("\n")


def _stage(name: str):
    """Decorator tagging stage failures with the stage name."""
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(f"stage {name}: {exc}") from exc
        return run
    return wrap


@dataclass
class MonitorOutcome:
    series: CountSeries
    decision: TriggerDecision
    counts_path: Path
    trigger_path: Path


def run_monitor(config: PipelineConfig, window: TimeWindow) -> MonitorOutcome:
    """Count matching posts per bucket and decide whether the event fired."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    queries = load_queries(config)
    series = count_series(read_corpus(config.corpus), queries,
                          config.bucket_width, window)
    decision = detect_trigger(series, config.trigger)
    counts_path = out_dir / "counts.csv"
    trigger_path = out_dir / "trigger.json"
    series.to_csv(counts_path)
    _write_json(decision.to_dict(), trigger_path)
    return MonitorOutcome(series=series, decision=decision,
                          counts_path=counts_path, trigger_path=trigger_path)


@dataclass
class ExpandOutcome:
    new_keywords: list[str]
    scored_count: int
    promising_count: int
    base_count: int
    extended_count: int
    extended: list[GeoResolution]


@dataclass
class RunResult:
    decision: TriggerDecision
    funnel_rows: list[tuple[str, int]]
    filter_result: FilterResult
    resolutions: list[GeoResolution]
    aggregates: list[RegionAggregate]
    expansion: ExpandOutcome | None
    out_dir: Path


def _timeline_rows(config: PipelineConfig, decision: TriggerDecision,
                   series: CountSeries) -> list[TimelineRow]:
    if decision.fired:
        own_date = format_utc(series.bucket_start(decision.bucket_index))[:10]
        own = TimelineRow(source=config.system_name, date=own_date,
                          note=f"count trigger fired (ratio {decision.ratio:.1f})")
    else:
        own = TimelineRow(source=config.system_name, date=None,
                          note="no trigger in window")
    return [own, *config.external_alerts]


@_stage("expansion")
def _expansion_stage(config: PipelineConfig, out_dir: Path,
                     window_posts: Sequence[Post],
                     relevant_posts: Sequence[Post],
                     base: Sequence[GeoResolution],
                     gaz: Gazetteer, boundary: Boundary,
                     threads: int) -> ExpandOutcome:
    """Learn keywords from kept evidence, score text-only posts, geolocate
    the promising slice, and union with the base resolutions."""
    seed_terms: list[str] = []
    for query in load_queries(config):
        seed_terms.extend(t for t in query.terms if t not in seed_terms)
    stopwords = (load_stopwords(config.stopwords)
                 if config.stopwords else frozenset())

    text_only = [p for p in window_posts if not p.is_retweet and not p.has_media]
    relevant_texts = [p.text for p in relevant_posts]
    new_terms = extract_keywords(relevant_texts, Query(tuple(seed_terms), TOKEN),
                                 config.expansion.keywords, stopwords)
    stats = build_term_stats(new_terms, relevant_texts, text_only)
    (out_dir / "keywords.txt").write_text(keyword_report(stats), encoding="utf-8")

    # No new terms (keywords=0 or nothing learnable) means nothing to expand
    # with: the extended set equals the base set.
    if text_only and new_terms:
        scored = score_posts(text_only, seed_terms + new_terms,
                             scorer=config.expansion.scorer)
        promising = select_promising(scored, config.expansion.quantile)
        promoted = {s.post_id: s for s in promising}
        scored_to_csv([promoted.get(s.post_id, s) for s in scored],
                      out_dir / "scored.csv")
        by_id = {p.id: p for p in text_only}
        promising_posts = [by_id[s.post_id] for s in promising]
        new_res = geolocate_posts(promising_posts, gaz,
                                  weights=config.geo_weights, threads=threads)
        kept_new = list(country_filter(new_res, gaz, config.country, boundary))
    else:
        scored, promising, kept_new = [], [], []
        scored_to_csv([], out_dir / "scored.csv")

    extended = list(base) + kept_new
    resolutions_to_csv(extended, gaz, out_dir / "extended_resolutions.csv")
    return ExpandOutcome(new_keywords=new_terms, scored_count=len(scored),
                         promising_count=len(promising), base_count=len(base),
                         extended_count=len(extended), extended=extended)


def run_pipeline(config: PipelineConfig, window: TimeWindow, force: bool = False,
                 skip_expansion: bool = False, threads: int = 1) -> RunResult:
    """Execute the full replay: monitor, filter, geolocate, report.

    Precondition: the trigger fired in the window, unless force is given.
    """
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    monitor = run_monitor(config, window)
    if not monitor.decision.fired and not force:
        raise TriggerNotFired(monitor.decision)

    window_posts = [p for p in read_corpus(config.corpus)
                    if window.contains(p.created_at)]
    non_reposts = [p for p in window_posts if not p.is_retweet]
    with_images = [p for p in non_reposts if p.has_media]
    native_geotagged = [p for p in non_reposts if p.native_geo is not None]

    media = _media_stage(config, with_images, threads)
    kept_post_ids = {item.record.post_id for item in media.kept}
    relevant_posts = [p for p in with_images if p.id in kept_post_ids]
    write_corpus(relevant_posts, out_dir / "relevant.ndjson")
    verdicts_to_csv(media, out_dir / "verdicts.csv")

    gaz, boundary, merged, filtered = _geoloc_stage(config, relevant_posts, threads)
    resolutions_to_csv(merged, gaz, out_dir / "resolutions.csv")

    funnel_rows = list(zip(FUNNEL_LABELS, (
        len(window_posts), len(non_reposts), len(with_images),
        len(native_geotagged), media.input_total, media.passed, len(merged))))
    histogram = admin_level_histogram(merged)
    aggregates = _report_stage(config, out_dir, funnel_rows, media, filtered,
                               histogram, merged, gaz, monitor)

    expansion = None
    if not skip_expansion:
        expansion = _expansion_stage(config, out_dir, window_posts,
                                     relevant_posts, merged, gaz, boundary,
                                     threads)

    _write_json({
        "window": {"start": format_utc(window.start), "end": format_utc(window.end)},
        "country": config.country,
        "force": force,
        "skip_expansion": skip_expansion,
        "corpus": str(config.corpus),
        "counts": {
            "funnel": {label: value for label, value in funnel_rows},
            "generic_country_mentions": len(filtered.generic),
            "outside_boundary": len(filtered.outside),
        },
    }, out_dir / "run_meta.json")

    return RunResult(decision=monitor.decision, funnel_rows=funnel_rows,
                     filter_result=media, resolutions=merged,
                     aggregates=aggregates, expansion=expansion, out_dir=out_dir)


@_stage("media filter")
def _media_stage(config: PipelineConfig, with_images: Sequence[Post],
                 threads: int) -> FilterResult:
    records = media_records(with_images, base_dir=Path(config.corpus).parent)
    posts_by_id = {p.id: p for p in with_images}
    plugins = plugins_from_names(config.plugins, config.media_filter)
    return run_filter_pipeline(records, posts_by_id, config.media_filter,
                               plugins=plugins, threads=threads)


@_stage("geolocation")
def _geoloc_stage(config: PipelineConfig, relevant_posts: Sequence[Post],
                  threads: int):
    gaz = load_gazetteer(config.gazetteer)
    boundary = load_boundary(config.boundary)
    text_res = geolocate_posts(relevant_posts, gaz, weights=config.geo_weights,
                               threads=threads)
    filtered = country_filter(text_res, gaz, config.country, boundary)
    merged = merge_native(relevant_posts, list(filtered), gaz, boundary)
    return gaz, boundary, merged, filtered


@_stage("report")
def _report_stage(config: PipelineConfig, out_dir: Path, funnel_rows,
                  media: FilterResult, filtered, histogram,
                  merged: Sequence[GeoResolution], gaz: Gazetteer,
                  monitor: MonitorOutcome) -> list[RegionAggregate]:
    (out_dir / "funnel.txt").write_text(emit_funnel_report(funnel_rows),
                                        encoding="utf-8")
    _write_json({
        "rows": [[label, value] for label, value in funnel_rows],
        "media_stages": [{"name": s.name, "input": s.input,
                          "removed": s.removed, "output": s.output}
                         for s in media.stages],
        "unreadable": media.unreadable,
        "plugin_failures": media.plugin_failures,
        "generic_country_mentions": len(filtered.generic),
        "outside_boundary": len(filtered.outside),
    }, out_dir / "funnel.json")

    (out_dir / "admin_histogram.txt").write_text(emit_admin_histogram(histogram),
                                                 encoding="utf-8")
    _write_json({str(level): count for level, count in histogram.items()},
                out_dir / "admin_histogram.json")

    aggregates = rollup(merged, gaz, config.rollup_level)
    if config.population_table is not None:
        aggregates = normalize_aggregates(
            aggregates, load_population_table(config.population_table))
    aggregates_to_csv(aggregates, out_dir / "aggregates.csv")
    emit_geojson(aggregates, gaz, out_dir / "regions.geojson")
    emit_geojson(merged, gaz, out_dir / "points.geojson")

    timeline = build_timeline(_timeline_rows(config, monitor.decision,
                                             monitor.series))
    (out_dir / "timeline.txt").write_text(emit_alert_timeline(timeline),
                                          encoding="utf-8")
    _write_json({"rows": [{"source": r.source, "date": r.date, "note": r.note}
                          for r in timeline.rows]}, out_dir / "timeline.json")
    return aggregates


def run_expand(config: PipelineConfig, threads: int = 1) -> ExpandOutcome:
    """Standalone expansion over a prior run's artifacts."""
    config.validate()
    out_dir = Path(config.out_dir)
    meta_path = out_dir / "run_meta.json"
    if not meta_path.is_file():
        raise PipelineError(f"no prior run found in {out_dir} "
                            "(run_meta.json missing); run the pipeline first")
    with meta_path.open("r", encoding="utf-8") as handle:
        meta = json.load(handle)
    window = TimeWindow.from_iso(meta["window"]["start"], meta["window"]["end"])

    window_posts = [p for p in read_corpus(config.corpus)
                    if window.contains(p.created_at)]
    relevant_posts = list(read_corpus(out_dir / "relevant.ndjson"))
    base = resolutions_from_csv(out_dir / "resolutions.csv")
    gaz = load_gazetteer(config.gazetteer)
    boundary = load_boundary(config.boundary)
    return _expansion_stage(config, out_dir, window_posts, relevant_posts,
                            base, gaz, boundary, threads)


def demo_report() -> dict[str, str]:
    """Render the bundled demonstration dataset (a real 2021 flood event)
    from stored values: funnel, admin-level histogram, alert timeline."""
    package = resources.files("floodwatch.data.demo")
    funnel = json.loads(package.joinpath("thailand_funnel.json").read_text("utf-8"))
    admin = json.loads(
        package.joinpath("thailand_admin_levels.json").read_text("utf-8"))
    timeline_raw = json.loads(
        package.joinpath("thailand_timeline.json").read_text("utf-8"))
    timeline = build_timeline([
        TimelineRow(source=row["source"], date=row.get("date"),
                    note=row.get("note", ""))
        for row in timeline_raw["rows"]])
    return {
        "funnel": emit_funnel_report([(label, value)
                                      for label, value in funnel["rows"]]),
        "admin_histogram": emit_admin_histogram(
            {int(level): count for level, count in admin.items()}),
        "timeline": emit_alert_timeline(timeline),
    }


def render_reports(out_dir: str | Path) -> dict[str, str]:
    """Re-render the plain-text reports from a run's stored artifacts."""
    out = Path(out_dir)
    needed = ["funnel.json", "admin_histogram.json", "timeline.json"]
    missing = [n for n in needed if not (out / n).is_file()]
    if missing:
        raise PipelineError(f"no run artifacts in {out} (missing {missing})")
    funnel = json.loads((out / "funnel.json").read_text("utf-8"))
    admin = json.loads((out / "admin_histogram.json").read_text("utf-8"))
    timeline_raw = json.loads((out / "timeline.json").read_text("utf-8"))
    timeline = build_timeline([
        TimelineRow(source=row["source"], date=row.get("date"),
                    note=row.get("note", ""))
        for row in timeline_raw["rows"]])
    return {
        "funnel": emit_funnel_report([(label, value)
                                      for label, value in funnel["rows"]]),
        "admin_histogram": emit_admin_histogram(
            {int(level): count for level, count in admin.items()}),
        "timeline": emit_alert_timeline(timeline),
    }
