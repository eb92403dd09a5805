"""Pipeline configuration: one YAML file describing an event replay.

Relative paths are resolved against the config file's directory so a
checked-in config plus fixtures is runnable from anywhere. Path fields
accept ${VAR} substitution and can be overridden with FLOODWATCH_<FIELD>
environment variables, which keeps acceptance runs reproducible without
editing files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import yaml

from .geoloc import ADMIN_LEVELS, ScoringWeights
from .mediafilter import FilterConfig, PLUGIN_REGISTRY
from .monitor import TriggerConfig
from .report import TimelineRow

DEFAULT_SYSTEM_NAME = "floodwatch"

_PATH_FIELDS = ("corpus", "gazetteer", "boundary", "population_table",
                "stopwords", "out_dir")


class ConfigError(Exception):
    """Raised when a config file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class ExpansionConfig:
    keywords: int = 2           # new terms to learn
    quantile: float = 0.9       # promising-score cutoff
    scorer: str = "cumulative"  # cumulative | cosine

    def __post_init__(self):
        if self.keywords < 0:
            raise ConfigError("expansion.keywords must be >= 0")
        if not 0 < self.quantile < 1:
            raise ConfigError("expansion.quantile must be in (0, 1)")
        if self.scorer not in ("cumulative", "cosine"):
            raise ConfigError(f"unknown expansion.scorer {self.scorer!r}")


@dataclass(frozen=True)
class PipelineConfig:
    corpus: Path
    dictionaries: tuple[Path, ...]
    gazetteer: Path
    boundary: Path
    country: str
    out_dir: Path
    bucket_width: int = 86400
    trigger: TriggerConfig = TriggerConfig()
    media_filter: FilterConfig = FilterConfig()
    plugins: tuple[str, ...] = ("photo_default", "nsfw_passthrough")
    geo_weights: ScoringWeights = ScoringWeights()
    expansion: ExpansionConfig = ExpansionConfig()
    rollup_level: int = 4
    population_table: Path | None = None
    stopwords: Path | None = None
    system_name: str = DEFAULT_SYSTEM_NAME
    external_alerts: tuple[TimelineRow, ...] = ()

    def validate(self) -> None:
        """Check numeric ranges and that every referenced file exists."""
        if self.bucket_width <= 0:
            raise ConfigError("bucket_width must be > 0")
        if self.rollup_level not in ADMIN_LEVELS:
            raise ConfigError(f"rollup_level must be one of {sorted(ADMIN_LEVELS)}")
        if min(self.geo_weights.coherence, self.geo_weights.rank) < 0:
            raise ConfigError("geoloc weights must be >= 0")
        unknown = [p for p in self.plugins if p not in PLUGIN_REGISTRY]
        if unknown:
            raise ConfigError(f"unknown media filter plugins: {unknown}")
        if not self.dictionaries:
            raise ConfigError("at least one dictionary is required")
        for path in (self.corpus, self.gazetteer, self.boundary,
                     *self.dictionaries, self.population_table, self.stopwords):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"referenced file does not exist: {path}")


def _resolve(value: str, base: Path) -> Path:
    expanded = Path(os.path.expandvars(value)).expanduser()
    return expanded if expanded.is_absolute() else (base / expanded).resolve()


def load_config(path: str | Path, overrides: Mapping[str, str] | None = None
                ) -> PipelineConfig:
    """Load and materialize a config; environment variables named
    FLOODWATCH_<FIELD> (e.g. FLOODWATCH_OUT_DIR) override path fields."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        try:
            raw = yaml.safe_load(handle) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping ({path})")

    env = dict(overrides) if overrides is not None else {
        name: os.environ[f"FLOODWATCH_{name.upper()}"]
        for name in _PATH_FIELDS if f"FLOODWATCH_{name.upper()}" in os.environ
    }
    for name in _PATH_FIELDS:
        if name in env:
            raw[name] = env[name]

    base = path.parent.resolve()
    try:
        trigger_raw = raw.get("trigger", {})
        media_raw = raw.get("media_filter", {})
        geo_raw = raw.get("geoloc", {})
        expansion_raw = raw.get("expansion", {})
        config = PipelineConfig(
            corpus=_resolve(str(raw["corpus"]), base),
            dictionaries=tuple(_resolve(str(p), base)
                               for p in raw.get("dictionaries", [])),
            gazetteer=_resolve(str(raw["gazetteer"]), base),
            boundary=_resolve(str(raw["boundary"]), base),
            country=str(raw["country"]),
            out_dir=_resolve(str(raw.get("out_dir", "out")), base),
            bucket_width=int(raw.get("bucket_width", 86400)),
            trigger=TriggerConfig(
                baseline_window=int(trigger_raw.get("baseline_window", 7)),
                ratio_threshold=float(trigger_raw.get("ratio_threshold", 3.0)),
                min_count=int(trigger_raw.get("min_count", 100)),
            ),
            media_filter=FilterConfig(
                dedup_threshold=int(media_raw.get("dedup_threshold", 10)),
                unique_color_min=float(media_raw.get("unique_color_min", 0.05)),
                flat_fraction_max=float(media_raw.get("flat_fraction_max", 0.60)),
                near_zero_gradient=float(media_raw.get("near_zero_gradient", 2.0)),
            ),
            plugins=tuple(media_raw.get("plugins",
                                        ("photo_default", "nsfw_passthrough"))),
            geo_weights=ScoringWeights(
                coherence=float(geo_raw.get("coherence_weight", 0.6)),
                rank=float(geo_raw.get("rank_weight", 0.4)),
                rounds=int(geo_raw.get("rounds", 2)),
            ),
            expansion=ExpansionConfig(
                keywords=int(expansion_raw.get("keywords", 2)),
                quantile=float(expansion_raw.get("quantile", 0.9)),
                scorer=str(expansion_raw.get("scorer", "cumulative")),
            ),
            rollup_level=int(raw.get("rollup_level", 4)),
            population_table=(_resolve(str(raw["population_table"]), base)
                              if raw.get("population_table") else None),
            stopwords=(_resolve(str(raw["stopwords"]), base)
                       if raw.get("stopwords") else None),
            system_name=str(raw.get("system_name", DEFAULT_SYSTEM_NAME)),
            external_alerts=tuple(
                TimelineRow(source=str(row["source"]),
                            date=str(row["date"]) if row.get("date") else None,
                            note=str(row.get("note", "")))
                for row in raw.get("external_alerts", [])
            ),
        )
    except KeyError as exc:
        raise ConfigError(f"config {path} is missing required field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    return config


def with_out_dir(config: PipelineConfig, out_dir: str | Path | None
                 ) -> PipelineConfig:
    if out_dir is None:
        return config
    return replace(config, out_dir=Path(out_dir).resolve())
