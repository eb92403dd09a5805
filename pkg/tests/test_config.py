"""YAML pipeline configuration, overrides, and validation."""

import pytest

from floodwatch.config import (
    ConfigError,
    ExpansionConfig,
    PipelineConfig,
    load_config,
    with_out_dir,
)


def test_load_event_fixture_config(event_fixture):
    config = load_config(event_fixture["config"])
    assert config.country == "TH"
    assert config.corpus == event_fixture["corpus"]
    assert config.bucket_width == 86400
    assert config.rollup_level == 4
    assert config.trigger.baseline_window == 7
    assert len(config.external_alerts) == 3
    config.validate()


def test_relative_paths_resolve_against_config_dir(event_fixture):
    config = load_config(event_fixture["config"])
    assert config.gazetteer.is_absolute()
    assert config.gazetteer.parent == event_fixture["config"].parent


def test_nested_sections_override_defaults(tmp_path, event_fixture):
    root = event_fixture["root"]
    path = tmp_path / "tuned.yaml"
    path.write_text(
        f"corpus: {root / 'corpus.ndjson'}\n"
        f"dictionaries: [{root / 'dict_flood_en.yaml'}]\n"
        f"gazetteer: {root / 'gazetteer.ndjson'}\n"
        f"boundary: {root / 'boundary.json'}\n"
        "country: TH\n"
        "out_dir: out\n"
        "trigger: {baseline_window: 3, ratio_threshold: 5.0, min_count: 10}\n"
        "media_filter: {dedup_threshold: 4}\n"
        "geoloc: {coherence_weight: 0.7, rank_weight: 0.3, rounds: 1}\n"
        "expansion: {keywords: 5, quantile: 0.8, scorer: cosine}\n",
        encoding="utf-8")
    config = load_config(path)
    assert config.trigger.baseline_window == 3
    assert config.trigger.ratio_threshold == 5.0
    assert config.media_filter.dedup_threshold == 4
    assert config.geo_weights.coherence == 0.7
    assert config.geo_weights.rounds == 1
    assert config.expansion.keywords == 5
    assert config.expansion.scorer == "cosine"


def test_env_var_override(event_fixture, tmp_path, monkeypatch):
    override = tmp_path / "elsewhere"
    monkeypatch.setenv("FLOODWATCH_OUT_DIR", str(override))
    config = load_config(event_fixture["config"])
    assert config.out_dir == override


def test_missing_referenced_file_fails_validation(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(
        "corpus: absent.ndjson\n"
        "dictionaries: [absent.yaml]\n"
        "gazetteer: absent.ndjson\n"
        "boundary: absent.json\n"
        "country: TH\n"
        "out_dir: out\n", encoding="utf-8")
    config = load_config(path)
    with pytest.raises(ConfigError):
        config.validate()


def test_missing_required_key_rejected(tmp_path):
    path = tmp_path / "short.yaml"
    path.write_text("country: TH\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_expansion_values_rejected():
    with pytest.raises(ConfigError):
        ExpansionConfig(quantile=1.5)
    with pytest.raises(ConfigError):
        ExpansionConfig(keywords=-1)
    with pytest.raises(ConfigError):
        ExpansionConfig(scorer="bm25")


def test_with_out_dir_changes_only_out_dir(event_fixture, tmp_path):
    config = load_config(event_fixture["config"])
    moved = with_out_dir(config, tmp_path / "runs")
    assert moved.out_dir == tmp_path / "runs"
    assert moved.corpus == config.corpus
    assert moved.trigger == config.trigger


def test_unknown_rollup_level_rejected(event_fixture, tmp_path):
    root = event_fixture["root"]
    path = tmp_path / "lvl.yaml"
    path.write_text(
        f"corpus: {root / 'corpus.ndjson'}\n"
        f"dictionaries: [{root / 'dict_flood_en.yaml'}]\n"
        f"gazetteer: {root / 'gazetteer.ndjson'}\n"
        f"boundary: {root / 'boundary.json'}\n"
        "country: TH\n"
        "out_dir: out\n"
        "rollup_level: 5\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path).validate()
