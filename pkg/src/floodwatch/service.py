"""HTTP service wrapping the pipeline.

Each endpoint executes one batch stage over a config file and returns a
summary; artifacts land on disk under the run's output directory exactly
as with the library API. The CLI talks to this service (in-process by
default), so both front ends share one code path.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import ConfigError, load_config, with_out_dir
from .corpus import CorpusError, TimeWindow
from .geoloc import GeolocError
from .monitor import MonitorError
from .pipeline import (PipelineError, TriggerNotFired, demo_report,
                       render_reports, run_expand, run_monitor, run_pipeline)

logger = logging.getLogger(__name__)

_BAD_INPUT = (ConfigError, CorpusError, MonitorError, GeolocError, ValueError)


class MonitorRequest(BaseModel):
    config_path: str
    window_start: str
    window_end: str
    out_dir: str | None = None


class MonitorResponse(BaseModel):
    fired: bool
    bucket_index: int | None
    observed: int
    baseline_mean: float
    ratio: float
    counts_path: str
    trigger_path: str


class RunRequest(BaseModel):
    config_path: str
    window_start: str
    window_end: str
    force: bool = False
    skip_expansion: bool = False
    threads: int = Field(default=1, ge=1, le=64)
    out_dir: str | None = None


class FunnelRow(BaseModel):
    label: str
    count: int


class ExpansionSummary(BaseModel):
    new_keywords: list[str]
    scored: int
    promising: int
    base_resolutions: int
    extended_resolutions: int


class RunResponse(BaseModel):
    fired: bool
    funnel: list[FunnelRow]
    resolutions: int
    expansion: ExpansionSummary | None = None
    out_dir: str


class ExpandRequest(BaseModel):
    config_path: str
    threads: int = Field(default=1, ge=1, le=64)
    out_dir: str | None = None


class ExpandResponse(ExpansionSummary):
    out_dir: str


class ReportRequest(BaseModel):
    config_path: str | None = None
    out_dir: str | None = None
    demo: bool = False


class ReportResponse(BaseModel):
    funnel: str
    admin_histogram: str
    timeline: str


def _config_for(config_path: str, out_dir: str | None):
    try:
        return with_out_dir(load_config(config_path), out_dir)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _window_for(start: str, end: str) -> TimeWindow:
    try:
        return TimeWindow.from_iso(start, end)
    except (CorpusError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"bad window: {exc}") from exc


def _summary(expansion) -> ExpansionSummary:
    return ExpansionSummary(
        new_keywords=expansion.new_keywords, scored=expansion.scored_count,
        promising=expansion.promising_count, base_resolutions=expansion.base_count,
        extended_resolutions=expansion.extended_count)


def create_app() -> FastAPI:
    app = FastAPI(title="floodwatch", version=__version__,
                  description="Replay-capable flood alerting over social media "
                              "corpora: monitoring, image filtering, "
                              "geolocation, expansion, and reporting.")

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/v1/monitor", response_model=MonitorResponse)
    def monitor(request: MonitorRequest) -> MonitorResponse:
        config = _config_for(request.config_path, request.out_dir)
        window = _window_for(request.window_start, request.window_end)
        try:
            outcome = run_monitor(config, window)
        except _BAD_INPUT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        decision = outcome.decision
        return MonitorResponse(
            fired=decision.fired, bucket_index=decision.bucket_index,
            observed=decision.observed, baseline_mean=decision.baseline_mean,
            ratio=decision.ratio, counts_path=str(outcome.counts_path),
            trigger_path=str(outcome.trigger_path))

    @app.post("/v1/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        config = _config_for(request.config_path, request.out_dir)
        window = _window_for(request.window_start, request.window_end)
        try:
            result = run_pipeline(config, window, force=request.force,
                                  skip_expansion=request.skip_expansion,
                                  threads=request.threads)
        except TriggerNotFired as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except _BAD_INPUT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except PipelineError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        return RunResponse(
            fired=result.decision.fired,
            funnel=[FunnelRow(label=label, count=count)
                    for label, count in result.funnel_rows],
            resolutions=len(result.resolutions),
            expansion=(_summary(result.expansion)
                       if result.expansion is not None else None),
            out_dir=str(result.out_dir))

    @app.post("/v1/expand", response_model=ExpandResponse)
    def expand(request: ExpandRequest) -> ExpandResponse:
        config = _config_for(request.config_path, request.out_dir)
        try:
            outcome = run_expand(config, threads=request.threads)
        except _BAD_INPUT as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except PipelineError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        summary = _summary(outcome)
        return ExpandResponse(**summary.model_dump(), out_dir=str(config.out_dir))

    @app.post("/v1/report", response_model=ReportResponse)
    def report(request: ReportRequest) -> ReportResponse:
        if request.demo:
            texts = demo_report()
        else:
            out_dir = request.out_dir
            if out_dir is None and request.config_path is not None:
                out_dir = str(_config_for(request.config_path, None).out_dir)
            if out_dir is None:
                raise HTTPException(
                    status_code=400,
                    detail="report needs --demo, an output directory, or a config")
            try:
                texts = render_reports(out_dir)
            except PipelineError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
        return ReportResponse(funnel=texts["funnel"],
                              admin_histogram=texts["admin_histogram"],
                              timeline=texts["timeline"])

    return app


app = create_app()
