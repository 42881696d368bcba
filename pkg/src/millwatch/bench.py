"""Wall-clock latency and throughput harness."""

from __future__ import annotations

import tempfile
from dataclasses import asdict, dataclass, field, replace
from typing import Any

from .alertstore import AlertEngine, DebounceRule, LineSink, sink_overhead
from .analytics import AnalyticsConfig, AnalyticsOutput, CameraAnalytics
from .core import InsufficientSamples
from .detect import DetectorSpec, OracleNoise, build_detector
from .fusion import Fusion, SignalBus
from .pipeline import CameraStages, Pipeline, PipelineConfig, QueuePolicy, Sinks, SyntheticSource
from .simsource import Scenario

MIN_FRAMES = 1000
WARMUP_FRAMES = 100


@dataclass
class LatencyReport:
    frames: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    max_ms: float
    sustained_fps: float
    source_fps: float
    dropped: int
    warmup_excluded: int
    stage_ms: dict[str, float] = field(default_factory=dict)
    sink: dict[str, float] | None = None
    frames_in: int = 0
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class NullAnalytics:
    """Analytics stand-in that does no work."""

    def __init__(self) -> None:
        self.billets: list = []

    def process(self, frame, detections) -> AnalyticsOutput:
        return AnalyticsOutput([], [], False)

    def presence_intervals(self) -> list:
        return []


def fit_scenario(scenario: Scenario, n_frames: int) -> Scenario:
    """Stretch or trim ``scenario`` to exactly ``n_frames`` frames."""
    duration = n_frames / scenario.fps
    while int(scenario.fps * duration + 1e-9) < n_frames:
        duration += 0.5 / scenario.fps
    events = tuple(e for e in scenario.events if e.t_end_s <= duration)
    fitted = replace(scenario, duration_s=duration, events=events)
    assert fitted.n_frames == n_frames, (fitted.n_frames, n_frames)
    return fitted


def measure(
    scenario: Scenario,
    n_frames: int,
    *,
    latency_model_ms: float = 0.0,
    acquire_capacity: int = 128,
    acquire_policy: QueuePolicy | str = QueuePolicy.DROP_OLDEST,
    detector: str = "oracle",
    null_analytics: bool = False,
    noise: OracleNoise | None = None,
    analytics: AnalyticsConfig | None = None,
    out_dir=None,
    live=None,
) -> LatencyReport:
    """Run ``n_frames`` of ``scenario`` through the threaded pipeline in real time."""
    if n_frames < MIN_FRAMES:
        raise InsufficientSamples(f"need at least {MIN_FRAMES} frames for percentiles, got {n_frames}")
    sc = fit_scenario(scenario, n_frames)
    spec = DetectorSpec(detector, frozenset({sc.profile_mm}), latency_model_ms)
    det = build_detector(spec, noise or OracleNoise(seed=sc.seed), wall_clock=True)
    an = NullAnalytics() if null_analytics else CameraAnalytics("bench", sc.profile_mm, analytics)
    fusion = Fusion(None if null_analytics else SignalBus(), name="bench/fusion")
    stages = CameraStages(
        "bench", SyntheticSource(sc, "bench"), det, an, fusion, None, signals_from_source=not null_analytics
    )
    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="millwatch-bench-")
        out_dir = tmp.name
    sink = LineSink(f"{out_dir}/metrics.lp")
    engine = AlertEngine(DebounceRule(), f"{out_dir}/alerts.ndjson")
    cfg = PipelineConfig(
        simulated=False,
        acquire_capacity=acquire_capacity,
        acquire_policy=QueuePolicy(acquire_policy),
        warmup_frames=WARMUP_FRAMES,
    )
    try:
        report = Pipeline(cfg, [stages], Sinks(sink, engine, None), live).run()
    finally:
        sink.close()
        if tmp is not None:
            tmp.cleanup()
    try:
        so = sink_overhead(sink)
        sink_stats = {"n": so.n, "mean_ms": so.mean_ms, "p99_ms": so.p99_ms}
    except InsufficientSamples:
        sink_stats = None
    lat = report.latency
    return LatencyReport(
        frames=lat.n,
        mean_ms=lat.mean_ms,
        p50_ms=lat.p50_ms,
        p95_ms=lat.p95_ms,
        p99_ms=lat.p99_ms,
        max_ms=lat.max_ms,
        sustained_fps=report.sustained_fps,
        source_fps=sc.fps,
        dropped=report.dropped,
        warmup_excluded=report.warmup_excluded,
        stage_ms=report.stage_ms,
        sink=sink_stats,
        frames_in=report.frames_in,
        failed=report.failed,
        error=report.error,
    )
