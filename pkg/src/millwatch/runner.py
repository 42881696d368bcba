"""Assemble a pipeline from a :class:`RunConfig` and run it."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .alertstore import AlertEngine, DebounceRule, LineSink, MemorySink, evaluate, EvalReport
from .analytics import AnalyticsConfig, CameraAnalytics
from .config import RunConfig
from .core import ConfigError
from .detect import OracleNoise, build_detector, select_model
from .fusion import Fusion, ScheduledFeed, SignalBus, TcpSignalFeed, read_signal_file
from .pipeline import (
    CameraStages,
    ClipSegmenter,
    LiveState,
    Pipeline,
    PipelineConfig,
    QueuePolicy,
    ReplaySource,
    RunReport,
    Sinks,
    SyntheticSource,
)
from .simsource import Scenario, load_scenario, read_replay, truth_events


@dataclass
class RunResult:
    report: RunReport
    pipeline: Pipeline
    engine: AlertEngine
    out_dir: Path | None
    scenarios: dict[str, Scenario] = field(default_factory=dict)

    def truth(self, config: RunConfig) -> list:
        out = []
        for cam in config.cameras:
            sc = self.scenarios.get(cam.camera_id)
            if sc is None:
                continue
            t = cam.thresholds
            out += truth_events(sc, cam.camera_id, t.nominal_billet_s, t.short_factor, t.long_factor, config.fusion.grace_s)
        return sorted(out, key=lambda e: (e.t_start, e.camera_id))

    def evaluate(self, config: RunConfig) -> EvalReport:
        return evaluate(
            self.engine.all_alerts(),
            self.truth(config),
            config.match_window_s,
            presence=self.pipeline.presence_pairs(),
        )


def analytics_config(cfg: RunConfig, cam) -> AnalyticsConfig:
    a, t = cfg.analytics, cam.thresholds
    return AnalyticsConfig(
        window=a.window,
        gap_tolerance=a.gap_tolerance,
        n_on=a.n_on,
        n_off=a.n_off,
        min_confidence=a.min_confidence,
        vibration_std_px=t.vibration_std_px,
        flapper_px=t.flapper_px,
        diverter_mm=t.diverter_mm,
        mm_per_px=cam.calibration.mm_per_px,
        reference_x=cam.calibration.reference_x,
        flapper_baseline=tuple(cam.baselines.flapper),
        rod_baseline_cy=cam.baselines.rod_cy,
        nominal_billet_s=t.nominal_billet_s,
        short_factor=t.short_factor,
        long_factor=t.long_factor,
    )


def build_pipeline(
    cfg: RunConfig,
    out_dir=None,
    live: LiveState | None = None,
    in_memory: bool = False,
    detector_override: str | None = None,
) -> tuple[Pipeline, dict[str, Scenario]]:
    """Create every stage for ``cfg``; configuration errors surface here, before any frame."""
    wall = cfg.clock == "wall"
    specs = cfg.registry_specs()
    shared_bus = None
    shared_feed = None
    sig = cfg.fusion.signals
    if sig.startswith("file:"):
        shared_bus = SignalBus(cfg.fusion.staleness_limit_s)
        shared_feed = ScheduledFeed(shared_bus, read_signal_file(sig[5:]))
    elif sig.startswith("tcp:"):
        host, _, port = sig[4:].rpartition(":")
        shared_bus = SignalBus(cfg.fusion.staleness_limit_s)
        shared_feed = TcpSignalFeed(shared_bus, host, int(port)).start()

    cameras = []
    scenarios: dict[str, Scenario] = {}
    for cam in cfg.cameras:
        if cam.source_kind == "synth":
            scenario = load_scenario(cam.source_path)
            if cam.profile_mm is not None and cam.profile_mm != scenario.profile_mm:
                scenario = Scenario(
                    scenario.seed, scenario.duration_s, scenario.fps, cam.profile_mm, scenario.events, scenario.start_ns
                )
            scenarios[cam.camera_id] = scenario
            source = SyntheticSource(scenario, cam.camera_id, cam.render)
            profile = scenario.profile_mm
        else:
            source = ReplaySource(cam.source_path, cam.camera_id)
            first = next(read_replay(cam.source_path), None)
            profile = cam.profile_mm or (first[0].profile_mm if first else 12)
        spec = select_model(specs, profile)
        if detector_override is not None:
            spec = type(spec)(detector_override, spec.supported_profiles, spec.latency_model_ms)
        n = cam.noise
        noise = OracleNoise(n.center_noise_px, n.miss_rate, n.fp_rate, cfg.seed if n.seed is None else n.seed)
        detector = build_detector(spec, noise, wall)

        if sig == "none":
            bus, feed, from_source = None, None, False
        elif sig == "synth":
            if cam.source_kind != "synth":
                raise ConfigError(f"camera {cam.camera_id}: signals 'synth' needs a synth source")
            bus, feed, from_source = SignalBus(cfg.fusion.staleness_limit_s), None, True
        else:
            bus, feed, from_source = shared_bus, shared_feed, False
        fusion = Fusion(bus, cfg.fusion.grace_s, cfg.fusion.suppression, name=f"{cam.camera_id}/fusion")
        analytics = CameraAnalytics(cam.camera_id, profile, analytics_config(cfg, cam))
        cameras.append(CameraStages(cam.camera_id, source, detector, analytics, fusion, feed, from_source))

    out = None
    if in_memory:
        metrics = MemorySink()
        engine = AlertEngine(DebounceRule(cfg.debounce_window_s))
        segmenter = None
    else:
        out = Path(out_dir if out_dir is not None else cfg.sinks.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        metrics = LineSink(out / cfg.sinks.metrics_file)
        engine = AlertEngine(DebounceRule(cfg.debounce_window_s), out / cfg.sinks.alerts_file)
        segmenter = ClipSegmenter(out / "clips", cfg.clip_len_s) if cfg.sinks.clips else None
    if live is not None:
        live.camera_ids = [c.camera_id for c in cfg.cameras]
        live.engine = engine
    pcfg = PipelineConfig(
        simulated=not wall,
        acquire_capacity=cfg.queues.acquire.capacity,
        acquire_policy=QueuePolicy(cfg.queues.acquire.policy),
        stage_capacity=cfg.queues.stage.capacity,
        stage_policy=QueuePolicy(cfg.queues.stage.policy),
        storage_capacity=cfg.queues.storage.capacity,
        storage_policy=QueuePolicy(cfg.queues.storage.policy),
        warmup_frames=cfg.warmup_frames,
    )
    pipe = Pipeline(pcfg, cameras, Sinks(metrics, engine, segmenter), live)
    pipe.out_dir = out
    return pipe, scenarios


def run(cfg: RunConfig, out_dir=None, live: LiveState | None = None, in_memory: bool = False, **kw: Any) -> RunResult:
    pipe, scenarios = build_pipeline(cfg, out_dir, live, in_memory, **kw)
    report = pipe.run()
    if hasattr(pipe.sinks.metrics, "close"):
        pipe.sinks.metrics.close()
    return RunResult(report, pipe, pipe.sinks.engine, pipe.out_dir, scenarios)
