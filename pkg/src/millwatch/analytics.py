"""Per-camera feature extraction: rod vibration, flapper, diverter, billets."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (
    AnomalyEvent,
    Detection,
    EventKind,
    Frame,
    MetricPoint,
    NS_PER_S,
    ObjectClass,
    ValidationError,
)
from .simsource import DIVERTER_REF_X, FLAPPER_BASELINE


@dataclass
class AnalyticsConfig:
    window: int = 30
    gap_tolerance: int = 5
    n_on: int = 3
    n_off: int = 5
    min_confidence: float = 0.5
    vibration_std_px: float = 15.0
    flapper_px: float = 20.0
    diverter_mm: float = 5.0
    mm_per_px: float = 0.5
    reference_x: float = DIVERTER_REF_X
    flapper_baseline: tuple[float, float] = FLAPPER_BASELINE
    rod_baseline_cy: float | None = None
    nominal_billet_s: float = 9.0
    short_factor: float = 0.8
    long_factor: float = 1.25

    def __post_init__(self) -> None:
        for name in ("window", "n_on", "n_off"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.window < 2:
            raise ValidationError("window must hold at least 2 samples")
        if self.gap_tolerance < 0:
            raise ValidationError("gap_tolerance must be >= 0")
        for name in ("vibration_std_px", "flapper_px", "diverter_mm", "mm_per_px", "nominal_billet_s"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if not 0 < self.short_factor < 1:
            raise ValidationError("short_factor must be in (0, 1)")
        if not self.long_factor > 1:
            raise ValidationError("long_factor must be > 1")


# --------------------------------------------------------------------------
# rod tracking and vibration


@dataclass
class RodTrack:
    camera_id: str
    window_size: int = 30
    gap_tolerance: int = 5
    baseline_cy: float | None = None
    window: deque = field(default_factory=deque)
    gap_count: int = 0
    resets: int = 0
    _baseline_fixed: bool = False
    _warmup: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self._baseline_fixed = self.baseline_cy is not None

    @property
    def full(self) -> bool:
        return len(self.window) == self.window_size

    def values(self) -> list[float]:
        return [cy for _, cy in self.window]


def pick_rod(detections: Iterable[Detection]) -> Detection | None:
    rods = [d for d in detections if d.cls is ObjectClass.ROD]
    if not rods:
        return None
    return min(rods, key=lambda d: (-d.confidence, d.center[0]))


def update_track(track: RodTrack, detections_for_frame: Sequence[Detection]) -> RodTrack:
    rod = pick_rod(detections_for_frame)
    if rod is None:
        track.gap_count += 1
        if track.gap_count > track.gap_tolerance and track.window:
            track.window.clear()
            track.resets += 1
        return track
    track.gap_count = 0
    cy = rod.center[1]
    track.window.append((rod.frame_seq, cy))
    while len(track.window) > track.window_size:
        track.window.popleft()
    if not track._baseline_fixed:
        # baseline = mean of the first full window of accepted samples
        track._warmup.append(cy)
        if len(track._warmup) == track.window_size:
            track.baseline_cy = math.fsum(track._warmup) / len(track._warmup)
            track._baseline_fixed = True
            track._warmup = []
    return track


@dataclass(frozen=True)
class VibrationStats:
    mean: float
    std: float
    min: float
    max: float
    n: int


def vibration_stats(window) -> VibrationStats | None:
    """Population statistics of the rod's vertical centre; None below 2 samples."""
    values = [v[1] if isinstance(v, tuple) else float(v) for v in window]
    n = len(values)
    if n < 2:
        return None
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    lo, hi = min(values), max(values)
    # fsum rounding can nudge a constant window's mean off its value
    mean = min(max(mean, lo), hi)
    return VibrationStats(mean, math.sqrt(var), lo, hi, n)


def check_vibration(
    stats: VibrationStats | None,
    threshold_px_std: float,
    window_size: int,
    camera_id: str = "",
    frame_seq: int = 0,
    ts: int = 0,
) -> AnomalyEvent | None:
    if stats is None or stats.n != window_size or not stats.std > threshold_px_std:
        return None
    return AnomalyEvent(
        EventKind.VIBRATION,
        camera_id,
        frame_seq,
        ts,
        stats.std,
        f"rod centre std {stats.std:.2f} px > {threshold_px_std:g} px over {stats.n} frames",
    )


# --------------------------------------------------------------------------
# flapper and diverter


@dataclass(frozen=True)
class FlapperBaseline:
    baseline: tuple[float, float]
    threshold_px: float

    def __post_init__(self) -> None:
        if not self.threshold_px > 0:
            raise ValidationError("threshold_px must be > 0")


@dataclass(frozen=True)
class DiverterCalibration:
    mm_per_px: float
    reference_x: float
    threshold_mm: float

    def __post_init__(self) -> None:
        if not self.mm_per_px > 0:
            raise ValidationError("mm_per_px must be > 0")
        if not self.threshold_mm > 0:
            raise ValidationError("threshold_mm must be > 0")


def flapper_deviation(
    detection: Detection, baseline: FlapperBaseline, camera_id: str = "", ts: int = 0
) -> tuple[float, AnomalyEvent | None]:
    if detection.cls is not ObjectClass.FLAPPER:
        raise ValidationError(f"expected a Flapper detection, got {detection.cls.value}")
    cx, cy = detection.center
    bx, by = baseline.baseline
    disp = math.hypot(cx - bx, cy - by)
    if disp > baseline.threshold_px:
        return disp, AnomalyEvent(
            EventKind.FLAPPER_DEVIATION,
            camera_id,
            detection.frame_seq,
            ts,
            disp,
            f"flapper {disp:.1f} px from baseline ({bx:g}, {by:g})",
        )
    return disp, None


def diverter_shift_mm(
    detection: Detection, calib: DiverterCalibration, camera_id: str = "", ts: int = 0
) -> tuple[float, AnomalyEvent | None]:
    if detection.cls is not ObjectClass.DIVERTER:
        raise ValidationError(f"expected a Diverter detection, got {detection.cls.value}")
    shift = abs(detection.center[0] - calib.reference_x) * calib.mm_per_px
    if shift > calib.threshold_mm:
        return shift, AnomalyEvent(
            EventKind.DIVERTER_SHIFT,
            camera_id,
            detection.frame_seq,
            ts,
            shift,
            f"diverter shifted {shift:.2f} mm from reference x={calib.reference_x:g}",
        )
    return shift, None


# --------------------------------------------------------------------------
# billet presence


class BilletPhase(str, enum.Enum):
    ABSENT = "Absent"
    ENTERING = "Entering"
    PRESENT = "Present"
    EXITING = "Exiting"


@dataclass(frozen=True)
class BilletInterval:
    entry_ts: int
    exit_ts: int

    @property
    def duration_s(self) -> float:
        return (self.exit_ts - self.entry_ts) / NS_PER_S


@dataclass
class BilletState:
    nominal_duration_s: float = 9.0
    short_factor: float = 0.8
    long_factor: float = 1.25
    n_on: int = 3
    n_off: int = 5
    phase: BilletPhase = BilletPhase.ABSENT
    on_count: int = 0
    off_count: int = 0
    entry_ts: int | None = None
    exit_ts: int | None = None
    last_present_ts: int | None = None
    camera_id: str = ""
    frame_seq: int = 0


def update_billet(
    state: BilletState, rod_present_this_frame: bool, ts: int
) -> tuple[BilletState, BilletInterval | None, AnomalyEvent | None]:
    """Advance the presence hysteresis by one frame.

    ``n_on`` consecutive present frames open a billet dated from the first of
    them; ``n_off`` consecutive absent frames close it at the last present
    frame.
    """
    phase = state.phase
    completed = None
    if phase in (BilletPhase.ABSENT, BilletPhase.ENTERING):
        if rod_present_this_frame:
            if phase is BilletPhase.ABSENT:
                state.on_count = 0
                state.entry_ts = ts
            state.on_count += 1
            state.last_present_ts = ts
            state.phase = BilletPhase.PRESENT if state.on_count >= state.n_on else BilletPhase.ENTERING
            if state.phase is BilletPhase.PRESENT:
                state.off_count = 0
        else:
            state.phase = BilletPhase.ABSENT
            state.on_count = 0
    else:
        if rod_present_this_frame:
            state.phase = BilletPhase.PRESENT
            state.off_count = 0
            state.last_present_ts = ts
        else:
            state.off_count += 1
            state.phase = BilletPhase.EXITING
            if state.off_count >= state.n_off:
                state.exit_ts = state.last_present_ts
                completed = BilletInterval(state.entry_ts, state.exit_ts)
                state.phase = BilletPhase.ABSENT
                state.on_count = 0
                state.off_count = 0

    event = None
    if completed is not None:
        d = completed.duration_s
        if d < state.short_factor * state.nominal_duration_s:
            event = AnomalyEvent(
                EventKind.SHORT_METAL,
                state.camera_id,
                state.frame_seq,
                ts,
                d,
                f"billet {d:.2f} s < {state.short_factor:g} x nominal {state.nominal_duration_s:g} s",
            )
        elif d > state.long_factor * state.nominal_duration_s:
            event = AnomalyEvent(
                EventKind.ABNORMAL_BILLET_DURATION,
                state.camera_id,
                state.frame_seq,
                ts,
                d,
                f"billet {d:.2f} s > {state.long_factor:g} x nominal {state.nominal_duration_s:g} s",
            )
    return state, completed, event


def open_interval(state: BilletState) -> BilletInterval | None:
    """The billet currently in view, if the hysteresis has accepted one."""
    if state.phase in (BilletPhase.PRESENT, BilletPhase.EXITING):
        return BilletInterval(state.entry_ts, state.last_present_ts)
    return None


# --------------------------------------------------------------------------
# per-camera driver


@dataclass
class AnalyticsOutput:
    events: list[AnomalyEvent]
    metrics: list[MetricPoint]
    rod_seen: bool
    billet: BilletInterval | None = None


class CameraAnalytics:
    """Runs all four extractors for one camera, one frame at a time.

    Threshold events fire once per excursion: after firing, a detector stays
    quiet until its measurement drops back to or below the threshold.
    """

    def __init__(self, camera_id: str, profile_mm: int, config: AnalyticsConfig | None = None) -> None:
        self.camera_id = camera_id
        self.profile_mm = profile_mm
        self.config = cfg = config or AnalyticsConfig()
        self.track = RodTrack(camera_id, cfg.window, cfg.gap_tolerance, cfg.rod_baseline_cy)
        self.flapper = FlapperBaseline(tuple(cfg.flapper_baseline), cfg.flapper_px)
        self.diverter = DiverterCalibration(cfg.mm_per_px, cfg.reference_x, cfg.diverter_mm)
        self.billet = BilletState(
            cfg.nominal_billet_s, cfg.short_factor, cfg.long_factor, cfg.n_on, cfg.n_off, camera_id=camera_id
        )
        self.billets: list[BilletInterval] = []
        self._armed = {EventKind.VIBRATION: True, EventKind.FLAPPER_DEVIATION: True, EventKind.DIVERTER_SHIFT: True}
        self._tags = {"camera_id": camera_id, "profile": f"{profile_mm}mm"}

    def _fire(self, kind: EventKind, event: AnomalyEvent | None, out: list[AnomalyEvent]) -> None:
        if event is None:
            self._armed[kind] = True
        elif self._armed[kind]:
            self._armed[kind] = False
            out.append(event)

    def _point(self, measurement: str, fields: dict, ts: int) -> MetricPoint:
        return MetricPoint(measurement, fields, ts, self._tags)

    def process(self, frame: Frame, detections: Sequence[Detection]) -> AnalyticsOutput:
        cfg = self.config
        ts, seq = frame.ts_acquire, frame.seq
        confident = [d for d in detections if d.confidence >= cfg.min_confidence]
        events: list[AnomalyEvent] = []
        metrics: list[MetricPoint] = []

        resets = self.track.resets
        update_track(self.track, confident)
        if self.track.resets != resets:
            self._armed[EventKind.VIBRATION] = True
        stats = vibration_stats(self.track.window)
        if stats is not None:
            fields = {"mean": stats.mean, "std": stats.std, "min": stats.min, "max": stats.max, "n": stats.n}
            if self.track.baseline_cy is not None:
                fields["deviation"] = stats.mean - self.track.baseline_cy
            metrics.append(self._point("rod_alignment", fields, ts))
            if stats.n == cfg.window:
                self._fire(
                    EventKind.VIBRATION,
                    check_vibration(stats, cfg.vibration_std_px, cfg.window, self.camera_id, seq, ts),
                    events,
                )

        flap = _best(confident, ObjectClass.FLAPPER)
        if flap is not None:
            disp, ev = flapper_deviation(flap, self.flapper, self.camera_id, ts)
            metrics.append(self._point("flapper", {"displacement_px": disp}, ts))
            self._fire(EventKind.FLAPPER_DEVIATION, ev, events)

        div = _best(confident, ObjectClass.DIVERTER)
        if div is not None:
            shift, ev = diverter_shift_mm(div, self.diverter, self.camera_id, ts)
            metrics.append(self._point("diverter", {"shift_mm": shift}, ts))
            self._fire(EventKind.DIVERTER_SHIFT, ev, events)

        rod_seen = any(d.cls is ObjectClass.ROD for d in confident)
        self.billet.frame_seq = seq
        _, interval, ev = update_billet(self.billet, rod_seen, ts)
        if interval is not None:
            self.billets.append(interval)
            metrics.append(self._point("billet", {"duration": interval.duration_s}, ts))
        if ev is not None:
            events.append(ev)
        return AnalyticsOutput(events, metrics, rod_seen, interval)

    def presence_intervals(self) -> list[BilletInterval]:
        current = open_interval(self.billet)
        return self.billets + ([current] if current is not None else [])


def _best(detections: Sequence[Detection], cls: ObjectClass) -> Detection | None:
    found = [d for d in detections if d.cls is cls]
    if not found:
        return None
    return min(found, key=lambda d: (-d.confidence, d.center[0]))
