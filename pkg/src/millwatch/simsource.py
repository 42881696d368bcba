"""Scenario-scripted synthetic mill camera and NDJSON replay.

A scenario is a list of timed script events on a simulated clock. The
generator turns it into a frame stream with exact ground truth for the rod,
the flapper and the diverter, plus the matching process-signal snapshots.

Scene geometry (pixels, 640x480 view):

    rod        centre x 320, resting centre y 240, 200x20 box
    flapper    resting centre (160, 120), 40x40 box
    diverter   reference centre x 480 at y 360, 30x60 box

Ground-truth coordinates are quantised to 1/256 px so that a box built around
them has a midpoint that reproduces the coordinate exactly in binary floating
point.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .core import (
    NS_PER_S,
    PROFILES_MM,
    BILLET_KINDS,
    EventKind,
    Frame,
    PixelFormat,
    ProcessSignals,
    ValidationError,
    MillwatchError,
    dumps,
    s_to_ns,
)

WIDTH, HEIGHT = 640, 480
ROD_CX, ROD_BASELINE_CY = 320.0, 240.0
ROD_HALF = (100.0, 10.0)
FLAPPER_BASELINE = (160.0, 120.0)
FLAPPER_HALF = (20.0, 20.0)
DIVERTER_REF_X, DIVERTER_Y = 480.0, 360.0
DIVERTER_HALF = (15.0, 30.0)

DEFAULT_VIBRATION_HZ = 5.0
DEFAULT_START_NS = int(datetime(2024, 3, 15, 10, 0, tzinfo=timezone.utc).timestamp()) * NS_PER_S


class ScriptKind(str, enum.Enum):
    BILLET_PASS = "BilletPass"
    VIBRATION_BURST = "VibrationBurst"
    FLAPPER_DRIFT = "FlapperDrift"
    DIVERTER_SHIFT = "DiverterShift"
    IDLE_WINDOW = "IdleWindow"
    GHOST_ROLLING = "GhostRolling"
    DIVIDING_CUT = "DividingCut"
    CAMERA_DROPOUT = "CameraDropout"


GATING_KINDS = frozenset({ScriptKind.IDLE_WINDOW, ScriptKind.GHOST_ROLLING})

ANOMALY_KINDS = {
    ScriptKind.VIBRATION_BURST: EventKind.VIBRATION,
    ScriptKind.FLAPPER_DRIFT: EventKind.FLAPPER_DEVIATION,
    ScriptKind.DIVERTER_SHIFT: EventKind.DIVERTER_SHIFT,
}


class ReplayError(MillwatchError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _q(v: float) -> float:
    return round(v * 256.0) / 256.0


@dataclass(frozen=True)
class ScriptEvent:
    kind: ScriptKind
    t_start_s: float
    t_end_s: float
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.kind, ScriptKind):
            object.__setattr__(self, "kind", ScriptKind(self.kind))
        if not self.t_start_s < self.t_end_s:
            raise ValidationError(
                f"{self.kind.value}: t_start_s {self.t_start_s} must be < t_end_s {self.t_end_s}"
            )
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})

    @property
    def start_ns(self) -> int:
        return s_to_ns(self.t_start_s)

    @property
    def end_ns(self) -> int:
        return s_to_ns(self.t_end_s)

    def covers(self, t_ns: int) -> bool:
        # closed-left, open-right: [start, end)
        return self.start_ns <= t_ns < self.end_ns

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "t_start_s": self.t_start_s,
            "t_end_s": self.t_end_s,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ScriptEvent:
        return cls(ScriptKind(d["kind"]), float(d["t_start_s"]), float(d["t_end_s"]), d.get("params", {}))


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration_s: float
    fps: float = 45.0
    profile_mm: int = 12
    events: tuple[ScriptEvent, ...] = ()
    start_ns: int = DEFAULT_START_NS

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        if not self.fps > 0:
            raise ValidationError(f"fps must be > 0, got {self.fps}")
        if not self.duration_s > 0:
            raise ValidationError(f"duration_s must be > 0, got {self.duration_s}")
        if self.profile_mm not in PROFILES_MM:
            raise ValidationError(f"profile_mm {self.profile_mm} not in {sorted(PROFILES_MM)}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        prev = -math.inf
        for ev in self.events:
            if ev.t_start_s < prev:
                raise ValidationError("events must be sorted by t_start_s")
            prev = ev.t_start_s
            if ev.t_start_s < 0 or ev.t_end_s > self.duration_s:
                raise ValidationError(
                    f"{ev.kind.value} window [{ev.t_start_s}, {ev.t_end_s}] "
                    f"outside [0, {self.duration_s}]"
                )

    @property
    def frame_period_ns(self) -> int:
        return int(round(NS_PER_S / self.fps))

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.fps * self.duration_s + 1e-9))

    def frame_offset_ns(self, seq: int) -> int:
        return seq * self.frame_period_ns

    def of_kind(self, *kinds: ScriptKind) -> list[ScriptEvent]:
        return [e for e in self.events if e.kind in kinds]

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "fps": self.fps,
            "duration_s": self.duration_s,
            "profile_mm": self.profile_mm,
            "start_ns": self.start_ns,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Scenario:
        allowed = {"seed", "fps", "duration_s", "profile_mm", "start_ns", "events"}
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
        missing = [k for k in ("seed", "duration_s") if k not in d]
        if missing:
            raise ValidationError(f"missing scenario keys: {missing}")
        return cls(
            seed=int(d["seed"]),
            duration_s=float(d["duration_s"]),
            fps=float(d.get("fps", 45.0)),
            profile_mm=int(d.get("profile_mm", 12)),
            events=tuple(ScriptEvent.from_dict(e) for e in d.get("events", [])),
            start_ns=int(d.get("start_ns", DEFAULT_START_NS)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return Scenario.from_dict(doc)


@dataclass(frozen=True)
class GroundTruthRecord:
    frame_seq: int
    rod_present: bool
    rod_center: tuple[float, float] | None
    flapper_pos: tuple[float, float]
    diverter_x: float
    active_event_kinds: frozenset = frozenset()

    def __post_init__(self) -> None:
        if (self.rod_center is not None) != self.rod_present:
            raise ValidationError("rod_center must be present iff rod_present")
        kinds = frozenset(k if isinstance(k, ScriptKind) else ScriptKind(k) for k in self.active_event_kinds)
        object.__setattr__(self, "active_event_kinds", kinds)

    def to_dict(self) -> dict[str, Any]:
        return {
            "frame_seq": self.frame_seq,
            "rod_present": self.rod_present,
            "rod_center": None if self.rod_center is None else list(self.rod_center),
            "flapper_pos": list(self.flapper_pos),
            "diverter_x": self.diverter_x,
            "active_event_kinds": sorted(k.value for k in self.active_event_kinds),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GroundTruthRecord:
        rc = d.get("rod_center")
        return cls(
            frame_seq=int(d["frame_seq"]),
            rod_present=bool(d["rod_present"]),
            rod_center=None if rc is None else (float(rc[0]), float(rc[1])),
            flapper_pos=(float(d["flapper_pos"][0]), float(d["flapper_pos"][1])),
            diverter_x=float(d["diverter_x"]),
            active_event_kinds=frozenset(ScriptKind(k) for k in d.get("active_event_kinds", [])),
        )


@dataclass(frozen=True)
class ReconnectRecord:
    camera_id: str
    ts: int
    missed_frames: int

    def to_dict(self) -> dict[str, Any]:
        return {"reconnect": True, "camera_id": self.camera_id, "ts": self.ts, "missed_frames": self.missed_frames}


def truth_at(scenario: Scenario, seq: int) -> GroundTruthRecord:
    t = scenario.frame_offset_ns(seq)
    active = [e for e in scenario.events if e.covers(t)]
    kinds = frozenset(e.kind for e in active)

    rod_present = ScriptKind.BILLET_PASS in kinds
    rod_center = None
    if rod_present:
        cy = ROD_BASELINE_CY
        for e in active:
            if e.kind is ScriptKind.VIBRATION_BURST:
                amp = e.params.get("amplitude_px", 0.0)
                freq = e.params.get("freq_hz", DEFAULT_VIBRATION_HZ)
                cy += amp * math.sin(2.0 * math.pi * freq * (t - e.start_ns) / NS_PER_S)
                break
        rod_center = (ROD_CX, _q(cy))

    fx, fy = FLAPPER_BASELINE
    dx = DIVERTER_REF_X
    for e in active:
        if e.kind is ScriptKind.FLAPPER_DRIFT:
            fx += e.params.get("shift_px", 0.0)
            fy += e.params.get("dy_px", 0.0)
        elif e.kind is ScriptKind.DIVERTER_SHIFT:
            dx += e.params.get("shift_px", 0.0)
    return GroundTruthRecord(
        frame_seq=seq,
        rod_present=rod_present,
        rod_center=rod_center,
        flapper_pos=(_q(fx), _q(fy)),
        diverter_x=_q(dx),
        active_event_kinds=kinds,
    )


def object_boxes(gt: GroundTruthRecord) -> list[tuple[str, tuple[float, float, float, float]]]:
    """True bounding boxes (class name, bbox) for every object visible in ``gt``."""
    out = []
    if gt.rod_present:
        cx, cy = gt.rod_center
        out.append(("Rod", (cx - ROD_HALF[0], cy - ROD_HALF[1], cx + ROD_HALF[0], cy + ROD_HALF[1])))
    fx, fy = gt.flapper_pos
    out.append(("Flapper", (fx - FLAPPER_HALF[0], fy - FLAPPER_HALF[1], fx + FLAPPER_HALF[0], fy + FLAPPER_HALF[1])))
    out.append(
        (
            "Diverter",
            (
                gt.diverter_x - DIVERTER_HALF[0],
                DIVERTER_Y - DIVERTER_HALF[1],
                gt.diverter_x + DIVERTER_HALF[0],
                DIVERTER_Y + DIVERTER_HALF[1],
            ),
        )
    )
    return out


_COLOURS = {"Rod": (255, 140, 0), "Flapper": (0, 200, 0), "Diverter": (0, 120, 255)}


def render_rgb(gt: GroundTruthRecord, width: int = WIDTH, height: int = HEIGHT) -> np.ndarray:
    img = np.full((height, width, 3), 30, dtype=np.uint8)
    for name, (x0, y0, x1, y1) in object_boxes(gt):
        xa, xb = max(0, int(x0)), min(width, int(math.ceil(x1)))
        ya, yb = max(0, int(y0)), min(height, int(math.ceil(y1)))
        if xa < xb and ya < yb:
            img[ya:yb, xa:xb] = _COLOURS[name]
    return img


def mosaic_rg8(rgb: np.ndarray) -> np.ndarray:
    """Sample an RGB image onto an RGGB Bayer pattern."""
    h, w, _ = rgb.shape
    out = np.empty((h, w), dtype=np.uint8)
    out[0::2, 0::2] = rgb[0::2, 0::2, 0]
    out[0::2, 1::2] = rgb[0::2, 1::2, 1]
    out[1::2, 0::2] = rgb[1::2, 0::2, 1]
    out[1::2, 1::2] = rgb[1::2, 1::2, 2]
    return out


def gen_stream(
    scenario: Scenario,
    camera_id: str = "cam1",
    render: PixelFormat | str | None = None,
) -> Iterator[tuple[Frame, GroundTruthRecord]]:
    """Yield every frame of ``scenario`` with its ground truth.

    With ``render`` unset, frames are descriptors (``data=None``). With
    ``render`` set to ``RGB8`` or ``BayerRG8`` they carry drawn pixels.
    """
    fmt = PixelFormat(render) if render is not None else PixelFormat.RGB8
    for seq in range(scenario.n_frames):
        gt = truth_at(scenario, seq)
        data = None
        if render is not None:
            rgb = render_rgb(gt)
            data = (mosaic_rg8(rgb) if fmt is PixelFormat.BAYER_RG8 else rgb).tobytes()
        frame = Frame(
            camera_id=camera_id,
            seq=seq,
            ts_acquire=scenario.start_ns + scenario.frame_offset_ns(seq),
            width=WIDTH,
            height=HEIGHT,
            pixel_format=fmt,
            profile_mm=scenario.profile_mm,
            data=data,
        )
        yield frame, gt


def gen_signals(scenario: Scenario) -> list[ProcessSignals]:
    """Process-signal snapshots for ``scenario``.

    One heartbeat snapshot per simulated second, plus one at every edge of an
    idle, ghost-rolling or dividing-cut window so gating flips on the exact
    frame the script says.
    """
    windows = scenario.of_kind(ScriptKind.IDLE_WINDOW, ScriptKind.GHOST_ROLLING, ScriptKind.DIVIDING_CUT)
    limit = s_to_ns(scenario.duration_s)
    times = set(range(0, limit, NS_PER_S))
    for w in windows:
        times.update(t for t in (w.start_ns, w.end_ns) if t < limit)
    out = []
    for t in sorted(times):
        idle = any(w.covers(t) for w in windows if w.kind is ScriptKind.IDLE_WINDOW)
        ghost = any(w.covers(t) for w in windows if w.kind is ScriptKind.GHOST_ROLLING)
        cuts = [w for w in windows if w.kind is ScriptKind.DIVIDING_CUT and w.covers(t)]
        out.append(
            ProcessSignals(
                mill_running=not idle,
                ghost_rolling=ghost,
                material_present=not (idle or ghost),
                dividing_cut_active=bool(cuts),
                dividing_cut_until=scenario.start_ns + max(w.end_ns for w in cuts) if cuts else 0,
                signal_ts=scenario.start_ns + t,
            )
        )
    return out


def simulate_dropout(
    stream: Iterable[tuple[Frame, GroundTruthRecord]],
    event: ScriptEvent,
    start_ns: int = DEFAULT_START_NS,
    camera_id: str | None = None,
) -> Iterator[Any]:
    """Remove frames inside a camera-dropout window and mark the reconnect.

    Items are passed through unchanged; frames whose acquisition time falls in
    ``[t_start, t_end)`` are withheld and a :class:`ReconnectRecord` precedes
    the first frame after the window (or closes the stream).
    """
    lo, hi = start_ns + event.start_ns, start_ns + event.end_ns
    missed = 0
    entered = False
    reconnected = False
    cam = camera_id
    for item in stream:
        if isinstance(item, ReconnectRecord):
            yield item
            continue
        frame = item[0]
        cam = frame.camera_id
        if lo <= frame.ts_acquire < hi:
            entered = True
            missed += 1
            continue
        if frame.ts_acquire >= hi and not reconnected:
            reconnected = True
            yield ReconnectRecord(cam, frame.ts_acquire, missed)
        yield item
    if not reconnected and (entered or missed):
        yield ReconnectRecord(cam or "", hi, missed)


def source_stream(scenario: Scenario, camera_id: str = "cam1", render=None) -> Iterator[Any]:
    """``gen_stream`` with every scripted camera dropout applied."""
    stream: Iterable[Any] = gen_stream(scenario, camera_id, render)
    for ev in scenario.of_kind(ScriptKind.CAMERA_DROPOUT):
        stream = simulate_dropout(stream, ev, scenario.start_ns, camera_id)
    return iter(stream)


def camera_temperature(scenario: Scenario, seq: int) -> float:
    """Synthetic camera housing temperature in degrees Celsius."""
    t = scenario.frame_offset_ns(seq) / NS_PER_S
    jitter = random.Random(scenario.seed * 1_000_003 + seq).gauss(0.0, 0.05)
    return round(41.5 + 1.5 * math.sin(2.0 * math.pi * t / 600.0) + jitter, 3)


# --------------------------------------------------------------------------
# replay files


def replay_line(frame: Frame, gt: GroundTruthRecord) -> str:
    return dumps({"frame": frame.to_dict(), "truth": gt.to_dict()})


def write_replay(path, stream: Iterable[Any]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item in stream:
            if isinstance(item, ReconnectRecord):
                continue
            fh.write(replay_line(*item) + "\n")
            n += 1
    return n


def read_replay(path) -> Iterator[tuple[Frame, GroundTruthRecord]]:
    last_seq: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                frame = Frame.from_dict(doc["frame"])
                gt = GroundTruthRecord.from_dict(doc["truth"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ReplayError(f"malformed record ({exc})", lineno) from exc
            if gt.frame_seq != frame.seq:
                raise ReplayError(f"truth seq {gt.frame_seq} != frame seq {frame.seq}", lineno)
            prev = last_seq.get(frame.camera_id)
            if prev is not None and frame.seq <= prev:
                raise ReplayError(f"sequence regression on {frame.camera_id}: {prev} -> {frame.seq}", lineno)
            last_seq[frame.camera_id] = frame.seq
            yield frame, gt


# --------------------------------------------------------------------------
# ground truth anomalies


@dataclass(frozen=True)
class TruthEvent:
    kind: EventKind
    camera_id: str
    t_start: int
    t_end: int

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "camera_id": self.camera_id, "t_start": self.t_start, "t_end": self.t_end}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TruthEvent:
        return cls(EventKind(d["kind"]), d.get("camera_id", ""), int(d["t_start"]), int(d["t_end"]))


def _overlaps(a: ScriptEvent, b: ScriptEvent, pad_s: float = 0.0) -> bool:
    return a.t_start_s < b.t_end_s + pad_s and b.t_start_s < a.t_end_s + pad_s


def truth_events(
    scenario: Scenario,
    camera_id: str = "cam1",
    nominal_billet_s: float = 9.0,
    short_factor: float = 0.8,
    long_factor: float = 1.25,
    grace_s: float = 2.0,
) -> list[TruthEvent]:
    """Scripted anomalies an operator should be alerted to.

    Anomalies overlapping an idle, ghost-rolling or camera-dropout window are
    excluded (the gate pauses analytics there), as are off-length billets
    explained by a dividing cut.
    """
    silencing = scenario.of_kind(ScriptKind.IDLE_WINDOW, ScriptKind.GHOST_ROLLING, ScriptKind.CAMERA_DROPOUT)
    cuts = scenario.of_kind(ScriptKind.DIVIDING_CUT)
    out = []
    for ev in scenario.events:
        if any(_overlaps(ev, w) for w in silencing):
            continue
        kind = ANOMALY_KINDS.get(ev.kind)
        if ev.kind is ScriptKind.BILLET_PASS:
            duration = ev.t_end_s - ev.t_start_s
            if duration < short_factor * nominal_billet_s:
                kind = EventKind.SHORT_METAL
            elif duration > long_factor * nominal_billet_s:
                kind = EventKind.ABNORMAL_BILLET_DURATION
            if kind in BILLET_KINDS and any(_overlaps(ev, c, grace_s) for c in cuts):
                continue
        if kind is None:
            continue
        out.append(TruthEvent(kind, camera_id, scenario.start_ns + ev.start_ns, scenario.start_ns + ev.end_ns))
    out.sort(key=lambda e: (e.t_start, e.kind.value))
    return out


# --------------------------------------------------------------------------
# scenario builders


def _ev(kind: ScriptKind, a: float, b: float, **params: float) -> ScriptEvent:
    return ScriptEvent(kind, round(a, 3), round(b, 3), params)


def mixed_scenario(
    seed: int, n_events: int = 50, fps: float = 45.0, profile_mm: int = 12, spacing_s: float = 13.0
) -> Scenario:
    """A production-like shift: billets with anomalies, stoppages and cuts.

    Gating windows never partially overlap an anomaly, and anomalies that
    would raise the same alert kind start at least ``spacing_s`` apart, so
    alert debouncing never merges two scripted anomalies.
    """
    rng = random.Random(seed)
    events: list[ScriptEvent] = []
    last: dict[str, float] = {}

    def room(group: str, at: float) -> bool:
        return at - last.get(group, -math.inf) >= spacing_s

    def add(group: str, ev: ScriptEvent) -> None:
        last[group] = ev.t_start_s
        events.append(ev)

    t = 1.0
    while len(events) < n_events:
        kind = rng.choices(["normal", "short", "long", "cut", "ghost", "idle"], weights=[5, 2, 1, 1, 1, 1])[0]
        if kind in ("short", "long") and not room("billet", t):
            kind = "normal"
        if kind == "ghost":
            events.append(_ev(ScriptKind.GHOST_ROLLING, t, t + 6.0))
            events.append(_ev(ScriptKind.FLAPPER_DRIFT, t + 1.0, t + 3.0, shift_px=30.0))
            events.append(_ev(ScriptKind.DIVERTER_SHIFT, t + 2.0, t + 4.5, shift_px=20.0))
            t += 7.0
            continue
        if kind == "idle":
            events.append(_ev(ScriptKind.IDLE_WINDOW, t, t + 4.0))
            t += 5.0
            continue
        length = {"normal": 9.0, "short": 5.0, "long": 13.0, "cut": 5.0}[kind]
        if kind == "cut":
            events.append(_ev(ScriptKind.DIVIDING_CUT, t - 0.5, t + length + 0.5))
        billet = _ev(ScriptKind.BILLET_PASS, t, t + length)
        if kind in ("short", "long"):
            add("billet", billet)
        else:
            events.append(billet)
        if length >= 9.0 and rng.random() < 0.7 and room("vibration", t + 2.0):
            add("vibration", _ev(ScriptKind.VIBRATION_BURST, t + 2.0, t + 4.5, amplitude_px=40.0, freq_hz=5.0))
        if rng.random() < 0.5 and room("flapper", t + 1.5):
            add("flapper", _ev(ScriptKind.FLAPPER_DRIFT, t + 1.5, t + 4.0, shift_px=30.0))
        end = t + length
        if rng.random() < 0.5 and room("diverter", end + 0.5):
            add("diverter", _ev(ScriptKind.DIVERTER_SHIFT, end + 0.5, end + 2.5, shift_px=20.0))
        t = end + 3.5
    events.sort(key=lambda e: (e.t_start_s, e.kind.value))
    events = events[:n_events]
    duration = max(e.t_end_s for e in events) + 3.0
    return Scenario(seed=seed, duration_s=round(duration, 3), fps=fps, profile_mm=profile_mm, events=tuple(events))


def random_scenario(seed: int, duration_s: float = 40.0, fps: float = 45.0) -> Scenario:
    """Unconstrained random script: windows of every kind placed anywhere."""
    rng = random.Random(seed)
    kinds = [k for k in ScriptKind if k is not ScriptKind.CAMERA_DROPOUT]
    events = []
    for _ in range(rng.randint(6, 18)):
        kind = rng.choice(kinds)
        a = rng.uniform(0.0, duration_s - 1.0)
        b = min(duration_s, a + rng.uniform(0.5, 12.0))
        params: dict[str, float] = {}
        if kind is ScriptKind.VIBRATION_BURST:
            params = {"amplitude_px": rng.uniform(10.0, 60.0), "freq_hz": rng.uniform(2.0, 8.0)}
        elif kind in (ScriptKind.FLAPPER_DRIFT, ScriptKind.DIVERTER_SHIFT):
            params = {"shift_px": rng.uniform(-40.0, 40.0)}
        events.append(_ev(kind, a, b, **params))
    events.sort(key=lambda e: (e.t_start_s, e.kind.value))
    profile = rng.choice(sorted(PROFILES_MM))
    return Scenario(seed=seed, duration_s=duration_s, fps=fps, profile_mm=profile, events=tuple(events))


def cut_scenario(seed: int = 7, fps: float = 45.0) -> Scenario:
    """Two nominal billets around a short one rolled during a dividing cut."""
    events = [
        _ev(ScriptKind.BILLET_PASS, 1.0, 10.0),
        _ev(ScriptKind.DIVIDING_CUT, 12.5, 18.5),
        _ev(ScriptKind.BILLET_PASS, 13.0, 18.0),
        _ev(ScriptKind.BILLET_PASS, 21.0, 30.0),
    ]
    return Scenario(seed=seed, duration_s=33.0, fps=fps, profile_mm=16, events=tuple(events))
