"""Shared domain types, clocks and NDJSON serialization.

Every timestamp in the package is an integer count of nanoseconds since the
Unix epoch. All value types are frozen dataclasses validated on construction,
so they can be handed between stage threads without copying or locking.
"""

from __future__ import annotations

import base64
import enum
import json
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

NS_PER_S = 1_000_000_000
NS_PER_MS = 1_000_000

PROFILES_MM = frozenset({10, 12, 16, 20, 40})


class MillwatchError(Exception):
    """Base class for all package errors."""


class ValidationError(MillwatchError, ValueError):
    """A value violates a domain invariant."""


class ConfigError(ValidationError):
    """Configuration is invalid; raised before any frame is processed."""


class InsufficientSamples(MillwatchError):
    pass


class PixelFormat(str, enum.Enum):
    BAYER_RG8 = "BayerRG8"
    RGB8 = "RGB8"

    @property
    def bytes_per_pixel(self) -> int:
        return 1 if self is PixelFormat.BAYER_RG8 else 3


class ObjectClass(str, enum.Enum):
    ROD = "Rod"
    FLAPPER = "Flapper"
    DIVERTER = "Diverter"


class EventKind(str, enum.Enum):
    VIBRATION = "Vibration"
    FLAPPER_DEVIATION = "FlapperDeviation"
    DIVERTER_SHIFT = "DiverterShift"
    SHORT_METAL = "ShortMetal"
    ABNORMAL_BILLET_DURATION = "AbnormalBilletDuration"

    @property
    def unit(self) -> str:
        return EVENT_UNITS[self]


EVENT_UNITS = {
    EventKind.VIBRATION: "px_std",
    EventKind.FLAPPER_DEVIATION: "px",
    EventKind.DIVERTER_SHIFT: "mm",
    EventKind.SHORT_METAL: "s",
    EventKind.ABNORMAL_BILLET_DURATION: "s",
}

# Kinds derived from billet length; the only ones dividing-cut suppression touches.
BILLET_KINDS = frozenset({EventKind.SHORT_METAL, EventKind.ABNORMAL_BILLET_DURATION})


# --------------------------------------------------------------------------
# clocks


class SystemClock:
    """Wall-clock nanoseconds that never run backwards.

    The epoch offset is sampled once; afterwards time advances with the
    monotonic counter, so NTP steps cannot reorder stage timestamps.
    """

    def __init__(self) -> None:
        self._offset = time.time_ns() - time.monotonic_ns()

    def now(self) -> int:
        return self._offset + time.monotonic_ns()

    def sleep_until(self, ts: int) -> None:
        delay = ts - self.now()
        if delay > 0:
            time.sleep(delay / NS_PER_S)

    @property
    def simulated(self) -> bool:
        return False


class SimClock:
    """Manually advanced clock for deterministic runs and tests."""

    def __init__(self, start_ns: int = 0) -> None:
        self._t = int(start_ns)
        self._lock = threading.Lock()

    def now(self) -> int:
        return self._t

    def advance(self, ns: int) -> int:
        if ns < 0:
            raise ValueError("simulated clock cannot move backwards")
        with self._lock:
            self._t += int(ns)
            return self._t

    def set(self, ts: int) -> None:
        with self._lock:
            # never step backwards; the clock is shared by camera streams
            if ts > self._t:
                self._t = int(ts)

    def sleep_until(self, ts: int) -> None:
        self.set(ts)

    @property
    def simulated(self) -> bool:
        return True


_default_clock: SystemClock | SimClock = SystemClock()


def now() -> int:
    """Current time from the process-wide clock, in ns since the epoch."""
    return _default_clock.now()


def set_clock(clock: SystemClock | SimClock) -> SystemClock | SimClock:
    """Install ``clock`` as the process-wide clock; returns the previous one."""
    global _default_clock
    previous, _default_clock = _default_clock, clock
    return previous


def s_to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def ns_to_s(ns: int) -> float:
    return ns / NS_PER_S


# --------------------------------------------------------------------------
# geometry


def bbox_center(bbox) -> tuple[float, float]:
    x_min, y_min, x_max, y_max = (float(v) for v in bbox)
    if not (x_min < x_max and y_min < y_max):
        raise ValidationError(f"degenerate bbox {tuple(bbox)}")
    return ((x_min + x_max) / 2.0, (y_min + y_max) / 2.0)


# --------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class Frame:
    """One acquired image, or its descriptor when pixels are not rendered.

    ``data`` is ``None`` for descriptor frames coming from the synthetic
    source; when present its length must match the format and geometry.
    """

    camera_id: str
    seq: int
    ts_acquire: int
    width: int
    height: int
    pixel_format: PixelFormat
    profile_mm: int
    data: bytes | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.pixel_format, PixelFormat):
            object.__setattr__(self, "pixel_format", PixelFormat(self.pixel_format))
        if self.seq < 0:
            raise ValidationError(f"negative seq {self.seq}")
        if self.profile_mm not in PROFILES_MM:
            raise ValidationError(f"unsupported profile_mm {self.profile_mm}")
        if self.data is not None and len(self.data) != self.expected_length:
            raise ValidationError(
                f"frame {self.camera_id}#{self.seq}: data length {len(self.data)} "
                f"!= expected {self.expected_length} for {self.pixel_format.value}"
            )

    @classmethod
    def unchecked(cls, **fields: Any) -> Frame:
        """Build a frame straight from an acquisition driver, skipping checks.

        Such frames must go through ``detect.validate_format`` before use.
        """
        fields.setdefault("data", None)
        fields["pixel_format"] = PixelFormat(fields["pixel_format"])
        frame = object.__new__(cls)
        for name, value in fields.items():
            object.__setattr__(frame, name, value)
        return frame

    @property
    def expected_length(self) -> int:
        return self.width * self.height * self.pixel_format.bytes_per_pixel

    def to_dict(self, include_data: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {
            "camera_id": self.camera_id,
            "seq": self.seq,
            "ts_acquire": self.ts_acquire,
            "width": self.width,
            "height": self.height,
            "pixel_format": self.pixel_format.value,
            "profile_mm": self.profile_mm,
        }
        if include_data:
            d["data"] = None if self.data is None else base64.b64encode(self.data).decode("ascii")
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Frame:
        data = d.get("data")
        return cls(
            camera_id=d["camera_id"],
            seq=int(d["seq"]),
            ts_acquire=int(d["ts_acquire"]),
            width=int(d["width"]),
            height=int(d["height"]),
            pixel_format=PixelFormat(d["pixel_format"]),
            profile_mm=int(d["profile_mm"]),
            data=None if data is None else base64.b64decode(data),
        )


@dataclass(frozen=True)
class Detection:
    cls: ObjectClass
    bbox: tuple[float, float, float, float]
    confidence: float
    frame_seq: int

    def __post_init__(self) -> None:
        if not isinstance(self.cls, ObjectClass):
            object.__setattr__(self, "cls", ObjectClass(self.cls))
        bbox = tuple(float(v) for v in self.bbox)
        if len(bbox) != 4:
            raise ValidationError("bbox needs four coordinates")
        object.__setattr__(self, "bbox", bbox)
        bbox_center(bbox)
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def center(self) -> tuple[float, float]:
        return bbox_center(self.bbox)

    def to_dict(self) -> dict[str, Any]:
        return {
            "class": self.cls.value,
            "bbox": list(self.bbox),
            "confidence": self.confidence,
            "frame_seq": self.frame_seq,
            "center": list(self.center),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Detection:
        # center is derived, never trusted from the wire
        return cls(
            cls=ObjectClass(d["class"]),
            bbox=tuple(d["bbox"]),
            confidence=float(d["confidence"]),
            frame_seq=int(d["frame_seq"]),
        )


@dataclass(frozen=True)
class ProcessSignals:
    mill_running: bool = True
    ghost_rolling: bool = False
    material_present: bool = True
    dividing_cut_active: bool = False
    dividing_cut_until: int = 0
    signal_ts: int = 0

    def __post_init__(self) -> None:
        if self.dividing_cut_active and self.dividing_cut_until < self.signal_ts:
            raise ValidationError("dividing_cut_until precedes signal_ts while cut is active")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mill_running": self.mill_running,
            "ghost_rolling": self.ghost_rolling,
            "material_present": self.material_present,
            "dividing_cut_active": self.dividing_cut_active,
            "dividing_cut_until": self.dividing_cut_until,
            "signal_ts": self.signal_ts,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ProcessSignals:
        return cls(
            mill_running=bool(d["mill_running"]),
            ghost_rolling=bool(d["ghost_rolling"]),
            material_present=bool(d["material_present"]),
            dividing_cut_active=bool(d["dividing_cut_active"]),
            dividing_cut_until=int(d["dividing_cut_until"]),
            signal_ts=int(d["signal_ts"]),
        )


@dataclass(frozen=True)
class AnomalyEvent:
    kind: EventKind
    camera_id: str
    frame_seq: int
    ts: int
    magnitude: float
    detail: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.kind, EventKind):
            object.__setattr__(self, "kind", EventKind(self.kind))
        if not self.magnitude >= 0:
            raise ValidationError(f"magnitude must be >= 0, got {self.magnitude}")

    @property
    def unit(self) -> str:
        return self.kind.unit

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "camera_id": self.camera_id,
            "frame_seq": self.frame_seq,
            "ts": self.ts,
            "magnitude": self.magnitude,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AnomalyEvent:
        return cls(
            kind=EventKind(d["kind"]),
            camera_id=d["camera_id"],
            frame_seq=int(d["frame_seq"]),
            ts=int(d["ts"]),
            magnitude=float(d["magnitude"]),
            detail=d.get("detail", ""),
        )


@dataclass(frozen=True)
class Alert:
    event: AnomalyEvent
    alert_id: int
    raised_ts: int
    suppressed: bool = False
    coalesced_count: int = 1

    def __post_init__(self) -> None:
        if self.coalesced_count < 1:
            raise ValidationError("coalesced_count must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": self.event.to_dict(),
            "alert_id": self.alert_id,
            "raised_ts": self.raised_ts,
            "suppressed": self.suppressed,
            "coalesced_count": self.coalesced_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Alert:
        return cls(
            event=AnomalyEvent.from_dict(d["event"]),
            alert_id=int(d["alert_id"]),
            raised_ts=int(d["raised_ts"]),
            suppressed=bool(d["suppressed"]),
            coalesced_count=int(d["coalesced_count"]),
        )


def _has_space(s: str) -> bool:
    return any(ch.isspace() for ch in s)


@dataclass(frozen=True)
class MetricPoint:
    measurement: str
    fields: Mapping[str, float]
    ts: int
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.measurement or _has_space(self.measurement):
            raise ValidationError(f"invalid measurement name {self.measurement!r}")
        if not self.fields:
            raise ValidationError("a metric point needs at least one field")
        for k, v in self.tags.items():
            if not k or _has_space(k):
                raise ValidationError(f"invalid tag key {k!r}")
            if not isinstance(v, str) or not v:
                raise ValidationError(f"tag {k!r} needs a nonempty string value")
            if "\n" in v or "\r" in v:
                raise ValidationError(f"tag {k!r} value contains a line break")
        fields = {}
        for k, v in self.fields.items():
            if not k or _has_space(k):
                raise ValidationError(f"invalid field key {k!r}")
            v = float(v)
            if not math.isfinite(v):
                raise ValidationError(f"field {k!r} is not finite")
            fields[k] = v
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "tags", dict(self.tags))

    def with_tag(self, key: str, value: str) -> MetricPoint:
        return MetricPoint(self.measurement, self.fields, self.ts, {**self.tags, key: value})

    def to_dict(self) -> dict[str, Any]:
        return {
            "measurement": self.measurement,
            "tags": dict(self.tags),
            "fields": dict(self.fields),
            "ts": self.ts,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> MetricPoint:
        return cls(d["measurement"], d["fields"], int(d["ts"]), d.get("tags", {}))


# --------------------------------------------------------------------------
# NDJSON


def dumps(obj: Any) -> str:
    """Canonical one-line JSON; key order is the field order of ``to_dict``."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def loads(line: str) -> Any:
    return json.loads(line)
