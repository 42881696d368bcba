"""Detection layer: detector registry, oracle detector and pixel preprocessing.

The only bundled detector is an oracle that reads the simulator's ground
truth and degrades it with configurable noise. Randomness comes from numpy's
PCG64 bit generator seeded with ``SeedSequence([seed, frame_seq])``, so a
frame's detections depend only on the seed, its sequence number and its
ground truth, never on call order or thread scheduling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .core import (
    PROFILES_MM,
    ConfigError,
    Detection,
    Frame,
    MillwatchError,
    ObjectClass,
    PixelFormat,
)
from .simsource import GroundTruthRecord, object_boxes, ROD_HALF, WIDTH, HEIGHT


class FrameFormatError(MillwatchError):
    pass


class UnsupportedProfile(ConfigError):
    pass


@dataclass(frozen=True)
class DetectorSpec:
    name: str
    supported_profiles: frozenset[int]
    latency_model_ms: float = 0.0

    def __post_init__(self) -> None:
        profiles = frozenset(int(p) for p in self.supported_profiles)
        if not profiles:
            raise ConfigError(f"detector {self.name!r}: supported_profiles is empty")
        bad = profiles - PROFILES_MM
        if bad:
            raise ConfigError(f"detector {self.name!r}: unknown profiles {sorted(bad)}")
        if self.latency_model_ms < 0:
            raise ConfigError(f"detector {self.name!r}: latency_model_ms must be >= 0")
        object.__setattr__(self, "supported_profiles", profiles)


DEFAULT_REGISTRY = (DetectorSpec("oracle", PROFILES_MM),)


def select_model(registry: Sequence[DetectorSpec], profile_mm: int) -> DetectorSpec:
    if not registry:
        raise ConfigError("detector registry is empty")
    for spec in registry:
        if profile_mm in spec.supported_profiles:
            return spec
    raise UnsupportedProfile(f"no detector supports profile {profile_mm} mm")


@dataclass(frozen=True)
class OracleNoise:
    center_noise_px: float = 0.0
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.center_noise_px < 0:
            raise ConfigError("center_noise_px must be >= 0")
        for name in ("miss_rate", "fp_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")


class Detector(Protocol):
    spec: DetectorSpec

    def detect(self, frame: Frame, ground_truth: GroundTruthRecord | None) -> list[Detection]: ...


def detect(frame: Frame, ground_truth: GroundTruthRecord, noise: OracleNoise) -> list[Detection]:
    """Oracle detections for one frame."""
    if ground_truth.frame_seq != frame.seq:
        raise MillwatchError(f"ground truth seq {ground_truth.frame_seq} does not match frame seq {frame.seq}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([noise.seed, frame.seq])))
    sigma = noise.center_noise_px
    out = []
    for name, (x0, y0, x1, y1) in object_boxes(ground_truth):
        # one draw per decision keeps the stream layout fixed whatever the rates are
        missed = rng.random() < noise.miss_rate
        jx, jy = rng.normal(0.0, sigma, 2) if sigma > 0 else (0.0, 0.0)
        conf = rng.uniform(0.5, 1.0)
        if missed:
            continue
        out.append(
            Detection(
                ObjectClass(name),
                (x0 + jx, y0 + jy, x1 + jx, y1 + jy),
                float(conf),
                frame.seq,
            )
        )
    if noise.fp_rate > 0 and rng.random() < noise.fp_rate:
        cx = rng.uniform(ROD_HALF[0], WIDTH - ROD_HALF[0])
        cy = rng.uniform(ROD_HALF[1], HEIGHT - ROD_HALF[1])
        out.append(
            Detection(
                ObjectClass.ROD,
                (cx - ROD_HALF[0], cy - ROD_HALF[1], cx + ROD_HALF[0], cy + ROD_HALF[1]),
                float(rng.uniform(0.1, 0.5)),
                frame.seq,
            )
        )
    return out


@dataclass
class OracleDetector:
    spec: DetectorSpec
    noise: OracleNoise = field(default_factory=OracleNoise)
    sleeper: object = None  # callable(seconds) used in wall-clock mode

    def detect(self, frame: Frame, ground_truth: GroundTruthRecord | None) -> list[Detection]:
        if ground_truth is None:
            raise MillwatchError("oracle detector needs ground truth")
        dets = detect(frame, ground_truth, self.noise)
        if self.sleeper is not None and self.spec.latency_model_ms > 0:
            self.sleeper(self.spec.latency_model_ms / 1000.0)
        return dets


@dataclass
class NullDetector:
    """Returns nothing; used to measure harness overhead."""

    spec: DetectorSpec = field(default_factory=lambda: DetectorSpec("null", PROFILES_MM))
    sleeper: object = None

    def detect(self, frame: Frame, ground_truth: GroundTruthRecord | None) -> list[Detection]:
        return []


def build_detector(spec: DetectorSpec, noise: OracleNoise, wall_clock: bool) -> Detector:
    sleeper = time.sleep if wall_clock else None
    if spec.name == "null":
        return NullDetector(spec, sleeper)
    return OracleDetector(spec, noise, sleeper)


def validate_format(frame: Frame) -> None:
    if frame.width <= 0 or frame.height <= 0:
        raise FrameFormatError(f"frame {frame.camera_id}#{frame.seq}: empty frame {frame.width}x{frame.height}")
    if frame.data is None:
        return
    if len(frame.data) != frame.expected_length:
        raise FrameFormatError(
            f"frame {frame.camera_id}#{frame.seq}: {len(frame.data)} bytes, "
            f"expected {frame.expected_length} for {frame.width}x{frame.height} {frame.pixel_format.value}"
        )


def demosaic_rg8(frame: Frame) -> Frame:
    """RGGB Bayer to RGB by 2x2 block nearest neighbour.

    Each block takes R and B from their sites and G as the mean of the two
    green sites, rounded half up, and fills all four output pixels.
    """
    if frame.pixel_format is not PixelFormat.BAYER_RG8:
        raise FrameFormatError(f"expected BayerRG8, got {frame.pixel_format.value}")
    if frame.width % 2 or frame.height % 2:
        raise FrameFormatError(f"odd dimensions {frame.width}x{frame.height}")
    if frame.data is None:
        raise FrameFormatError("frame has no pixel data")
    raw = np.frombuffer(frame.data, dtype=np.uint8).reshape(frame.height, frame.width)
    r = raw[0::2, 0::2]
    g = (raw[0::2, 1::2].astype(np.uint16) + raw[1::2, 0::2] + 1) // 2
    b = raw[1::2, 1::2]
    block = np.stack([r, g.astype(np.uint8), b], axis=-1)
    rgb = block.repeat(2, axis=0).repeat(2, axis=1)
    return Frame(
        camera_id=frame.camera_id,
        seq=frame.seq,
        ts_acquire=frame.ts_acquire,
        width=frame.width,
        height=frame.height,
        pixel_format=PixelFormat.RGB8,
        profile_mm=frame.profile_mm,
        data=np.ascontiguousarray(rgb).tobytes(),
    )


def parse_registry(entries: Iterable[dict]) -> tuple[DetectorSpec, ...]:
    return tuple(
        DetectorSpec(e["name"], frozenset(e["profiles"]), float(e.get("latency_model_ms", 0.0))) for e in entries
    )
