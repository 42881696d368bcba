"""Run configuration: one JSON document, validated in a single pass."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from .core import PROFILES_MM, ConfigError
from .detect import DetectorSpec, select_model
from .simsource import DIVERTER_REF_X, FLAPPER_BASELINE

CONFIG_ENV = "MILLWATCH_CONFIG"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Thresholds(_Strict):
    vibration_std_px: float = Field(15.0, gt=0)
    flapper_px: float = Field(20.0, gt=0)
    diverter_mm: float = Field(5.0, gt=0)
    nominal_billet_s: float = Field(9.0, gt=0)
    short_factor: float = Field(0.8, gt=0, lt=1)
    long_factor: float = Field(1.25, gt=1)


class Calibration(_Strict):
    mm_per_px: float = Field(0.5, gt=0)
    reference_x: float = DIVERTER_REF_X


class Baselines(_Strict):
    flapper: tuple[float, float] = FLAPPER_BASELINE
    rod_cy: Optional[float] = None


class Noise(_Strict):
    center_noise_px: float = Field(0.0, ge=0)
    miss_rate: float = Field(0.0, ge=0, le=1)
    fp_rate: float = Field(0.0, ge=0, le=1)
    seed: Optional[int] = Field(None, ge=0)


class CameraConfig(_Strict):
    camera_id: str = Field(min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    source: str
    profile_mm: Optional[int] = None
    render: Optional[Literal["RGB8", "BayerRG8"]] = None
    calibration: Calibration = Calibration()
    baselines: Baselines = Baselines()
    thresholds: Thresholds = Thresholds()
    noise: Noise = Noise()

    @field_validator("profile_mm")
    @classmethod
    def _profile(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v not in PROFILES_MM:
            raise ValueError(f"profile_mm must be one of {sorted(PROFILES_MM)}")
        return v

    @field_validator("source")
    @classmethod
    def _source(cls, v: str, info: ValidationInfo) -> str:
        kind, sep, target = v.partition(":")
        if not sep or kind not in ("synth", "replay") or not target:
            raise ValueError("source must be 'synth:<scenario file>' or 'replay:<ndjson file>'")
        base = (info.context or {}).get("base_dir")
        path = Path(target)
        if not path.is_absolute() and base is not None:
            path = Path(base) / path
        if (info.context or {}).get("check_files", True) and not path.is_file():
            raise ValueError(f"file not found: {path}")
        return f"{kind}:{path}"

    @property
    def source_kind(self) -> str:
        return self.source.partition(":")[0]

    @property
    def source_path(self) -> Path:
        return Path(self.source.partition(":")[2])


class QueueConfig(_Strict):
    capacity: int = Field(128, ge=1)
    policy: Literal["Block", "DropOldest"] = "Block"


class Queues(_Strict):
    acquire: QueueConfig = QueueConfig(policy="DropOldest")
    stage: QueueConfig = QueueConfig()
    storage: QueueConfig = QueueConfig()


class AnalyticsParams(_Strict):
    window: int = Field(30, ge=2)
    gap_tolerance: int = Field(5, ge=0)
    n_on: int = Field(3, ge=1)
    n_off: int = Field(5, ge=1)
    min_confidence: float = Field(0.5, ge=0, le=1)


class FusionConfig(_Strict):
    signals: str = "synth"
    suppression: bool = True
    grace_s: float = Field(2.0, ge=0)
    staleness_limit_s: float = Field(5.0, gt=0)

    @field_validator("signals")
    @classmethod
    def _signals(cls, v: str, info: ValidationInfo) -> str:
        if v in ("synth", "none"):
            return v
        kind, sep, target = v.partition(":")
        if kind == "file" and target:
            base = (info.context or {}).get("base_dir")
            path = Path(target)
            if not path.is_absolute() and base is not None:
                path = Path(base) / path
            if (info.context or {}).get("check_files", True) and not path.is_file():
                raise ValueError(f"file not found: {path}")
            return f"file:{path}"
        if kind == "tcp":
            host, _, port = target.rpartition(":")
            if host and port.isdigit():
                return v
        raise ValueError("signals must be 'synth', 'none', 'file:<ndjson>' or 'tcp:<host>:<port>'")


class SinkConfig(_Strict):
    out_dir: str = "out"
    clips: bool = True
    metrics_file: str = "metrics.lp"
    alerts_file: str = "alerts.ndjson"


class HttpConfig(_Strict):
    bind: str = "127.0.0.1:8080"

    @field_validator("bind")
    @classmethod
    def _bind(cls, v: str) -> str:
        host, _, port = v.rpartition(":")
        if not host or not port.isdigit() or not 0 < int(port) < 65536:
            raise ValueError("bind must be '<host>:<port>'")
        return v

    @property
    def host(self) -> str:
        return self.bind.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.bind.rpartition(":")[2])


class DetectorEntry(_Strict):
    name: str = Field(min_length=1)
    profiles: list[int] = Field(min_length=1)
    latency_model_ms: float = Field(0.0, ge=0)

    @field_validator("profiles")
    @classmethod
    def _profiles(cls, v: list[int]) -> list[int]:
        bad = sorted(set(v) - PROFILES_MM)
        if bad:
            raise ValueError(f"unknown profiles {bad}")
        return v

    def spec(self) -> DetectorSpec:
        return DetectorSpec(self.name, frozenset(self.profiles), self.latency_model_ms)


def _default_registry() -> list[DetectorEntry]:
    return [DetectorEntry(name="oracle", profiles=sorted(PROFILES_MM))]


class RunConfig(_Strict):
    cameras: list[CameraConfig] = Field(min_length=1)
    queues: Queues = Queues()
    analytics: AnalyticsParams = AnalyticsParams()
    fusion: FusionConfig = FusionConfig()
    sinks: SinkConfig = SinkConfig()
    http: HttpConfig = HttpConfig()
    registry: list[DetectorEntry] = Field(default_factory=_default_registry, min_length=1)
    clip_len_s: float = Field(120.0, gt=0)
    debounce_window_s: float = Field(10.0, gt=0)
    match_window_s: float = Field(3.0, gt=0)
    warmup_frames: int = Field(100, ge=0)
    clock: Literal["simulated", "wall"] = "simulated"
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _cross_checks(self) -> RunConfig:
        seen: set[str] = set()
        for cam in self.cameras:
            if cam.camera_id in seen:
                raise ValueError(f"duplicate camera_id {cam.camera_id!r}")
            seen.add(cam.camera_id)
        return self

    def registry_specs(self) -> tuple[DetectorSpec, ...]:
        return tuple(e.spec() for e in self.registry)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2)


def format_errors(exc: PydanticValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if err["type"] == "missing":
            msg = "required key missing"
        elif err["type"] == "extra_forbidden":
            msg = "unknown key"
        out.append(f"{loc}: {msg}")
    return out


def parse_config(doc: Any, base_dir=None, check_files: bool = True) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(doc, context={"base_dir": base_dir, "check_files": check_files})
    except PydanticValidationError as exc:
        lines = format_errors(exc)
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines)) from exc
    problems = []
    specs = cfg.registry_specs()
    for i, cam in enumerate(cfg.cameras):
        if cam.profile_mm is not None:
            try:
                select_model(specs, cam.profile_mm)
            except ConfigError as exc:
                problems.append(f"cameras.{i}.profile_mm: {exc}")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def load_config(path=None) -> RunConfig:
    """Load and validate a run config; ``path`` falls back to ``$MILLWATCH_CONFIG``."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
        if not path:
            raise ConfigError(f"no config path given and {CONFIG_ENV} is not set")
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(doc, base_dir=p.resolve().parent)
