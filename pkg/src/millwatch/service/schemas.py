from __future__ import annotations

from typing import Any

from pydantic import BaseModel


class StageStatus(BaseModel):
    state: str
    beats: int


class HealthResponse(BaseModel):
    status: str
    running: bool
    stages: dict[str, StageStatus]
    unhealthy: list[str] = []


class MetricsResponse(BaseModel):
    running: bool
    cameras: list[str]
    counters: dict[str, Any]


class UnknownCamera(BaseModel):
    detail: str
    valid: list[str]
