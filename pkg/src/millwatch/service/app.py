"""FastAPI app exposing the live frame stream, alerts, counters and liveness."""

from __future__ import annotations

import io
import time
from typing import Iterator

from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse, Response, StreamingResponse
from PIL import Image, ImageDraw

from ..core import ObjectClass, PixelFormat, dumps
from ..pipeline import FrameView, LiveState
from .schemas import HealthResponse, MetricsResponse, StageStatus, UnknownCamera

BOUNDARY = "frame"
POLL_S = 0.005
BOX_COLOURS = {
    ObjectClass.ROD: (255, 170, 0),
    ObjectClass.FLAPPER: (0, 200, 255),
    ObjectClass.DIVERTER: (120, 255, 120),
}


def render_view(view: FrameView | None, camera_id: str, width: int = 640, height: int = 480) -> bytes:
    """Encode one annotated frame as JPEG."""
    if view is not None:
        f = view.frame
        width, height = f.width, f.height
        if f.data is not None and f.pixel_format is PixelFormat.RGB8:
            img = Image.frombytes("RGB", (width, height), f.data)
        else:
            img = Image.new("RGB", (width, height), (24, 24, 28))
    else:
        img = Image.new("RGB", (width, height), (24, 24, 28))
    draw = ImageDraw.Draw(img)
    if view is None:
        draw.text((10, 10), f"{camera_id}: waiting for frames", fill=(200, 200, 200))
    else:
        for d in view.detections:
            colour = BOX_COLOURS.get(d.cls, (255, 255, 255))
            draw.rectangle(d.bbox, outline=colour, width=2)
            draw.text((d.bbox[0], max(0, d.bbox[1] - 12)), f"{d.cls.value} {d.confidence:.2f}", fill=colour)
        draw.text((10, height - 20), f"{camera_id} #{view.frame.seq}", fill=(220, 220, 220))
        for i, ev in enumerate(view.events):
            draw.text((10, 30 + 14 * i), f"! {ev.kind.value} {ev.magnitude:.2f}", fill=(255, 60, 60))
        if view.gate.paused:
            draw.rectangle((0, 0, width, 24), fill=(180, 0, 0))
            draw.text((10, 6), f"PAUSED ({view.gate.reason.value})", fill=(255, 255, 255))
    buf = io.BytesIO()
    img.save(buf, "JPEG", quality=75)
    return buf.getvalue()


def _part(jpeg: bytes) -> bytes:
    head = f"--{BOUNDARY}\r\nContent-Type: image/jpeg\r\nContent-Length: {len(jpeg)}\r\n\r\n"
    return head.encode() + jpeg + b"\r\n"


def stream_frames(live: LiveState, camera_id: str, max_frames: int | None = None) -> Iterator[bytes]:
    """Latest-frame stream: a slow reader skips frames instead of queueing them."""
    sent = 0
    last = -1
    while max_frames is None or sent < max_frames:
        version = live.versions.get(camera_id, 0)
        if version == last:
            if not live.running and sent > 0:
                return
            time.sleep(POLL_S)
            continue
        last = version
        yield _part(render_view(live.slots.get(camera_id), camera_id))
        sent += 1


def create_app(live: LiveState | None = None) -> FastAPI:
    live = live if live is not None else LiveState()
    app = FastAPI(title="millwatch", version="0.1.0")
    app.state.live = live

    @app.get("/video_feed", responses={404: {"model": UnknownCamera}})
    def video_feed(camera: str | None = None, max_frames: int | None = Query(None, ge=1)):
        ids = list(live.camera_ids)
        if camera is None and ids:
            camera = ids[0]
        if camera not in ids:
            body = UnknownCamera(detail=f"unknown camera {camera!r}; valid ids: {', '.join(ids) or '(none)'}", valid=ids)
            return JSONResponse(body.model_dump(), status_code=404)
        return StreamingResponse(
            stream_frames(live, camera, max_frames),
            media_type=f"multipart/x-mixed-replace; boundary={BOUNDARY}",
        )

    @app.get("/alerts")
    def alerts(limit: int = Query(50, ge=0)) -> Response:
        items = live.engine.last_surfaced(limit) if live.engine is not None else []
        text = "".join(dumps(a.to_dict()) + "\n" for a in items)
        return Response(text, media_type="application/x-ndjson")

    @app.get("/metrics", response_model=MetricsResponse)
    def metrics() -> MetricsResponse:
        return MetricsResponse(running=live.running, cameras=list(live.camera_ids), counters=live.counters())

    @app.get("/health", response_model=HealthResponse, responses={503: {"model": HealthResponse}})
    def health():
        stages = {k: StageStatus(**v) for k, v in live.monitor.status().items()}
        bad = live.monitor.unhealthy()
        body = HealthResponse(status="unhealthy" if bad else "ok", running=live.running, stages=stages, unhealthy=bad)
        if bad:
            return JSONResponse(body.model_dump(), status_code=503)
        return body

    return app
