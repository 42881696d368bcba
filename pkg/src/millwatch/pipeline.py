"""Stage orchestration: queues, clip storage, per-frame timing and the runners.

Two runners share the same stage code:

* simulated: one thread walks every camera's frames in timestamp order on a
  :class:`SimClock`. Nothing is dropped and outputs are byte-for-byte
  reproducible.
* wall clock: each camera gets acquisition, detection, analytics and storage
  threads joined by :class:`BoundedQueue` links; the source is paced to its
  frame rate.
"""

from __future__ import annotations

import enum
import heapq
import logging
import threading
import time
import traceback
from collections import deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .alertstore import AlertEngine, NewAlert, percentile
from .analytics import CameraAnalytics
from .core import (
    NS_PER_MS,
    NS_PER_S,
    AnomalyEvent,
    Detection,
    Frame,
    MetricPoint,
    PixelFormat,
    SimClock,
    SystemClock,
    dumps,
)
from .detect import Detector, FrameFormatError, demosaic_rg8, validate_format
from .fusion import ACTIVE, Fusion, GateState, ScheduledFeed
from .simsource import (
    GroundTruthRecord,
    ReconnectRecord,
    Scenario,
    camera_temperature,
    read_replay,
    source_stream,
)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# bounded queue


class QueuePolicy(str, enum.Enum):
    BLOCK = "Block"
    DROP_OLDEST = "DropOldest"


class QueueClosed(Exception):
    pass


class QueueEmpty(Exception):
    pass


@dataclass(frozen=True)
class Accepted:
    pass


@dataclass(frozen=True)
class Dropped:
    oldest_seq: Any


def _seq_of(item: Any) -> Any:
    if hasattr(item, "seq"):
        return item.seq
    if isinstance(item, tuple) and item and hasattr(item[0], "seq"):
        return item[0].seq
    return item


class BoundedQueue:
    """FIFO link between two stages with a fixed capacity.

    ``Block`` makes the producer wait for room; ``DropOldest`` evicts the head
    to admit the new item. Counters satisfy
    ``enqueued == dequeued + dropped + occupancy`` at every instant.
    """

    def __init__(self, capacity: int = 128, policy: QueuePolicy | str = QueuePolicy.BLOCK, name: str = "") -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.policy = QueuePolicy(policy)
        self.name = name
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._closed = False
        self.enqueued = 0
        self.dequeued = 0
        self.dropped = 0
        self.high_water = 0
        self.blocked_ns = 0

    @property
    def occupancy(self) -> int:
        return len(self._items)

    def put(self, item: Any, timeout: float | None = None) -> Accepted | Dropped:
        with self._cond:
            if self._closed:
                raise QueueClosed(self.name)
            result: Accepted | Dropped = Accepted()
            if len(self._items) >= self.capacity:
                if self.policy is QueuePolicy.DROP_OLDEST:
                    old = self._items.popleft()
                    self.dropped += 1
                    result = Dropped(_seq_of(old))
                else:
                    t0 = time.perf_counter_ns()
                    ok = self._cond.wait_for(lambda: self._closed or len(self._items) < self.capacity, timeout)
                    self.blocked_ns += time.perf_counter_ns() - t0
                    if self._closed:
                        raise QueueClosed(self.name)
                    if not ok:
                        raise TimeoutError(f"queue {self.name} full")
            self._items.append(item)
            self.enqueued += 1
            self.high_water = max(self.high_water, len(self._items))
            self._cond.notify_all()
            return result

    def get(self, timeout: float | None = None) -> Any:
        with self._cond:
            self._cond.wait_for(lambda: self._items or self._closed, timeout)
            if self._items:
                item = self._items.popleft()
                self.dequeued += 1
                self._cond.notify_all()
                return item
            if self._closed:
                raise QueueClosed(self.name)
            raise QueueEmpty(self.name)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def conserved(self) -> bool:
        return self.enqueued == self.dequeued + self.dropped + self.occupancy

    def stats(self) -> dict[str, Any]:
        with self._cond:
            return {
                "name": self.name,
                "capacity": self.capacity,
                "policy": self.policy.value,
                "enqueued": self.enqueued,
                "dequeued": self.dequeued,
                "dropped": self.dropped,
                "occupancy": len(self._items),
                "high_water": self.high_water,
                "blocked_ms": self.blocked_ns / NS_PER_MS,
                "conserved": self.enqueued == self.dequeued + self.dropped + len(self._items),
            }


def enqueue(queue: BoundedQueue, item: Any) -> Accepted | Dropped:
    return queue.put(item)


# --------------------------------------------------------------------------
# clip storage


def clip_boundary(ts_ns: int, clip_len_s: float = 120.0) -> datetime:
    dt = datetime.fromtimestamp(ts_ns // NS_PER_S, tz=timezone.utc)
    midnight = dt.replace(hour=0, minute=0, second=0)
    since = ts_ns - int(midnight.timestamp()) * NS_PER_S
    clip_ns = int(round(clip_len_s * NS_PER_S))
    start = (since // clip_ns) * clip_ns
    return datetime.fromtimestamp(int(midnight.timestamp()) + start // NS_PER_S, tz=timezone.utc)


def clip_path(ts_acquire: int, profile_mm: int, camera_id: str, root=".", clip_len_s: float = 120.0) -> Path:
    b = clip_boundary(ts_acquire, clip_len_s)
    return (
        Path(root)
        / b.strftime("%Y-%m-%d")
        / b.strftime("%H")
        / f"{profile_mm}mm"
        / f"{camera_id}_clip_{b.strftime('%H%M%S')}.ndjson"
    )


class ClipSegmenter:
    """Appends NDJSON frame records to two-minute (by default) clip files.

    One open file per ``(camera, profile)``; a record whose clip path differs
    from the open one closes it and opens the next. Each record is written
    with a single ``write`` call and flushed, so files only ever end on a
    record boundary. I/O errors are counted, never raised.
    """

    def __init__(self, root_dir, clip_len_s: float = 120.0) -> None:
        if not clip_len_s > 0:
            raise ValueError("clip_len_s must be > 0")
        self.root_dir = Path(root_dir)
        self.clip_len_s = clip_len_s
        self._open: dict[tuple[str, int], tuple[Path, Any, Path]] = {}
        self._lock = threading.Lock()
        self.records = 0
        self.errors = 0
        self.files: dict[Path, int] = {}

    def path_for(self, ts: int, profile_mm: int, camera_id: str) -> Path:
        return clip_path(ts, profile_mm, camera_id, self.root_dir, self.clip_len_s)

    def record_clip(self, record: dict[str, Any]) -> bool:
        key = (record["camera_id"], record["profile_mm"])
        path = self.path_for(record["ts_acquire"], record["profile_mm"], record["camera_id"])
        line = dumps(record) + "\n"
        with self._lock:
            try:
                cur = self._open.get(key)
                if cur is None or cur[0] != path:
                    if cur is not None:
                        cur[1].close()
                        del self._open[key]
                    path.parent.mkdir(parents=True, exist_ok=True)
                    target = self._fresh(path)
                    self._open[key] = (path, open(target, "a", encoding="utf-8"), target)
                _, fh, target = self._open[key]
                fh.write(line)
                fh.flush()
            except OSError as exc:
                self.errors += 1
                if self.errors == 1 or self.errors % 1000 == 0:
                    log.warning("clip write failed (%d so far): %s", self.errors, exc)
                return False
            self.records += 1
            self.files[target] = self.files.get(target, 0) + 1
            return True

    def _fresh(self, path: Path) -> Path:
        # a clip left by an earlier run is never extended; the restart gets
        # its own file next to it
        if path in self.files or not path.exists():
            return path
        n = 1
        while True:
            alt = path.with_name(f"{path.stem}.{n}{path.suffix}")
            if alt in self.files or not alt.exists():
                return alt
            n += 1

    def close(self) -> None:
        with self._lock:
            for _, fh, _ in self._open.values():
                try:
                    fh.close()
                except OSError:
                    self.errors += 1
            self._open.clear()


def record_clip(segmenter: ClipSegmenter, frame_record: dict[str, Any]) -> None:
    segmenter.record_clip(frame_record)


def frame_record(
    frame: Frame, detections: Iterable[Detection] = (), events: Iterable[AnomalyEvent] = (), gate: str = "Active"
) -> dict[str, Any]:
    rec = frame.to_dict(include_data=False)
    rec["detections"] = [d.to_dict() for d in detections]
    rec["events"] = [e.to_dict() for e in events]
    rec["gate"] = gate
    return rec


class StorageWriter:
    """Storage stage: drains a Block queue of frame records into clips."""

    def __init__(self, segmenter: ClipSegmenter, queue: BoundedQueue, write_delay_s: float = 0.0) -> None:
        self.segmenter = segmenter
        self.queue = queue
        self.write_delay_s = write_delay_s
        self.written = 0
        self.thread = threading.Thread(target=self._run, name=f"storage-{queue.name}", daemon=True)

    def start(self) -> StorageWriter:
        self.thread.start()
        return self

    def _run(self) -> None:
        while True:
            try:
                rec = self.queue.get()
            except QueueClosed:
                return
            if self.write_delay_s:
                time.sleep(self.write_delay_s)
            self.segmenter.record_clip(rec)
            self.written += 1

    def join(self, timeout: float | None = None) -> None:
        self.thread.join(timeout)


# --------------------------------------------------------------------------
# timing and report


@dataclass
class StageTiming:
    camera_id: str
    seq: int
    t_acquire: int
    t_detect_done: int = 0
    t_analytics_done: int = 0
    t_alert_done: int = 0

    @property
    def end_to_end(self) -> int:
        return self.t_alert_done - self.t_acquire

    @property
    def monotonic(self) -> bool:
        return self.t_acquire <= self.t_detect_done <= self.t_analytics_done <= self.t_alert_done


@dataclass
class LatencySummary:
    n: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    max_ms: float

    @classmethod
    def of(cls, values_ms: list[float]) -> LatencySummary:
        if not values_ms:
            return cls(0, 0.0, 0.0, 0.0, 0.0, 0.0)
        v = sorted(values_ms)
        return cls(len(v), sum(v) / len(v), percentile(v, 50), percentile(v, 95), percentile(v, 99), v[-1])


@dataclass
class RunReport:
    mode: str
    frames_in: int = 0
    frames_processed: int = 0
    frames_rejected: int = 0
    dropped: int = 0
    reconnects: int = 0
    missed_frames: int = 0
    events: int = 0
    events_gated: int = 0
    alerts_surfaced: int = 0
    alerts_suppressed: int = 0
    billets: int = 0
    clip_records: int = 0
    clip_files: int = 0
    metric_points: int = 0
    sink_errors: int = 0
    latency: LatencySummary | None = None
    sustained_fps: float = 0.0
    stage_ms: dict[str, float] = field(default_factory=dict)
    warmup_excluded: int = 0
    elapsed_s: float = 0.0
    queues: list[dict[str, Any]] = field(default_factory=list)
    cameras: dict[str, dict[str, Any]] = field(default_factory=dict)
    timings_monotonic: bool = True
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d = {k: v for k, v in self.__dict__.items()}
        d["latency"] = None if self.latency is None else dict(self.latency.__dict__)
        return d


# --------------------------------------------------------------------------
# sources


class SyntheticSource:
    def __init__(self, scenario: Scenario, camera_id: str, render: PixelFormat | str | None = None) -> None:
        self.scenario = scenario
        self.camera_id = camera_id
        self.render = render
        self.fps = scenario.fps

    def _shifted(self, start_ns: int | None) -> Scenario:
        if start_ns is None:
            return self.scenario
        return replace(self.scenario, start_ns=start_ns)

    def frames(self, start_ns: int | None = None) -> Iterator[Any]:
        return source_stream(self._shifted(start_ns), self.camera_id, self.render)

    def signals(self, start_ns: int | None = None):
        from .simsource import gen_signals

        return gen_signals(self._shifted(start_ns))

    def temperature(self, seq: int) -> float | None:
        return camera_temperature(self.scenario, seq)


class ReplaySource:
    def __init__(self, path, camera_id: str | None = None) -> None:
        self.path = path
        self.camera_id = camera_id
        self.fps = None

    def frames(self, start_ns: int | None = None) -> Iterator[Any]:
        offset = None
        for frame, gt in read_replay(self.path):
            if start_ns is not None:
                if offset is None:
                    offset = start_ns - frame.ts_acquire
                frame = replace(frame, ts_acquire=frame.ts_acquire + offset)
            if self.camera_id is not None and frame.camera_id != self.camera_id:
                frame = replace(frame, camera_id=self.camera_id)
            yield frame, gt

    def signals(self, start_ns: int | None = None):
        return None

    def temperature(self, seq: int) -> float | None:
        return None


# --------------------------------------------------------------------------
# live state shared with the HTTP surface


@dataclass(frozen=True)
class FrameView:
    frame: Frame
    detections: tuple[Detection, ...]
    events: tuple[AnomalyEvent, ...]
    gate: GateState
    truth: GroundTruthRecord | None = None


class StageMonitor:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._stages: dict[str, dict[str, Any]] = {}

    def register(self, name: str, thread: threading.Thread | None = None) -> None:
        with self._lock:
            self._stages[name] = {"state": "running", "thread": thread, "beats": 0}

    def beat(self, name: str) -> None:
        st = self._stages.get(name)
        if st is not None:
            st["beats"] += 1

    def finish(self, name: str) -> None:
        self._set(name, "finished")

    def fail(self, name: str) -> None:
        self._set(name, "failed")

    def halt(self, name: str) -> None:
        self._set(name, "halted")

    def _set(self, name: str, state: str) -> None:
        with self._lock:
            self._stages.setdefault(name, {"thread": None, "beats": 0})["state"] = state

    def status(self) -> dict[str, dict[str, Any]]:
        with self._lock:
            out = {}
            for name, st in self._stages.items():
                state = st["state"]
                th = st["thread"]
                if state == "running" and th is not None and not th.is_alive() and th.ident is not None:
                    state = "dead"
                out[name] = {"state": state, "beats": st["beats"]}
            return out

    def unhealthy(self) -> list[str]:
        return sorted(n for n, s in self.status().items() if s["state"] in ("halted", "failed", "dead"))


class LiveState:
    """What the HTTP layer may see of a running pipeline.

    Frame slots are replaced wholesale (one reference assignment), so the
    pipeline never waits on a reader.
    """

    def __init__(self, camera_ids: Iterable[str] = (), engine: AlertEngine | None = None) -> None:
        self.camera_ids = list(camera_ids)
        self.engine = engine
        self.monitor = StageMonitor()
        self.slots: dict[str, FrameView] = {}
        self.versions: dict[str, int] = {c: 0 for c in self.camera_ids}
        self.counters_fn: Callable[[], dict[str, Any]] | None = None
        self.running = False
        self.report: RunReport | None = None

    def counters(self) -> dict[str, Any]:
        if self.report is not None and not self.running:
            return self.report.to_dict()
        return self.counters_fn() if self.counters_fn is not None else {}

    def publish_frame(self, camera_id: str, view: FrameView) -> None:
        self.slots[camera_id] = view
        self.versions[camera_id] = self.versions.get(camera_id, 0) + 1


# --------------------------------------------------------------------------
# stage code


@dataclass
class CameraStages:
    camera_id: str
    source: Any
    detector: Detector
    analytics: CameraAnalytics
    fusion: Fusion
    feed: Any = None  # ScheduledFeed or TcpSignalFeed
    signals_from_source: bool = False


@dataclass
class Sinks:
    metrics: Any = None  # LineSink / MemorySink
    engine: AlertEngine | None = None
    segmenter: ClipSegmenter | None = None


@dataclass
class PipelineConfig:
    simulated: bool = True
    acquire_capacity: int = 128
    acquire_policy: QueuePolicy = QueuePolicy.DROP_OLDEST
    stage_capacity: int = 128
    stage_policy: QueuePolicy = QueuePolicy.BLOCK
    storage_capacity: int = 128
    storage_policy: QueuePolicy = QueuePolicy.BLOCK
    warmup_frames: int = 100
    keep_truth: bool = False


class _CameraRuntime:
    def __init__(self, stages: CameraStages, sinks: Sinks, clock, live: LiveState | None) -> None:
        self.s = stages
        self.sinks = sinks
        self.clock = clock
        self.live = live
        self.timings: list[StageTiming] = []
        self.frames_in = 0
        self.rejected = 0
        self.reconnects = 0
        self.missed = 0
        self.events = 0
        self.metric_points = 0
        self.presence: list[tuple[int, bool]] = []  # (ts, truth rod_present)
        self.fps = getattr(stages.source, "fps", None) or 45.0
        self._temp_every = max(1, int(round(self.fps)))
        self._latency_ns = int(stages.detector.spec.latency_model_ms * NS_PER_MS)

    def detect(self, frame: Frame, gt: GroundTruthRecord | None):
        validate_format(frame)
        if frame.pixel_format is PixelFormat.BAYER_RG8 and frame.data is not None:
            frame = demosaic_rg8(frame)
        dets = self.s.detector.detect(frame, gt)
        if self.clock.simulated and self._latency_ns:
            self.clock.advance(self._latency_ns)
        return frame, dets

    def analyse(self, frame: Frame, dets: list[Detection]):
        if self.s.feed is not None:
            self.s.feed.advance_to(frame.ts_acquire)
        out = self.s.analytics.process(frame, dets)
        metrics = list(out.metrics)
        temp = self.s.source.temperature(frame.seq)
        if temp is not None and frame.seq % self._temp_every == 0:
            metrics.append(
                MetricPoint(
                    "camera",
                    {"temperature_c": temp},
                    frame.ts_acquire,
                    {"camera_id": frame.camera_id, "profile": f"{frame.profile_mm}mm"},
                )
            )
        self.events += len(out.events)
        return self.s.fusion.process(out.events, metrics, frame.ts_acquire)

    def alert(self, frame: Frame, dets, fused) -> list[AnomalyEvent]:
        engine = self.sinks.engine
        now = self.clock.now()
        raised = []
        if engine is not None:
            engine.expire(frame.ts_acquire)
            for ev in fused.passed:
                r = engine.raise_alert(ev, False, now)
                if isinstance(r, NewAlert):
                    raised.append(ev)
            for ev in fused.suppressed:
                engine.raise_alert(ev, True, now)
        if self.sinks.metrics is not None:
            for p in fused.metrics:
                self.sinks.metrics.write_point(p)
        self.metric_points += len(fused.metrics)
        return raised


class Pipeline:
    def __init__(
        self,
        config: PipelineConfig,
        cameras: list[CameraStages],
        sinks: Sinks,
        live: LiveState | None = None,
        clock=None,
    ) -> None:
        self.config = config
        self.cameras = cameras
        self.sinks = sinks
        self.live = live
        self.clock = clock or (SimClock() if config.simulated else SystemClock())
        # simulated cameras each keep their own clock so one camera's detector
        # latency never delays another's timeline
        self.runtimes = [
            _CameraRuntime(c, sinks, SimClock() if config.simulated and clock is None else self.clock, live)
            for c in cameras
        ]
        self.queues: list[BoundedQueue] = []
        self._failure: str | None = None
        self._abort = threading.Event()
        if live is not None:
            live.counters_fn = self.live_counters

    # -- shared per-frame path -------------------------------------------------

    def _storage_record(self, rt: _CameraRuntime, frame, dets, fused) -> dict[str, Any]:
        return frame_record(frame, dets, fused.passed + fused.suppressed, fused.gate.mode.value)

    def _finish_frame(self, rt: _CameraRuntime, frame, gt, dets, fused, timing: StageTiming) -> None:
        rt.timings.append(timing)
        if gt is not None:
            rt.presence.append((frame.ts_acquire, gt.rod_present))
        if self.live is not None:
            self.live.publish_frame(
                rt.s.camera_id,
                FrameView(frame, tuple(dets), tuple(fused.passed), fused.gate, gt),
            )

    # -- simulated ---------------------------------------------------------------

    def _run_simulated(self) -> None:
        def keyed(i: int, rt: _CameraRuntime):
            for item in rt.s.source.frames():
                ts = item.ts if isinstance(item, ReconnectRecord) else item[0].ts_acquire
                yield ts, i, item

        seg = self.sinks.segmenter
        for rt in self.runtimes:
            if rt.s.signals_from_source:
                snaps = rt.s.source.signals()
                if snaps is not None:
                    rt.s.feed = ScheduledFeed(rt.s.fusion.bus, snaps)
        for _, i, item in heapq.merge(*(keyed(i, rt) for i, rt in enumerate(self.runtimes))):
            rt = self.runtimes[i]
            if isinstance(item, ReconnectRecord):
                rt.reconnects += 1
                rt.missed += item.missed_frames
                log.info("camera %s reconnected after %d missed frames", item.camera_id, item.missed_frames)
                continue
            frame, gt = item
            rt.frames_in += 1
            clock = rt.clock
            clock.set(frame.ts_acquire)
            timing = StageTiming(frame.camera_id, frame.seq, frame.ts_acquire)
            try:
                frame, dets = rt.detect(frame, gt)
            except FrameFormatError as exc:
                rt.rejected += 1
                log.warning("%s", exc)
                continue
            timing.t_detect_done = clock.now()
            fused = rt.analyse(frame, dets)
            timing.t_analytics_done = clock.now()
            rt.alert(frame, dets, fused)
            timing.t_alert_done = clock.now()
            if seg is not None:
                seg.record_clip(self._storage_record(rt, frame, dets, fused))
            self._finish_frame(rt, frame, gt, dets, fused, timing)

    # -- wall clock --------------------------------------------------------------

    def _worker(self, name: str, fn: Callable[[], None], closes: list[BoundedQueue]) -> threading.Thread:
        def run() -> None:
            try:
                fn()
                if self.live is not None:
                    self.live.monitor.finish(name)
            except QueueClosed:
                if self.live is not None:
                    self.live.monitor.finish(name)
            except Exception as exc:  # noqa: BLE001 - any stage failure stops the run
                if self._failure is None:
                    self._failure = f"{name}: {exc!r}"
                log.error("stage %s failed:\n%s", name, traceback.format_exc())
                if self.live is not None:
                    self.live.monitor.fail(name)
                self._abort.set()
                for q in self.queues:
                    q.close()
            finally:
                for q in closes:
                    q.close()

        th = threading.Thread(target=run, name=name, daemon=True)
        if self.live is not None:
            self.live.monitor.register(name, th)
        return th

    def _run_wall(self) -> None:
        cfg = self.config
        clock = self.clock
        threads: list[threading.Thread] = []
        start = clock.now() + 50 * NS_PER_MS
        for rt in self.runtimes:
            cam = rt.s.camera_id
            acq_q = BoundedQueue(cfg.acquire_capacity, cfg.acquire_policy, f"{cam}/acquire")
            det_q = BoundedQueue(cfg.stage_capacity, cfg.stage_policy, f"{cam}/detect")
            sto_q = BoundedQueue(cfg.storage_capacity, cfg.storage_policy, f"{cam}/storage")
            self.queues += [acq_q, det_q, sto_q]
            if rt.s.signals_from_source:
                snaps = rt.s.source.signals(start)
                if snaps is not None:
                    rt.s.feed = ScheduledFeed(rt.s.fusion.bus, snaps)

            def acquire(rt=rt, q=acq_q, name=f"{cam}/acquire"):
                for item in rt.s.source.frames(start):
                    if self._abort.is_set():
                        return
                    if isinstance(item, ReconnectRecord):
                        clock.sleep_until(item.ts)
                        rt.reconnects += 1
                        rt.missed += item.missed_frames
                        log.info("camera %s reconnected", item.camera_id)
                        continue
                    clock.sleep_until(item[0].ts_acquire)
                    rt.frames_in += 1
                    q.put(item)
                    if self.live is not None:
                        self.live.monitor.beat(name)

            def detect(rt=rt, qin=acq_q, qout=det_q, name=f"{cam}/detect"):
                while not self._abort.is_set():
                    frame, gt = qin.get()
                    timing = StageTiming(frame.camera_id, frame.seq, frame.ts_acquire)
                    try:
                        frame, dets = rt.detect(frame, gt)
                    except FrameFormatError as exc:
                        rt.rejected += 1
                        log.warning("%s", exc)
                        continue
                    timing.t_detect_done = clock.now()
                    qout.put((frame, gt, dets, timing))
                    if self.live is not None:
                        self.live.monitor.beat(name)

            def analytics(rt=rt, qin=det_q, qout=sto_q, name=f"{cam}/analytics"):
                while not self._abort.is_set():
                    frame, gt, dets, timing = qin.get()
                    fused = rt.analyse(frame, dets)
                    timing.t_analytics_done = clock.now()
                    rt.alert(frame, dets, fused)
                    timing.t_alert_done = clock.now()
                    self._finish_frame(rt, frame, gt, dets, fused, timing)
                    if self.sinks.segmenter is not None:
                        qout.put(self._storage_record(rt, frame, dets, fused))
                    if self.live is not None:
                        self.live.monitor.beat(name)

            def storage(qin=sto_q, name=f"{cam}/storage"):
                while True:
                    rec = qin.get()
                    self.sinks.segmenter.record_clip(rec)
                    if self.live is not None:
                        self.live.monitor.beat(name)

            threads.append(self._worker(f"{cam}/acquire", acquire, [acq_q]))
            threads.append(self._worker(f"{cam}/detect", detect, [det_q]))
            threads.append(self._worker(f"{cam}/analytics", analytics, [sto_q]))
            threads.append(self._worker(f"{cam}/storage", storage, []))
        for th in threads:
            th.start()
        for th in threads:
            th.join()

    # -- entry point -------------------------------------------------------------

    def run(self) -> RunReport:
        mode = "simulated" if self.config.simulated else "wall"
        if self.live is not None:
            self.live.running = True
        t0 = time.perf_counter()
        try:
            if self.config.simulated:
                if self.live is not None:
                    self.live.monitor.register("pipeline")
                self._run_simulated()
                if self.live is not None:
                    self.live.monitor.finish("pipeline")
            else:
                self._run_wall()
        except Exception as exc:  # noqa: BLE001 - report partial results instead
            self._failure = f"{exc!r}"
            log.error("pipeline failed:\n%s", traceback.format_exc())
            if self.live is not None:
                self.live.monitor.fail("pipeline")
        finally:
            for rt in self.runtimes:
                feed = rt.s.feed
                if hasattr(feed, "stop"):
                    feed.stop()
            if self.sinks.engine is not None:
                self.sinks.engine.close()
            if self.sinks.segmenter is not None:
                self.sinks.segmenter.close()
            if hasattr(self.sinks.metrics, "flush"):
                self.sinks.metrics.flush()
        report = self._report(mode, time.perf_counter() - t0)
        if self.live is not None:
            self.live.running = False
            self.live.report = report
        return report

    def live_counters(self) -> dict[str, Any]:
        out = {
            "frames_in": sum(rt.frames_in for rt in self.runtimes),
            "frames_processed": sum(len(rt.timings) for rt in self.runtimes),
            "frames_rejected": sum(rt.rejected for rt in self.runtimes),
            "events": sum(rt.events for rt in self.runtimes),
            "dropped": sum(q.dropped for q in self.queues),
        }
        if self.sinks.engine is not None:
            out["alerts_surfaced"] = self.sinks.engine.surfaced
            out["alerts_suppressed"] = self.sinks.engine.suppressed
        return out

    def _report(self, mode: str, elapsed: float) -> RunReport:
        timings = sorted((t for rt in self.runtimes for t in rt.timings), key=lambda t: (t.t_acquire, t.camera_id))
        warm = self.config.warmup_frames if len(timings) > self.config.warmup_frames else 0
        kept = timings[warm:]
        lat = LatencySummary.of([t.end_to_end / NS_PER_MS for t in kept])
        # per camera: completed frames over time from first acquisition to last
        # completion, averaged across cameras
        rates = []
        for cam in {t.camera_id for t in kept}:
            mine = [t for t in kept if t.camera_id == cam]
            span = max(t.t_alert_done for t in mine) - mine[0].t_acquire
            if len(mine) >= 2 and span > 0:
                rates.append((len(mine) - 1) / (span / NS_PER_S))
        fps = sum(rates) / len(rates) if rates else 0.0
        stage_ms = {}
        if kept:
            n = len(kept)
            stage_ms = {
                "detect": sum(t.t_detect_done - t.t_acquire for t in kept) / n / NS_PER_MS,
                "analytics": sum(t.t_analytics_done - t.t_detect_done for t in kept) / n / NS_PER_MS,
                "alert": sum(t.t_alert_done - t.t_analytics_done for t in kept) / n / NS_PER_MS,
            }
        eng = self.sinks.engine
        seg = self.sinks.segmenter
        sink_errors = 0
        if seg is not None:
            sink_errors += seg.errors
        if self.sinks.metrics is not None:
            sink_errors += self.sinks.metrics.errors
        if eng is not None:
            sink_errors += eng.write_errors
        cameras = {}
        for rt in self.runtimes:
            cameras[rt.s.camera_id] = {
                "frames_in": rt.frames_in,
                "frames_processed": len(rt.timings),
                "frames_rejected": rt.rejected,
                "reconnects": rt.reconnects,
                "billets": len(rt.s.analytics.billets),
                "gated_events": rt.s.fusion.gated_events,
                "suppressed_events": rt.s.fusion.suppressed_events,
            }
        return RunReport(
            mode=mode,
            frames_in=sum(rt.frames_in for rt in self.runtimes),
            frames_processed=len(timings),
            frames_rejected=sum(rt.rejected for rt in self.runtimes),
            dropped=sum(q.dropped for q in self.queues),
            reconnects=sum(rt.reconnects for rt in self.runtimes),
            missed_frames=sum(rt.missed for rt in self.runtimes),
            events=sum(rt.events for rt in self.runtimes),
            events_gated=sum(rt.s.fusion.gated_events for rt in self.runtimes),
            alerts_surfaced=eng.surfaced if eng is not None else 0,
            alerts_suppressed=eng.suppressed if eng is not None else 0,
            billets=sum(len(rt.s.analytics.billets) for rt in self.runtimes),
            clip_records=seg.records if seg is not None else 0,
            clip_files=len(seg.files) if seg is not None else 0,
            metric_points=sum(rt.metric_points for rt in self.runtimes),
            sink_errors=sink_errors,
            latency=lat,
            sustained_fps=fps,
            stage_ms=stage_ms,
            warmup_excluded=warm,
            elapsed_s=elapsed,
            queues=[q.stats() for q in self.queues],
            cameras=cameras,
            timings_monotonic=all(t.monotonic for t in timings),
            failed=self._failure is not None,
            error=self._failure,
        )

    def presence_pairs(self, camera_id: str | None = None) -> list[tuple[bool, bool]]:
        """Per-frame ``(decided, actual)`` rod presence from billet segmentation."""
        out = []
        for rt in self.runtimes:
            if camera_id is not None and rt.s.camera_id != camera_id:
                continue
            intervals = rt.s.analytics.presence_intervals()
            j = 0
            for ts, actual in rt.presence:
                while j < len(intervals) and intervals[j].exit_ts < ts:
                    j += 1
                decided = j < len(intervals) and intervals[j].entry_ts <= ts <= intervals[j].exit_ts
                out.append((decided, actual))
        return out


def run_pipeline(
    config: PipelineConfig,
    cameras: list[CameraStages],
    sinks: Sinks,
    live: LiveState | None = None,
    clock=None,
) -> RunReport:
    return Pipeline(config, cameras, sinks, live, clock).run()

