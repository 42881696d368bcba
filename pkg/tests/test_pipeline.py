import json
import os
import threading
import time
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import write_config
from oracles import START, clip_boundaries

from millwatch.alertstore import AlertEngine, MemorySink
from millwatch.analytics import CameraAnalytics
from millwatch.core import NS_PER_S, Frame, PixelFormat
from millwatch.detect import DetectorSpec, OracleNoise, build_detector
from millwatch.fusion import Fusion, SignalBus
from millwatch.pipeline import (
    Accepted,
    BoundedQueue,
    CameraStages,
    ClipSegmenter,
    Dropped,
    LiveState,
    Pipeline,
    PipelineConfig,
    QueueClosed,
    QueueEmpty,
    QueuePolicy,
    ReplaySource,
    Sinks,
    StageTiming,
    StorageWriter,
    SyntheticSource,
    clip_path,
    enqueue,
    frame_record,
    record_clip,
)
from millwatch.runner import run
from millwatch.simsource import Scenario, ScriptEvent, ScriptKind, cut_scenario, gen_stream, mixed_scenario, write_replay


def ts_of(iso):
    return int(datetime.fromisoformat(iso).replace(tzinfo=timezone.utc).timestamp()) * NS_PER_S


# -- queues ----------------------------------------------------------------------


def test_drop_oldest_evicts_head():
    q = BoundedQueue(2, QueuePolicy.DROP_OLDEST)
    assert enqueue(q, "a") == Accepted()
    enqueue(q, "b")
    assert enqueue(q, "c") == Dropped("a")
    assert [q.get(), q.get()] == ["b", "c"]
    assert q.dropped == 1 and q.conserved


def test_drop_reports_frame_seq():
    q = BoundedQueue(1, QueuePolicy.DROP_OLDEST)
    f = Frame("c", 41, 0, 2, 2, PixelFormat.RGB8, 12)
    q.put((f, None))
    assert q.put((f, None)) == Dropped(41)


def test_block_waits_for_consumer():
    q = BoundedQueue(2, QueuePolicy.BLOCK)
    q.put("a")
    q.put("b")
    done = threading.Event()

    def producer():
        q.put("c")
        done.set()

    t = threading.Thread(target=producer)
    t.start()
    assert not done.wait(0.2)
    assert q.get() == "a"
    assert done.wait(2)
    t.join()
    assert q.dropped == 0 and q.occupancy == 2


def test_first_enqueue():
    for policy in QueuePolicy:
        q = BoundedQueue(3, policy)
        assert q.put(1) == Accepted() and q.occupancy == 1


def test_close_and_timeouts():
    q = BoundedQueue(1)
    with pytest.raises(QueueEmpty):
        q.get(timeout=0.01)
    q.put(1)
    with pytest.raises(TimeoutError):
        q.put(2, timeout=0.01)
    q.close()
    assert q.get() == 1
    with pytest.raises(QueueClosed):
        q.get()
    with pytest.raises(QueueClosed):
        q.put(3)


@given(st.integers(1, 6), st.sampled_from(list(QueuePolicy)), st.lists(st.booleans(), max_size=80))
def test_conservation_and_fifo(capacity, policy, ops):
    q = BoundedQueue(capacity, policy)
    model, out, n = [], [], 0
    for is_put in ops:
        if is_put:
            if policy is QueuePolicy.BLOCK and q.occupancy == capacity:
                continue
            q.put(n)
            model.append(n)
            if len(model) > capacity:
                model.pop(0)
            n += 1
        elif q.occupancy:
            out.append(q.get())
            assert out[-1] == model.pop(0)
        assert q.conserved and q.occupancy <= capacity
    assert out == sorted(out)


def test_threaded_conservation():
    q = BoundedQueue(8, QueuePolicy.DROP_OLDEST)
    got = []

    def consumer():
        try:
            while True:
                got.append(q.get())
                time.sleep(0.0001)
        except QueueClosed:
            pass

    t = threading.Thread(target=consumer)
    t.start()
    for i in range(5000):
        q.put(i)
    q.close()
    t.join()
    assert q.enqueued == q.dequeued + q.dropped + q.occupancy
    assert got == sorted(got) and len(got) + q.dropped == 5000


# -- clip paths --------------------------------------------------------------------


def test_clip_path_floors_to_boundary():
    p = clip_path(ts_of("2024-03-15T10:31:12"), 12, "cam1")
    assert p.as_posix() == "2024-03-15/10/12mm/cam1_clip_103000.ndjson"


def test_clip_path_on_boundary():
    assert clip_path(ts_of("2024-03-15T10:32:00"), 12, "cam1").name == "cam1_clip_103200.ndjson"


def test_clip_path_near_midnight():
    p = clip_path(ts_of("2024-03-15T00:00:59"), 16, "c2", root="/x")
    assert p.as_posix() == "/x/2024-03-15/00/16mm/c2_clip_000000.ndjson"


def test_clip_boundaries_restart_each_day():
    # 7 min clips do not divide a day evenly; the last one is cut at midnight
    assert clip_path(ts_of("2024-03-16T00:03:00"), 12, "c", clip_len_s=420).name == "c_clip_000000.ndjson"
    assert clip_path(ts_of("2024-03-15T23:58:00"), 12, "c", clip_len_s=420).name == "c_clip_235500.ndjson"


def _rec(iso_ts, seq=0):
    f = Frame("cam1", seq, ts_of(iso_ts), 640, 480, PixelFormat.RGB8, 12)
    return frame_record(f)


def test_rollover_at_boundary(tmp_path):
    seg = ClipSegmenter(tmp_path)
    for i, t in enumerate(["2024-03-15T10:29:59", "2024-03-15T10:30:00", "2024-03-15T10:30:01"]):
        record_clip(seg, _rec(t, i))
    seg.close()
    a = (tmp_path / "2024-03-15/10/12mm/cam1_clip_102800.ndjson").read_text().splitlines()
    b = (tmp_path / "2024-03-15/10/12mm/cam1_clip_103000.ndjson").read_text().splitlines()
    assert [json.loads(x)["seq"] for x in a] == [0]
    assert [json.loads(x)["seq"] for x in b] == [1, 2]


def test_restart_starts_new_clip(tmp_path):
    for run_no in range(2):
        seg = ClipSegmenter(tmp_path)
        seg.record_clip(_rec("2024-03-15T10:30:05", run_no))
        seg.close()
    d = tmp_path / "2024-03-15/10/12mm"
    assert sorted(p.name for p in d.iterdir()) == ["cam1_clip_103000.1.ndjson", "cam1_clip_103000.ndjson"]


def test_single_frame_run(tmp_path):
    cfg = write_config(tmp_path, [Scenario(0, 1 / 45 + 1e-6)])
    result = run(cfg)
    files = list((tmp_path / "out/clips").rglob("*.ndjson"))
    assert result.report.frames_processed == 1
    assert len(files) == 1 and len(files[0].read_text().splitlines()) == 1


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_clip_root_counted(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    seg = ClipSegmenter(ro / "clips")
    assert seg.record_clip(_rec("2024-03-15T10:30:05")) is False
    assert seg.errors == 1


def test_clip_io_failure_does_not_stop_run(tmp_path):
    cfg = write_config(tmp_path, [Scenario(0, 2.0)])
    blocker = tmp_path / "out"
    blocker.mkdir()
    (blocker / "clips").write_text("a file where a directory should be")
    result = run(cfg)
    assert result.report.frames_processed == 90
    assert result.report.sink_errors > 0 and not result.report.failed


# -- runs ------------------------------------------------------------------------------


def test_ninety_frames_block(tmp_path):
    cfg = write_config(tmp_path, [Scenario(0, 2.0)], queues={"acquire": {"policy": "Block"}})
    r = run(cfg).report
    assert (r.frames_processed, r.dropped, r.frames_in) == (90, 0, 90)
    assert r.timings_monotonic


def test_empty_source(tmp_path):
    cfg = write_config(tmp_path, [Scenario(0, 2.0, events=(ScriptEvent(ScriptKind.CAMERA_DROPOUT, 0.0, 2.0),))])
    r = run(cfg).report
    assert (r.frames_processed, r.alerts_surfaced, r.reconnects) == (0, 0, 1)
    assert r.latency.n == 0


def test_clip_count_matches_boundary_oracle(tmp_path, oracle_values):
    sc = Scenario(0, 600.0, fps=5.0, start_ns=ts_of("2024-03-15T10:01:30"))
    cfg = write_config(tmp_path, [sc])
    r = run(cfg).report
    names = sorted(p.name for p in (tmp_path / "out/clips").rglob("*.ndjson"))
    expected = [b.strftime("%H%M%S") for b in clip_boundaries(START.replace(minute=1, second=30), 600, 120)]
    assert expected == oracle_values["clips_10min_offset"]
    assert names == [f"cam1_clip_{b}.ndjson" for b in expected]
    assert r.clip_records == r.frames_processed == 3000


def test_multi_camera_runs_are_independent(tmp_path):
    a, b = cut_scenario(), mixed_scenario(4, n_events=8)
    solo = run(write_config(tmp_path / "solo", [("camB", b)]), in_memory=True)
    both = run(write_config(tmp_path / "both", [("camA", a), ("camB", b)]), in_memory=True)
    solo_b = [x.to_dict() for x in solo.engine.all_alerts()]
    both_b = [x.to_dict() for x in both.engine.all_alerts() if x.event.camera_id == "camB"]
    for x in solo_b + both_b:
        x.pop("alert_id")
    assert solo_b == both_b
    assert both.report.cameras["camA"]["frames_processed"] == a.n_frames


def test_per_camera_seq_order(tmp_path):
    cfg = write_config(tmp_path, [cut_scenario(), mixed_scenario(1, n_events=6)])
    pipe_result = run(cfg)
    for rt in pipe_result.pipeline.runtimes:
        seqs = [t.seq for t in rt.timings]
        assert seqs == sorted(set(seqs))


class ListSource(ReplaySource):
    def __init__(self, items):
        super().__init__(None)
        self.items = items

    def frames(self, start_ns=None):
        yield from self.items


def test_bad_frames_rejected_and_counted():
    sc = Scenario(0, 1.0, fps=10)
    items = list(gen_stream(sc, render="RGB8"))
    f = items[3][0]
    items[3] = (Frame.unchecked(**{**f.__dict__, "data": b"\x00" * 10}), items[3][1])
    stages = CameraStages(
        "cam1",
        ListSource(items),
        build_detector(DetectorSpec("oracle", frozenset({12})), OracleNoise(), False),
        CameraAnalytics("cam1", 12),
        Fusion(None),
    )
    r = Pipeline(PipelineConfig(), [stages], Sinks(MemorySink(), AlertEngine())).run()
    assert (r.frames_in, r.frames_rejected, r.frames_processed) == (10, 1, 9)


def test_replay_source_matches_synthetic(tmp_path):
    from millwatch.config import parse_config

    sc = mixed_scenario(2, n_events=6)
    path = tmp_path / "rec.ndjson"
    write_replay(path, gen_stream(sc))
    direct = run(write_config(tmp_path, [sc], fusion={"signals": "none"}), in_memory=True)
    doc = {"cameras": [{"camera_id": "cam1", "source": f"replay:{path}"}], "fusion": {"signals": "none"}}
    replayed = run(parse_config(doc, base_dir=tmp_path), in_memory=True)
    assert replayed.report.frames_processed == sc.n_frames

    def analytics_lines(result):
        # camera telemetry only exists for live synthetic sources
        return [x for x in result.pipeline.sinks.metrics.getvalue().splitlines() if not x.startswith("camera,")]

    assert analytics_lines(replayed) == analytics_lines(direct)


def test_stage_failure_gives_partial_report(tmp_path):
    class Exploding(CameraAnalytics):
        def process(self, frame, detections):
            if frame.seq == 50:
                raise RuntimeError("boom")
            return super().process(frame, detections)

    for simulated in (True, False):
        sc = Scenario(0, 2.0)
        stages = CameraStages(
            "cam1",
            SyntheticSource(sc, "cam1"),
            build_detector(DetectorSpec("oracle", frozenset({12})), OracleNoise(), not simulated),
            Exploding("cam1", 12),
            Fusion(SignalBus()),
            signals_from_source=True,
        )
        live = LiveState(["cam1"])
        r = Pipeline(PipelineConfig(simulated=simulated), [stages], Sinks(MemorySink(), AlertEngine()), live).run()
        assert r.failed and "boom" in r.error
        assert r.frames_processed == 50
        assert live.monitor.unhealthy()


def test_wall_clock_run_small(tmp_path):
    cfg = write_config(tmp_path, [Scenario(0, 3.0)], clock="wall", warmup_frames=10)
    r = run(cfg).report
    assert r.mode == "wall" and r.frames_processed == 135 and r.dropped == 0
    assert all(q["conserved"] for q in r.queues)
    assert r.timings_monotonic and r.latency.mean_ms < 50
    assert r.sustained_fps <= 45.0 * 1.01


def test_storage_writer_drains_in_order(tmp_path):
    seg = ClipSegmenter(tmp_path)
    q = BoundedQueue(4, QueuePolicy.BLOCK)
    w = StorageWriter(seg, q).start()
    for i in range(200):
        q.put(_rec("2024-03-15T10:30:05", i))
    q.close()
    w.join(5)
    lines = next(tmp_path.rglob("*.ndjson")).read_text().splitlines()
    assert [json.loads(x)["seq"] for x in lines] == list(range(200))


def test_stage_timing_end_to_end():
    t = StageTiming("c", 0, 100, 150, 170, 180)
    assert t.end_to_end == 80 and t.monotonic
    assert not StageTiming("c", 0, 100, 90, 170, 180).monotonic
