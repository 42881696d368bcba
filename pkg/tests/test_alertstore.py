import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_match

from millwatch.alertstore import (
    AlertEngine,
    Coalesced,
    DebounceRule,
    LineSink,
    MemorySink,
    NewAlert,
    evaluate,
    format_line,
    parse_line,
    percentile,
    raise_alert,
    read_alerts,
    read_truth,
    sink_overhead,
    write_point,
    write_truth,
)
from millwatch.core import NS_PER_S, Alert, AnomalyEvent, EventKind, InsufficientSamples, MetricPoint, ValidationError
from millwatch.simsource import TruthEvent

S = NS_PER_S
KINDS = [EventKind.VIBRATION, EventKind.FLAPPER_DEVIATION, EventKind.DIVERTER_SHIFT, EventKind.SHORT_METAL]


def ev(t_s, kind=EventKind.VIBRATION, cam="cam1"):
    return AnomalyEvent(kind, cam, 0, int(t_s * S), 20.0)


# -- debounce ----------------------------------------------------------------------


def test_events_within_window_coalesce():
    eng = AlertEngine(DebounceRule(10))
    first = raise_alert(eng, ev(0))
    second = raise_alert(eng, ev(4))
    assert isinstance(first, NewAlert) and second == Coalesced(first.alert.alert_id)
    eng.close()
    assert [a.coalesced_count for a in eng.all_alerts()] == [2]


def test_events_past_window_raise_again():
    eng = AlertEngine(DebounceRule(10))
    raise_alert(eng, ev(0))
    assert isinstance(raise_alert(eng, ev(15)), NewAlert)
    assert len(eng.all_alerts()) == 2


def test_key_includes_camera():
    eng = AlertEngine()
    raise_alert(eng, ev(0, cam="cam1"))
    raise_alert(eng, ev(0, cam="cam2"))
    assert eng.surfaced == 2


def test_suppressed_alerts_counted_separately():
    eng = AlertEngine()
    eng.raise_alert(ev(0, EventKind.SHORT_METAL), suppressed=True)
    eng.raise_alert(ev(1, EventKind.SHORT_METAL))
    assert (eng.surfaced, eng.suppressed) == (1, 1)
    assert [a.event.ts for a in eng.last_surfaced()] == [1 * S]


def test_debounce_rule_positive():
    with pytest.raises(ValidationError):
        DebounceRule(0)


@given(st.lists(st.floats(0, 120), max_size=80), st.sampled_from([1.0, 5.0, 10.0]))
def test_debounce_bound(times, window):
    eng = AlertEngine(DebounceRule(window))
    for t in sorted(times):
        eng.raise_alert(ev(t))
    span = (max(times) - min(times)) if times else 0.0
    assert eng.surfaced <= math.ceil(span / window) + (1 if times else 0)
    eng.close()
    assert sum(a.coalesced_count for a in eng.all_alerts()) == len(times)


def test_alert_log_written_when_finalized(tmp_path):
    path = tmp_path / "alerts.ndjson"
    eng = AlertEngine(DebounceRule(10), path)
    eng.raise_alert(ev(0))
    eng.raise_alert(ev(3))
    eng.expire(5 * S)
    assert path.read_text() == ""
    eng.expire(10 * S)
    eng.raise_alert(ev(20, EventKind.DIVERTER_SHIFT))
    eng.close()
    alerts = read_alerts(path)
    assert [(a.alert_id, a.coalesced_count) for a in alerts] == [(1, 2), (2, 1)]


def test_last_surfaced_limit():
    eng = AlertEngine()
    for i, k in enumerate(KINDS[:3]):
        eng.raise_alert(ev(i, k))
    assert [a.alert_id for a in eng.last_surfaced(2)] == [2, 3]
    assert eng.last_surfaced(0) == []


# -- line format ---------------------------------------------------------------------


def test_line_format_example():
    p = MetricPoint("rod_alignment", {"mean": 100, "std": 1.41421356}, 1700000000000000000, {"profile": "12mm", "camera_id": "cam1"})
    assert format_line(p) == "rod_alignment,camera_id=cam1,profile=12mm mean=100,std=1.41421356 1700000000000000000"


def test_line_without_tags():
    assert format_line(MetricPoint("billet", {"duration": 8.4}, 5)) == "billet duration=8.4 5"


def test_nine_significant_digits():
    assert format_line(MetricPoint("m", {"a": math.pi}, 0)) == "m a=3.14159265 0"


def test_escaping():
    p = MetricPoint("m,x", {"f=1": 2.0}, 0, {"k,ey": "v,a=l ue"})
    line = format_line(p)
    assert line == r"m\,x,k\,ey=v\,a\=l\ ue f\=1=2 0"
    assert parse_line(line) == p


names = st.text(st.characters(blacklist_categories=("Cs", "Zs", "Cc")), min_size=1, max_size=8)
finite = st.floats(allow_nan=False, allow_infinity=False, width=32)


@given(
    names,
    st.dictionaries(names, finite, min_size=1, max_size=4),
    st.integers(0, 2**63 - 1),
    st.dictionaries(names, st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=8), max_size=4),
)
def test_line_round_trip(measurement, fields, ts, tags):
    p = MetricPoint(measurement, fields, ts, tags)
    q = parse_line(format_line(p))
    assert (q.measurement, q.tags, q.ts) == (p.measurement, p.tags, p.ts)
    for k, v in p.fields.items():
        assert q.fields[k] == pytest.approx(v, rel=1e-8, abs=0)


def test_line_sink_appends(tmp_path):
    sink = LineSink(tmp_path / "metrics.lp")
    write_point(sink, MetricPoint("a", {"x": 1}, 1))
    write_point(sink, MetricPoint("b", {"y": 2}, 2))
    sink.close()
    assert (tmp_path / "metrics.lp").read_text() == "a x=1 1\nb y=2 2\n"


def test_sink_write_failure_counted(tmp_path):
    sink = LineSink(tmp_path / "m.lp")
    sink._fh.close()
    sink.write_point(MetricPoint("a", {"x": 1}, 1))
    assert sink.errors == 1


def test_sink_overhead_needs_samples():
    with pytest.raises(InsufficientSamples):
        sink_overhead(MemorySink())


def test_memory_sink_overhead():
    sink = MemorySink()
    for i in range(1000):
        sink.write_point(MetricPoint("m", {"v": i}, i, {"camera_id": "cam1"}))
    assert sink_overhead(sink).mean_ms < 0.1
    assert len(sink.points()) == 1000


def test_nearest_rank_percentile():
    xs = list(range(1, 101))
    assert (percentile(xs, 50), percentile(xs, 95), percentile(xs, 99), percentile(xs, 100)) == (50, 95, 99, 100)
    assert percentile([7.0], 99) == 7.0


# -- evaluation -----------------------------------------------------------------------


def truth(t0, t1, kind=EventKind.VIBRATION, cam="cam1"):
    return TruthEvent(kind, cam, int(t0 * S), int(t1 * S))


def alert(i, t, kind=EventKind.VIBRATION, cam="cam1", suppressed=False):
    return Alert(AnomalyEvent(kind, cam, 0, int(t * S), 1.0), i, int(t * S), suppressed)


def ten_burst():
    bursts = [truth(20 * i + 2, 20 * i + 4.5) for i in range(10)]
    alerts = [alert(i + 1, 20 * i + 3) for i in range(9)]
    return alerts, bursts


def test_ten_burst_recall():
    r = evaluate(*ten_burst())
    assert r.recall(EventKind.VIBRATION) == 0.9
    assert r.false_alarm_rate == 0.0 and (r.tp, r.fp, r.fn) == (9, 0, 1)


def test_no_truth_convention():
    r = evaluate([alert(1, 1), alert(2, 50)], [])
    s = r.per_kind[EventKind.VIBRATION]
    assert s.recall == 1.0 and not s.recall_defined and s.fn == 0
    assert r.false_alarm_rate == 1.0


def test_nothing_to_score():
    r = evaluate([], [])
    assert (r.tp, r.fp, r.fn, r.false_alarm_rate) == (0, 0, 0, 0.0)


def test_suppressed_alerts_excluded():
    r = evaluate([alert(1, 3, suppressed=True)], [truth(2, 4)])
    assert (r.tp, r.fp, r.fn, r.suppressed_excluded) == (0, 0, 1, 1)


def test_window_edges():
    assert evaluate([alert(1, 7.0)], [truth(2, 4)], 3.0).tp == 1
    assert evaluate([alert(1, 7.001)], [truth(2, 4)], 3.0).tp == 0
    assert evaluate([alert(1, 7.0, cam="cam2")], [truth(2, 4)], 3.0).tp == 0


def test_overlapping_windows_matched_optimally():
    # one alert could take either truth; taking the long one would strand the second alert
    alerts = [alert(1, 0.0), alert(2, 50.0)]
    gt = [truth(-1.0, 100.0), truth(0.0, 1.0)]
    assert evaluate(alerts, gt, 3.0).tp == 2


def test_presence_accuracy():
    r = evaluate([], [], presence=[(True, True), (False, True), (False, False), (True, True)])
    assert r.presence_accuracy == 0.75


def test_truth_file_round_trip(tmp_path):
    items = [truth(1, 2), truth(3, 4, EventKind.SHORT_METAL, "")]
    write_truth(tmp_path / "t.ndjson", items)
    assert read_truth(tmp_path / "t.ndjson") == items


def random_instance(rng, max_events=20):
    n_truth = rng.randint(0, max_events // 2)
    n_alert = rng.randint(0, max_events - n_truth)
    kinds = KINDS[: rng.randint(1, 3)]
    cams = ["cam1", "cam2", ""]
    gt = []
    for _ in range(n_truth):
        a = rng.uniform(0, 60)
        gt.append(TruthEvent(rng.choice(kinds), rng.choice(cams), int(a * S), int((a + rng.uniform(0.1, 8)) * S)))
    alerts = []
    for i in range(n_alert):
        t = rng.uniform(-3, 70)
        alerts.append(Alert(AnomalyEvent(rng.choice(kinds), rng.choice(cams[:2]), 0, int(t * S), 1.0), i + 1, int(t * S)))
    return alerts, gt


def compare_with_brute_force(alerts, gt, w=3.0):
    report = evaluate(alerts, gt, w)
    oracle = brute_match(
        [(a.event.kind.value, a.event.camera_id, a.event.ts) for a in alerts],
        [(t.kind.value, t.camera_id, t.t_start, t.t_end) for t in gt],
        int(w * S),
    )
    got = {k.value: {"tp": s.tp, "fp": s.fp, "fn": s.fn} for k, s in report.per_kind.items()}
    return got, oracle


@given(st.integers(0, 2**32))
def test_evaluate_matches_brute_force(seed):
    got, oracle = compare_with_brute_force(*random_instance(random.Random(seed)))
    assert got == oracle


@given(st.integers(0, 2**32))
def test_matching_is_one_to_one(seed):
    alerts, gt = random_instance(random.Random(seed))
    r = evaluate(alerts, gt)
    assert r.tp <= min(len(alerts), len(gt))
    assert r.tp + r.fp == len(alerts) and r.tp + r.fn == len(gt)
    assert 0.0 <= r.false_alarm_rate <= 1.0
