import math

import pytest

from millwatch.core import (
    Alert,
    AnomalyEvent,
    Detection,
    EventKind,
    Frame,
    MetricPoint,
    ObjectClass,
    PixelFormat,
    ProcessSignals,
    SimClock,
    ValidationError,
    bbox_center,
    dumps,
    loads,
    s_to_ns,
)


def test_sim_clock_never_goes_backwards():
    c = SimClock(100)
    c.advance(50)
    assert c.now() == 150
    c.set(120)
    assert c.now() == 150
    c.sleep_until(400)
    assert c.now() == 400


def test_frame_length_checked_unless_descriptor():
    Frame("cam1", 0, 0, 4, 4, PixelFormat.BAYER_RG8, 12, bytes(16))
    Frame("cam1", 0, 0, 4, 4, PixelFormat.RGB8, 12, None)
    with pytest.raises(ValidationError):
        Frame("cam1", 0, 0, 4, 4, PixelFormat.RGB8, 12, bytes(16))
    bad = Frame.unchecked(
        camera_id="cam1", seq=0, ts_acquire=0, width=4, height=4, pixel_format=PixelFormat.RGB8, profile_mm=12, data=b"x"
    )
    assert bad.data == b"x"


def test_frame_round_trip_keeps_pixels():
    f = Frame("cam1", 3, 10, 2, 2, PixelFormat.RGB8, 16, bytes(range(12)))
    assert Frame.from_dict(loads(dumps(f))) == f


def test_detection_center_and_serialized_class():
    d = Detection(ObjectClass.ROD, (10, 20, 30, 60), 0.9, 4)
    assert d.center == (20.0, 40.0)
    assert d.to_dict()["class"] == "Rod"
    assert Detection.from_dict(d.to_dict()) == d


@pytest.mark.parametrize("bbox", [(5, 5, 5, 10), (5, 5, 10, 5), (10, 10, 0, 0)])
def test_degenerate_bbox_rejected(bbox):
    with pytest.raises(ValidationError):
        bbox_center(bbox)


def test_confidence_bounds():
    with pytest.raises(ValidationError):
        Detection(ObjectClass.ROD, (0, 0, 1, 1), 1.5, 0)


def test_event_units_and_round_trip():
    ev = AnomalyEvent(EventKind.DIVERTER_SHIFT, "cam1", 5, 99, 7.0)
    assert ev.unit == "mm"
    assert AnomalyEvent(EventKind.VIBRATION, "c", 0, 0, 1).unit == "px_std"
    assert AnomalyEvent(EventKind.SHORT_METAL, "c", 0, 0, 1).unit == "s"
    assert AnomalyEvent.from_dict(loads(dumps(ev))) == ev
    with pytest.raises(ValidationError):
        AnomalyEvent(EventKind.VIBRATION, "c", 0, 0, -1)


def test_alert_needs_positive_count():
    ev = AnomalyEvent(EventKind.VIBRATION, "c", 0, 0, 1)
    a = Alert(ev, 1, 0)
    assert Alert.from_dict(a.to_dict()) == a
    with pytest.raises(ValidationError):
        Alert(ev, 1, 0, coalesced_count=0)


def test_signals_cut_until_not_before_snapshot():
    ProcessSignals(dividing_cut_active=True, dividing_cut_until=10, signal_ts=5)
    with pytest.raises(ValidationError):
        ProcessSignals(dividing_cut_active=True, dividing_cut_until=4, signal_ts=5)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"measurement": "rod alignment", "fields": {"a": 1}},
        {"measurement": "m", "fields": {}},
        {"measurement": "m", "fields": {"a": math.nan}},
        {"measurement": "m", "fields": {"a": 1}, "tags": {"k": ""}},
        {"measurement": "m", "fields": {"a": 1}, "tags": {"k": "a\nb"}},
        {"measurement": "m", "fields": {"a b": 1}},
    ],
)
def test_metric_point_rejects_bad_input(kwargs):
    with pytest.raises(ValidationError):
        MetricPoint(ts=0, **kwargs)


def test_with_tag_adds_without_mutating():
    p = MetricPoint("m", {"a": 1}, 0, {"x": "1"})
    q = p.with_tag("gate", "paused")
    assert q.tags == {"x": "1", "gate": "paused"}
    assert p.tags == {"x": "1"}


def test_seconds_to_ns():
    assert s_to_ns(1.5) == 1_500_000_000
