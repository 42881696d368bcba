"""Alert debouncing, the line-format metric sink and alert evaluation."""

from __future__ import annotations

import io
import json
import logging
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .core import (
    Alert,
    AnomalyEvent,
    EventKind,
    InsufficientSamples,
    MetricPoint,
    ValidationError,
    dumps,
    s_to_ns,
)
from .simsource import TruthEvent

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# alert engine


@dataclass(frozen=True)
class DebounceRule:
    window_s: float = 10.0

    def __post_init__(self) -> None:
        if not self.window_s > 0:
            raise ValidationError("debounce window_s must be > 0")


@dataclass(frozen=True)
class NewAlert:
    alert: Alert


@dataclass(frozen=True)
class Coalesced:
    alert_id: int


@dataclass
class _Open:
    event: AnomalyEvent
    alert_id: int
    raised_ts: int
    suppressed: bool
    count: int = 1

    def freeze(self) -> Alert:
        return Alert(self.event, self.alert_id, self.raised_ts, self.suppressed, self.count)


class AlertEngine:
    """Turns events into debounced alerts.

    Alerts are keyed by ``(kind, camera_id)``; suppressed events debounce
    separately from surfaced ones. An alert stays open for ``window_s`` after
    it was raised and absorbs same-key events in that span. Each alert is
    written to the alert log once, when its window closes (or at ``close``),
    so the recorded ``coalesced_count`` is final.
    """

    def __init__(self, rule: DebounceRule | None = None, log_path=None, history: int = 1000) -> None:
        self.rule = rule or DebounceRule()
        self._window_ns = s_to_ns(self.rule.window_s)
        self._open: dict[tuple, _Open] = {}
        self._next_id = 1
        self._lock = threading.Lock()
        self._fh = open(log_path, "a", encoding="utf-8") if log_path is not None else None
        self.recent: deque[Alert] = deque(maxlen=history)
        self.finalized: list[Alert] = []
        self.surfaced = 0
        self.suppressed = 0
        self.coalesced = 0
        self.write_errors = 0

    def raise_alert(self, event: AnomalyEvent, suppressed: bool = False, now_ns: int | None = None):
        raised = event.ts if now_ns is None else now_ns
        key = (event.kind, event.camera_id, suppressed)
        with self._lock:
            cur = self._open.get(key)
            if cur is not None and event.ts - cur.event.ts < self._window_ns:
                cur.count += 1
                self.coalesced += 1
                return Coalesced(cur.alert_id)
            if cur is not None:
                self._finalize(key)
            alert_id = self._next_id
            self._next_id += 1
            self._open[key] = _Open(event, alert_id, raised, suppressed)
            alert = Alert(event, alert_id, raised, suppressed, 1)
            if suppressed:
                self.suppressed += 1
            else:
                self.surfaced += 1
                self.recent.append(alert)
            return NewAlert(alert)

    def expire(self, now_ns: int) -> None:
        """Finalize every open alert whose debounce window ended before ``now_ns``."""
        with self._lock:
            done = [k for k, o in self._open.items() if now_ns - o.event.ts >= self._window_ns]
            for key in sorted(done, key=lambda k: self._open[k].alert_id):
                self._finalize(key)

    def _finalize(self, key) -> None:
        alert = self._open.pop(key).freeze()
        self.finalized.append(alert)
        if not alert.suppressed:
            # refresh the operator view with the final count
            for i, a in enumerate(self.recent):
                if a.alert_id == alert.alert_id:
                    self.recent[i] = alert
                    break
        if self._fh is not None:
            try:
                self._fh.write(dumps(alert) + "\n")
            except (OSError, ValueError) as exc:
                self.write_errors += 1
                log.warning("alert log write failed: %s", exc)

    def close(self) -> None:
        with self._lock:
            for key in sorted(self._open, key=lambda k: self._open[k].alert_id):
                self._finalize(key)
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def all_alerts(self) -> list[Alert]:
        """Finalized alerts plus still-open ones, in id order."""
        with self._lock:
            out = self.finalized + [o.freeze() for o in self._open.values()]
        return sorted(out, key=lambda a: a.alert_id)

    def last_surfaced(self, limit: int = 50) -> list[Alert]:
        with self._lock:
            items = list(self.recent)
        return items[-limit:] if limit > 0 else []


def raise_alert(engine: AlertEngine, event: AnomalyEvent, suppressed: bool = False):
    return engine.raise_alert(event, suppressed)


def read_alerts(path) -> list[Alert]:
    with open(path, encoding="utf-8") as fh:
        return [Alert.from_dict(json.loads(line)) for line in fh if line.strip()]


# --------------------------------------------------------------------------
# line format


def format_float(v: float) -> str:
    return format(float(v), ".9g")


def _escape(s: str, chars: str) -> str:
    for ch in "\\" + chars:
        s = s.replace(ch, "\\" + ch)
    return s


def format_line(point: MetricPoint) -> str:
    """``measurement[,tag=v...] field=v[,field=v...] ts_ns`` with sorted keys."""
    head = _escape(point.measurement, ", ")
    for k in sorted(point.tags):
        head += f",{_escape(k, ',= ')}={_escape(point.tags[k], ',= ')}"
    fields = ",".join(f"{_escape(k, ',= ')}={format_float(point.fields[k])}" for k in sorted(point.fields))
    return f"{head} {fields} {point.ts}"


def _split(s: str, sep: str) -> list[str]:
    parts, cur, i = [], [], 0
    while i < len(s):
        ch = s[i]
        if ch == "\\" and i + 1 < len(s):
            cur.append(s[i : i + 2])
            i += 2
            continue
        if ch == sep:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
        i += 1
    parts.append("".join(cur))
    return parts


def _unescape(s: str) -> str:
    out, i = [], 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            out.append(s[i + 1])
            i += 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def parse_line(line: str) -> MetricPoint:
    sections = _split(line.rstrip("\n"), " ")
    if len(sections) != 3:
        raise ValidationError(f"expected 3 space-separated sections, got {len(sections)}: {line!r}")
    head, body, ts = sections
    series = _split(head, ",")
    measurement = _unescape(series[0])
    tags = {}
    for item in series[1:]:
        k, v = _split(item, "=")
        tags[_unescape(k)] = _unescape(v)
    fields = {}
    for item in _split(body, ","):
        k, v = _split(item, "=")
        fields[_unescape(k)] = float(v)
    return MetricPoint(measurement, fields, int(ts), tags)


# --------------------------------------------------------------------------
# sinks


class _TimedSink:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.write_ns: list[int] = []
        self.errors = 0
        self.lines = 0

    def write_point(self, point: MetricPoint) -> None:
        line = format_line(point) + "\n"
        with self._lock:
            t0 = time.perf_counter_ns()
            try:
                self._write(line)
                self.lines += 1
            except (OSError, ValueError) as exc:
                self.errors += 1
                log.warning("metric sink write failed: %s", exc)
            self.write_ns.append(time.perf_counter_ns() - t0)

    def _write(self, line: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LineSink(_TimedSink):
    """Appends line-format records to a file (``metrics.lp``)."""

    def __init__(self, path) -> None:
        super().__init__()
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def _write(self, line: str) -> None:
        self._fh.write(line)

    def flush(self) -> None:
        with self._lock:
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()


class MemorySink(_TimedSink):
    def __init__(self) -> None:
        super().__init__()
        self._buf = io.StringIO()

    def _write(self, line: str) -> None:
        self._buf.write(line)

    def getvalue(self) -> str:
        return self._buf.getvalue()

    def points(self) -> list[MetricPoint]:
        return [parse_line(line) for line in self.getvalue().splitlines()]


def write_point(sink: _TimedSink, point: MetricPoint) -> None:
    sink.write_point(point)


@dataclass(frozen=True)
class SinkOverhead:
    n: int
    mean_ms: float
    p99_ms: float
    max_ms: float


def percentile(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile of already sorted values, ``q`` in [0, 100]."""
    if not sorted_values:
        raise InsufficientSamples("no samples")
    n = len(sorted_values)
    rank = max(1, math.ceil(q / 100.0 * n - 1e-9))
    return sorted_values[min(rank, n) - 1]


def sink_overhead(sink: _TimedSink, min_samples: int = 100) -> SinkOverhead:
    samples = sorted(sink.write_ns)
    if len(samples) < min_samples:
        raise InsufficientSamples(f"need >= {min_samples} writes, have {len(samples)}")
    ms = [s / 1e6 for s in samples]
    return SinkOverhead(len(ms), sum(ms) / len(ms), percentile(ms, 99), ms[-1])


# --------------------------------------------------------------------------
# evaluation


@dataclass
class KindScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall_defined(self) -> bool:
        return self.tp + self.fn > 0


@dataclass
class EvalReport:
    per_kind: dict[EventKind, KindScore]
    tp: int
    fp: int
    fn: int
    false_alarm_rate: float
    match_window_s: float
    presence_accuracy: float | None = None
    suppressed_excluded: int = 0
    matches: list[tuple[int, int]] = field(default_factory=list)

    def recall(self, *kinds: EventKind) -> float:
        tp = sum(self.per_kind[k].tp for k in kinds if k in self.per_kind)
        fn = sum(self.per_kind[k].fn for k in kinds if k in self.per_kind)
        return tp / (tp + fn) if tp + fn else 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_kind": {
                k.value: {
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "recall": s.recall,
                    "precision": s.precision,
                    "recall_defined": s.recall_defined,
                }
                for k, s in sorted(self.per_kind.items(), key=lambda kv: kv[0].value)
            },
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "false_alarm_rate": self.false_alarm_rate,
            "presence_accuracy": self.presence_accuracy,
            "match_window_s": self.match_window_s,
            "suppressed_excluded": self.suppressed_excluded,
        }


def _alert_ts(a) -> int:
    return a.event.ts if isinstance(a, Alert) else a.ts


def _max_matching(adj: list[list[int]], n_right: int) -> list[int | None]:
    """Augmenting-path bipartite matching; returns the left owner of each right node."""
    owner: list[int | None] = [None] * n_right
    for root in range(len(adj)):
        # iterative DFS over alternating paths
        seen = [False] * n_right
        stack = [(root, iter(adj[root]))]
        path: list[tuple[int, int]] = []
        found = False
        while stack and not found:
            left, it = stack[-1]
            for r in it:
                if seen[r]:
                    continue
                seen[r] = True
                path.append((left, r))
                if owner[r] is None:
                    found = True
                else:
                    stack.append((owner[r], iter(adj[owner[r]])))
                break
            else:
                stack.pop()
                if path:
                    path.pop()
        if found:
            for left, r in path:
                owner[r] = left
    return owner


def evaluate(
    alerts: Iterable[Alert],
    ground_truth_events: Iterable[TruthEvent],
    match_window_s: float = 3.0,
    presence: Iterable[tuple[bool, bool]] | None = None,
) -> EvalReport:
    """Score surfaced alerts against scripted anomalies.

    An alert may match an anomaly of the same kind (and camera, when both
    name one) whose span overlaps ``[ts - w, ts + w]``; each anomaly matches
    at most one alert. The matching is a maximum one, so TP is as large as
    any assignment allows. Suppressed alerts are not scored. ``presence`` is
    an optional stream of ``(predicted, actual)`` per-frame rod-presence
    decisions.
    """
    w = s_to_ns(match_window_s)
    alerts = list(alerts)
    surfaced = sorted((a for a in alerts if not a.suppressed), key=lambda a: (a.event.ts, a.alert_id))
    truth = sorted(ground_truth_events, key=lambda t: (t.t_start, t.t_end))
    # candidates per alert, tightest deadline first
    adj: list[list[int]] = []
    for a in surfaced:
        ev = a.event
        cands = [
            ti
            for ti, t in enumerate(truth)
            if t.kind is ev.kind
            and not (t.camera_id and ev.camera_id and t.camera_id != ev.camera_id)
            and t.t_start <= ev.ts + w
            and ev.ts - w <= t.t_end
        ]
        cands.sort(key=lambda ti: (truth[ti].t_end, truth[ti].t_start, ti))
        adj.append(cands)
    owner = _max_matching(adj, len(truth))
    claimed = [o is not None for o in owner]
    matched_alerts = {o for o in owner if o is not None}
    per_kind: dict[EventKind, KindScore] = {}
    for ai, a in enumerate(surfaced):
        score = per_kind.setdefault(a.event.kind, KindScore())
        if ai in matched_alerts:
            score.tp += 1
        else:
            score.fp += 1
    matches = sorted((o, ti) for ti, o in enumerate(owner) if o is not None)
    for ti, t in enumerate(truth):
        if not claimed[ti]:
            per_kind.setdefault(t.kind, KindScore()).fn += 1
    tp = sum(s.tp for s in per_kind.values())
    fp = sum(s.fp for s in per_kind.values())
    fn = sum(s.fn for s in per_kind.values())
    acc = None
    if presence is not None:
        pairs = list(presence)
        if pairs:
            acc = sum(1 for p, q in pairs if p == q) / len(pairs)
    return EvalReport(
        per_kind=per_kind,
        tp=tp,
        fp=fp,
        fn=fn,
        false_alarm_rate=fp / (fp + tp) if fp + tp else 0.0,
        match_window_s=match_window_s,
        presence_accuracy=acc,
        suppressed_excluded=len(alerts) - len(surfaced),
        matches=matches,
    )


def read_truth(path) -> list[TruthEvent]:
    with open(path, encoding="utf-8") as fh:
        return [TruthEvent.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_truth(path, events: Iterable[TruthEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(dumps(e) + "\n")
