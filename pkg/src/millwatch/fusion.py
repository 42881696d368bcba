"""Process-signal bus, analytics gating and dividing-cut suppression."""

from __future__ import annotations

import enum
import json
import logging
import socket
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import (
    BILLET_KINDS,
    AnomalyEvent,
    MetricPoint,
    ProcessSignals,
    ValidationError,
    s_to_ns,
)

log = logging.getLogger(__name__)


class SignalBus:
    """Last-write-wins holder for the newest ``ProcessSignals`` snapshot.

    Publishing swaps a single reference under a lock; readers take the
    reference without locking, so reads never wait on a writer.
    """

    def __init__(self, staleness_limit_s: float = 5.0, initial: ProcessSignals | None = None) -> None:
        if not staleness_limit_s > 0:
            raise ValidationError("staleness_limit_s must be > 0")
        self.staleness_limit_ns = s_to_ns(staleness_limit_s)
        self._latest = initial
        self._lock = threading.Lock()
        self.published = 0
        self.stale_publishes = 0
        self._subscribers: dict[str, int] = {}

    @property
    def latest(self) -> ProcessSignals | None:
        return self._latest

    def publish(self, signals: ProcessSignals) -> bool:
        with self._lock:
            cur = self._latest
            if cur is not None and signals.signal_ts < cur.signal_ts:
                self.stale_publishes += 1
                return False
            self._latest = signals
            self.published += 1
            return True

    def subscribe(self, name: str) -> None:
        self._subscribers[name] = 0

    def read(self, now_ns: int, subscriber: str | None = None) -> tuple[ProcessSignals | None, bool]:
        """Return ``(snapshot, stale)`` as seen at ``now_ns``."""
        snap = self._latest
        if subscriber is not None:
            self._subscribers[subscriber] = self._subscribers.get(subscriber, 0) + 1
        if snap is None:
            return None, True
        return snap, now_ns - snap.signal_ts > self.staleness_limit_ns


def publish(bus: SignalBus, signals: ProcessSignals) -> bool:
    return bus.publish(signals)


class GateMode(str, enum.Enum):
    ACTIVE = "Active"
    PAUSED = "Paused"


class GateReason(str, enum.Enum):
    NONE = "None"
    MILL_IDLE = "MillIdle"
    GHOST_ROLLING = "GhostRolling"
    NO_MATERIAL = "NoMaterial"


@dataclass(frozen=True)
class GateState:
    mode: GateMode
    reason: GateReason
    since: int = 0

    def __post_init__(self) -> None:
        if (self.mode is GateMode.PAUSED) != (self.reason is not GateReason.NONE):
            raise ValidationError("gate is paused iff it has a reason")

    @property
    def paused(self) -> bool:
        return self.mode is GateMode.PAUSED


ACTIVE = GateState(GateMode.ACTIVE, GateReason.NONE)


def evaluate_gate(signals: ProcessSignals | None, stale: bool = False, since: int = 0) -> GateState:
    # stale or missing signals fail safe to a paused pipeline
    if signals is None or stale:
        return GateState(GateMode.PAUSED, GateReason.MILL_IDLE, since)
    if signals.ghost_rolling:
        return GateState(GateMode.PAUSED, GateReason.GHOST_ROLLING, since)
    if not signals.mill_running:
        return GateState(GateMode.PAUSED, GateReason.MILL_IDLE, since)
    if not signals.material_present:
        return GateState(GateMode.PAUSED, GateReason.NO_MATERIAL, since)
    return GateState(GateMode.ACTIVE, GateReason.NONE, since)


@dataclass
class GatedOutput:
    events: list[AnomalyEvent]
    metrics: list[MetricPoint]
    gated: int


def apply_gate(gate: GateState, events: Sequence[AnomalyEvent], metrics: Sequence[MetricPoint] = ()) -> GatedOutput:
    if not gate.paused:
        return GatedOutput(list(events), list(metrics), 0)
    return GatedOutput([], [m.with_tag("gate", "paused") for m in metrics], len(events))


class Verdict(str, enum.Enum):
    PASS = "Pass"
    SUPPRESSED = "Suppressed"


def suppress_dividing_cut(event: AnomalyEvent, signals: ProcessSignals | None, grace_s: float = 2.0) -> Verdict:
    if signals is None or event.kind not in BILLET_KINDS:
        return Verdict.PASS
    if signals.dividing_cut_active and event.ts <= signals.dividing_cut_until + s_to_ns(grace_s):
        return Verdict.SUPPRESSED
    return Verdict.PASS


@dataclass
class FusionResult:
    gate: GateState
    passed: list[AnomalyEvent]
    suppressed: list[AnomalyEvent]
    metrics: list[MetricPoint]
    gated: int


class Fusion:
    """Applies gate and dividing-cut suppression for one camera.

    The most recent snapshot with an active cut is remembered, so billet
    events arriving after the window closed still see it during the grace
    period.
    """

    def __init__(
        self,
        bus: SignalBus | None,
        grace_s: float = 2.0,
        suppression: bool = True,
        name: str = "fusion",
    ) -> None:
        self.bus = bus
        self.grace_s = grace_s
        self.suppression = suppression
        self.name = name
        self.gate = ACTIVE
        self._last_cut: ProcessSignals | None = None
        self.gated_events = 0
        self.suppressed_events = 0
        if bus is not None:
            bus.subscribe(name)

    def current_gate(self, now_ns: int) -> GateState:
        if self.bus is None:
            return ACTIVE
        snap, stale = self.bus.read(now_ns, self.name)
        if snap is not None and snap.dividing_cut_active:
            self._last_cut = snap
        gate = evaluate_gate(snap, stale)
        if gate.mode != self.gate.mode or gate.reason != self.gate.reason:
            self.gate = GateState(gate.mode, gate.reason, now_ns)
        return self.gate

    def process(self, events: Sequence[AnomalyEvent], metrics: Sequence[MetricPoint], now_ns: int) -> FusionResult:
        gate = self.current_gate(now_ns)
        out = apply_gate(gate, events, metrics)
        self.gated_events += out.gated
        passed, suppressed = [], []
        for ev in out.events:
            if self.suppression and suppress_dividing_cut(ev, self._last_cut, self.grace_s) is Verdict.SUPPRESSED:
                suppressed.append(ev)
            else:
                passed.append(ev)
        self.suppressed_events += len(suppressed)
        return FusionResult(gate, passed, suppressed, out.metrics, out.gated)


# --------------------------------------------------------------------------
# signal feeds


class ScheduledFeed:
    """Publishes pre-recorded snapshots as the pipeline clock passes them."""

    def __init__(self, bus: SignalBus, snapshots: Iterable[ProcessSignals]) -> None:
        self.bus = bus
        self._pending = sorted(snapshots, key=lambda s: s.signal_ts)
        self._i = 0
        self._lock = threading.Lock()

    def advance_to(self, ts: int) -> None:
        with self._lock:
            while self._i < len(self._pending) and self._pending[self._i].signal_ts <= ts:
                self.bus.publish(self._pending[self._i])
                self._i += 1


def shift_signals(snapshots: Iterable[ProcessSignals], offset_ns: int) -> list[ProcessSignals]:
    """Move snapshots in time, e.g. onto a wall-clock run start."""
    out = []
    for s in snapshots:
        until = s.dividing_cut_until + offset_ns if s.dividing_cut_active else 0
        out.append(
            ProcessSignals(s.mill_running, s.ghost_rolling, s.material_present, s.dividing_cut_active, until, s.signal_ts + offset_ns)
        )
    return out


def read_signal_file(path) -> list[ProcessSignals]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(ProcessSignals.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: line {lineno}: bad signal record ({exc})") from exc
    return out


class TcpSignalFeed:
    """Reads newline-delimited ProcessSignals JSON from a TCP peer.

    Runs on a daemon thread and reconnects with a fixed back-off. Malformed
    lines are logged and skipped.
    """

    def __init__(self, bus: SignalBus, host: str, port: int, retry_s: float = 1.0) -> None:
        self.bus = bus
        self.host, self.port = host, port
        self.retry_s = retry_s
        self.lines = 0
        self.bad_lines = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name=f"signals-{host}:{port}", daemon=True)

    def start(self) -> TcpSignalFeed:
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2.0)

    def advance_to(self, ts: int) -> None:
        pass

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                with socket.create_connection((self.host, self.port), timeout=1.0) as sock:
                    sock.settimeout(0.2)
                    self._consume(sock)
            except OSError as exc:
                log.debug("signal feed %s:%s unavailable: %s", self.host, self.port, exc)
            self._stop.wait(self.retry_s)

    def _consume(self, sock: socket.socket) -> None:
        buf = b""
        while not self._stop.is_set():
            try:
                chunk = sock.recv(65536)
            except socket.timeout:
                continue
            if not chunk:
                return
            buf += chunk
            *lines, buf = buf.split(b"\n")
            for raw in lines:
                if not raw.strip():
                    continue
                self.lines += 1
                try:
                    self.bus.publish(ProcessSignals.from_dict(json.loads(raw)))
                except (ValueError, KeyError, TypeError) as exc:
                    self.bad_lines += 1
                    log.warning("bad signal line from %s:%s: %s", self.host, self.port, exc)

