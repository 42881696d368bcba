"""Reference computations written independently of the package under test."""

from __future__ import annotations

import heapq
import statistics
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from functools import lru_cache


def brute_stats(values):
    """Exact population mean/std/min/max via rational arithmetic."""
    xs = [Fraction(v) for v in values]
    n = len(xs)
    mean = sum(xs) / n
    var = sum((x - mean) ** 2 for x in xs) / n
    return {
        "mean": float(mean),
        "std": float(var) ** 0.5,
        "pstdev": statistics.pstdev([float(v) for v in values]),
        "min": float(min(xs)),
        "max": float(max(xs)),
        "n": n,
    }


def brute_match(alerts, truth, window_ns):
    """Maximum one-to-one matching by exhaustive search over truth subsets.

    ``alerts``: list of (kind, camera, ts). ``truth``: list of (kind, camera,
    t_start, t_end). Returns per-kind {tp, fp, fn}.
    """

    def ok(a, t):
        if a[0] != t[0]:
            return False
        if a[1] and t[1] and a[1] != t[1]:
            return False
        return t[2] <= a[2] + window_ns and a[2] - window_ns <= t[3]

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == len(alerts):
            return 0, ()
        top, pick = best(i + 1, used)
        for j, t in enumerate(truth):
            if not used >> j & 1 and ok(alerts[i], t):
                got, rest = best(i + 1, used | 1 << j)
                if got + 1 > top:
                    top, pick = got + 1, ((i, j),) + rest
        return top, pick

    _, pairs = best(0, 0)
    matched_a = {i for i, _ in pairs}
    matched_t = {j for _, j in pairs}
    out: dict[str, dict[str, int]] = {}
    for i, a in enumerate(alerts):
        s = out.setdefault(a[0], {"tp": 0, "fp": 0, "fn": 0})
        s["tp" if i in matched_a else "fp"] += 1
    for j, t in enumerate(truth):
        if j not in matched_t:
            out.setdefault(t[0], {"tp": 0, "fp": 0, "fn": 0})["fn"] += 1
    return out


def des_drop_oldest(n_frames, fps, service_ms, capacity, warmup=100):
    """Event-driven simulation of source -> DropOldest queue -> single detector.

    Frames arrive every 1/fps s; the detector takes ``service_ms`` per frame
    and downstream work is free. Returns processed count, drops and latency
    stats (mean over frames after the first ``warmup`` processed, if more
    than ``warmup`` were processed).
    """
    period = 1000.0 / fps
    events = [(k * period, 0, k) for k in range(n_frames)]  # (time, type, frame)
    heapq.heapify(events)
    queue: list[tuple[int, float]] = []
    busy = False
    dropped = 0
    latencies: list[tuple[float, float]] = []  # (arrival, latency)
    current = None
    while events:
        t, kind, k = heapq.heappop(events)
        if kind == 0:
            if len(queue) == capacity:
                queue.pop(0)
                dropped += 1
            queue.append((k, t))
        else:
            latencies.append((current[1], t - current[1]))
            busy = False
        if not busy and queue:
            current = queue.pop(0)
            busy = True
            heapq.heappush(events, (t + service_ms, 1, current[0]))
    latencies.sort()
    kept = latencies[warmup:] if len(latencies) > warmup else latencies
    vals = [lat for _, lat in kept]
    return {
        "processed": len(latencies),
        "dropped": dropped,
        "mean_ms": sum(vals) / len(vals),
        "max_ms": max(vals),
    }


def clip_boundaries(start: datetime, duration_s: float, clip_len_s: float):
    """Every clip boundary touched by [start, start + duration)."""
    day = start.replace(hour=0, minute=0, second=0, microsecond=0)
    step = timedelta(seconds=clip_len_s)
    b = day + ((start - day) // step) * step
    out = []
    end = start + timedelta(seconds=duration_s)
    while b < end:
        out.append(b)
        b += step
    return out


START = datetime(2024, 3, 15, 10, 0, 0, tzinfo=timezone.utc)
