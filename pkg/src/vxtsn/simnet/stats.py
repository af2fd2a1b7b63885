"""Delay statistics, CCDFs, per-task delay extraction and delivery checks."""

from __future__ import annotations

from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .traffic import trailer_of


@dataclass(frozen=True)
class DelayStats:
    """Summary of a delay sample, in microseconds."""

    mean: float
    std_dev: float
    p2_5: float
    p97_5: float
    count: int

    @classmethod
    def from_ns(cls, samples_ns: Sequence[int]) -> "DelayStats":
        if len(samples_ns) == 0:
            raise ValueError("cannot summarise an empty sample")
        us = np.asarray(samples_ns, dtype=np.float64) / 1000.0
        lo, hi = np.percentile(us, [2.5, 97.5])
        std = float(us.std(ddof=1)) if len(us) > 1 else 0.0
        return cls(float(us.mean()), std, float(lo), float(hi), len(us))

    def as_dict(self) -> dict:
        return {
            "mean_us": round(self.mean, 4),
            "std_dev_us": round(self.std_dev, 4),
            "p2_5_us": round(self.p2_5, 4),
            "p97_5_us": round(self.p97_5, 4),
            "count": self.count,
        }

    def __str__(self):
        return (
            f"mean {self.mean:.4f} us, std {self.std_dev:.4f} us, "
            f"95% [{self.p2_5:.4f} {self.p97_5:.4f}] us, n={self.count}"
        )


def ccdf(samples: Iterable) -> List[Tuple[float, float]]:
    """(d, P[X > d]) for every distinct sample value d, in ascending d."""
    xs = sorted(samples)
    if not xs:
        raise ValueError("CCDF of an empty sample")
    n = len(xs)
    out = []
    i = 0
    while i < n:
        d = xs[i]
        j = bisect_right(xs, d, i)
        out.append((d, (n - j) / n))
        i = j
    return out


def ccdf_at(points: Sequence[Tuple[float, float]], x: float) -> float:
    """Evaluate a CCDF step function (as returned by :func:`ccdf`) at ``x``."""
    xs = [p[0] for p in points]
    k = bisect_right(xs, x)
    if k == 0:
        return 1.0
    return points[k - 1][1]


def dominates(fast: Sequence[Tuple[float, float]], slow: Sequence[Tuple[float, float]]) -> bool:
    """True when ``fast`` lies left of ``slow``: P_fast[X > x] <= P_slow[X > x] at every abscissa."""
    # both are right-continuous steps, so comparing after each jump of either suffices
    i = j = 0
    pf = ps = 1.0
    while i < len(fast) or j < len(slow):
        x = min(fast[i][0] if i < len(fast) else float("inf"), slow[j][0] if j < len(slow) else float("inf"))
        while i < len(fast) and fast[i][0] == x:
            pf = fast[i][1]
            i += 1
        while j < len(slow) and slow[j][0] == x:
            ps = slow[j][1]
            j += 1
        if pf > ps:
            return False
    return True


@dataclass(frozen=True)
class TaskDelay:
    stats: Optional[DelayStats]
    samples_ns: Tuple[int, ...]
    lost: int


def _first_seen(events) -> Dict[tuple, int]:
    seen: Dict[tuple, int] = {}
    for ev in events:
        key = trailer_of(ev.raw)
        if key is not None and key not in seen:
            seen[key] = ev.timestamp_ns
    return seen


def match_delays(start_events, end_events) -> TaskDelay:
    """Pair events at two capture points by frame sequence number."""
    start = _first_seen(start_events)
    end = _first_seen(end_events)
    samples = []
    lost = 0
    for key, t0 in start.items():
        t1 = end.get(key)
        if t1 is None:
            lost += 1
        else:
            samples.append(t1 - t0)
    return TaskDelay(DelayStats.from_ns(samples) if samples else None, tuple(samples), lost)


TASKS = {"task1": ("A", "B"), "task2": ("B", "C"), "task3": ("F", "G")}


def measure_task_delays(report, points: Mapping[str, Tuple[str, str]] = TASKS) -> Dict[str, TaskDelay]:
    """task1 = B-A (tuple -> VxLAN redirection), task2 = C-B (encapsulation + DSCP),
    task3 = G-F (decapsulation + redirection)."""
    out = {}
    for task, (a, b) in points.items():
        if a not in report.captures or b not in report.captures:
            continue
        out[task] = match_delays(report.captures[a].events, report.captures[b].events)
    return out


@dataclass(frozen=True)
class FanoutCheck:
    delivered: Dict[str, Counter]  # flow -> sink -> frames
    misdelivered: List[str]

    @property
    def ok(self) -> bool:
        return not self.misdelivered


def multicast_fanout(report) -> FanoutCheck:
    """Compare every generated frame's delivery set against its flow's ``expect_sinks``."""
    per_frame: Dict[tuple, list] = {}
    for d in report.deliveries:
        per_frame.setdefault((d.flow, d.seq), []).append(d.sink)
    delivered: Dict[str, Counter] = {}
    for (flow, _), sinks in per_frame.items():
        delivered.setdefault(flow, Counter()).update(sinks)
    bad = []
    for f in report.scenario.flows:
        if f.expect_sinks is None:
            continue
        want = sorted(f.expect_sinks)
        for seq in range(report.generated[f.name]):
            got = sorted(per_frame.get((f.name, seq), ()))
            if got != want:
                bad.append(f"{f.name}#{seq}: {dict(Counter(got))} != {dict(Counter(want))}")
    return FanoutCheck(delivered, bad)
