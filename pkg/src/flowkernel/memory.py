"""Inter-event clustering and memory statistics on surge events.

Events separated by gaps within the fitted Hawkes timescale (1/beta)
form clusters; the gap coefficient of variation and a conditional
surge-probability profile measure burstiness and persistence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InsufficientDataError
from .hawkes import EventSeries


@dataclass
class MemoryProfile:
    timescale: float
    cluster_sizes: list[int]
    mean_cluster_size: float
    max_cluster_size: int
    fraction_isolated: float
    gap_cv: float | None
    conditional_prob: np.ndarray  # lags 1..K
    baseline_rate: float
    memory_depth: int
    depth_censored: bool
    fit_failed: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "timescale": self.timescale,
            "mean_cluster_size": self.mean_cluster_size,
            "max_cluster_size": self.max_cluster_size,
            "fraction_isolated": self.fraction_isolated,
            "gap_cv": self.gap_cv,
            "conditional_prob": [float(v) for v in self.conditional_prob],
            "baseline_rate": self.baseline_rate,
            "memory_depth": self.memory_depth,
            "depth_censored": self.depth_censored,
            "fit_failed": self.fit_failed,
            "notes": list(self.notes),
        }


def cluster_events(events: EventSeries, timescale: float) -> list[list[int]]:
    """Greedy left-to-right grouping; a new cluster starts when the gap
    to the previous event exceeds ``timescale``."""
    n = len(events)
    if n == 0:
        return []
    clusters = [[0]]
    for i in range(1, n):
        if events.times[i] - events.times[i - 1] > timescale:
            clusters.append([i])
        else:
            clusters[-1].append(i)
    return clusters


def gap_cv(events: EventSeries) -> float:
    """Coefficient of variation of inter-event times (sample sd / mean)."""
    if len(events) < 3:
        raise InsufficientDataError("need at least 3 events for a gap CV")
    gaps = np.diff(events.times)
    mean = gaps.mean()
    if mean == 0:
        raise DegenerateInputError("zero mean gap")
    return float(gaps.std(ddof=1) / mean)


def daily_indicator(events: EventSeries, span_days: int) -> np.ndarray:
    """Binary surge-day indicator over calendar days 0..span_days-1."""
    ind = np.zeros(span_days, dtype=np.int64)
    days = np.floor(events.times - events.t_start).astype(int)
    days = days[(days >= 0) & (days < span_days)]
    ind[days] = 1
    return ind


def conditional_profile(
    events: EventSeries, span_days: int, k_max: int = 20, lift: float = 1.5
) -> tuple[np.ndarray, float, int]:
    """P(surge at t+k | surge at t) for k = 1..k_max on day indicators.

    Memory depth counts the lags whose conditional probability exceeds
    ``lift`` times the baseline surge rate.
    """
    ind = daily_indicator(events, span_days)
    n_surge = int(ind.sum())
    if n_surge == 0:
        raise DegenerateInputError("no surge days in span")
    baseline = n_surge / span_days
    probs = np.zeros(k_max)
    for k in range(1, k_max + 1):
        anchors = ind[:-k]
        future = ind[k:]
        denom = anchors.sum()
        probs[k - 1] = (anchors * future).sum() / denom if denom > 0 else 0.0
    depth = int(np.sum(probs > lift * baseline))
    return probs, float(baseline), depth


def profile(
    events: EventSeries,
    beta: float | None,
    span_days: int,
    k_max: int = 20,
    lift: float = 1.5,
) -> MemoryProfile:
    """Full clustering/memory summary for one event series.

    When no fitted decay rate is available (Hawkes estimation failed),
    the median inter-event gap stands in as the clustering timescale and
    the failure is flagged in the output.
    """
    fit_failed = beta is None or not np.isfinite(beta) or beta <= 0
    notes = []
    if fit_failed:
        if len(events) < 2:
            raise InsufficientDataError("need at least 2 events")
        timescale = float(np.median(np.diff(events.times)))
        notes.append("Hawkes estimation failed; timescale = median gap")
    else:
        timescale = 1.0 / beta
    clusters = cluster_events(events, timescale)
    sizes = [len(c) for c in clusters]
    cv = gap_cv(events) if len(events) >= 3 else None
    probs, baseline, depth = conditional_profile(events, span_days, k_max, lift)
    return MemoryProfile(
        timescale=timescale,
        cluster_sizes=sizes,
        mean_cluster_size=float(np.mean(sizes)),
        max_cluster_size=int(max(sizes)),
        fraction_isolated=float(np.mean([s == 1 for s in sizes])),
        gap_cv=cv,
        conditional_prob=probs,
        baseline_rate=baseline,
        memory_depth=depth,
        depth_censored=depth == k_max,
        fit_failed=fit_failed,
        notes=notes,
    )
