"""Self-exciting surge dynamics: event extraction, exponential-kernel
Hawkes likelihood/fitting/simulation, regime labeling, and bootstrap
inference on the branching ratio.

The conditional intensity is ``lambda(t) = mu + sum_{t_i < t} alpha *
exp(-beta (t - t_i))`` with branching ratio ``n = alpha / beta``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._accel import njit
from .errors import (
    DegenerateInputError,
    ExplosiveSimulationError,
    InsufficientDataError,
    SteadyStateUndefinedError,
)

DEFAULT_N_MAX = 0.9999
EVENT_CAP = 1_000_000
# daily observations are stamped mid-day so event times stay simple
INTRADAY_OFFSET = 0.5


@dataclass
class EventSeries:
    """Strictly increasing event times with direction labels.

    The observation window is ``[t_start, t_start + span]``; times are
    absolute within that window.
    """

    times: np.ndarray
    span: float
    direction: np.ndarray | None = None
    threshold_sigma: float | None = None
    t_start: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) and np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if self.direction is not None:
            self.direction = np.asarray(self.direction)

    def __len__(self):
        return len(self.times)

    @property
    def t_end(self) -> float:
        return self.t_start + self.span

    def n_buy(self) -> int:
        return 0 if self.direction is None else int(np.sum(self.direction == "buy"))

    def n_sell(self) -> int:
        return 0 if self.direction is None else int(np.sum(self.direction == "sell"))


@dataclass
class HawkesFit:
    mu: float
    alpha: float
    beta: float
    log_likelihood: float
    constrained: bool
    converged: bool
    n_events: int = 0
    span: float = 0.0

    @property
    def branching_ratio(self) -> float:
        return self.alpha / self.beta

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "alpha": self.alpha,
            "beta": self.beta,
            "branching_ratio": self.branching_ratio,
            "loglik": self.log_likelihood,
            "constrained": self.constrained,
            "converged": self.converged,
        }


@dataclass
class RegimeSeries:
    """Per-day conditional intensity with optional high-herding labels."""

    intensity: np.ndarray
    grid: np.ndarray
    labels: np.ndarray | None = None
    percentile_threshold: float | None = None
    warnings: list = field(default_factory=list)

    def n_high(self) -> int:
        return 0 if self.labels is None else int(np.sum(self.labels))


def extract_events(aggregate: np.ndarray, threshold_sigma: float = 1.5) -> EventSeries:
    """Surge events: days where |flow - mean| exceeds a sigma multiple.

    Mean and (population) standard deviation are taken over the full
    series; direction is buy above the mean, sell below. Event times are
    day index + 0.5.
    """
    x = np.asarray(aggregate, dtype=float)
    if len(x) < 30:
        raise InsufficientDataError("need at least 30 days of aggregate flow")
    mean = x.mean()
    std = x.std()
    if std == 0:
        warnings.warn("aggregate flow has zero variance; no events extracted")
        return EventSeries(
            times=np.empty(0),
            span=float(len(x)),
            direction=np.empty(0, dtype="<U4"),
            threshold_sigma=threshold_sigma,
        )
    idx = np.nonzero(np.abs(x - mean) > threshold_sigma * std)[0]
    direction = np.where(x[idx] > mean, "buy", "sell")
    return EventSeries(
        times=idx.astype(float) + INTRADAY_OFFSET,
        span=float(len(x)),
        direction=direction,
        threshold_sigma=threshold_sigma,
    )


@njit(cache=True)
def _loglik_core(times, duration, offsets, mu, alpha, beta):
    """Exact exponential-kernel log-likelihood via the O(N) recursion.

    ``offsets`` holds ``t_end - t_i`` for the compensator tail terms;
    ``times`` are event times relative to window start.
    """
    n = len(times)
    ll = -mu * duration
    a_prev = 0.0
    for i in range(n):
        if i > 0:
            a_prev = np.exp(-beta * (times[i] - times[i - 1])) * (1.0 + a_prev)
        ll += np.log(mu + alpha * a_prev)
        ll += (alpha / beta) * (np.exp(-beta * offsets[i]) - 1.0)
    return ll


def log_likelihood(events: EventSeries, mu: float, alpha: float, beta: float) -> float:
    """Log-likelihood of an exponential-kernel Hawkes model on ``events``."""
    if mu <= 0 or beta <= 0 or alpha < 0:
        raise ValueError("require mu > 0, beta > 0, alpha >= 0")
    t = events.times - events.t_start
    if len(t) and (t[0] < 0 or t[-1] > events.span):
        raise ValueError("event times fall outside the observation window")
    offsets = events.span - t
    return float(_loglik_core(t, events.span, offsets, mu, alpha, beta))


def branching_ratio(alpha: float, beta: float) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    return alpha / beta


def steady_state_intensity(mu: float, branching: float) -> float:
    """Long-run event rate mu / (1 - n), defined only for subcritical n < 1."""
    if branching >= 1:
        raise SteadyStateUndefinedError(
            f"branching ratio {branching} >= 1 has no steady state"
        )
    return mu / (1.0 - branching)


def _neg_loglik_logparams(theta, times, duration, offsets, constrained, n_max):
    mu, alpha, beta = np.exp(theta)
    if not np.all(np.isfinite([mu, alpha, beta])) or mu <= 0 or beta <= 0:
        return 1e12
    penalty = 0.0
    if constrained and alpha / beta > n_max:
        # smooth push-back toward the feasible region, then hard projection
        penalty = 1e4 * (alpha / beta - n_max) ** 2
        alpha = n_max * beta
    ll = _loglik_core(times, duration, offsets, mu, alpha, beta)
    if not np.isfinite(ll):
        return 1e12
    return -ll + penalty


def fit(
    events: EventSeries,
    constrained: bool = True,
    n_max: float = DEFAULT_N_MAX,
    n_restarts: int = 8,
    seed: int = 0,
) -> HawkesFit:
    """Maximum-likelihood Hawkes fit via multi-start Nelder-Mead.

    The search runs over log-parameters; the stability constraint
    ``alpha/beta <= n_max`` is enforced by a smooth penalty during the
    search plus a final projection.
    """
    n = len(events)
    if n < 5:
        raise InsufficientDataError(f"need at least 5 events, got {n}")
    t = events.times - events.t_start
    duration = events.span
    offsets = duration - t

    rate = n / duration
    gaps = np.diff(t)
    mean_gap = gaps.mean() if len(gaps) else duration
    rng = np.random.default_rng(seed)

    starts = []
    for n0 in (0.1, 0.5, 0.9):
        for b0 in (1.0 / max(mean_gap, 1e-9), 0.2 / max(mean_gap, 1e-9)):
            starts.append((rate * (1 - n0), n0 * b0, b0))
    while len(starts) < n_restarts:
        n0 = rng.uniform(0.05, 0.95)
        b0 = np.exp(rng.uniform(np.log(0.05), np.log(5.0))) / max(mean_gap, 1e-9)
        starts.append((rate * (1 - n0), n0 * b0, b0))
    starts = starts[:max(n_restarts, 1)]

    args = (t, duration, offsets, constrained, n_max)
    best = None
    for s in starts:
        theta0 = np.log(np.maximum(s, 1e-12))
        res = minimize(
            _neg_loglik_logparams,
            theta0,
            args=args,
            method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 2000},
        )
        if best is None or res.fun < best.fun:
            best = res
    # polish from the incumbent
    res = minimize(
        _neg_loglik_logparams,
        best.x,
        args=args,
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000},
    )
    if res.fun <= best.fun:
        best = res

    mu, alpha, beta = np.exp(best.x)
    if constrained and alpha / beta > n_max:
        alpha = n_max * beta
    ll = float(_loglik_core(t, duration, offsets, mu, alpha, beta))
    return HawkesFit(
        mu=float(mu),
        alpha=float(alpha),
        beta=float(beta),
        log_likelihood=ll,
        constrained=constrained,
        converged=bool(best.success),
        n_events=n,
        span=duration,
    )


def simulate(
    mu: float,
    alpha: float,
    beta: float,
    days: float,
    seed: int = 0,
    buy_prob: float = 0.5,
    max_events: int = EVENT_CAP,
) -> EventSeries:
    """Exact simulation by Ogata thinning over ``[0, days]``.

    Supercritical parameter sets that would explode are cut off by
    ``max_events`` with an error.
    """
    if mu <= 0 or beta <= 0 or alpha < 0:
        raise ValueError("require mu > 0, beta > 0, alpha >= 0")
    rng = np.random.default_rng(seed)
    times = []
    t = 0.0
    excitation = 0.0  # sum of alpha * exp(-beta (t - t_i))
    while True:
        bound = mu + excitation
        dt = rng.exponential(1.0 / bound)
        t += dt
        if t > days:
            break
        excitation *= np.exp(-beta * dt)
        if rng.random() * bound <= mu + excitation:
            times.append(t)
            excitation += alpha
            if len(times) > max_events:
                raise ExplosiveSimulationError(
                    f"simulation exceeded {max_events} events before day {days:.1f}"
                )
    times = np.asarray(times)
    direction = np.where(rng.random(len(times)) < buy_prob, "buy", "sell")
    return EventSeries(times=times, span=float(days), direction=direction)


@njit(cache=True)
def _intensity_core(times, grid, mu, alpha, beta):
    out = np.empty(len(grid))
    s = 0.0  # decayed count of past events
    j = 0
    prev = grid[0]
    for k in range(len(grid)):
        g = grid[k]
        s *= np.exp(-beta * (g - prev))
        while j < len(times) and times[j] < g:
            s += np.exp(-beta * (g - times[j]))
            j += 1
        out[k] = mu + alpha * s
        prev = g
    return out


def intensity_series(
    events: EventSeries,
    mu: float,
    alpha: float,
    beta: float,
    grid: np.ndarray | None = None,
) -> RegimeSeries:
    """Conditional intensity on a daily grid using events strictly before t."""
    if grid is None:
        grid = events.t_start + np.arange(int(np.ceil(events.span)), dtype=float)
    grid = np.asarray(grid, dtype=float)
    lam = _intensity_core(events.times, grid, mu, alpha, beta)
    return RegimeSeries(intensity=np.asarray(lam), grid=grid)


def classify_regimes(series: RegimeSeries, percentile: float = 90.0) -> RegimeSeries:
    """Label days whose intensity exceeds the given percentile as high-herding."""
    lam = series.intensity
    if len(lam) < 10:
        raise InsufficientDataError("need at least 10 days of intensity")
    threshold = np.percentile(lam, percentile)
    labels = lam > threshold
    notes = list(series.warnings)
    if not labels.any() and np.all(lam == lam[0]):
        warnings.warn("intensity series is constant; no high-herding days")
        notes.append("constant intensity")
    return RegimeSeries(
        intensity=lam,
        grid=series.grid,
        labels=labels,
        percentile_threshold=percentile,
        warnings=notes,
    )


@dataclass
class BootstrapSummary:
    mean: float
    sd: float
    median: float
    ci_low: float
    ci_high: float
    excludes_one: bool
    n_used: int
    n_failed: int
    samples: np.ndarray


def bootstrap_branching(
    events: EventSeries,
    n_boot: int = 1000,
    seed: int = 0,
    constrained: bool = True,
    n_max: float = DEFAULT_N_MAX,
    n_restarts: int = 3,
) -> BootstrapSummary:
    """Gap-resampling bootstrap of the branching ratio.

    Each replicate resamples the N inter-event gaps with replacement,
    rebuilds a time series from the window start, refits, and records
    n = alpha/beta; the CI is the 2.5/97.5 percentile range. Failed
    replicate fits are dropped and counted.
    """
    n = len(events)
    if n < 10:
        raise InsufficientDataError("need at least 10 events to bootstrap")
    t = events.times - events.t_start
    gaps = np.diff(np.concatenate([[0.0], t]))
    tail = events.span - t[-1]
    samples = []
    failed = 0
    for r in range(n_boot):
        rng = np.random.default_rng([seed, r])
        g = rng.choice(gaps, size=n, replace=True)
        # jitter exact ties so the rebuilt process stays simple
        new_t = np.cumsum(g)
        dup = np.diff(new_t) <= 0
        if dup.any():
            new_t = np.unique(new_t)
        if len(new_t) < 5:
            failed += 1
            continue
        rep = EventSeries(times=new_t, span=float(new_t[-1] + tail))
        try:
            f = fit(rep, constrained=constrained, n_max=n_max,
                    n_restarts=n_restarts, seed=r)
        except (InsufficientDataError, ValueError):
            failed += 1
            continue
        if not np.isfinite(f.branching_ratio):
            failed += 1
            continue
        samples.append(f.branching_ratio)
    if failed > 0.2 * n_boot:
        warnings.warn(f"{failed} of {n_boot} bootstrap replicates failed")
    samples = np.asarray(samples)
    if len(samples) == 0:
        raise DegenerateInputError("all bootstrap replicates failed")
    lo, hi = np.percentile(samples, [2.5, 97.5])
    return BootstrapSummary(
        mean=float(samples.mean()),
        sd=float(samples.std(ddof=1)) if len(samples) > 1 else 0.0,
        median=float(np.median(samples)),
        ci_low=float(lo),
        ci_high=float(hi),
        excludes_one=bool(hi < 1.0 or lo > 1.0),
        n_used=len(samples),
        n_failed=failed,
        samples=samples,
    )


def threshold_sweep(
    aggregate: np.ndarray,
    thresholds=(1.0, 1.25, 1.5, 1.75, 2.0, 2.5),
    constrained: bool = True,
    n_max: float = DEFAULT_N_MAX,
    seed: int = 0,
    impact_fn=None,
) -> list[dict]:
    """Re-extract events and refit at each sigma threshold.

    ``impact_fn(events) -> float`` optionally attaches a per-threshold
    impact statistic (e.g. a regime impact ratio from deconvolution).
    """
    rows = []
    for thr in thresholds:
        ev = extract_events(aggregate, threshold_sigma=thr)
        row = {"threshold": float(thr), "n_events": len(ev)}
        if len(ev) < 5:
            row.update({"branching_ratio": None, "fit_ok": False})
        else:
            f = fit(ev, constrained=constrained, n_max=n_max, seed=seed)
            row.update({"branching_ratio": f.branching_ratio, "fit_ok": True})
        row["impact"] = None if impact_fn is None else impact_fn(ev)
        rows.append(row)
    return rows


def yearly_trend(
    events: EventSeries,
    year_boundaries: list[tuple[float, float]],
    min_events: int = 5,
    constrained: bool = True,
    n_max: float = DEFAULT_N_MAX,
    seed: int = 0,
) -> dict:
    """Per-segment Hawkes fits plus the OLS slope of n against segment index.

    Segments with fewer than ``min_events`` events are reported as
    insufficient and excluded from the trend.
    """
    per_year = []
    xs, ys = [], []
    for i, (start, end) in enumerate(year_boundaries):
        mask = (events.times >= start) & (events.times < end)
        sub_times = events.times[mask]
        entry = {"year_index": i, "start": start, "end": end,
                 "n_events": int(mask.sum())}
        if mask.sum() < min_events:
            entry["branching_ratio"] = None
            entry["status"] = "insufficient events"
        else:
            seg = EventSeries(times=sub_times, span=float(end - start),
                              t_start=float(start))
            f = fit(seg, constrained=constrained, n_max=n_max, seed=seed)
            entry["branching_ratio"] = f.branching_ratio
            entry["status"] = "ok"
            xs.append(i)
            ys.append(f.branching_ratio)
        per_year.append(entry)
    slope = None
    if len(xs) >= 2:
        slope = float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])
    return {"per_year": per_year, "slope": slope}
