"""Lagged-design construction and regularized kernel recovery.

The return at day t is modeled as a convolution of current and past
flow signals, ``r_t = sum_tau psi_tau * s_{t-tau} + eps_t`` over lags
0..L. Recovering psi is ill-posed; four penalties are supported:
closed-form Tikhonov/ridge and coordinate-descent LASSO/elastic net.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._accel import njit
from .errors import InsufficientDataError, SingularSystemError

METHODS = ("tikhonov", "lasso", "ridge", "enet")

CD_TOL = 1e-8
CD_MAX_SWEEPS = 10_000


@dataclass
class DesignSystem:
    """Lagged design matrix paired with its aligned response."""

    design: np.ndarray  # (rows, L+1), column tau holds signal at t - tau
    response: np.ndarray
    lag_count: int
    stock_ids: np.ndarray | None = None
    dates: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return self.design.shape[0]


@dataclass
class Kernel:
    """Lag-indexed impact coefficients with summary statistics."""

    coefficients: np.ndarray
    method: str
    strength: float | tuple
    total_impact: float = 0.0
    contemporaneous: float = 0.0
    half_life: int = 0
    se_total: float | None = None
    n_rows: int = 0

    @property
    def lags(self) -> int:
        return len(self.coefficients) - 1

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.coefficients)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "lambda": self.strength if np.isscalar(self.strength) else list(self.strength),
            "coefficients": [float(c) for c in self.coefficients],
            "total": float(self.total_impact),
            "contemporaneous": float(self.contemporaneous),
            "half_life": int(self.half_life),
            "se_total": None if self.se_total is None else float(self.se_total),
        }


@dataclass
class KernelComparison:
    correlation: float
    sign_agreement: float
    same_sign_total: bool
    total_ratio: float


def build_design(
    signal: np.ndarray,
    returns: np.ndarray,
    lags: int,
    stock_id=None,
    dates: np.ndarray | None = None,
) -> DesignSystem:
    """One row per date with a complete lag window; column tau = signal[t - tau].

    Rows containing any missing value (signal lag or response) are dropped.
    """
    signal = np.asarray(signal, dtype=float)
    returns = np.asarray(returns, dtype=float)
    if signal.shape != returns.shape:
        raise ValueError("signal and returns must share a date index")
    n = len(signal)
    if n <= lags:
        raise InsufficientDataError(f"need more than {lags} observations, got {n}")
    # column tau of row t is signal[t - tau]; sliding windows give reversed order
    windows = np.lib.stride_tricks.sliding_window_view(signal, lags + 1)
    design = windows[:, ::-1]
    response = returns[lags:]
    row_dates = (
        np.asarray(dates)[lags:] if dates is not None else np.arange(lags, n)
    )
    ok = ~(np.isnan(design).any(axis=1) | np.isnan(response))
    design = np.ascontiguousarray(design[ok])
    response = response[ok]
    row_dates = row_dates[ok]
    sids = None
    if stock_id is not None:
        sids = np.full(len(response), stock_id, dtype=object)
    return DesignSystem(
        design=design,
        response=response,
        lag_count=lags,
        stock_ids=sids,
        dates=row_dates,
    )


def stack_designs(systems: list[DesignSystem]) -> DesignSystem:
    if not systems:
        raise InsufficientDataError("no design systems to stack")
    lags = systems[0].lag_count
    if any(s.lag_count != lags for s in systems):
        raise ValueError("lag counts differ across systems")
    design = np.vstack([s.design for s in systems])
    response = np.concatenate([s.response for s in systems])
    dates = np.concatenate([s.dates for s in systems])
    sids = None
    if all(s.stock_ids is not None for s in systems):
        sids = np.concatenate([s.stock_ids for s in systems])
    return DesignSystem(design, response, lags, stock_ids=sids, dates=dates)


@njit(cache=True)
def _cd_penalized(gram, xty, l1, l2, tol, max_sweeps):
    """Coordinate descent for min ||y - X psi||^2 + l1*|psi|_1 + l2*|psi|^2.

    Works on the Gram matrix; soft threshold at l1/2 because the loss
    carries no 1/2 factor.
    """
    p = gram.shape[0]
    psi = np.zeros(p)
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            denom = gram[j, j] + l2
            if denom <= 0.0:
                continue
            rho = xty[j] - gram[j, :] @ psi + gram[j, j] * psi[j]
            if rho > l1 / 2.0:
                new = (rho - l1 / 2.0) / denom
            elif rho < -l1 / 2.0:
                new = (rho + l1 / 2.0) / denom
            else:
                new = 0.0
            delta = abs(new - psi[j])
            if delta > max_delta:
                max_delta = delta
            psi[j] = new
        if max_delta < tol:
            break
    return psi


def solve_regularized(system: DesignSystem, method: str = "tikhonov", strength=5.0) -> Kernel:
    """Solve the penalized least-squares problem for the impact kernel.

    Tikhonov and ridge use the closed-form normal equations through a
    symmetric positive-definite solve; LASSO and elastic net run
    coordinate descent to a coefficient max-change below ``1e-8``.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    x, y = system.design, system.response
    if x.size == 0:
        raise InsufficientDataError("empty design system")
    gram = x.T @ x
    xty = x.T @ y
    p = gram.shape[0]

    if method in ("tikhonov", "ridge"):
        lam = float(strength)
        if lam < 0:
            raise ValueError("strength must be nonnegative")
        try:
            cho = scipy.linalg.cho_factor(gram + lam * np.eye(p))
            psi = scipy.linalg.cho_solve(cho, xty)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(
                "normal equations are singular; use a strength > 0"
            ) from exc
        except scipy.linalg.LinAlgError as exc:
            raise SingularSystemError(
                "normal equations are singular; use a strength > 0"
            ) from exc
    elif method == "lasso":
        l1 = float(strength)
        if l1 < 0:
            raise ValueError("strength must be nonnegative")
        psi = _cd_penalized(gram, xty, l1, 0.0, CD_TOL, CD_MAX_SWEEPS)
    else:  # enet
        l1, l2 = (float(strength[0]), float(strength[1]))
        if l1 < 0 or l2 < 0:
            raise ValueError("strengths must be nonnegative")
        psi = _cd_penalized(gram, xty, l1, l2, CD_TOL, CD_MAX_SWEEPS)

    kernel = Kernel(
        coefficients=np.asarray(psi, dtype=float),
        method=method,
        strength=strength if np.isscalar(strength) else tuple(strength),
        n_rows=system.n_rows,
    )
    return kernel_stats(kernel)


def kernel_stats(kernel: Kernel) -> Kernel:
    """Fill total, contemporaneous, and half-life statistics in place.

    Half-life is the smallest lag h at which the absolute cumulative sum
    reaches half the absolute total; a zero-total kernel reports h = L.
    """
    psi = kernel.coefficients
    total = float(psi.sum())
    kernel.total_impact = total
    kernel.contemporaneous = float(psi[0])
    if total == 0.0:
        kernel.half_life = kernel.lags
    else:
        cum = np.abs(np.cumsum(psi))
        hits = np.nonzero(cum >= 0.5 * abs(total) - 1e-15)[0]
        kernel.half_life = int(hits[0]) if len(hits) else kernel.lags
    return kernel


def _standardized(signal: np.ndarray) -> np.ndarray:
    sd = np.nanstd(signal)
    if sd == 0 or np.isnan(sd):
        return signal - np.nanmean(signal)
    return (signal - np.nanmean(signal)) / sd


def _per_stock_systems(
    frames: dict, lags: int, pre_standardize: bool
) -> dict[object, DesignSystem]:
    """frames: stock_id -> (signal array, returns array, dates array)."""
    out = {}
    for sid, (sig, ret, dates) in frames.items():
        if len(sig) <= lags:
            continue
        s = _standardized(np.asarray(sig, float)) if pre_standardize else np.asarray(sig, float)
        out[sid] = build_design(s, np.asarray(ret, float), lags, stock_id=sid, dates=dates)
    return out


def pooled_kernel(
    frames: dict,
    lags: int = 60,
    n_stocks: int = 100,
    n_iter: int = 5,
    seed: int = 0,
    method: str = "tikhonov",
    strength=5.0,
    pre_standardize: bool = True,
) -> Kernel:
    """Subsampled pooled deconvolution.

    Each iteration samples ``n_stocks`` stocks without replacement, stacks
    their design systems, and solves once; the reported kernel is the mean
    across iterations and ``se_total`` is the standard error (sd/sqrt(n))
    of the per-iteration total impacts.
    """
    systems = _per_stock_systems(frames, lags, pre_standardize)
    ids = np.array(sorted(systems.keys(), key=str), dtype=object)
    if len(ids) == 0:
        raise InsufficientDataError("no stock has enough observations")
    if len(ids) < n_stocks:
        warnings.warn(
            f"only {len(ids)} stocks available; sampling all instead of {n_stocks}"
        )
        n_stocks = len(ids)
    coefs, totals = [], []
    for it in range(n_iter):
        rng = np.random.default_rng([seed, it])
        chosen = rng.choice(len(ids), size=n_stocks, replace=False)
        stacked = stack_designs([systems[ids[i]] for i in sorted(chosen)])
        k = solve_regularized(stacked, method, strength)
        coefs.append(k.coefficients)
        totals.append(k.total_impact)
    mean_coef = np.mean(coefs, axis=0)
    totals = np.asarray(totals)
    se = float(totals.std(ddof=1) / np.sqrt(n_iter)) if n_iter > 1 else 0.0
    if n_iter > 1 and np.allclose(totals, totals[0]):
        se = 0.0
    kernel = Kernel(
        coefficients=mean_coef,
        method=method,
        strength=strength if np.isscalar(strength) else tuple(strength),
        se_total=se,
        n_rows=int(np.mean([systems[i].n_rows for i in ids])),
    )
    return kernel_stats(kernel)


def conditional_kernel(
    frames: dict,
    labels: dict,
    lags: int = 60,
    aggregation: str = "pooled",
    method: str = "tikhonov",
    strength=5.0,
    pre_standardize: bool = True,
) -> dict:
    """Group-conditional kernels.

    ``labels`` maps row dates (or (stock, date) via a callable) to group
    names; here it is a callable ``labels(stock_id, date) -> group`` or a
    plain dict keyed by date. ``pooled`` stacks each group's rows into one
    solve; ``by_stock_mean`` averages per-stock kernels with equal weight.
    Groups with fewer than lags+1 rows are skipped and reported under the
    ``skipped`` key of the returned dict's ``.diagnostics`` attribute.
    """
    if aggregation not in ("pooled", "by_stock_mean"):
        raise ValueError("aggregation must be 'pooled' or 'by_stock_mean'")
    label_fn = labels if callable(labels) else (lambda sid, d: labels[d])
    systems = _per_stock_systems(frames, lags, pre_standardize)

    grouped: dict[object, list[DesignSystem]] = {}
    for sid, sys in systems.items():
        row_labels = np.array([label_fn(sid, d) for d in sys.dates], dtype=object)
        for g in np.unique(row_labels):
            mask = row_labels == g
            sub = DesignSystem(
                design=sys.design[mask],
                response=sys.response[mask],
                lag_count=lags,
                stock_ids=None if sys.stock_ids is None else sys.stock_ids[mask],
                dates=sys.dates[mask],
            )
            grouped.setdefault(g, []).append(sub)

    out: dict[object, Kernel] = {}
    skipped = []
    for g in sorted(grouped.keys(), key=str):
        parts = grouped[g]
        total_rows = sum(p.n_rows for p in parts)
        if total_rows < lags + 1:
            skipped.append(g)
            continue
        if aggregation == "pooled":
            out[g] = solve_regularized(stack_designs(parts), method, strength)
        else:
            kernels = []
            for p in parts:
                if p.n_rows < lags + 1:
                    continue
                kernels.append(solve_regularized(p, method, strength).coefficients)
            if not kernels:
                skipped.append(g)
                continue
            k = Kernel(
                coefficients=np.mean(kernels, axis=0),
                method=method,
                strength=strength if np.isscalar(strength) else tuple(strength),
                n_rows=total_rows,
            )
            out[g] = kernel_stats(k)
    if skipped:
        warnings.warn(f"groups skipped for insufficient rows: {skipped}")
    return out


def compare_kernels(a: Kernel, b: Kernel) -> KernelComparison:
    """Pearson correlation, per-lag sign agreement, and total-impact checks."""
    ca, cb = a.coefficients, b.coefficients
    if len(ca) != len(cb):
        raise ValueError("kernels have different lag counts")
    if np.std(ca) == 0 or np.std(cb) == 0:
        corr = float("nan")
    else:
        corr = float(np.corrcoef(ca, cb)[0, 1])
    agreement = float(np.mean(np.sign(ca) == np.sign(cb)))
    same_sign = bool(np.sign(a.total_impact) == np.sign(b.total_impact))
    ratio = (
        float(a.total_impact / b.total_impact) if b.total_impact != 0 else float("nan")
    )
    return KernelComparison(corr, agreement, same_sign, ratio)


def frames_from_signal(
    signal_df, signal_col: str, return_col: str = "close_return"
) -> dict:
    """Convert a stock/date/value frame into the per-stock dict the solvers use."""
    frames = {}
    for sid, grp in signal_df.groupby("stock_id", sort=True):
        grp = grp.sort_values("date")
        frames[sid] = (
            grp[signal_col].to_numpy(dtype=float),
            grp[return_col].to_numpy(dtype=float),
            grp["date"].to_numpy(),
        )
    return frames
