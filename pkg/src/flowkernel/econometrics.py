"""Diagnostic battery: stationarity tests, HAC regression, local
projections, Granger causality, mediation, mechanism regressions,
rolling early-warning indicators, and ROC evaluation.

P-values for the unit-root tests come from embedded critical-value
tables with linear interpolation; they are decision-grade, not
package-replication-grade.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.stats
from scipy.special import gammaln

from .deconv import solve_regularized, stack_designs
from .errors import (
    CollinearityError,
    DegenerateInputError,
    InsufficientDataError,
)


@dataclass
class RegressionResult:
    params: np.ndarray
    se_ols: np.ndarray
    se_hac: np.ndarray
    se_hc3: np.ndarray
    tstats: np.ndarray
    pvalues: np.ndarray
    r2: float
    n_obs: int
    hac_lags: int
    names: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "params": [float(v) for v in self.params],
            "se_hac": [float(v) for v in self.se_hac],
            "se_hc3": [float(v) for v in self.se_hc3],
            "tstats": [float(v) for v in self.tstats],
            "pvalues": [float(v) for v in self.pvalues],
            "r2": float(self.r2),
            "n_obs": int(self.n_obs),
            "hac_lags": int(self.hac_lags),
        }


@dataclass
class UnitRootResult:
    statistic: float
    pvalue: float
    reject: bool
    lags: int


@dataclass
class WarningSeries:
    rolling_acf: np.ndarray
    rolling_var: np.ndarray
    composite: np.ndarray
    window: int


@dataclass
class RocResult:
    auc: float
    threshold: float
    precision: float
    recall: float
    lead: int

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "threshold": self.threshold,
            "precision": self.precision,
            "recall": self.recall,
            "lead": self.lead,
        }


@dataclass
class MediationResult:
    total: float
    a: float
    b: float
    direct: float
    indirect: float
    percent_mediated: float
    unstable: bool

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "a": self.a,
            "b": self.b,
            "direct": self.direct,
            "indirect": self.indirect,
            "percent_mediated": self.percent_mediated,
            "unstable": self.unstable,
        }


def auto_hac_lags(n: int) -> int:
    return int(np.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def add_constant(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 1:
        x = x.T
    return np.column_stack([np.ones(len(x)), x])


def _check_rank(x: np.ndarray, names: list[str] | None = None):
    _, r, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(x.shape) * np.finfo(float).eps if diag.size else 0.0
    bad = piv[diag <= tol] if diag.size else []
    if len(bad):
        labels = [names[i] if names else f"col{i}" for i in sorted(bad)]
        raise CollinearityError(labels)


def nw_ols(
    y: np.ndarray,
    x: np.ndarray,
    hac_lags: int | None = None,
    names: list[str] | None = None,
) -> RegressionResult:
    """OLS with Newey-West (Bartlett) HAC and HC3 covariance.

    ``hac_lags=None`` selects floor(4 (T/100)^(2/9)). No degrees-of-freedom
    correction is applied to the sandwich estimators, so zero lags
    reproduces White's HC0 exactly.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    if hac_lags is None:
        hac_lags = auto_hac_lags(n)
    if n <= k + hac_lags:
        raise InsufficientDataError("not enough observations for the lag order")
    _check_rank(x, names)

    xtx = x.T @ x
    xtx_inv = np.linalg.inv(xtx)
    beta = xtx_inv @ (x.T @ y)
    u = y - x @ beta
    ssr = float(u @ u)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0

    sigma2 = ssr / (n - k)
    se_ols = np.sqrt(np.diag(sigma2 * xtx_inv))

    xu = x * u[:, None]
    meat = xu.T @ xu
    for lag in range(1, hac_lags + 1):
        w = 1.0 - lag / (hac_lags + 1.0)
        gamma = xu[lag:].T @ xu[:-lag]
        meat += w * (gamma + gamma.T)
    cov_hac = xtx_inv @ meat @ xtx_inv
    se_hac = np.sqrt(np.clip(np.diag(cov_hac), 0, None))

    h = np.einsum("ij,jk,ik->i", x, xtx_inv, x)
    xu3 = x * (u / (1.0 - h))[:, None]
    cov_hc3 = xtx_inv @ (xu3.T @ xu3) @ xtx_inv
    se_hc3 = np.sqrt(np.clip(np.diag(cov_hc3), 0, None))

    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se_hac > 0, beta / se_hac, np.inf * np.sign(beta))
    p = 2.0 * scipy.stats.t.sf(np.abs(t), df=max(n - k, 1))
    return RegressionResult(
        params=beta,
        se_ols=se_ols,
        se_hac=se_hac,
        se_hc3=se_hc3,
        tstats=t,
        pvalues=p,
        r2=r2,
        n_obs=n,
        hac_lags=hac_lags,
        names=names or [f"x{i}" for i in range(k)],
    )


def local_projections(
    y: np.ndarray,
    x: np.ndarray,
    controls: np.ndarray | None = None,
    horizons=range(60),
    hac_lags: int | None = None,
) -> dict:
    """Horizon-by-horizon regressions of y_{t+h} on x_t (plus controls).

    Returns per-horizon coefficients on x with HAC bands; horizons that
    exhaust the sample are skipped.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(y)
    cols = [x] if controls is None else [x] + list(np.atleast_2d(np.asarray(controls, float).T if np.asarray(controls).ndim == 1 else np.asarray(controls, float).T))
    rows = []
    results = {}
    for h in horizons:
        m = n - h
        if m <= len(cols) + 2:
            continue
        design = add_constant(np.column_stack([c[:m] for c in cols]))
        yy = y[h:]
        try:
            rr = nw_ols(yy, design, hac_lags=hac_lags,
                        names=["const", "x"] + [f"c{i}" for i in range(len(cols) - 1)])
        except (CollinearityError, InsufficientDataError):
            continue
        results[h] = rr
        rows.append(
            (h, rr.params[1], rr.se_hac[1],
             rr.params[1] - 1.96 * rr.se_hac[1],
             rr.params[1] + 1.96 * rr.se_hac[1])
        )
    table = np.array(rows) if rows else np.empty((0, 5))
    return {"results": results, "table": table}


def granger_test(cause: np.ndarray, effect: np.ndarray, max_lag: int = 5) -> dict:
    """Restricted-vs-unrestricted F-test at each lag; best = smallest p.

    A constant cause (or other rank deficiency at every lag) raises."""
    cause = np.asarray(cause, dtype=float)
    effect = np.asarray(effect, dtype=float)
    n = len(cause)
    if n <= 3 * max_lag:
        raise InsufficientDataError("series too short for the requested max lag")
    per_lag = []
    for lag in range(1, max_lag + 1):
        y = effect[lag:]
        m = len(y)
        eff_lags = np.column_stack([effect[lag - i:n - i] for i in range(1, lag + 1)])
        cau_lags = np.column_stack([cause[lag - i:n - i] for i in range(1, lag + 1)])
        x_r = add_constant(eff_lags)
        x_u = np.column_stack([x_r, cau_lags])
        try:
            _check_rank(x_u)
        except CollinearityError:
            continue
        b_r, ssr_r = _ols_ssr(y, x_r)
        b_u, ssr_u = _ols_ssr(y, x_u)
        df_den = m - x_u.shape[1]
        if df_den <= 0 or ssr_u <= 0:
            continue
        f = ((ssr_r - ssr_u) / lag) / (ssr_u / df_den)
        p = float(scipy.stats.f.sf(f, lag, df_den))
        per_lag.append({"lag": lag, "F": float(f), "p": p})
    if not per_lag:
        raise DegenerateInputError("Granger test undefined at all lags")
    best = min(per_lag, key=lambda r: r["p"])
    return {"best_lag": best["lag"], "F": best["F"], "p": best["p"],
            "per_lag": per_lag}


def _ols_ssr(y, x):
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    u = y - x @ beta
    return beta, float(u @ u)


def mediation(x: np.ndarray, mediator: np.ndarray, y: np.ndarray) -> MediationResult:
    """Three-regression effect decomposition.

    total (y on x), a (mediator on x), direct + b (y on x and mediator);
    indirect = a*b and percent mediated = a*b/total, flagged unstable for
    suppression cases (percent outside [0, 1]) or a near-zero total.
    """
    x = np.asarray(x, dtype=float)
    mediator = np.asarray(mediator, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.std(x) == 0 or np.std(mediator) == 0:
        raise DegenerateInputError("degenerate regressor variance")
    tau = nw_ols(y, add_constant(x), hac_lags=0).params[1]
    a = nw_ols(mediator, add_constant(x), hac_lags=0).params[1]
    both = nw_ols(y, add_constant(np.column_stack([x, mediator])), hac_lags=0)
    tau_p, b = both.params[1], both.params[2]
    indirect = a * b
    scale = max(abs(tau_p), abs(indirect), 1e-300)
    unstable = abs(tau) < 1e-8 * scale
    percent = indirect / tau if not unstable else float("nan")
    if not unstable and not 0.0 <= percent <= 1.0:
        unstable = True
    return MediationResult(
        total=float(tau),
        a=float(a),
        b=float(b),
        direct=float(tau_p),
        indirect=float(indirect),
        percent_mediated=float(percent),
        unstable=bool(unstable),
    )


# ---------------------------------------------------------------------------
# stationarity diagnostics


def _expected_rs(n: int) -> float:
    """Small-sample expected rescaled range of an i.i.d. series."""
    i = np.arange(1, n)
    s = np.sum(np.sqrt((n - i) / i))
    if n <= 340:
        front = np.exp(gammaln((n - 1) / 2.0) - gammaln(n / 2.0)) / np.sqrt(np.pi)
    else:
        front = 1.0 / np.sqrt(n * np.pi / 2.0)
    return (n - 0.5) / n * front * s


def hurst_exponent(series: np.ndarray, min_window: int = 8, n_scales: int = 10) -> float:
    """Rescaled-range Hurst estimate, bias-corrected against the
    i.i.d. expected R/S at each window size."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 128:
        raise InsufficientDataError("need at least 128 observations")
    if np.std(x) == 0:
        raise DegenerateInputError("constant series")
    windows = np.unique(
        np.floor(np.exp(np.linspace(np.log(min_window), np.log(n // 2), n_scales)))
        .astype(int)
    )
    log_w, log_rs = [], []
    for w in windows:
        n_seg = n // w
        if n_seg < 1:
            continue
        segs = x[: n_seg * w].reshape(n_seg, w)
        dev = segs - segs.mean(axis=1, keepdims=True)
        cum = np.cumsum(dev, axis=1)
        r = cum.max(axis=1) - cum.min(axis=1)
        s = segs.std(axis=1)
        ok = s > 0
        if not ok.any():
            continue
        rs = np.mean(r[ok] / s[ok])
        if rs <= 0:
            continue
        log_w.append(np.log(w))
        log_rs.append(np.log(rs) - np.log(_expected_rs(w)))
    if len(log_w) < 3:
        raise DegenerateInputError("too few usable scales")
    slope = np.polyfit(log_w, log_rs, 1)[0]
    return float(0.5 + slope)


# Dickey-Fuller tau (constant case) asymptotic quantiles
_ADF_PROBS = np.array([0.01, 0.025, 0.05, 0.10, 0.50, 0.90, 0.95, 0.975, 0.99])
_ADF_CRITS = np.array([-3.43, -3.12, -2.86, -2.57, -1.57, -0.44, -0.07, 0.23, 0.60])

# KPSS level-stationarity critical values
_KPSS_PROBS = np.array([0.10, 0.05, 0.025, 0.01])
_KPSS_CRITS = np.array([0.347, 0.463, 0.574, 0.739])


def adf_test(series: np.ndarray, max_lags: int | None = None) -> UnitRootResult:
    """Augmented Dickey-Fuller test with constant; lags by AIC.

    The p-value is interpolated from embedded asymptotic quantiles and is
    intended for decisions, not exact replication.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n < 30:
        raise InsufficientDataError("need at least 30 observations")
    if np.std(y) == 0:
        raise DegenerateInputError("constant series")
    dy = np.diff(y)
    if max_lags is None:
        max_lags = int(np.floor(12.0 * (n / 100.0) ** 0.25))
    max_lags = min(max_lags, len(dy) // 2 - 2)

    def _design(p, start):
        rows = len(dy) - start
        cols = [np.ones(rows), y[start:-1]]
        for i in range(1, p + 1):
            cols.append(dy[start - i: len(dy) - i])
        return np.column_stack(cols), dy[start:]

    # common sample (aligned at max_lags) for the AIC comparison
    best_p, best_aic = 0, np.inf
    for p in range(0, max_lags + 1):
        x, yy = _design(p, max_lags)
        _, ssr = _ols_ssr(yy, x)
        m = len(yy)
        aic = m * np.log(ssr / m) + 2 * (p + 2)
        if aic < best_aic:
            best_aic, best_p = aic, p
    x, yy = _design(best_p, best_p)
    xtx_inv = np.linalg.inv(x.T @ x)
    beta = xtx_inv @ (x.T @ yy)
    u = yy - x @ beta
    sigma2 = (u @ u) / (len(yy) - x.shape[1])
    stat = float(beta[1] / np.sqrt(sigma2 * xtx_inv[1, 1]))
    p_val = float(np.clip(np.interp(stat, _ADF_CRITS, _ADF_PROBS), 0.001, 0.999))
    return UnitRootResult(statistic=stat, pvalue=p_val, reject=p_val < 0.05,
                          lags=best_p)


def kpss_test(series: np.ndarray, bandwidth: int | None = None) -> UnitRootResult:
    """KPSS level-stationarity test with Bartlett long-run variance.

    The p-value is clipped to the tabulated [0.01, 0.10] band."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n < 30:
        raise InsufficientDataError("need at least 30 observations")
    e = y - y.mean()
    if bandwidth is None:
        bandwidth = int(np.floor(4.0 * (n / 100.0) ** 0.25))
    s = np.cumsum(e)
    lrv = float(e @ e) / n
    for lag in range(1, bandwidth + 1):
        w = 1.0 - lag / (bandwidth + 1.0)
        lrv += 2.0 * w * float(e[lag:] @ e[:-lag]) / n
    if lrv <= 0:
        raise DegenerateInputError("zero long-run variance")
    stat = float(np.sum(s**2) / (n**2 * lrv))
    p_val = float(np.clip(np.interp(stat, _KPSS_CRITS, _KPSS_PROBS), 0.01, 0.10))
    return UnitRootResult(statistic=stat, pvalue=p_val,
                          reject=stat > _KPSS_CRITS[1], lags=bandwidth)


# ---------------------------------------------------------------------------
# early warning and classification


def early_warning(flow: np.ndarray, window: int = 20) -> WarningSeries:
    """Rolling lag-1 autocorrelation and variance, each z-scored over the
    full sample; the composite score is their mean."""
    x = np.asarray(flow, dtype=float)
    n = len(x)
    if n <= window + 1:
        raise InsufficientDataError("series no longer than the window")
    acf = np.full(n, np.nan)
    var = np.full(n, np.nan)
    for t in range(window, n):
        seg = x[t - window: t + 1]
        a, b = seg[1:], seg[:-1]
        var[t] = seg[1:].var(ddof=1)
        sa, sb = a.std(), b.std()
        if sa > 0 and sb > 0:
            acf[t] = np.corrcoef(a, b)[0, 1]
    z_acf = _zscore_nan(acf)
    z_var = _zscore_nan(var)
    composite = 0.5 * (z_acf + z_var)
    return WarningSeries(rolling_acf=acf, rolling_var=var, composite=composite,
                         window=window)


def _zscore_nan(x: np.ndarray) -> np.ndarray:
    m = np.nanmean(x)
    s = np.nanstd(x)
    if not np.isfinite(s) or s == 0:
        return np.full_like(x, np.nan)
    return (x - m) / s


def roc_auc(score: np.ndarray, labels: np.ndarray, lead: int = 0) -> RocResult:
    """Rank-based AUC of score_t against label_{t+lead}, with the Youden
    threshold's precision and recall."""
    score = np.asarray(score, dtype=float)
    labels = np.asarray(labels).astype(int)
    if lead > 0:
        score, labels = score[:-lead], labels[lead:]
    ok = ~np.isnan(score)
    score, labels = score[ok], labels[ok]
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError("need both classes present")
    ranks = scipy.stats.rankdata(score)
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(score, kind="stable")[::-1]
    sorted_pos = pos[order]
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(~sorted_pos)
    tpr = tp / n_pos
    fpr = fp / n_neg
    j = tpr - fpr
    k = int(np.argmax(j))
    threshold = float(score[order][k])
    predicted = score >= threshold
    tp_k = int((predicted & pos).sum())
    precision = tp_k / predicted.sum() if predicted.sum() else 0.0
    recall = tp_k / n_pos
    return RocResult(auc=float(auc), threshold=threshold,
                     precision=float(precision), recall=float(recall),
                     lead=lead)


# ---------------------------------------------------------------------------
# panel-level regressions


def mechanism_regressions(panel_df, regime: dict) -> dict:
    """Microstructure mechanism models for institutional signal efficacy.

    ``regime`` maps date -> True on high-herding days. Efficacy is
    institution flow (market-cap normalized) times the same-day return;
    proxies: per-day cross-sectional return sd (volatility), turnover
    (liquidity), volume / volatility (depth). All regressors are z-scored;
    inference uses HC3.
    """
    df = panel_df.copy()
    df["efficacy"] = (df["flow_institutional"] / df["market_cap"]) * df["close_return"]
    vol_by_day = df.groupby("date")["close_return"].transform(lambda s: s.std(ddof=0))
    df["volatility"] = vol_by_day
    df["turnover"] = df["total_volume"] / df["market_cap"]
    df["log_volume"] = np.log1p(df["total_volume"])
    with np.errstate(divide="ignore", invalid="ignore"):
        df["depth"] = np.where(df["volatility"] > 0,
                               df["total_volume"] / df["volatility"], np.nan)
    df["herding"] = df["date"].map(lambda d: float(bool(regime.get(d, False))))
    df = df.replace([np.inf, -np.inf], np.nan).dropna(
        subset=["efficacy", "volatility", "turnover", "log_volume", "depth"]
    )

    def z(col):
        v = df[col].to_numpy(dtype=float)
        sd = v.std()
        return (v - v.mean()) / sd if sd > 0 else v * 0.0

    y = df["efficacy"].to_numpy(dtype=float)
    vol_z, volat_z = z("log_volume"), z("volatility")
    turn_z, depth_z = z("turnover"), z("depth")
    herd = df["herding"].to_numpy(dtype=float)

    out = {}
    specs = {
        "noise_barrier": (np.column_stack([vol_z, volat_z]),
                          ["const", "volume", "volatility"]),
        "liquidity_withdrawal": (np.column_stack([turn_z, depth_z]),
                                 ["const", "liquidity", "depth"]),
        "combined": (np.column_stack([vol_z, volat_z, turn_z, depth_z]),
                     ["const", "volume", "volatility", "liquidity", "depth"]),
        "interaction": (np.column_stack([turn_z, herd, herd * turn_z]),
                        ["const", "liquidity", "herding", "herding_x_liquidity"]),
    }
    for name, (cols, labels) in specs.items():
        try:
            out[name] = nw_ols(y, add_constant(cols), hac_lags=0, names=labels)
        except (CollinearityError, InsufficientDataError) as exc:
            out[name] = {"status": "skipped", "reason": str(exc)}
    return out


def ts_cross_validate(
    frames: dict,
    splits: list[tuple],
    lags: int = 60,
    method: str = "tikhonov",
    strength=5.0,
    pre_standardize: bool = True,
) -> list[dict]:
    """Out-of-sample R2 of the convolution model across time splits.

    Each split is (train_end, test_end) or (train_end, test_start,
    test_end); training rows have response dates <= train_end and test
    rows fall in (test_start, test_end] (test_start defaults to
    train_end). R2 may be negative; numerically failed splits report
    a missing value with the reason.
    """
    from .deconv import _per_stock_systems

    systems = _per_stock_systems(frames, lags, pre_standardize)
    results = []
    for split in splits:
        if len(split) == 2:
            train_end, test_end = split
            test_start = train_end
        else:
            train_end, test_start, test_end = split
        train_parts, test_x, test_y = [], [], []
        for sid in sorted(systems.keys(), key=str):
            sys = systems[sid]
            tr = sys.dates <= train_end
            te = (sys.dates > test_start) & (sys.dates <= test_end)
            if test_start == 0 and train_end == test_end:
                te = sys.dates <= test_end
            if tr.any():
                train_parts.append(
                    type(sys)(sys.design[tr], sys.response[tr], lags,
                              dates=sys.dates[tr])
                )
            if te.any():
                test_x.append(sys.design[te])
                test_y.append(sys.response[te])
        entry = {"train_end": train_end, "test_end": test_end}
        if not train_parts or not test_x:
            entry.update({"r2": None, "reason": "empty train or test window"})
            results.append(entry)
            continue
        try:
            kernel = solve_regularized(stack_designs(train_parts), method, strength)
            x = np.vstack(test_x)
            yv = np.concatenate(test_y)
            pred = x @ kernel.coefficients
            sst = float(np.sum((yv - yv.mean()) ** 2))
            if sst == 0 or not np.all(np.isfinite(pred)):
                entry.update({"r2": None, "reason": "numerically unstable split"})
            else:
                entry["r2"] = float(1.0 - np.sum((yv - pred) ** 2) / sst)
        except Exception as exc:  # noqa: BLE001 - per-split isolation
            entry.update({"r2": None, "reason": str(exc)})
        results.append(entry)
    return results
