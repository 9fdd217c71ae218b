"""End-to-end recipes and machine-readable reports.

Each recipe reproduces one analysis table of the study pipeline on the
configured panel: global kernels, Hawkes criticality, regime-conditional
kernels, size quintiles, entropy production, memory, mechanism
regressions, local projections, mediation, early warning, time-series
cross-validation, threshold sweep, and normalization robustness.
Reports are deterministic functions of (inputs, config, seed).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import deconv, econometrics, epr, hawkes, memory, panel as panel_mod
from .errors import FlowKernelError
from .panel import INVESTORS

__version__ = "0.1.0"

RECIPES = (
    "global_kernels",
    "hawkes_criticality",
    "regime_breakdown",
    "quintiles",
    "epr",
    "memory",
    "mechanism",
    "lp",
    "mediation",
    "early_warning",
    "tscv",
    "threshold_sweep",
    "normalization_robustness",
)

# defaults that restate study constants vs. choices this toolkit makes
_CONVENTION_KEYS = frozenset(
    {
        "n_max",
        "pre_standardize",
        "enet_strength",
        "granger_max_lag",
        "year_length",
        "min_year_events",
        "hawkes_standardized",
        "tscv_splits",
        "out_dir",
        "input",
        "truth",
        "seed",
        "investor",
    }
)


@dataclass
class RunConfig:
    input: str = "panel.csv"
    truth: str | None = None
    out_dir: str = "out"
    seed: int = 0
    investor: str = "institutional"
    scheme: str = "mc"
    price_floor: float = 1000.0
    winsor_tail: float = 0.005
    vol_window: int = 20
    vol_min_obs: int = 10
    lags: int = 60
    method: str = "tikhonov"
    strength: float = 5.0
    enet_strength: tuple = (0.05, 2.5)
    pre_standardize: bool = True
    n_stocks: int = 100
    n_iter: int = 5
    hawkes_investor: str = "individual"
    hawkes_scheme: str = "tv"
    hawkes_standardized: bool = True
    threshold_sigma: float = 1.5
    thresholds: tuple = (1.0, 1.25, 1.5, 1.75, 2.0, 2.5)
    n_max: float = 0.9999
    n_boot_br: int = 1000
    percentile: float = 90.0
    epr_scheme: str = "ternary_quantile"
    shuffles: int = 200
    boot: int = 500
    block: int = 20
    k_memory: int = 20
    lift: float = 1.5
    lp_horizons: int = 60
    granger_max_lag: int = 10
    ew_window: int = 20
    roc_leads: tuple = (5, 10, 20)
    tscv_splits: tuple = ()
    year_length: int = 252
    min_year_events: int = 5

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if cfg.investor not in INVESTORS:
            raise ValueError(f"investor must be one of {INVESTORS}")
        if not 0 <= cfg.winsor_tail < 0.5:
            raise ValueError("winsor_tail out of range")
        if cfg.lags < 0 or cfg.n_iter < 1 or cfg.n_stocks < 1:
            raise ValueError("invalid deconvolution parameters")
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def echo(self) -> dict:
        """Config echo with per-key provenance markers."""
        return {
            k: {"value": v, "convention": k in _CONVENTION_KEYS}
            for k, v in self.to_dict().items()
        }


def _sanitize(obj):
    """Make a report JSON-serializable and deterministic (NaN -> null)."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not np.isfinite(v) else v
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    return obj


def config_hash(config: RunConfig) -> str:
    blob = json.dumps(_sanitize(config.to_dict()), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


class PipelineContext:
    """Lazily computed, cached intermediate products shared by recipes."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._cache: dict = {}

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def panel(self):
        def _load():
            p = panel_mod.load_panel(self.config.input)
            return panel_mod.apply_filters(
                p, self.config.price_floor, self.config.winsor_tail
            )

        return self._memo("panel", _load)

    def frames(self, investor: str, scheme: str):
        def _build():
            sig = panel_mod.normalize(self.panel, investor, scheme)
            col = "s_mc" if scheme == "mc" else "s_tv"
            return deconv.frames_from_signal(sig.df, col)

        return self._memo(("frames", investor, scheme), _build)

    def aggregate(self, investor: str, scheme: str):
        def _build():
            agg = panel_mod.daily_aggregate(
                self.panel, investor, scheme,
                standardized=self.config.hawkes_standardized,
            )
            return agg

        return self._memo(("aggregate", investor, scheme), _build)

    @property
    def surge_events(self):
        def _build():
            agg = self.aggregate(
                self.config.hawkes_investor, self.config.hawkes_scheme
            )
            return hawkes.extract_events(
                agg["flow"].to_numpy(), self.config.threshold_sigma
            )

        return self._memo("surge_events", _build)

    @property
    def hawkes_fit(self):
        return self._memo(
            "hawkes_fit",
            lambda: hawkes.fit(
                self.surge_events,
                constrained=True,
                n_max=self.config.n_max,
                seed=self.config.seed,
            ),
        )

    @property
    def regimes(self):
        def _build():
            f = self.hawkes_fit
            series = hawkes.intensity_series(
                self.surge_events, f.mu, f.alpha, f.beta
            )
            return hawkes.classify_regimes(series, self.config.percentile)

        return self._memo("regimes", _build)

    @property
    def regime_by_date(self) -> dict:
        def _build():
            agg = self.aggregate(
                self.config.hawkes_investor, self.config.hawkes_scheme
            )
            dates = agg.index.to_numpy()
            labels = self.regimes.labels
            return {int(d): bool(l) for d, l in zip(dates, labels)}

        return self._memo("regime_by_date", _build)

    @property
    def spread_proxy(self):
        """Per-day cross-sectional return dispersion (volatility proxy)."""

        def _build():
            return (
                self.panel.df.groupby("date")["close_return"]
                .std(ddof=0)
                .fillna(0.0)
            )

        return self._memo("spread_proxy", _build)

    @property
    def institutional_efficacy(self):
        """Daily mean of institution-flow signal times same-day return."""

        def _build():
            df = self.panel.df
            eff = (df["flow_institutional"] / df["market_cap"]) * df["close_return"]
            return eff.groupby(df["date"]).mean()

        return self._memo("institutional_efficacy", _build)


def _strength_for(config: RunConfig, method: str):
    if method == "enet":
        return tuple(config.enet_strength)
    if method == "lasso":
        return 0.1 if config.method != "lasso" else config.strength
    if method == "ridge":
        return 10.0 if config.method != "ridge" else config.strength
    return config.strength


def _kernel_block(ctx: PipelineContext, scheme: str | None = None) -> dict:
    cfg = ctx.config
    scheme = scheme or cfg.scheme
    block = {}
    for inv in INVESTORS:
        k = deconv.pooled_kernel(
            ctx.frames(inv, scheme),
            lags=cfg.lags,
            n_stocks=cfg.n_stocks,
            n_iter=cfg.n_iter,
            seed=cfg.seed,
            method=cfg.method,
            strength=_strength_for(cfg, cfg.method),
            pre_standardize=cfg.pre_standardize,
        )
        block[inv] = k.to_dict()
    return block


def _recipe_global_kernels(ctx: PipelineContext) -> dict:
    return {"kernels": _kernel_block(ctx), "scheme": ctx.config.scheme}


def _recipe_hawkes_criticality(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    ev = ctx.surge_events
    fit_c = ctx.hawkes_fit
    fit_u = hawkes.fit(ev, constrained=False, n_max=cfg.n_max, seed=cfg.seed)
    boot = hawkes.bootstrap_branching(
        ev, n_boot=cfg.n_boot_br, seed=cfg.seed, constrained=True, n_max=cfg.n_max
    )
    regimes = ctx.regimes
    n_c = fit_c.branching_ratio
    steady = (
        hawkes.steady_state_intensity(fit_c.mu, n_c) if n_c < 1 else None
    )
    agg = ctx.aggregate(cfg.hawkes_investor, cfg.hawkes_scheme)
    n_days = len(agg)
    year_bounds = [
        (float(s), float(min(s + cfg.year_length, n_days)))
        for s in range(0, n_days, cfg.year_length)
    ]
    trend = hawkes.yearly_trend(
        ev, year_bounds, min_events=cfg.min_year_events,
        n_max=cfg.n_max, seed=cfg.seed,
    )
    flow = agg["flow"].to_numpy()
    diag = {}
    try:
        diag["hurst"] = econometrics.hurst_exponent(flow)
    except FlowKernelError as exc:
        diag["hurst"] = None
        diag["hurst_note"] = str(exc)
    adf = econometrics.adf_test(flow)
    kpss = econometrics.kpss_test(flow)
    diag["adf"] = {"stat": adf.statistic, "p": adf.pvalue, "reject": adf.reject}
    diag["kpss"] = {"stat": kpss.statistic, "p": kpss.pvalue, "reject": kpss.reject}
    return {
        "dates": [int(v) for v in agg.index.to_numpy()],
        "intensity": [float(v) for v in regimes.intensity],
        "regime_labels": [bool(v) for v in regimes.labels],
        "constrained": fit_c.to_dict(),
        "unconstrained": fit_u.to_dict(),
        "steady_state_intensity": steady,
        "empirical_rate": len(ev) / ev.span,
        "n_events": len(ev),
        "n_buy": ev.n_buy(),
        "n_sell": ev.n_sell(),
        "bootstrap": {
            "mean": boot.mean,
            "sd": boot.sd,
            "median": boot.median,
            "ci": [boot.ci_low, boot.ci_high],
            "excludes_one": boot.excludes_one,
            "n_used": boot.n_used,
            "n_failed": boot.n_failed,
        },
        "high_herding_days": regimes.n_high(),
        "n_days": len(regimes.intensity),
        "yearly_trend": trend,
        "stationarity": diag,
    }


def _conditional_block(ctx: PipelineContext, aggregation: str) -> dict:
    cfg = ctx.config
    regime_map = ctx.regime_by_date
    block = {}
    for inv in INVESTORS:
        frames = ctx.frames(inv, cfg.scheme)
        labels = lambda sid, d: (
            "herding" if regime_map.get(int(d), False) else "normal"
        )
        kernels = deconv.conditional_kernel(
            frames,
            labels,
            lags=cfg.lags,
            aggregation=aggregation,
            method=cfg.method,
            strength=_strength_for(cfg, cfg.method),
            pre_standardize=cfg.pre_standardize,
        )
        entry = {g: k.to_dict() for g, k in kernels.items()}
        if "herding" in entry and "normal" in entry and entry["normal"]["total"]:
            entry["impact_ratio"] = (
                entry["herding"]["total"] / entry["normal"]["total"]
            )
        block[inv] = entry
    return block


def _recipe_regime_breakdown(ctx: PipelineContext) -> dict:
    return {
        "by_stock_mean": _conditional_block(ctx, "by_stock_mean"),
        "pooled": _conditional_block(ctx, "pooled"),
    }


def _recipe_quintiles(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    df = ctx.panel.df
    mean_caps = df.groupby("stock_id")["market_cap"].mean().sort_values()
    qs = np.array_split(mean_caps.index.to_numpy(), 5)
    quintile_of = {sid: qi + 1 for qi, block in enumerate(qs) for sid in block}
    regime_map = ctx.regime_by_date
    frames = ctx.frames("institutional", cfg.scheme)

    def label(sid, d):
        reg = "herding" if regime_map.get(int(d), False) else "normal"
        return f"Q{quintile_of[sid]}_{reg}"

    kernels = deconv.conditional_kernel(
        frames,
        label,
        lags=cfg.lags,
        aggregation="pooled",
        method=cfg.method,
        strength=_strength_for(cfg, cfg.method),
        pre_standardize=cfg.pre_standardize,
    )
    table = {}
    for q in range(1, 6):
        normal = kernels.get(f"Q{q}_normal")
        herd = kernels.get(f"Q{q}_herding")
        table[f"Q{q}"] = {
            "normal_impact": None if normal is None else normal.total_impact,
            "herding_impact": None if herd is None else herd.total_impact,
            "ratio": (
                herd.total_impact / normal.total_impact
                if normal is not None and herd is not None and normal.total_impact
                else None
            ),
        }
    return {"investor": "institutional", "quintiles": table}


def _recipe_epr(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    block = {}
    for inv in INVESTORS:
        agg = ctx.aggregate(inv, cfg.hawkes_scheme)
        est = epr.estimate_epr(
            agg["flow"].to_numpy(),
            agg["ret"].to_numpy(),
            scheme=cfg.epr_scheme,
            n_shuffles=cfg.shuffles,
            n_boot=cfg.boot,
            block=cfg.block,
            seed=cfg.seed,
        )
        block[inv] = est.to_dict()
    return block


def _recipe_memory(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    block = {}
    for inv in INVESTORS:
        agg = ctx.aggregate(inv, cfg.hawkes_scheme)
        ev = hawkes.extract_events(agg["flow"].to_numpy(), cfg.threshold_sigma)
        beta = None
        fit_note = None
        if len(ev) >= 5:
            try:
                f = hawkes.fit(ev, constrained=False, seed=cfg.seed)
                if f.branching_ratio < 1 and f.converged:
                    beta = f.beta
                else:
                    fit_note = "explosive or non-converged fit"
            except FlowKernelError as exc:
                fit_note = str(exc)
        else:
            fit_note = "insufficient events"
        if len(ev) < 2:
            block[inv] = {"status": "skipped", "reason": "fewer than 2 events"}
            continue
        prof = memory.profile(
            ev, beta, span_days=len(agg), k_max=cfg.k_memory, lift=cfg.lift
        )
        entry = prof.to_dict()
        if fit_note:
            entry["notes"].append(fit_note)
        block[inv] = entry
    return block


def _recipe_mechanism(ctx: PipelineContext) -> dict:
    results = econometrics.mechanism_regressions(ctx.panel.df, ctx.regime_by_date)
    return {
        name: (r.to_dict() if hasattr(r, "to_dict") else r)
        for name, r in results.items()
    }


def _recipe_lp(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    agg = ctx.aggregate(cfg.hawkes_investor, cfg.hawkes_scheme)
    dates = agg.index.to_numpy()
    intensity = ctx.regimes.intensity
    ret = agg["ret"].to_numpy()
    spread = ctx.spread_proxy.reindex(dates).to_numpy()
    out = econometrics.local_projections(
        ret, intensity, controls=spread, horizons=range(cfg.lp_horizons)
    )
    return {
        "table": [
            {"horizon": int(h), "beta": b, "se": s, "lo": lo, "hi": hi}
            for h, b, s, lo, hi in out["table"]
        ]
    }


def _recipe_mediation(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    agg = ctx.aggregate(cfg.hawkes_investor, cfg.hawkes_scheme)
    dates = agg.index.to_numpy()
    x = ctx.regimes.intensity
    m = ctx.spread_proxy.reindex(dates).to_numpy()
    y = ctx.institutional_efficacy.reindex(dates).to_numpy()
    res = econometrics.mediation(x, m, y)
    return res.to_dict()


def _recipe_early_warning(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    agg = ctx.aggregate(cfg.hawkes_investor, cfg.hawkes_scheme)
    dates = agg.index.to_numpy()
    flow = agg["flow"].to_numpy()
    warn = econometrics.early_warning(flow, window=cfg.ew_window)
    eff = ctx.institutional_efficacy.reindex(dates).to_numpy()
    sign = np.sign(eff)
    flips = np.zeros(len(eff))
    flips[1:] = (sign[1:] < 0) & (sign[:-1] >= 0)
    ok = ~np.isnan(warn.composite)
    granger_block = None
    try:
        g = econometrics.granger_test(
            warn.composite[ok], flips[ok], max_lag=cfg.granger_max_lag
        )
        granger_block = {"best_lag": g["best_lag"], "F": g["F"], "p": g["p"]}
    except FlowKernelError as exc:
        granger_block = {"status": "undefined", "reason": str(exc)}
    roc_block = {}
    for lead in cfg.roc_leads:
        try:
            r = econometrics.roc_auc(warn.composite[ok], flips[ok], lead=lead)
            roc_block[str(lead)] = r.to_dict()
        except FlowKernelError as exc:
            roc_block[str(lead)] = {"status": "undefined", "reason": str(exc)}
    return {
        "n_flips": int(flips.sum()),
        "granger": granger_block,
        "roc": roc_block,
    }


def _recipe_tscv(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    splits = [tuple(s) for s in cfg.tscv_splits]
    if not splits:
        dates = ctx.panel.dates
        lo, hi = int(dates.min()), int(dates.max())
        third = (hi - lo) // 3
        splits = [
            (lo + third, lo + 2 * third),
            (lo + 2 * third, hi),
        ]
    frames = ctx.frames(cfg.investor, cfg.scheme)
    rows = econometrics.ts_cross_validate(
        frames,
        splits,
        lags=cfg.lags,
        method=cfg.method,
        strength=_strength_for(cfg, cfg.method),
        pre_standardize=cfg.pre_standardize,
    )
    return {"splits": rows, "investor": cfg.investor}


def _recipe_threshold_sweep(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    agg = ctx.aggregate(cfg.hawkes_investor, cfg.hawkes_scheme)
    rows = hawkes.threshold_sweep(
        agg["flow"].to_numpy(),
        thresholds=cfg.thresholds,
        n_max=cfg.n_max,
        seed=cfg.seed,
    )
    return {"rows": rows}


def _recipe_normalization_robustness(ctx: PipelineContext) -> dict:
    block = {}
    mc = _kernel_block(ctx, scheme="mc")
    tv = _kernel_block(ctx, scheme="tv")
    for inv in INVESTORS:
        a = deconv.Kernel(
            coefficients=np.asarray(mc[inv]["coefficients"]),
            method="tikhonov", strength=0.0,
        )
        b = deconv.Kernel(
            coefficients=np.asarray(tv[inv]["coefficients"]),
            method="tikhonov", strength=0.0,
        )
        deconv.kernel_stats(a)
        deconv.kernel_stats(b)
        cmp = deconv.compare_kernels(a, b)
        block[inv] = {
            "mc": mc[inv],
            "tv": tv[inv],
            "correlation": cmp.correlation,
            "sign_agreement": cmp.sign_agreement,
            "same_sign_total": cmp.same_sign_total,
            "total_ratio": cmp.total_ratio,
        }
    return block


_RECIPE_FNS = {
    "global_kernels": _recipe_global_kernels,
    "hawkes_criticality": _recipe_hawkes_criticality,
    "regime_breakdown": _recipe_regime_breakdown,
    "quintiles": _recipe_quintiles,
    "epr": _recipe_epr,
    "memory": _recipe_memory,
    "mechanism": _recipe_mechanism,
    "lp": _recipe_lp,
    "mediation": _recipe_mediation,
    "early_warning": _recipe_early_warning,
    "tscv": _recipe_tscv,
    "threshold_sweep": _recipe_threshold_sweep,
    "normalization_robustness": _recipe_normalization_robustness,
}


def run_recipe(name: str, config: RunConfig, parallel: bool = False) -> dict:
    """Execute one recipe (or ``all``) and return the report dict.

    A recipe failure is recorded in its block; remaining recipes still run.
    """
    env_seed = os.environ.get("FLOWKERNEL_SEED")
    if env_seed is not None:
        config.seed = int(env_seed)
    if name != "all" and name not in _RECIPE_FNS:
        raise ValueError(
            f"unknown recipe {name!r}; valid: {', '.join(RECIPES)}, all"
        )
    names = list(RECIPES) if name == "all" else [name]
    ctx = PipelineContext(config)
    blocks = {}

    def _run_one(n):
        try:
            return n, {"status": "ok", **_RECIPE_FNS[n](ctx)}
        except Exception as exc:  # noqa: BLE001 - recipe isolation
            return n, {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}

    if parallel and len(names) > 1:
        # isolate shared state: one context per recipe
        from concurrent.futures import ThreadPoolExecutor

        contexts = {n: PipelineContext(config) for n in names}

        def _run_isolated(n):
            try:
                return n, {"status": "ok", **_RECIPE_FNS[n](contexts[n])}
            except Exception as exc:  # noqa: BLE001
                return n, {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}

        with ThreadPoolExecutor(max_workers=4) as ex:
            results = list(ex.map(_run_isolated, names))
        for n, block in results:
            blocks[n] = block
    else:
        for n in names:
            key, block = _run_one(n)
            blocks[key] = block

    report = {
        "recipes": _sanitize(blocks),
        "provenance": {
            "config_hash": config_hash(config),
            "seed": config.seed,
            "version": __version__,
        },
        "config_echo": _sanitize(config.echo()),
    }
    return report


def write_report(report: dict, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


FIGURES = (
    "kernels",
    "conditional_kernels",
    "epr_bars",
    "memory_profile",
    "intensity_regimes",
)


def emit_figure_data(report: dict, figure: str) -> list[dict]:
    """Figure-ready tidy rows from a report. Raises if the prerequisite
    recipe block is missing."""
    recipes = report.get("recipes", {})

    def _need(name):
        block = recipes.get(name)
        if block is None or block.get("status") != "ok":
            raise ValueError(f"figure {figure!r} requires recipe {name!r}")
        return block

    rows = []
    if figure == "kernels":
        block = _need("global_kernels")["kernels"]
        for inv in INVESTORS:
            coefs = block[inv]["coefficients"]
            cum = np.cumsum(coefs)
            for lag, (c, cc) in enumerate(zip(coefs, cum)):
                rows.append(
                    {"series": inv, "x": lag, "y": c, "cumulative": float(cc)}
                )
    elif figure == "conditional_kernels":
        block = _need("regime_breakdown")["pooled"]
        for inv in INVESTORS:
            for regime in ("normal", "herding"):
                entry = block[inv].get(regime)
                if entry is None:
                    continue
                cum = np.cumsum(entry["coefficients"])
                for lag, (c, cc) in enumerate(zip(entry["coefficients"], cum)):
                    rows.append(
                        {
                            "series": f"{inv}_{regime}",
                            "x": lag,
                            "y": c,
                            "cumulative": float(cc),
                        }
                    )
    elif figure == "epr_bars":
        block = _need("epr")
        for i, inv in enumerate(INVESTORS):
            entry = block[inv]
            rows.append(
                {
                    "series": inv,
                    "x": i,
                    "y": entry["epr"],
                    "lo": entry["ci"][0],
                    "hi": entry["ci"][1],
                    "p_value": entry["p_value"],
                }
            )
    elif figure == "memory_profile":
        block = _need("memory")
        for inv in INVESTORS:
            entry = block[inv]
            if entry.get("status") == "skipped":
                continue
            for k, p in enumerate(entry["conditional_prob"], start=1):
                rows.append(
                    {
                        "series": inv,
                        "x": k,
                        "y": p,
                        "baseline": entry["baseline_rate"],
                    }
                )
    elif figure == "intensity_regimes":
        block = _need("hawkes_criticality")
        for d, v, l in zip(block["dates"], block["intensity"],
                           block["regime_labels"]):
            rows.append(
                {
                    "series": "intensity",
                    "x": int(d),
                    "y": float(v),
                    "label": "herding" if l else "normal",
                }
            )
    else:
        raise ValueError(f"unknown figure {figure!r}; valid: {FIGURES}")
    return rows


def write_figure_csv(rows: list[dict], path: str) -> None:
    import csv

    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
