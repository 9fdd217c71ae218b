"""Command-line interface.

Tool subcommands (``deconv``, ``hawkes``, ``epr``, ...) operate directly
on CSV inputs; recipe subcommands (``global_kernels``, ``all``, ...)
take ``--config run.json`` and write ``report.json`` plus figure CSVs.
For the four names that are both a tool and a recipe (``epr``,
``memory``, ``lp``, ``tscv``) the presence of ``--config`` selects the
recipe. ``FLOWKERNEL_SEED`` overrides the configured seed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import pandas as pd

from . import deconv, econometrics, epr as epr_mod, hawkes, memory as memory_mod
from . import panel as panel_mod
from . import pipeline, synth
from .pipeline import RECIPES, RunConfig

OVERLAPPING = {"epr", "memory", "lp", "tscv"}


def _print(obj) -> None:
    print(json.dumps(pipeline._sanitize(obj), indent=2, sort_keys=True))


def _read_series(path: str, column: str | None = None) -> np.ndarray:
    df = pd.read_csv(path)
    col = column or df.columns[0]
    return df[col].to_numpy(dtype=float)


def read_events(path: str, span: float | None = None) -> hawkes.EventSeries:
    df = pd.read_csv(path)
    times = df["time"].to_numpy(dtype=float)
    direction = (
        df["direction"].to_numpy(dtype=str) if "direction" in df.columns else None
    )
    if span is None:
        span = float(np.ceil(times.max())) if len(times) else 0.0
    return hawkes.EventSeries(times=times, span=span, direction=direction)


def write_events(events: hawkes.EventSeries, path: str) -> None:
    df = pd.DataFrame(
        {
            "time": events.times,
            "direction": (
                events.direction
                if events.direction is not None
                else np.full(len(events), "buy")
            ),
        }
    )
    df.to_csv(path, index=False)


def _load_filtered_panel(args) -> panel_mod.FlowPanel:
    p = panel_mod.load_panel(args.input)
    return panel_mod.apply_filters(
        p,
        getattr(args, "price_floor", 0.0) or 0.0,
        getattr(args, "winsor_tail", 0.0) or 0.0,
    )


def _aggregate_from_panel(args) -> np.ndarray:
    p = _load_filtered_panel(args)
    agg = panel_mod.daily_aggregate(p, args.investor, args.scheme)
    return agg["flow"].to_numpy()


# ---------------------------------------------------------------------------
# handlers


def _cmd_synth(args) -> int:
    cfg = (
        synth.SynthConfig.from_json(args.config)
        if args.config
        else synth.SynthConfig()
    )
    if args.seed is not None:
        cfg.seed = args.seed
    panel, truth = synth.generate(cfg)
    panel.to_csv(args.out)
    if args.truth:
        synth.write_truth(truth, args.truth)
    _print({"written": args.out, "n_rows": len(panel), "seed": cfg.seed})
    return 0


def _cmd_deconv(args) -> int:
    p = _load_filtered_panel(args)
    sig = panel_mod.normalize(p, args.investor, args.scheme)
    col = "s_mc" if args.scheme == "mc" else "s_tv"
    frames = deconv.frames_from_signal(sig.df, col)
    strength = (
        (args.l1, args.l2) if args.method == "enet" else args.strength
    )
    if args.pooled:
        kernel = deconv.pooled_kernel(
            frames,
            lags=args.lags,
            n_stocks=args.n_stocks,
            n_iter=args.n_iter,
            seed=args.seed,
            method=args.method,
            strength=strength,
            pre_standardize=args.pre_standardize,
        )
    else:
        systems = deconv._per_stock_systems(frames, args.lags, args.pre_standardize)
        kernel = deconv.solve_regularized(
            deconv.stack_designs(list(systems.values())), args.method, strength
        )
    out = kernel.to_dict()
    _print(out)
    if args.out_json:
        with open(args.out_json, "w") as fh:
            json.dump(pipeline._sanitize(out), fh, indent=2, sort_keys=True)
    if args.out_csv:
        cum = kernel.cumulative()
        pd.DataFrame(
            {
                "lag": np.arange(len(kernel.coefficients)),
                "psi": kernel.coefficients,
                "cumulative": cum,
            }
        ).to_csv(args.out_csv, index=False)
    return 0


def _cmd_hawkes(args) -> int:
    if args.hawkes_cmd == "fit":
        ev = read_events(args.events, args.span)
        f = hawkes.fit(
            ev, constrained=args.constrained, n_max=args.n_max, seed=args.seed
        )
        _print(f.to_dict())
    elif args.hawkes_cmd == "simulate":
        ev = hawkes.simulate(
            args.mu, args.alpha, args.beta, days=args.days, seed=args.seed
        )
        if args.out:
            write_events(ev, args.out)
        _print({"n_events": len(ev), "span": ev.span, "out": args.out})
    elif args.hawkes_cmd == "bootstrap":
        ev = read_events(args.events, args.span)
        b = hawkes.bootstrap_branching(
            ev, n_boot=args.n_boot, seed=args.seed, constrained=args.constrained,
            n_max=args.n_max,
        )
        _print(
            {
                "mean": b.mean,
                "sd": b.sd,
                "median": b.median,
                "ci": [b.ci_low, b.ci_high],
                "excludes_one": b.excludes_one,
                "n_used": b.n_used,
                "n_failed": b.n_failed,
            }
        )
    elif args.hawkes_cmd == "sweep":
        flow = (
            _read_series(args.flow, args.column)
            if args.flow
            else _aggregate_from_panel(args)
        )
        thresholds = [float(v) for v in args.thresholds.split(",")]
        rows = hawkes.threshold_sweep(flow, thresholds, n_max=args.n_max,
                                      seed=args.seed)
        _print({"rows": rows})
    elif args.hawkes_cmd == "regime":
        ev = read_events(args.events, args.span)
        series = hawkes.intensity_series(ev, args.mu, args.alpha, args.beta)
        regimes = hawkes.classify_regimes(series, args.percentile)
        _print(
            {
                "n_days": len(regimes.intensity),
                "high_herding_days": regimes.n_high(),
                "percentile": args.percentile,
            }
        )
    return 0


def _cmd_epr_tool(args) -> int:
    p = _load_filtered_panel(args)
    df = p.df
    col = args.flow_col
    if col not in df.columns:
        raise SystemExit(f"column {col!r} not in panel")
    grp = df.groupby("date")[col]
    mean = grp.transform("mean")
    std = grp.transform(lambda x: x.std(ddof=0))
    z = ((df[col] - mean) / std.replace(0.0, np.nan)).fillna(0.0)
    flow = z.groupby(df["date"]).mean().to_numpy()
    ret = df.groupby("date")["close_return"].mean().to_numpy()
    est = epr_mod.estimate_epr(
        flow,
        ret,
        scheme=args.scheme,
        n_shuffles=args.shuffles,
        n_boot=args.boot,
        block=args.block,
        seed=args.seed,
    )
    _print(est.to_dict())
    return 0


def _cmd_memory_tool(args) -> int:
    ev = read_events(args.events, span=float(args.span))
    prof = memory_mod.profile(
        ev, args.beta, span_days=args.span, k_max=args.k, lift=args.lift
    )
    _print(prof.to_dict())
    return 0


def _cmd_diagnose(args) -> int:
    x = _read_series(args.input, args.column)
    if args.test == "hurst":
        _print({"hurst": econometrics.hurst_exponent(x)})
    elif args.test == "adf":
        r = econometrics.adf_test(x)
        _print({"stat": r.statistic, "p": r.pvalue, "reject": r.reject,
                "lags": r.lags})
    else:
        r = econometrics.kpss_test(x)
        _print({"stat": r.statistic, "p": r.pvalue, "reject": r.reject,
                "bandwidth": r.lags})
    return 0


def _cmd_lp_tool(args) -> int:
    df = pd.read_csv(args.input)
    y = df[args.y].to_numpy(dtype=float)
    x = df[args.x].to_numpy(dtype=float)
    controls = None
    if args.controls:
        cols = [df[c].to_numpy(dtype=float) for c in args.controls.split(",")]
        controls = np.column_stack(cols).squeeze()
    out = econometrics.local_projections(y, x, controls,
                                         horizons=range(args.horizons))
    _print(
        {
            "table": [
                {"horizon": int(h), "beta": b, "se": s, "lo": lo, "hi": hi}
                for h, b, s, lo, hi in out["table"]
            ]
        }
    )
    return 0


def _cmd_granger(args) -> int:
    df = pd.read_csv(args.input)
    out = econometrics.granger_test(
        df[args.cause].to_numpy(dtype=float),
        df[args.effect].to_numpy(dtype=float),
        max_lag=args.max_lag,
    )
    _print({k: out[k] for k in ("best_lag", "F", "p")})
    return 0


def _cmd_warn(args) -> int:
    x = _read_series(args.input, args.column)
    w = econometrics.early_warning(x, window=args.window)
    if args.out:
        pd.DataFrame(
            {
                "rolling_acf": w.rolling_acf,
                "rolling_var": w.rolling_var,
                "composite": w.composite,
            }
        ).to_csv(args.out, index=False)
    ok = ~np.isnan(w.composite)
    _print(
        {
            "window": w.window,
            "n_defined": int(ok.sum()),
            "composite_mean": float(np.nanmean(w.composite)),
            "out": args.out,
        }
    )
    return 0


def _cmd_roc(args) -> int:
    df = pd.read_csv(args.input)
    score = df[args.score].to_numpy(dtype=float)
    labels = df[args.labels].to_numpy(dtype=float)
    out = {}
    for lead in [int(v) for v in args.lead.split(",")]:
        out[str(lead)] = econometrics.roc_auc(score, labels, lead=lead).to_dict()
    _print(out)
    return 0


def _cmd_tscv_tool(args) -> int:
    p = _load_filtered_panel(args)
    sig = panel_mod.normalize(p, args.investor, args.scheme)
    col = "s_mc" if args.scheme == "mc" else "s_tv"
    frames = deconv.frames_from_signal(sig.df, col)
    splits = []
    for part in args.splits.split(","):
        pieces = [int(v) for v in part.split(":")]
        splits.append(tuple(pieces))
    rows = econometrics.ts_cross_validate(
        frames, splits, lags=args.lags, method=args.method,
        strength=args.strength,
    )
    _print({"splits": rows})
    return 0


def _cmd_figure(args) -> int:
    with open(args.report) as fh:
        report = json.load(fh)
    rows = pipeline.emit_figure_data(report, args.figure)
    pipeline.write_figure_csv(rows, args.out)
    _print({"figure": args.figure, "rows": len(rows), "out": args.out})
    return 0


def _cmd_recipe(name, args) -> int:
    config = RunConfig.from_json(args.config)
    if args.out:
        config.out_dir = args.out
    report = pipeline.run_recipe(name, config, parallel=args.parallel)
    path = pipeline.write_report(report, config.out_dir)
    failed = [
        n for n, block in report["recipes"].items()
        if block.get("status") != "ok"
    ]
    _print({"report": path, "failed": failed})
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser


def _add_panel_flags(sp, price_floor=0.0, winsor=0.0):
    sp.add_argument("--input", required=True, help="panel CSV path")
    sp.add_argument("--price-floor", dest="price_floor", type=float,
                    default=price_floor)
    sp.add_argument("--winsor-tail", dest="winsor_tail", type=float,
                    default=winsor)
    sp.add_argument("--vol-window", dest="vol_window", type=int, default=20)
    sp.add_argument("--vol-min-obs", dest="vol_min_obs", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="flowkernel",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic panel")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--truth", default=None)
    sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("deconv", help="impact-kernel deconvolution")
    _add_panel_flags(sp)
    sp.add_argument("--investor", required=True,
                    choices=list(panel_mod.INVESTORS))
    sp.add_argument("--scheme", default="mc", choices=["mc", "tv"])
    sp.add_argument("--method", default="tikhonov",
                    choices=list(deconv.METHODS))
    sp.add_argument("--lambda", dest="strength", type=float, default=5.0)
    sp.add_argument("--l1", type=float, default=0.05)
    sp.add_argument("--l2", type=float, default=2.5)
    sp.add_argument("--lags", type=int, default=60)
    sp.add_argument("--pooled", action="store_true")
    sp.add_argument("--n-stocks", dest="n_stocks", type=int, default=100)
    sp.add_argument("--n-iter", dest="n_iter", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--pre-standardize", dest="pre_standardize",
                    action="store_true", default=True)
    sp.add_argument("--no-pre-standardize", dest="pre_standardize",
                    action="store_false")
    sp.add_argument("--out-json", default=None)
    sp.add_argument("--out-csv", default=None)

    hp = sub.add_parser("hawkes", help="Hawkes process tools")
    hsub = hp.add_subparsers(dest="hawkes_cmd", required=True)
    sp = hsub.add_parser("fit")
    sp.add_argument("--events", required=True)
    sp.add_argument("--span", type=float, default=None)
    sp.add_argument("--constrained", action="store_true", default=True)
    sp.add_argument("--unconstrained", dest="constrained",
                    action="store_false")
    sp.add_argument("--n-max", dest="n_max", type=float,
                    default=hawkes.DEFAULT_N_MAX)
    sp.add_argument("--seed", type=int, default=0)
    sp = hsub.add_parser("simulate")
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--days", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp = hsub.add_parser("bootstrap")
    sp.add_argument("--events", required=True)
    sp.add_argument("--span", type=float, default=None)
    sp.add_argument("--n-boot", dest="n_boot", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--constrained", action="store_true", default=True)
    sp.add_argument("--unconstrained", dest="constrained",
                    action="store_false")
    sp.add_argument("--n-max", dest="n_max", type=float,
                    default=hawkes.DEFAULT_N_MAX)
    sp = hsub.add_parser("sweep")
    sp.add_argument("--flow", default=None, help="single-series CSV")
    sp.add_argument("--column", default=None)
    sp.add_argument("--input", default=None, help="panel CSV")
    sp.add_argument("--investor", default="individual")
    sp.add_argument("--scheme", default="tv")
    sp.add_argument("--price-floor", dest="price_floor", type=float, default=0.0)
    sp.add_argument("--winsor-tail", dest="winsor_tail", type=float, default=0.0)
    sp.add_argument("--thresholds", default="1.0,1.25,1.5,1.75,2.0,2.5")
    sp.add_argument("--n-max", dest="n_max", type=float,
                    default=hawkes.DEFAULT_N_MAX)
    sp.add_argument("--seed", type=int, default=0)
    sp = hsub.add_parser("regime")
    sp.add_argument("--events", required=True)
    sp.add_argument("--span", type=float, default=None)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--percentile", type=float, default=90.0)

    # tool/recipe hybrids
    sp = sub.add_parser("epr", help="entropy production (tool or recipe)")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--parallel", action="store_true")
    sp.add_argument("--input", default=None)
    sp.add_argument("--price-floor", dest="price_floor", type=float, default=0.0)
    sp.add_argument("--winsor-tail", dest="winsor_tail", type=float, default=0.0)
    sp.add_argument("--flow-col", dest="flow_col", default="flow_foreign")
    sp.add_argument("--scheme", default="ternary_quantile")
    sp.add_argument("--shuffles", type=int, default=200)
    sp.add_argument("--boot", type=int, default=500)
    sp.add_argument("--block", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("memory", help="event clustering (tool or recipe)")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--parallel", action="store_true")
    sp.add_argument("--events", default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--span", type=int, default=None)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--lift", type=float, default=1.5)

    sp = sub.add_parser("diagnose", help="stationarity diagnostics")
    sp.add_argument("test", choices=["hurst", "adf", "kpss"])
    sp.add_argument("--input", required=True)
    sp.add_argument("--column", default=None)

    sp = sub.add_parser("lp", help="local projections (tool or recipe)")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--parallel", action="store_true")
    sp.add_argument("--input", default=None)
    sp.add_argument("--y", default=None)
    sp.add_argument("--x", default=None)
    sp.add_argument("--controls", default=None)
    sp.add_argument("--horizons", type=int, default=60)

    sp = sub.add_parser("granger", help="Granger causality test")
    sp.add_argument("--input", required=True)
    sp.add_argument("--cause", required=True)
    sp.add_argument("--effect", required=True)
    sp.add_argument("--max-lag", dest="max_lag", type=int, default=10)

    sp = sub.add_parser("warn", help="early-warning indicators")
    sp.add_argument("--input", required=True)
    sp.add_argument("--column", default=None)
    sp.add_argument("--window", type=int, default=20)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("roc", help="ROC/AUC at lead times")
    sp.add_argument("--input", required=True)
    sp.add_argument("--score", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--lead", default="5,10,20")

    sp = sub.add_parser("tscv", help="time-series cross-validation "
                                     "(tool or recipe)")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--parallel", action="store_true")
    sp.add_argument("--input", default=None)
    sp.add_argument("--splits", default=None,
                    help="train_end:test_end pairs, comma separated")
    sp.add_argument("--investor", default="institutional")
    sp.add_argument("--scheme", default="mc")
    sp.add_argument("--price-floor", dest="price_floor", type=float, default=0.0)
    sp.add_argument("--winsor-tail", dest="winsor_tail", type=float, default=0.0)
    sp.add_argument("--lags", type=int, default=60)
    sp.add_argument("--method", default="tikhonov")
    sp.add_argument("--lambda", dest="strength", type=float, default=5.0)

    sp = sub.add_parser("figure", help="emit figure-ready CSV from a report")
    sp.add_argument("--report", required=True)
    sp.add_argument("--figure", required=True, choices=list(pipeline.FIGURES))
    sp.add_argument("--out", required=True)

    for name in RECIPES + ("all",):
        if name in OVERLAPPING:
            continue
        sp = sub.add_parser(name, help=f"recipe: {name}")
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--parallel", action="store_true")

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.cmd
    if cmd in OVERLAPPING:
        if args.config:
            return _cmd_recipe(cmd, args)
        if cmd == "epr":
            if not args.input:
                raise SystemExit("epr tool mode requires --input")
            return _cmd_epr_tool(args)
        if cmd == "memory":
            if not (args.events and args.span):
                raise SystemExit("memory tool mode requires --events and --span")
            return _cmd_memory_tool(args)
        if cmd == "lp":
            if not (args.input and args.y and args.x):
                raise SystemExit("lp tool mode requires --input, --y, --x")
            return _cmd_lp_tool(args)
        if cmd == "tscv":
            if not (args.input and args.splits):
                raise SystemExit("tscv tool mode requires --input and --splits")
            return _cmd_tscv_tool(args)
    if cmd in RECIPES or cmd == "all":
        return _cmd_recipe(cmd, args)
    handlers = {
        "synth": _cmd_synth,
        "deconv": _cmd_deconv,
        "hawkes": _cmd_hawkes,
        "diagnose": _cmd_diagnose,
        "granger": _cmd_granger,
        "warn": _cmd_warn,
        "roc": _cmd_roc,
        "figure": _cmd_figure,
    }
    return handlers[cmd](args)


if __name__ == "__main__":
    sys.exit(main())
