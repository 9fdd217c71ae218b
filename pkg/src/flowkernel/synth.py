"""Ground-truth synthetic market generator.

Plants impact kernels (optionally regime-switching), Hawkes-driven surge
bursts in individual flows, and configurable flow-return coupling, then
emits a panel in the standard CSV schema together with a sidecar record
of every planted parameter. Every estimator in the toolkit is validated
against panels from this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import hawkes
from .errors import ExplosiveSimulationError
from .panel import FlowPanel, INVESTORS

KERNEL_SHAPES = ("permanent", "transient", "reverting")


def kernel_template(shape: str, scale: float, lags: int) -> np.ndarray:
    """Reference kernel shapes.

    permanent: geometric decay, all nonnegative, positive total;
    transient: damped alternation rescaled to a zero total;
    reverting: positive impact at lag 0, negative tail, negative total.
    """
    tau = np.arange(lags + 1, dtype=float)
    if shape == "permanent":
        return scale * 0.6**tau
    if shape == "transient":
        psi = scale * (-0.6) ** tau
        pos = psi[psi > 0].sum()
        neg = -psi[psi < 0].sum()
        if neg > 0:
            psi[psi < 0] *= pos / neg
        return psi
    if shape == "reverting":
        psi = np.zeros(lags + 1)
        psi[0] = scale
        tail = 0.9 ** tau[1:]
        psi[1:] = -1.4 * scale * tail / tail.sum()
        return psi
    raise ValueError(f"shape must be one of {KERNEL_SHAPES}")


@dataclass
class KernelSpec:
    shape: str = "permanent"
    scale: float = 1.0
    lags: int = 60

    def build(self) -> np.ndarray:
        return kernel_template(self.shape, self.scale, self.lags)


@dataclass
class RegimeSpec:
    start: int
    end: int
    kernels: dict  # investor -> KernelSpec


@dataclass
class SynthConfig:
    n_stocks: int = 20
    n_days: int = 500
    seed: int = 0
    kernels: dict = field(default_factory=lambda: {
        "foreign": KernelSpec("permanent", 1.0),
        "institutional": KernelSpec("permanent", 0.5),
        "individual": KernelSpec("reverting", 0.8),
    })
    regimes: list = field(default_factory=list)  # RegimeSpec overrides
    noise_sd: float = 0.01
    target_snr: float | None = None
    hawkes_mu: float = 0.02
    hawkes_alpha: float = 0.05
    hawkes_beta: float = 0.1
    surge_multiplier: float = 5.0
    buy_prob: float = 0.1
    ar_phi: float = 0.3
    flow_scale: float = 1e-3
    coupling: dict = field(default_factory=dict)  # investor -> strength
    base_turnover: float = 0.005
    event_cap: int = hawkes.EVENT_CAP

    def to_dict(self) -> dict:
        d = {
            "n_stocks": self.n_stocks,
            "n_days": self.n_days,
            "seed": self.seed,
            "kernels": {
                inv: {"shape": ks.shape, "scale": ks.scale, "lags": ks.lags}
                for inv, ks in self.kernels.items()
            },
            "regimes": [
                {
                    "start": r.start,
                    "end": r.end,
                    "kernels": {
                        inv: {"shape": ks.shape, "scale": ks.scale, "lags": ks.lags}
                        for inv, ks in r.kernels.items()
                    },
                }
                for r in self.regimes
            ],
            "noise_sd": self.noise_sd,
            "target_snr": self.target_snr,
            "hawkes_mu": self.hawkes_mu,
            "hawkes_alpha": self.hawkes_alpha,
            "hawkes_beta": self.hawkes_beta,
            "surge_multiplier": self.surge_multiplier,
            "buy_prob": self.buy_prob,
            "ar_phi": self.ar_phi,
            "flow_scale": self.flow_scale,
            "coupling": dict(self.coupling),
            "base_turnover": self.base_turnover,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        kernels = {
            inv: KernelSpec(**spec) for inv, spec in d.pop("kernels", {}).items()
        } or None
        regimes = [
            RegimeSpec(
                start=r["start"],
                end=r["end"],
                kernels={inv: KernelSpec(**spec) for inv, spec in r["kernels"].items()},
            )
            for r in d.pop("regimes", [])
        ]
        cfg = cls(**{k: v for k, v in d.items() if v is not None})
        if kernels:
            cfg.kernels = kernels
        cfg.regimes = regimes
        return cfg

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _ar1(rng, n: int, phi: float, sd: float) -> np.ndarray:
    innov_sd = sd * np.sqrt(max(1.0 - phi * phi, 1e-12))
    e = rng.normal(0.0, innov_sd, size=n)
    out = np.empty(n)
    prev = rng.normal(0.0, sd)
    for t in range(n):
        prev = phi * prev + e[t]
        out[t] = prev
    return out


def generate(config: SynthConfig) -> tuple[FlowPanel, dict]:
    """Generate a flow panel plus the ground-truth sidecar record.

    Returns = planted kernel convolution of each investor's signal
    (per-day regime kernel) + optional lag-1 coupling + Gaussian noise.
    Individual flows carry market-wide Hawkes surge bursts so aggregate
    surge extraction has planted events to find.
    """
    n, d = config.n_stocks, config.n_days
    lags = max(ks.lags for ks in config.kernels.values())

    base_kernels = {inv: config.kernels[inv].build() for inv in config.kernels}
    regime_kernels = [
        {inv: spec.build() for inv, spec in r.kernels.items()} for r in config.regimes
    ]
    # per-day index into regime kernel sets (-1 = base)
    regime_of_day = np.full(d, -1, dtype=int)
    for i, r in enumerate(config.regimes):
        regime_of_day[r.start: r.end] = i

    try:
        events = hawkes.simulate(
            config.hawkes_mu,
            config.hawkes_alpha,
            config.hawkes_beta,
            days=d,
            seed=config.seed + 7,
            buy_prob=config.buy_prob,
            max_events=config.event_cap,
        )
    except ExplosiveSimulationError:
        raise
    event_days = np.unique(np.floor(events.times).astype(int))
    surge_sign = np.zeros(d)
    for t, direc in zip(events.times, events.direction):
        surge_sign[int(np.floor(t))] = 1.0 if direc == "buy" else -1.0

    rng_mkt = np.random.default_rng([config.seed, 1])
    market_caps = 10.0 ** rng_mkt.uniform(8.0, 10.0, size=n)
    prices = rng_mkt.uniform(500.0, 50_000.0, size=n)

    signals = {}  # (stock, investor) -> signal array
    signal_component = np.empty((n, d))
    for i in range(n):
        rng = np.random.default_rng([config.seed, 1000 + i])
        comp = np.zeros(d)
        for inv in INVESTORS:
            s = _ar1(rng, d, config.ar_phi, config.flow_scale)
            if inv == "individual":
                noise = 1.0 + 0.1 * rng.normal(size=d)
                s = s + surge_sign * config.surge_multiplier * config.flow_scale * noise
            signals[(i, inv)] = s
            # regime-dependent convolution: the kernel active on the
            # response day applies to the whole lag window
            conv_base = np.convolve(s, base_kernels[inv])[:d]
            conv = conv_base
            if regime_kernels:
                conv = conv_base.copy()
                for ridx, kset in enumerate(regime_kernels):
                    if inv in kset:
                        alt = np.convolve(s, kset[inv])[:d]
                        mask = regime_of_day == ridx
                        conv[mask] = alt[mask]
            comp += conv
            c = config.coupling.get(inv, 0.0)
            if c:
                comp[1:] += c * s[:-1]
        signal_component[i] = comp

    noise_sd = config.noise_sd
    if config.target_snr is not None:
        pooled_signal_var = float(np.var(signal_component))
        noise_sd = float(np.sqrt(pooled_signal_var / config.target_snr))

    rows = []
    for i in range(n):
        rng_noise = np.random.default_rng([config.seed, 2000 + i])
        ret = signal_component[i] + rng_noise.normal(0.0, noise_sd, size=d)
        flows = {inv: signals[(i, inv)] * market_caps[i] for inv in INVESTORS}
        gross = sum(np.abs(f) for f in flows.values())
        volume = 1.5 * gross + config.base_turnover * market_caps[i]
        sid = f"S{i:04d}"
        for t in range(d):
            rows.append(
                (
                    t,
                    sid,
                    ret[t],
                    market_caps[i],
                    volume[t],
                    flows["foreign"][t],
                    flows["institutional"][t],
                    flows["individual"][t],
                    prices[i],
                )
            )
    df = pd.DataFrame(
        rows,
        columns=[
            "date",
            "stock_id",
            "close_return",
            "market_cap",
            "total_volume",
            "flow_foreign",
            "flow_institutional",
            "flow_individual",
            "price",
        ],
    )
    df = df.sort_values(["stock_id", "date"], kind="mergesort").reset_index(drop=True)
    panel = FlowPanel(df=df)

    truth = {
        "config": config.to_dict(),
        "kernels": {inv: [float(v) for v in k] for inv, k in base_kernels.items()},
        "regime_kernels": [
            {inv: [float(v) for v in k] for inv, k in kset.items()}
            for kset in regime_kernels
        ],
        "regime_of_day": [int(v) for v in regime_of_day],
        "event_days": [int(v) for v in event_days],
        "event_times": [float(t) for t in events.times],
        "noise_sd": float(noise_sd),
        "lags": int(lags),
        "market_caps": {f"S{i:04d}": float(market_caps[i]) for i in range(n)},
    }
    return panel, truth


def snr(panel: FlowPanel, truth: dict) -> dict:
    """Planted-convolution variance over noise variance, per stock and pooled.

    Zero planted noise reports infinity with a flag.
    """
    noise_var = truth["noise_sd"] ** 2
    kernels = {inv: np.asarray(k) for inv, k in truth["kernels"].items()}
    regime_kernels = [
        {inv: np.asarray(k) for inv, k in kset.items()}
        for kset in truth.get("regime_kernels", [])
    ]
    regime_of_day = np.asarray(truth.get("regime_of_day", []), dtype=int)
    per_stock = {}
    all_var = []
    for sid, grp in panel.df.groupby("stock_id", sort=True):
        grp = grp.sort_values("date")
        mc = truth["market_caps"][sid]
        d = len(grp)
        comp = np.zeros(d)
        for inv in INVESTORS:
            s = grp[f"flow_{inv}"].to_numpy(dtype=float) / mc
            conv = np.convolve(s, kernels[inv])[:d]
            if regime_kernels and len(regime_of_day) == d:
                conv = conv.copy()
                for ridx, kset in enumerate(regime_kernels):
                    if inv in kset:
                        alt = np.convolve(s, kset[inv])[:d]
                        conv[regime_of_day == ridx] = alt[regime_of_day == ridx]
            comp += conv
        v = float(np.var(comp))
        all_var.append(v)
        per_stock[sid] = v / noise_var if noise_var > 0 else float("inf")
    pooled = (
        float(np.mean(all_var) / noise_var) if noise_var > 0 else float("inf")
    )
    return {
        "per_stock": per_stock,
        "pooled": pooled,
        "zero_noise": noise_var == 0,
    }


def coupled_series(
    n: int, coupling: float, seed: int = 0, phi: float = 0.5, noise_sd: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Flow/return pair with lag-1 flow-to-return coupling, for EPR checks."""
    rng = np.random.default_rng(seed)
    flow = _ar1(rng, n, phi, 1.0)
    ret = noise_sd * rng.normal(size=n)
    ret[1:] += coupling * flow[:-1]
    return flow, ret


def write_truth(truth: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
