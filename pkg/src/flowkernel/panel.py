"""Daily flow panel: ingestion, filtering, and signal normalization.

The on-disk format is a headered CSV with columns
``date,stock_id,close_return,market_cap,total_volume,flow_foreign,
flow_institutional,flow_individual``. ``date`` is an integer trading-day
ordinal; no calendar logic is applied. An optional ``price`` column, when
present, feeds the penny-stock filter.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DegenerateInputError, SchemaError

INVESTORS = ("foreign", "institutional", "individual")
FLOW_COLUMNS = tuple(f"flow_{inv}" for inv in INVESTORS)
REQUIRED_COLUMNS = (
    "date",
    "stock_id",
    "close_return",
    "market_cap",
    "total_volume",
) + FLOW_COLUMNS
NUMERIC_COLUMNS = tuple(c for c in REQUIRED_COLUMNS if c != "stock_id")


@dataclass
class FlowPanel:
    """Stock-day records of per-investor net flows, returns, and size."""

    df: pd.DataFrame
    n_rejected: int = 0

    def __len__(self):
        return len(self.df)

    @property
    def stocks(self) -> np.ndarray:
        return self.df["stock_id"].unique()

    @property
    def dates(self) -> np.ndarray:
        return np.sort(self.df["date"].unique())

    def per_stock(self):
        """Yield (stock_id, sub-frame) in sorted stock order."""
        for sid, grp in self.df.groupby("stock_id", sort=True):
            yield sid, grp

    def to_csv(self, path_or_buf) -> None:
        self.df.to_csv(path_or_buf, index=False)


@dataclass
class NormalizedSignal:
    """Per (stock_id, date) normalized flow signals and volatility adjustment.

    Columns are added as the corresponding operations run: ``s_mc``/``s_tv``
    from :func:`normalize`, ``sigma_roll``/``r_adj`` from
    :func:`rolling_vol_adjust`, ``z`` from
    :func:`cross_sectional_standardize`.
    """

    df: pd.DataFrame
    investor: str | None = None
    scheme: str | None = None
    n_skipped: int = 0
    warnings: list = field(default_factory=list)


def load_panel(source, schema: dict | None = None) -> FlowPanel:
    """Read a flow panel from a CSV path, stream, or string.

    ``schema`` optionally maps canonical column names to the names used in
    the file. Rows with unparseable numerics, non-positive market cap,
    negative volume, or duplicate (stock_id, date) keys are rejected and
    counted in ``n_rejected``.
    """
    if isinstance(source, str) and "\n" in source:
        source = io.StringIO(source)
    df = pd.read_csv(source, dtype=str, skipinitialspace=True)
    if schema:
        df = df.rename(columns={v: k for k, v in schema.items()})
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"missing required columns: {missing}")

    keep = list(REQUIRED_COLUMNS) + (["price"] if "price" in df.columns else [])
    df = df[keep]
    n_raw = len(df)

    for col in df.columns:
        if col == "stock_id":
            continue
        df[col] = pd.to_numeric(df[col], errors="coerce")

    ok = df[list(NUMERIC_COLUMNS)].notna().all(axis=1)
    ok &= df["market_cap"] > 0
    ok &= df["total_volume"] >= 0
    df = df[ok]

    df = df.astype({"date": np.int64})
    df = df.sort_values(["stock_id", "date"], kind="mergesort")
    dup = df.duplicated(subset=["stock_id", "date"], keep="first")
    df = df[~dup].reset_index(drop=True)

    return FlowPanel(df=df, n_rejected=n_raw - len(df))


def apply_filters(
    panel: FlowPanel, price_floor: float = 0.0, winsor_tail: float = 0.005
) -> FlowPanel:
    """Drop sub-floor-price rows, then winsorize returns at symmetric tails.

    Tail quantiles are order statistics (``np.quantile`` method ``lower``)
    computed over the pooled panel, which makes the operation exactly
    idempotent. When the panel has no ``price`` column the floor is skipped.
    """
    if not 0 <= winsor_tail < 0.5:
        raise ValueError("winsor_tail must lie in [0, 0.5)")
    df = panel.df.copy()
    if price_floor > 0:
        if "price" in df.columns:
            df = df[df["price"] >= price_floor]
        else:
            warnings.warn("panel has no price column; price floor not applied")
    if len(df) == 0:
        raise DegenerateInputError("no rows remain after filtering")
    if winsor_tail > 0:
        r = df["close_return"].to_numpy()
        lo = np.quantile(r, winsor_tail, method="lower")
        hi = np.quantile(r, 1.0 - winsor_tail, method="lower")
        df["close_return"] = np.clip(r, lo, hi)
    return FlowPanel(df=df.reset_index(drop=True), n_rejected=panel.n_rejected)


def normalize(panel: FlowPanel, investor: str, scheme: str = "mc") -> NormalizedSignal:
    """Net flow scaled by market cap (``mc``) or total traded volume (``tv``).

    TV rows with zero volume are excluded and counted in ``n_skipped``.
    """
    if investor not in INVESTORS:
        raise ValueError(f"investor must be one of {INVESTORS}")
    scheme = scheme.lower()
    if scheme not in ("mc", "tv"):
        raise ValueError("scheme must be 'mc' or 'tv'")
    df = panel.df[["stock_id", "date", "close_return"]].copy()
    flow = panel.df[f"flow_{investor}"].to_numpy(dtype=float)
    skipped = 0
    if scheme == "mc":
        df["s_mc"] = flow / panel.df["market_cap"].to_numpy(dtype=float)
    else:
        vol = panel.df["total_volume"].to_numpy(dtype=float)
        ok = vol > 0
        skipped = int((~ok).sum())
        df["s_tv"] = np.where(ok, flow / np.where(ok, vol, 1.0), np.nan)
        df = df[ok]
    return NormalizedSignal(
        df=df.reset_index(drop=True),
        investor=investor,
        scheme=scheme,
        n_skipped=skipped,
    )


def rolling_vol_adjust(
    panel: FlowPanel, window: int = 20, min_obs: int = 10
) -> NormalizedSignal:
    """Rolling volatility of prior returns and volatility-adjusted returns.

    ``sigma_roll`` at day t is the population standard deviation of the up
    to ``window`` returns strictly before t (at least ``min_obs`` required);
    ``r_adj`` = return / sigma_roll, missing where sigma_roll is 0 or
    unavailable.
    """
    if not window >= min_obs >= 2:
        raise ValueError("need window >= min_obs >= 2")
    df = panel.df[["stock_id", "date", "close_return"]].copy()
    prior = df.groupby("stock_id")["close_return"].shift(1)
    sigma = (
        prior.groupby(df["stock_id"])
        .rolling(window, min_periods=min_obs)
        .std(ddof=0)
        .reset_index(level=0, drop=True)
    )
    df["sigma_roll"] = sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        r_adj = df["close_return"] / sigma
    df["r_adj"] = r_adj.where(sigma > 0)
    return NormalizedSignal(df=df)


def cross_sectional_standardize(
    signal: NormalizedSignal, column: str | None = None
) -> NormalizedSignal:
    """Z-score a signal column within each trading day across stocks.

    Days with fewer than two stocks or zero cross-sectional variance are
    skipped (z set to missing) and counted.
    """
    df = signal.df.copy()
    if column is None:
        column = "s_mc" if "s_mc" in df.columns else "s_tv"
    if column not in df.columns:
        raise KeyError(f"column {column!r} not present in signal")
    grp = df.groupby("date")[column]
    mean = grp.transform("mean")
    std = grp.transform(lambda x: x.std(ddof=0))
    count = grp.transform("count")
    ok = (count >= 2) & (std > 0)
    n_bad_days = int(df.loc[~ok, "date"].nunique())
    if n_bad_days:
        warnings.warn(f"{n_bad_days} day(s) skipped in cross-sectional standardization")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (df[column] - mean) / std
    df["z"] = z.where(ok)
    out = NormalizedSignal(
        df=df,
        investor=signal.investor,
        scheme=signal.scheme,
        n_skipped=signal.n_skipped,
        warnings=list(signal.warnings),
    )
    if n_bad_days:
        out.warnings.append(f"standardize: {n_bad_days} degenerate day(s)")
    return out


def daily_aggregate(
    panel: FlowPanel, investor: str, scheme: str = "tv", standardized: bool = True
) -> pd.DataFrame:
    """Market-wide daily series: mean signal across stocks plus mean return.

    With ``standardized`` the per-day cross-sectional z-score is averaged;
    otherwise the raw normalized signal. Returns a frame indexed by date
    with columns ``flow`` and ``ret``.
    """
    sig = normalize(panel, investor, scheme)
    col = "s_mc" if scheme == "mc" else "s_tv"
    if standardized:
        sig = cross_sectional_standardize(sig, col)
        col = "z"
    flow = sig.df.groupby("date")[col].mean()
    ret = panel.df.groupby("date")["close_return"].mean()
    out = pd.DataFrame({"flow": flow, "ret": ret}).dropna()
    return out
