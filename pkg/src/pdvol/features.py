"""Dated price ingestion and discrete feature computation.

The empirical counterparts of the model's feature processes are kernel-
weighted sums over past daily returns:

    R1(day t) = sum_{j >= 0} K1((j + 1) / 252) * (1 / 252) * r_{t-j}
    R2(day t) = sum_{j >= 0} K2((j + 1) / 252) * (1 / 252) * r_{t-j}^2

i.e. the return for day t enters with a one-business-day lag (it is the
increment over the day ending at t), lags count row positions (weekends
and holidays are one business day), and the kernel value is scaled by the
day length so the sums approximate the continuous integrals.

Exponential-type kernels admit an O(1)-per-day rolling recursion

    state_t = e^{-lam/252} * (state_{t-1} + lam / 252 * u_t)

per factor; the direct convolution and an FFT route are kept available
for cross-checking any kernel.  Window-relative kernels (the
``shifted_power`` family) have no lag-stationary weight sequence and are
rejected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import signal

from pdvol.kernels import Kernel

__all__ = [
    "DataError",
    "PriceSeries",
    "MarketDataset",
    "FeaturePath",
    "RegressionData",
    "load_prices",
    "load_proxy",
    "compute_features",
    "feature_weights",
    "align",
]

DAYS_PER_YEAR = 252


class DataError(ValueError):
    """Input data fails validation; message carries row-level context."""


# ---------------------------------------------------------------------------
# Loading


def _read_table(path, delimiter: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, sep=delimiter)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found")
    except Exception as exc:  # parser errors carry their own row info
        raise DataError(f"{path}: cannot parse: {exc}")


def _parse_dates(frame: pd.DataFrame, column: str, path) -> pd.DatetimeIndex:
    if column not in frame.columns:
        raise DataError(f"{path}: missing column {column!r} "
                        f"(have {list(frame.columns)})")
    parsed = pd.to_datetime(frame[column], errors="coerce", format="ISO8601")
    bad = parsed.isna()
    if bad.any():
        row = int(np.argmax(bad.to_numpy()))
        raise DataError(f"{path}: row {row + 2}: unparseable date "
                        f"{frame[column].iloc[row]!r}")
    return pd.DatetimeIndex(parsed)


def _numeric(frame: pd.DataFrame, column: str, path) -> np.ndarray:
    if column not in frame.columns:
        raise DataError(f"{path}: missing column {column!r} "
                        f"(have {list(frame.columns)})")
    values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
    if np.isnan(values).any():
        row = int(np.argmax(np.isnan(values)))
        raise DataError(f"{path}: row {row + 2}: non-numeric value "
                        f"{frame[column].iloc[row]!r}")
    return values


def _sort_and_check(dates: pd.DatetimeIndex, values: np.ndarray, path):
    order = np.argsort(dates.to_numpy(), kind="stable")
    if not np.array_equal(order, np.arange(order.size)):
        warnings.warn(f"{path}: dates were not sorted; sorting", stacklevel=3)
        dates, values = dates[order], values[order]
    dup = pd.Series(dates).duplicated()
    if dup.any():
        row = int(np.argmax(dup.to_numpy()))
        raise DataError(f"{path}: duplicate date {dates[row].date()} "
                        f"(row {row + 2} after sorting)")
    return dates, values


@dataclass(frozen=True)
class PriceSeries:
    """Strictly increasing dates with positive prices."""

    dates: pd.DatetimeIndex
    prices: np.ndarray

    @property
    def returns(self) -> np.ndarray:
        """Arithmetic daily returns P_i / P_{i-1} - 1."""
        return self.prices[1:] / self.prices[:-1] - 1.0

    @property
    def log_returns(self) -> np.ndarray:
        return np.diff(np.log(self.prices))

    @property
    def return_dates(self) -> pd.DatetimeIndex:
        return self.dates[1:]


def load_prices(path, date_column: str = "date", price_column: str = "price",
                delimiter: str = ",") -> PriceSeries:
    """Read, validate and sort a dated price table."""
    frame = _read_table(path, delimiter)
    dates = _parse_dates(frame, date_column, path)
    prices = _numeric(frame, price_column, path)
    dates, prices = _sort_and_check(dates, prices, path)
    if np.any(prices <= 0.0):
        row = int(np.argmax(prices <= 0.0))
        raise DataError(f"{path}: row {row + 2}: non-positive price "
                        f"{prices[row]!r} on {dates[row].date()}")
    if dates.size < 2:
        raise DataError(f"{path}: need at least two price rows")
    return PriceSeries(dates=dates, prices=prices)


def load_proxy(path, date_column: str = "date", value_column: str = "vol",
               delimiter: str = ",") -> tuple[pd.DatetimeIndex, np.ndarray]:
    """Read a dated volatility-proxy table (annualized decimals)."""
    frame = _read_table(path, delimiter)
    dates = _parse_dates(frame, date_column, path)
    values = _numeric(frame, value_column, path)
    dates, values = _sort_and_check(dates, values, path)
    if np.any(values < 0.0):
        row = int(np.argmax(values < 0.0))
        raise DataError(f"{path}: row {row + 2}: negative volatility "
                        f"{values[row]!r}")
    return dates, values


@dataclass(frozen=True)
class MarketDataset:
    """Prices, aligned volatility proxy, and the train/test boundary."""

    prices: PriceSeries
    proxy_dates: pd.DatetimeIndex
    proxy: np.ndarray
    split_date: pd.Timestamp

    def __post_init__(self):
        missing = ~self.proxy_dates.isin(self.prices.dates)
        if missing.any():
            row = int(np.argmax(missing))
            raise DataError(f"proxy date {self.proxy_dates[row].date()} is not "
                            "in the price calendar")
        if self.proxy_dates.size != self.proxy.size:
            raise DataError("proxy dates and values differ in length")


# ---------------------------------------------------------------------------
# Features


@dataclass(frozen=True)
class FeaturePath:
    """Dated feature rows; r2 is nonnegative by construction."""

    dates: pd.DatetimeIndex
    r1: np.ndarray
    r2: np.ndarray

    def to_text(self) -> str:
        lines = ["date R1 R2"]
        for d, a, b in zip(self.dates, self.r1, self.r2):
            lines.append(f"{d.date()} {a:.17g} {b:.17g}")
        return "\n".join(lines) + "\n"


def feature_weights(kernel: Kernel, n: int,
                    cutoff_days: int | None = None) -> np.ndarray:
    """Discrete convolution weights w[j] = K((j+1)/252) / 252, j = 0..n-1."""
    if not kernel.convolutional:
        raise DataError(f"{kernel.family} kernel is window-relative; it has "
                        "no lag-stationary feature weights")
    if cutoff_days is not None:
        if cutoff_days < 1:
            raise DataError("cutoff_days must be >= 1")
        n = min(n, int(cutoff_days))
    lags = np.arange(1, n + 1) / DAYS_PER_YEAR
    return np.asarray(kernel.lag_value(lags), dtype=float) / DAYS_PER_YEAR


def _weighted_history(u: np.ndarray, kernel: Kernel, method: str,
                      cutoff_days: int | None) -> np.ndarray:
    n = u.size
    if method == "recursion":
        if cutoff_days is not None and cutoff_days < n:
            raise DataError("the rolling recursion always uses the full "
                            "history; drop cutoff_days or use method='direct'")
        factors = kernel.factors()
        if factors is None:
            raise DataError(f"{kernel.family} kernel admits no rolling "
                            "recursion; use method='direct'")
        out = np.zeros(n)
        for w, lam in factors:
            decay = math.exp(-lam / DAYS_PER_YEAR)
            load = lam / DAYS_PER_YEAR * decay
            # state_t = decay * state_{t-1} + load * u_t
            out += w * signal.lfilter([load], [1.0, -decay], u)
        return out
    weights = feature_weights(kernel, n, cutoff_days)
    if method == "direct":
        return np.convolve(u, weights)[:n]
    if method == "fft":
        return signal.fftconvolve(u, weights)[:n]
    raise DataError(f"unknown feature method {method!r}")


def compute_features(returns, k1: Kernel, k2: Kernel,
                     dates: pd.DatetimeIndex | None = None,
                     method: str = "auto",
                     cutoff_days: int | None = None) -> FeaturePath:
    """Kernel-weighted trend and activity features of a return series.

    ``method``: ``recursion`` (exponential-type kernels, O(1) per day),
    ``direct`` (exact convolution, any stationary kernel), ``fft`` (same
    sums via FFT), or ``auto`` (recursion where available unless a cutoff
    is requested, else direct).
    """
    u = np.asarray(returns, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise DataError("returns must be a nonempty 1-d series")
    if not np.all(np.isfinite(u)):
        raise DataError(f"returns contain a non-finite value at position "
                        f"{int(np.argmax(~np.isfinite(u)))}")
    if dates is None:
        dates = pd.DatetimeIndex(pd.to_datetime(np.arange(u.size), unit="D"))
    if len(dates) != u.size:
        raise DataError("dates and returns differ in length")

    def pick(kernel: Kernel) -> str:
        if method != "auto":
            return method
        if kernel.factors() is not None and cutoff_days is None:
            return "recursion"
        return "direct"

    r1 = _weighted_history(u, k1, pick(k1), cutoff_days)
    r2 = _weighted_history(u * u, k2, pick(k2), cutoff_days)
    return FeaturePath(dates=pd.DatetimeIndex(dates), r1=r1,
                       r2=np.maximum(r2, 0.0))


# ---------------------------------------------------------------------------
# Alignment


@dataclass(frozen=True)
class RegressionData:
    """Aligned rows (1, R1, sqrt(R2)) -> proxy for one partition."""

    dates: pd.DatetimeIndex
    r1: np.ndarray
    sqrt_r2: np.ndarray
    y: np.ndarray

    @property
    def design(self) -> np.ndarray:
        return np.column_stack([np.ones(self.r1.size), self.r1, self.sqrt_r2])

    @property
    def size(self) -> int:
        return int(self.r1.size)


def align(features: FeaturePath, proxy_dates: pd.DatetimeIndex,
          proxy: np.ndarray, split_date) -> tuple[RegressionData,
                                                  RegressionData, int]:
    """Inner-join features with the proxy and split at the date boundary.

    Returns (train, test, dropped) where ``dropped`` counts feature dates
    without a proxy observation; train rows are strictly before
    ``split_date``, test rows at or after it.
    """
    split = pd.Timestamp(split_date)
    fidx = pd.Index(features.dates)
    pidx = pd.Index(proxy_dates)
    locs = fidx.get_indexer(pidx)
    keep = locs >= 0
    floc = locs[keep]
    y = np.asarray(proxy, dtype=float)[keep]
    dropped = int(features.dates.size - floc.size)
    dates = features.dates[floc]
    rows = RegressionData(dates=dates, r1=features.r1[floc],
                          sqrt_r2=np.sqrt(features.r2[floc]), y=y)
    in_train = dates < split
    parts = []
    for mask, name in ((in_train, "train"), (~in_train, "test")):
        if not mask.any():
            raise DataError(f"{name} partition is empty for split "
                            f"{split.date()}")
        parts.append(RegressionData(dates=dates[mask], r1=rows.r1[mask],
                                    sqrt_r2=rows.sqrt_r2[mask],
                                    y=rows.y[mask]))
    return parts[0], parts[1], dropped
