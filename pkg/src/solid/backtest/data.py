"""Price ingestion, month-end sampling and synthetic data."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._validation import frozen

CSV_HEADER = ("date", "ticker", "adj_close")


class PriceDataError(ValueError):
    pass


@dataclass(frozen=True)
class PriceSeries:
    """Adjusted closes on a dates x tickers grid.

    Dates are strictly increasing ``datetime64[D]``; tickers are sorted.
    """

    dates: np.ndarray
    tickers: tuple
    prices: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        prices = np.asarray(self.prices, dtype=np.float64)
        tickers = tuple(self.tickers)
        if prices.shape != (len(dates), len(tickers)):
            raise PriceDataError(
                f"prices shape {prices.shape} does not match {len(dates)} dates x {len(tickers)} tickers"
            )
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise PriceDataError("dates must be strictly increasing")
        if len(set(tickers)) != len(tickers):
            raise PriceDataError("duplicate tickers")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise PriceDataError("prices must be finite and > 0")
        object.__setattr__(self, "dates", frozen_dates(dates))
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "prices", frozen(prices))

    @property
    def n_assets(self):
        return len(self.tickers)

    def daily_returns(self):
        return self.prices[1:] / self.prices[:-1] - 1.0

    def month_ends(self):
        return month_end_indices(self.dates)

    def period_labels(self):
        """``YYYY-MM`` of every month present, in order."""
        return [str(d)[:7] for d in self.dates[self.month_ends()]]


def frozen_dates(dates):
    out = np.array(dates, dtype="datetime64[D]", copy=True)
    out.setflags(write=False)
    return out


def load_prices(path):
    """Read a long-format ``date,ticker,adj_close`` CSV into a :class:`PriceSeries`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"price file not found: {path}")
    cells = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(h.strip() for h in reader.fieldnames) != CSV_HEADER:
            raise PriceDataError(f"{path}: header must be {','.join(CSV_HEADER)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                date = np.datetime64(row["date"].strip(), "D")
                ticker = row["ticker"].strip()
                price = float(row["adj_close"])
            except (ValueError, AttributeError) as exc:
                raise PriceDataError(f"{path}:{lineno}: malformed row {row}: {exc}") from None
            if not ticker:
                raise PriceDataError(f"{path}:{lineno}: empty ticker")
            if (date, ticker) in cells:
                raise PriceDataError(f"{path}:{lineno}: duplicate row for ({date}, {ticker})")
            if not np.isfinite(price) or price <= 0:
                raise PriceDataError(f"{path}:{lineno}: non-positive price {price} for ({date}, {ticker})")
            cells[(date, ticker)] = price
    if not cells:
        raise PriceDataError(f"{path}: no rows")
    dates = sorted({d for d, _ in cells})
    tickers = sorted({t for _, t in cells})
    gaps = [(str(d), t) for d in dates for t in tickers if (d, t) not in cells]
    if gaps:
        shown = ", ".join(f"({d}, {t})" for d, t in gaps[:20])
        more = f" and {len(gaps) - 20} more" if len(gaps) > 20 else ""
        raise PriceDataError(f"{path}: missing prices for {shown}{more}")
    prices = np.array([[cells[(d, t)] for t in tickers] for d in dates])
    return PriceSeries(np.array(dates, dtype="datetime64[D]"), tuple(tickers), prices)


def write_prices(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i, d in enumerate(series.dates):
            for j, t in enumerate(series.tickers):
                writer.writerow([str(d), t, repr(float(series.prices[i, j]))])


def month_end_indices(dates):
    """Row index of the last trading day in each calendar month."""
    months = np.asarray(dates, dtype="datetime64[M]")
    if len(months) == 0:
        return np.zeros(0, dtype=int)
    last = np.flatnonzero(months[1:] != months[:-1])
    return np.append(last, len(months) - 1)


def period_returns(series, frequency="monthly"):
    """Simple returns ``p_t / p_{t-1} - 1`` between consecutive boundaries.

    ``frequency="monthly"`` samples the last trading day of each month;
    ``"daily"`` uses every row.
    """
    if frequency == "monthly":
        idx = month_end_indices(series.dates)
    elif frequency == "daily":
        idx = np.arange(len(series.dates))
    else:
        raise ValueError(f"unsupported frequency {frequency!r}")
    if len(idx) < 2:
        raise PriceDataError(f"need at least 2 {frequency} boundaries, found {len(idx)}")
    p = series.prices[idx]
    return p[1:] / p[:-1] - 1.0


def make_synthetic_prices(
    tickers=("AAA", "BBB", "CCC", "DDD"),
    n_months=13,
    start="2023-12",
    seed=0,
    drift=None,
    volatility=None,
    initial_price=100.0,
):
    """Geometric random walk on business days with independent assets.

    Parameters
    ----------
    drift, volatility : array-like, optional
        Per-day log-return mean and standard deviation per ticker.
    """
    rng = np.random.default_rng(seed)
    tickers = tuple(sorted(tickers))
    n = len(tickers)
    drift = np.linspace(0.0002, 0.0008, n) if drift is None else np.asarray(drift, dtype=float)
    volatility = np.linspace(0.008, 0.02, n) if volatility is None else np.asarray(volatility, dtype=float)
    first = np.datetime64(start, "M")
    begin = first.astype("datetime64[D]")
    end = (first + n_months).astype("datetime64[D]")
    days = np.arange(begin, end, dtype="datetime64[D]")
    days = days[np.is_busday(days)]
    log_ret = drift + volatility * rng.standard_normal((len(days), n))
    log_ret[0] = 0.0
    prices = initial_price * np.exp(np.cumsum(log_ret, axis=0))
    return PriceSeries(days, tickers, prices)
