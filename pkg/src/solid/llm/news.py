"""Offline news files laid out as ``<news_dir>/<period>/<ticker>.txt``."""

from __future__ import annotations

from pathlib import Path


def news_path(news_dir, period, ticker):
    return Path(news_dir) / str(period) / f"{ticker}.txt"


def load_news(news_dir, period, tickers):
    """Ticker -> news text for one period; missing files map to ``""``."""
    out = {}
    for t in tickers:
        path = news_path(news_dir, period, t) if news_dir is not None else None
        if path is not None and path.is_file():
            out[t] = path.read_text(encoding="utf-8")
        else:
            out[t] = ""
    return out


def missing_news(news_dir, periods, tickers):
    """Ticker -> list of periods without a news file."""
    gaps = {}
    for t in tickers:
        absent = [p for p in periods if not news_path(news_dir, p, t).is_file()]
        if absent:
            gaps[t] = absent
    return gaps
