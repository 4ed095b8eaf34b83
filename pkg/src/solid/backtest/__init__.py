"""Monthly rebalancing backtest harness."""

from .data import (
    PriceDataError,
    PriceSeries,
    load_prices,
    make_synthetic_prices,
    month_end_indices,
    period_returns,
    write_prices,
)
from .engine import (
    BacktestConfig,
    BacktestReport,
    PeriodContext,
    StrategySpec,
    compute_metrics,
    run_backtest,
    write_report,
)

__all__ = [
    "BacktestConfig",
    "BacktestReport",
    "PeriodContext",
    "PriceDataError",
    "PriceSeries",
    "StrategySpec",
    "compute_metrics",
    "load_prices",
    "make_synthetic_prices",
    "month_end_indices",
    "period_returns",
    "run_backtest",
    "write_prices",
    "write_report",
]
