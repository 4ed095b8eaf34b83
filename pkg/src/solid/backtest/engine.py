"""Month-by-month rebalancing backtest over the strategy families.

Each holding period starts at the last trading day of the previous month.
Moments are estimated from daily returns up to and including that day, the
weights are held for the month, and the realized month return compounds
the portfolio value.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..coordinator import CoordinatorConfig, run_consensus
from ..core import ConsistencySet
from ..llm.news import load_news
from ..markowitz import MarkowitzAgent, MarkowitzModel, estimate_moments, solve_markowitz
from .data import month_end_indices

logger = logging.getLogger(__name__)

KINDS = ("OPT", "LLM", "LLM_OPT", "AVG")


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    sparse: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "OPT" and self.sparse:
            raise ValueError("OPT has no sparse variant")

    @property
    def name(self):
        llm = "LLM_sparse" if self.sparse else "LLM"
        return {
            "OPT": "OPT",
            "LLM": llm,
            "LLM_OPT": f"{llm}+OPT",
            "AVG": "AVG_sparse" if self.sparse else "AVG",
        }[self.kind]

    @classmethod
    def parse(cls, name):
        """Accepts ``OPT``, ``LLM``, ``LLM+OPT`` / ``LLM_OPT``, ``AVG`` and ``*_sparse`` forms."""
        key = name.strip().upper().replace(" ", "")
        table = {
            "OPT": cls("OPT"),
            "LLM": cls("LLM"),
            "LLM+OPT": cls("LLM_OPT"),
            "LLM_OPT": cls("LLM_OPT"),
            "AVG": cls("AVG"),
            "LLM_SPARSE": cls("LLM", True),
            "LLM_SPARSE+OPT": cls("LLM_OPT", True),
            "LLM_SPARSE_OPT": cls("LLM_OPT", True),
            "LLM_OPT_SPARSE": cls("LLM_OPT", True),
            "AVG_SPARSE": cls("AVG", True),
        }
        try:
            return table[key]
        except KeyError:
            raise ValueError(f"unknown strategy {name!r}") from None


@dataclass(frozen=True)
class BacktestConfig:
    initial_capital: float = 10_000.0
    coordinator: CoordinatorConfig = field(default_factory=CoordinatorConfig)
    target_return: float | None = None
    ridge: float | None = None
    lookback: int | None = None
    transaction_cost: float = 0.0
    warm_start: bool = True

    def __post_init__(self):
        if not self.initial_capital > 0:
            raise ValueError("initial_capital must be > 0")
        if self.lookback is not None and self.lookback < 2:
            raise ValueError("lookback must be >= 2 rows")
        if self.transaction_cost < 0:
            raise ValueError("transaction_cost must be >= 0")


@dataclass(frozen=True)
class PeriodContext:
    """What an LLM agent factory gets to see for one holding period."""

    period: str
    tickers: tuple
    news: dict
    recent_prices: str
    opt_weights: np.ndarray | None
    model: MarkowitzModel


@dataclass
class BacktestReport:
    tickers: tuple
    periods: list
    value_labels: list
    strategies: list
    initial_capital: float
    weights: dict
    values: dict
    risks: dict
    period_returns: np.ndarray
    windows: list
    traces: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def completed(self, strategy):
        return not any(f["strategy"] == strategy for f in self.failures)


def recent_prices_text(series, rebalance_idx, month_ends):
    prev = [i for i in month_ends if i < rebalance_idx]
    lines = []
    for j, t in enumerate(series.tickers):
        last = series.prices[rebalance_idx, j]
        if prev:
            before = series.prices[prev[-1], j]
            change = last / before - 1.0
            lines.append(f"{t}: {last:.2f} (previous month-end {before:.2f}, change {change:+.2%})")
        else:
            lines.append(f"{t}: {last:.2f}")
    return f"Closing prices on {series.dates[rebalance_idx]}:\n" + "\n".join(lines)


def run_backtest(series, strategies, config=None, llm_factory=None, news_dir=None):
    """Simulate every strategy over every monthly holding period.

    Parameters
    ----------
    series : PriceSeries
        Daily adjusted closes.
    strategies : sequence of StrategySpec or str
    config : BacktestConfig, optional
    llm_factory : callable, optional
        ``llm_factory(context: PeriodContext, sparse: bool) -> agent``; called
        once per (period, strategy) that needs a language-model agent.
    news_dir : path, optional
        Root of ``<period>/<ticker>.txt`` news files.

    Agent failures mark the (strategy, period) cell failed; the strategy sits
    in cash for that period and the run continues.
    """
    config = config or BacktestConfig()
    specs = [s if isinstance(s, StrategySpec) else StrategySpec.parse(s) for s in strategies]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate strategies: {names}")
    needs_llm = any(s.kind != "OPT" for s in specs)
    if needs_llm and llm_factory is None:
        raise ValueError("strategies other than OPT need an llm_factory")

    n = series.n_assets
    month_ends = month_end_indices(series.dates)
    if len(month_ends) < 2:
        raise ValueError("need at least two month-ends for one holding period")
    n_periods = len(month_ends) - 1
    labels = [str(series.dates[i])[:7] for i in month_ends]
    periods = labels[1:]
    cset = _sized_set(config.coordinator.consistency_set, n)
    coord = _with_set(config.coordinator, cset)

    weights = {name: np.full((n_periods, n), np.nan) for name in names}
    risks = {name: np.full(n_periods, np.nan) for name in names}
    values = {name: np.empty(n_periods + 1) for name in names}
    for name in names:
        values[name][0] = config.initial_capital
    realized = np.empty((n_periods, n))
    windows = []
    traces = {}
    failures = []
    flags = []
    prev_w = {name: None for name in names}

    for t in range(n_periods):
        start, end = month_ends[t], month_ends[t + 1]
        period = periods[t]
        lo = 0 if config.lookback is None else max(0, start - config.lookback)
        hist = series.prices[lo : start + 1]
        # no look-ahead: estimation ends at the rebalance close
        assert lo <= start < end, (lo, start, end)
        windows.append({"period": period, "first": int(lo), "last": int(start), "hold_end": int(end)})
        realized[t] = series.prices[end] / series.prices[start] - 1.0

        cell_w, cell_err = {}, {}
        model = None
        try:
            mu, sigma = estimate_moments(hist[1:] / hist[:-1] - 1.0, ridge=config.ridge)
            model = MarkowitzModel(sigma, mu, config.target_return)
            w_opt = solve_markowitz(model)
        except Exception as exc:  # noqa: BLE001 - recorded as a failed cell
            w_opt = None
            opt_error = f"optimizer: {exc}"
        ctx = PeriodContext(
            period=period,
            tickers=series.tickers,
            news=load_news(news_dir, period, series.tickers) if news_dir is not None else {},
            recent_prices=recent_prices_text(series, start, month_ends),
            opt_weights=w_opt,
            model=model,
        )

        llm_cache = {}

        def llm_weights(sparse):
            if sparse not in llm_cache:
                try:
                    agent = llm_factory(ctx, sparse)
                    plan = np.full(n, 1.0 / n)
                    llm_cache[sparse] = (np.asarray(agent.propose(plan, np.zeros(n), coord.rho, cset), float), None)
                except Exception as exc:  # noqa: BLE001
                    llm_cache[sparse] = (None, f"llm: {exc}")
            return llm_cache[sparse]

        for spec in specs:
            name = spec.name
            if spec.kind == "OPT":
                w, err = (w_opt, None) if w_opt is not None else (None, opt_error)
            elif spec.kind == "LLM":
                w, err = llm_weights(spec.sparse)
            elif spec.kind == "AVG":
                w_llm, err = llm_weights(spec.sparse)
                if w_opt is None:
                    w, err = None, opt_error
                elif w_llm is None:
                    w = None
                else:
                    w = 0.5 * (w_opt + w_llm)
                    if np.any(w < 0):
                        flags.append({"strategy": name, "period": period, "flag": "negative weights"})
            else:
                w, err = _consensus_cell(ctx, spec, coord, cset, config, llm_factory, traces, name)
                if w_opt is None and w is None:
                    err = opt_error
            cell_w[name], cell_err[name] = w, err

        for name in names:
            w = cell_w[name]
            v_prev = values[name][t]
            if w is None:
                failures.append({"strategy": name, "period": period, "error": cell_err[name]})
                logger.warning("%s failed in %s: %s", name, period, cell_err[name])
                values[name][t + 1] = v_prev
                prev_w[name] = None
                continue
            weights[name][t] = w
            if model is not None:
                risks[name][t] = float(w @ model.sigma @ w)
            v = v_prev * (1.0 + float(w @ realized[t]))
            if config.transaction_cost > 0:
                turnover = np.abs(w - (prev_w[name] if prev_w[name] is not None else 0.0)).sum()
                v -= config.transaction_cost * turnover * v_prev
            values[name][t + 1] = v
            prev_w[name] = w

    return BacktestReport(
        tickers=series.tickers,
        periods=periods,
        value_labels=labels,
        strategies=names,
        initial_capital=config.initial_capital,
        weights=weights,
        values=values,
        risks=risks,
        period_returns=realized,
        windows=windows,
        traces=traces,
        failures=failures,
        flags=flags,
    )


def _consensus_cell(ctx, spec, coord, cset, config, llm_factory, traces, name):
    if ctx.model is None:
        return None, "optimizer: no model for this period"
    try:
        agents = {"opt": MarkowitzAgent(ctx.model), "llm": llm_factory(ctx, spec.sparse)}
        if config.warm_start and ctx.opt_weights is not None:
            x0 = cset.project(ctx.opt_weights)
        else:
            x0 = cset.initial_point(len(ctx.tickers))
        result = run_consensus(agents, coord, x0=x0)
    except Exception as exc:  # noqa: BLE001
        return None, f"consensus: {exc}"
    traces[(name, ctx.period)] = result
    return np.array(result.public), None


def _sized_set(cset, n):
    if cset.n == n:
        return cset
    if cset.n is not None:
        raise ValueError(f"consistency set has dimension {cset.n}, data has {n} assets")
    return ConsistencySet(cset.kind, n=n)


def _with_set(coord, cset):
    return CoordinatorConfig(
        rho=coord.rho,
        max_iterations=coord.max_iterations,
        eps_abs=coord.eps_abs,
        eps_rel=coord.eps_rel,
        consistency_set=cset,
        ordering=coord.ordering,
        agent_timeout=coord.agent_timeout,
    )


def compute_metrics(report):
    """Per-strategy final value, annualized return and risk summary."""
    out = {}
    n_periods = len(report.periods)
    for name in report.strategies:
        vals = report.values[name]
        final = float(vals[-1])
        growth = final / report.initial_capital
        risks = report.risks[name]
        finite = risks[np.isfinite(risks)]
        out[name] = {
            "final_value": final,
            "total_return": growth - 1.0,
            "annualized_return": growth ** (12.0 / n_periods) - 1.0 if n_periods else 0.0,
            "mean_risk": float(finite.mean()) if finite.size else float("nan"),
            "risk": [float(r) for r in risks],
            "completed": report.completed(name),
            "failed_periods": [f["period"] for f in report.failures if f["strategy"] == name],
        }
    return out


def write_report(report, outdir):
    """Write ``values.csv``, ``risks.csv``, ``weights.csv``, ``summary.json`` and consensus traces."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "values.csv", "w", encoding="utf-8") as fh:
        fh.write("period,strategy,value\n")
        for name in report.strategies:
            for label, v in zip(report.value_labels, report.values[name]):
                fh.write(f"{label},{name},{float(v)!r}\n")
    with open(outdir / "risks.csv", "w", encoding="utf-8") as fh:
        fh.write("period,strategy,risk\n")
        for name in report.strategies:
            for label, r in zip(report.periods, report.risks[name]):
                fh.write(f"{label},{name},{float(r)!r}\n")
    with open(outdir / "weights.csv", "w", encoding="utf-8") as fh:
        fh.write("period,strategy,ticker,weight\n")
        for name in report.strategies:
            for t, label in enumerate(report.periods):
                for j, ticker in enumerate(report.tickers):
                    fh.write(f"{label},{name},{ticker},{float(report.weights[name][t, j])!r}\n")
    summary = {
        "tickers": list(report.tickers),
        "periods": report.periods,
        "initial_capital": report.initial_capital,
        "metrics": compute_metrics(report),
        "failures": report.failures,
        "flags": report.flags,
        "consensus": {
            f"{name}/{period}": {"converged": res.converged, "iterations_used": res.iterations_used}
            for (name, period), res in report.traces.items()
        },
    }
    (outdir / "summary.json").write_text(
        json.dumps(_clean(summary), indent=2, sort_keys=True, allow_nan=False), encoding="utf-8"
    )
    if report.traces:
        tdir = outdir / "traces"
        tdir.mkdir(exist_ok=True)
        for (name, period), res in report.traces.items():
            res.write_trace(tdir / f"{name.replace('+', '_')}__{period}.jsonl")


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, NaN/inf mapped to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj
