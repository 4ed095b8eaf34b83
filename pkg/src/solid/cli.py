"""``solid`` command line: consensus demo, backtest and input validation.

Exit codes: 0 success, 1 input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .backtest.engine import PeriodContext, recent_prices_text
from .backtest import (
    PriceDataError,
    compute_metrics,
    load_prices,
    make_synthetic_prices,
    month_end_indices,
    run_backtest,
    write_report,
)
from .config import ConfigError, RunConfig
from .coordinator import AgentError, run_consensus
from .llm import (
    ChatClient,
    ChatLLMAgent,
    PromptContext,
    QuadraticMockAgent,
    ScriptedLevelsAgent,
    Transcript,
    load_news,
    missing_news,
)
from .llm.client import AgentUnavailable
from .markowitz import MarkowitzAgent, MarkowitzModel, estimate_moments

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2

logger = logging.getLogger("solid")


def _series(cfg):
    path = cfg.path("prices")
    if path is not None:
        return load_prices(path)
    syn = dict(cfg.synthetic_params() or {})
    syn["seed"] = cfg.seed
    return make_synthetic_prices(**syn)


def _fmt(v):
    return "[" + ", ".join(f"{x:+.6f}" for x in np.asarray(v)) + "]"


def llm_factory(cfg, tickers, transcript=None):
    """Build ``factory(context, sparse) -> agent`` from the ``llm`` section."""
    spec = cfg.llm()
    if spec is None:
        return None
    if spec["kind"] == "scripted":
        default = spec.get("schedule")
        by_period = spec.get("period_schedules") or {}

        def scripted(ctx, sparse):
            schedule = by_period.get(ctx.period, default)
            if not schedule:
                raise ValueError(f"no scripted schedule for period {ctx.period}")
            return ScriptedLevelsAgent(schedule, tickers=tickers, sparse=sparse)

        return scripted

    client = ChatClient(cfg.endpoint_config())

    def chat(ctx, sparse):
        prompt_ctx = PromptContext(
            tickers=tuple(tickers),
            news=ctx.news,
            recent_prices=ctx.recent_prices,
            sparse_mode=sparse,
            period=ctx.period,
        )
        return ChatLLMAgent(prompt_ctx, client, transcript)

    return chat


def _mock_agents(n, rng):
    agents = {}
    for name in ("opt", "llm"):
        M = rng.standard_normal((n, n))
        Q = M @ M.T / n + 0.5 * np.eye(n)
        agents[name] = QuadraticMockAgent(rng.standard_normal(n), Q, name=name)
    return agents


def cmd_consensus(cfg):
    params = cfg.consensus_params()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    oracle = None
    if params["agents"] == "mock":
        n = int(params["n"])
        coord = cfg.coordinator_config(n)
        agents = _mock_agents(n, np.random.default_rng(cfg.seed))
        if coord.consistency_set.kind == "unconstrained":
            Qs = [a.weight for a in agents.values()]
            oracle = np.linalg.solve(sum(Qs), sum(a.weight @ a.center for a in agents.values()))
        x0 = coord.consistency_set.initial_point(n)
        tickers = None
    else:
        series = _series(cfg)
        tickers = series.tickers
        n = len(tickers)
        coord = cfg.coordinator_config(n)
        m = cfg.model_params()
        prices = series.prices if m["lookback"] is None else series.prices[-(int(m["lookback"]) + 1) :]
        mu, sigma = estimate_moments(prices[1:] / prices[:-1] - 1.0, ridge=m["ridge"])
        model = MarkowitzModel(sigma, mu, m["target_return"])
        period = params.get("period") or str(np.datetime64(series.dates[-1], "M") + 1)
        transcript = Transcript(out / "transcript.jsonl")
        factory = llm_factory(cfg, tickers, transcript)
        if factory is None:
            raise ConfigError("consensus with portfolio agents needs an 'llm' section")
        ctx = PeriodContext(
            period=period,
            tickers=tickers,
            news=load_news(cfg.path("news"), period, tickers) if cfg.path("news") else {},
            recent_prices=recent_prices_text(series, len(series.dates) - 1, month_end_indices(series.dates)),
            opt_weights=None,
            model=model,
        )
        opt = MarkowitzAgent(model)
        agents = {"opt": opt, "llm": factory(ctx, bool(params.get("sparse", False)))}
        x0 = coord.consistency_set.project(opt.solve()) if cfg.raw.get("warm_start", True) else None

    result = run_consensus(agents, coord, x0=x0)
    trace_path = out / "trace.jsonl"
    result.write_trace(trace_path)
    last = result.trace[-1].residuals
    if tickers:
        print("tickers:   " + ", ".join(tickers))
    print(f"public x:  {_fmt(result.public)}")
    for name, lam in result.prices.items():
        print(f"lambda[{name}]: {_fmt(lam)}")
    print("residuals: " + ", ".join(f"primal_{a}={v:.3e}" for a, v in last.primal.items()) + f", dual={last.dual:.3e}")
    print(f"converged: {result.converged} after {result.iterations_used} iteration(s)")
    if oracle is not None:
        print(f"joint-optimum distance (inf-norm): {np.max(np.abs(result.public - oracle)):.3e}")
    print(f"trace: {trace_path}")
    return EXIT_OK


def cmd_backtest(cfg):
    series = _series(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    transcript = Transcript(out / "transcript.jsonl") if (cfg.llm() or {}).get("kind") == "endpoint" else None
    report = run_backtest(
        series,
        cfg.strategies(),
        cfg.backtest_config(series.n_assets),
        llm_factory=llm_factory(cfg, series.tickers, transcript),
        news_dir=cfg.path("news"),
    )
    write_report(report, out)
    metrics = compute_metrics(report)
    header = f"{'strategy':<16}{'final value':>14}{'annualized':>12}{'mean risk':>14}  status"
    print(header)
    print("-" * len(header))
    for name, m in metrics.items():
        status = "ok" if m["completed"] else f"failed: {', '.join(m['failed_periods'])}"
        print(f"{name:<16}{m['final_value']:>14.2f}{m['annualized_return']:>12.4%}{m['mean_risk']:>14.3e}  {status}")
    for flag in report.flags:
        print(f"flag: {flag['strategy']} {flag['period']}: {flag['flag']}")
    print(f"report: {out}")
    return EXIT_OK if any(m["completed"] for m in metrics.values()) else EXIT_RUNTIME


def cmd_validate(cfg):
    issues, warnings = [], []
    series = None
    try:
        series = _series(cfg)
    except (PriceDataError, FileNotFoundError, ValueError) as exc:
        issues.append(f"prices: {exc}")
    if series is not None:
        periods = [str(series.dates[i])[:7] for i in month_end_indices(series.dates)][1:]
        if not periods:
            issues.append("prices: fewer than two month-ends; no holding period")
        news_dir = cfg.path("news")
        needs_llm = any(s.kind != "OPT" for s in cfg.strategies())
        if news_dir is not None:
            for ticker, absent in missing_news(news_dir, periods, series.tickers).items():
                warnings.append(f"news: {ticker} has no news file for periods {', '.join(absent)}")
        elif needs_llm:
            warnings.append("news: no news directory configured; prompts will carry placeholders")
        p = cfg.model_params()["target_return"]
        if p is not None and len(series.dates) > 2:
            mu, _ = estimate_moments(series.daily_returns(), ridge=cfg.model_params()["ridge"])
            lo, hi = float(mu.min()), float(mu.max())
            if not lo <= p <= hi:
                warnings.append(
                    f"model: target_return {p:g} is outside the feasible range [{lo:.6g}, {hi:.6g}] of mean returns"
                )
        sched = (cfg.llm() or {}).get("schedule") or []
        for i, entry in enumerate(sched):
            absent = [t for t in series.tickers if t not in entry]
            if absent:
                issues.append(f"llm.schedule[{i}] lacks tickers {absent}")
    for w in warnings:
        print(f"warning: {w}")
    for i in issues:
        print(f"error: {i}")
    print(f"{len(issues)} issues, {len(warnings)} warnings")
    return EXIT_INPUT if issues else EXIT_OK


COMMANDS = {"consensus": cmd_consensus, "backtest": cmd_backtest, "validate": cmd_validate}


def build_parser():
    parser = argparse.ArgumentParser(prog="solid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__name__.replace("cmd_", "") + " command")
        p.add_argument("--config", required=True, help="path to JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the synthetic-data seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be a nonnegative integer")
            cfg.seed = args.seed
        return COMMANDS[args.command](cfg)
    except (ConfigError, PriceDataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AgentError, AgentUnavailable, RuntimeError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
