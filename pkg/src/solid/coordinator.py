"""The consensus loop coordinating agents through dual prices.

Sign convention: agents *maximize* utilities. Agent ``a`` is paid ``x'lambda_a``
and charged ``(rho/2)||x - x_prev||^2``; prices move by
``lambda_a <- lambda_a - rho * (proposal_a - reference)``. The textbook
cost-minimizing form (``f = -u``, ``y = -lambda``) is the same iteration.

Two update orderings are supported:

``"solid"`` (default)
    prices are updated against the previous public decision, then the public
    decision is recomputed with the new prices.
``"admm"``
    the public decision is recomputed with the old prices, then prices are
    updated against the new public decision (standard consensus ADMM).
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from ._validation import check_positive, check_vector, frozen
from .core import ConsistencySet, IterationRecord, residuals

logger = logging.getLogger(__name__)

ORDERINGS = ("solid", "admm")


class Agent(Protocol):
    def propose(self, public, price, rho, consistency_set) -> np.ndarray: ...


class AgentError(RuntimeError):
    """An agent failed, timed out, or returned an invalid proposal."""

    def __init__(self, agent, message):
        super().__init__(f"agent {agent!r}: {message}")
        self.agent = agent


@dataclass(frozen=True)
class CoordinatorConfig:
    rho: float = 1.0
    max_iterations: int = 100
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    consistency_set: ConsistencySet = field(default_factory=ConsistencySet)
    ordering: str = "solid"
    agent_timeout: float | None = None

    def __post_init__(self):
        check_positive(self.rho, "rho")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")
        if self.eps_abs < 0 or self.eps_rel < 0:
            raise ValueError("eps_abs and eps_rel must be nonnegative")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        if self.agent_timeout is not None:
            check_positive(self.agent_timeout, "agent_timeout")


@dataclass(frozen=True)
class ConsensusResult:
    public: np.ndarray
    prices: Mapping[str, np.ndarray]
    trace: Sequence[IterationRecord]
    converged: bool
    iterations_used: int

    def write_trace(self, path):
        write_trace(self.trace, path)


def update_price(prev_price, proposal, reference, rho):
    """``prev_price - rho * (proposal - reference)``, no clipping."""
    rho = check_positive(rho, "rho")
    prev_price = check_vector(prev_price, "prev_price")
    n = len(prev_price)
    proposal = check_vector(proposal, "proposal", n)
    reference = check_vector(reference, "reference", n)
    return prev_price - rho * (proposal - reference)


def update_public(proposals, prices, rho, consistency_set=None):
    """Minimize ``x'sum(lambda) + (rho/2) sum ||proposal_a - x||^2`` over the set.

    The objective is isotropic in ``x``, so the constrained minimizer is the
    projection of ``mean(proposals) - sum(prices) / (rho * A)``.
    """
    rho = check_positive(rho, "rho")
    proposals = [check_vector(p, "proposal") for p in proposals]
    prices = [check_vector(lam, "price") for lam in prices]
    if len(proposals) < 2:
        raise ValueError("at least two agents are required")
    if len(prices) != len(proposals):
        raise ValueError(f"{len(proposals)} proposals but {len(prices)} prices")
    n = len(proposals[0])
    for v in proposals + prices:
        if len(v) != n:
            raise ValueError(f"dimension mismatch: expected {n}, got {len(v)}")
    n_agents = len(proposals)
    target = np.mean(proposals, axis=0) - np.sum(prices, axis=0) / (rho * n_agents)
    if consistency_set is None:
        return target
    return consistency_set.project(target)


def _named(agents):
    if isinstance(agents, Mapping):
        return dict(agents)
    named = {}
    for i, agent in enumerate(agents):
        name = getattr(agent, "name", None) or f"agent{i}"
        if name in named:
            name = f"{name}{i}"
        named[name] = agent
    return named


def _call_sequential(agents, public, prices, rho, cset):
    out = {}
    for name, agent in agents.items():
        try:
            out[name] = agent.propose(public.copy(), prices[name].copy(), rho, cset)
        except AgentError:
            raise
        except Exception as exc:
            raise AgentError(name, f"propose failed: {exc}") from exc
    return out


def _call_parallel(agents, public, prices, rho, cset, timeout):
    out = {}
    pool = ThreadPoolExecutor(max_workers=len(agents))
    try:
        futures = {
            name: pool.submit(agent.propose, public.copy(), prices[name].copy(), rho, cset)
            for name, agent in agents.items()
        }
        for name, fut in futures.items():
            try:
                out[name] = fut.result(timeout=timeout)
            except FutureTimeout as exc:
                raise AgentError(name, f"timed out after {timeout}s") from exc
            except AgentError:
                raise
            except Exception as exc:
                raise AgentError(name, f"propose failed: {exc}") from exc
    finally:
        # a hung agent must not block the coordinator
        pool.shutdown(wait=False, cancel_futures=True)
    return out


def _thresholds(proposals, public, prices, config):
    pri = {
        name: config.eps_abs
        + config.eps_rel * max(np.linalg.norm(p), np.linalg.norm(public))
        for name, p in proposals.items()
    }
    dual = config.eps_abs + config.eps_rel * max(np.linalg.norm(lam) for lam in prices.values())
    return pri, dual


def _is_converged(res, proposals, public, prices, config):
    pri, dual = _thresholds(proposals, public, prices, config)
    return all(res.primal[a] <= pri[a] for a in pri) and res.dual <= dual


def run_consensus(agents, config=None, x0=None, lambda0=None):
    """Run the consensus loop until ``max_iterations`` or the residual thresholds.

    Parameters
    ----------
    agents : mapping of name to agent, or sequence of agents
        Each agent exposes ``propose(public, price, rho, consistency_set)``.
        At least two are required.
    config : CoordinatorConfig, optional
    x0 : array-like, optional
        Initial public decision; must lie in the consistency set. Defaults to
        ``consistency_set.initial_point(n)`` when the set knows its dimension.
    lambda0 : mapping of name to array-like, optional
        Initial prices; zero by default.

    Returns
    -------
    ConsensusResult
    """
    config = config or CoordinatorConfig()
    agents = _named(agents)
    if len(agents) < 2:
        raise ValueError("at least two agents are required")
    cset = config.consistency_set
    rho = config.rho

    if x0 is None:
        x = cset.initial_point()
    else:
        x = check_vector(x0, "x0", cset.n)
    n = len(x)
    if not cset.contains(x, tol=1e-9):
        raise ValueError("x0 is not in the consistency set")

    lambda0 = lambda0 or {}
    prices = {
        name: check_vector(lambda0.get(name, np.zeros(n)), f"lambda0[{name}]", n).copy()
        for name in agents
    }
    unknown = set(lambda0) - set(agents)
    if unknown:
        raise ValueError(f"initial prices given for unknown agents {sorted(unknown)}")

    trace = []
    converged = False
    for k in range(1, config.max_iterations + 1):
        if config.agent_timeout is None:
            raw = _call_sequential(agents, x, prices, rho, cset)
        else:
            raw = _call_parallel(agents, x, prices, rho, cset, config.agent_timeout)
        proposals = {}
        for name, p in raw.items():
            try:
                proposals[name] = check_vector(p, "proposal", n)
            except ValueError as exc:
                raise AgentError(name, f"invalid proposal: {exc}") from exc

        if config.ordering == "solid":
            new_prices = {a: update_price(prices[a], proposals[a], x, rho) for a in agents}
            x_new = update_public(
                [proposals[a] for a in agents], [new_prices[a] for a in agents], rho, cset
            )
        else:
            x_new = update_public(
                [proposals[a] for a in agents], [prices[a] for a in agents], rho, cset
            )
            new_prices = {a: update_price(prices[a], proposals[a], x_new, rho) for a in agents}

        res = residuals(proposals, x_new, x, rho)
        trace.append(
            IterationRecord(
                k=k,
                proposals={a: frozen(p) for a, p in proposals.items()},
                prices={a: frozen(p) for a, p in new_prices.items()},
                public=frozen(x_new),
                public_prev=frozen(x),
                residuals=res,
                rho=rho,
            )
        )
        logger.debug("iteration %d: primal=%s dual=%.3e", k, res.primal, res.dual)
        x, prices = x_new, new_prices
        if _is_converged(res, proposals, x, prices, config):
            converged = True
            break

    return ConsensusResult(
        public=frozen(x),
        prices={a: frozen(p) for a, p in prices.items()},
        trace=tuple(trace),
        converged=converged,
        iterations_used=len(trace),
    )


def write_trace(trace, path):
    """One JSON object per iteration: k, proposals, prices, public, residuals."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
