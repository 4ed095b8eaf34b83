"""Deterministic stand-ins for the language-model agent."""

from __future__ import annotations

import numpy as np

from .._validation import check_vector
from .confidence import ConfidenceLevel, levels_to_proposal


class QuadraticMockAgent:
    """Exact maximizer of ``-1/2 (x-c)'Q(x-c) + x'lambda - (rho/2)||x - x_prev||^2``.

    The closed form is ``x = (Q + rho I)^{-1} (Q c + lambda + rho x_prev)``.
    """

    def __init__(self, center, weight=None, name="mock"):
        self.center = check_vector(center, "center")
        n = len(self.center)
        Q = np.eye(n) if weight is None else np.asarray(weight, dtype=np.float64)
        if Q.shape != (n, n):
            raise ValueError(f"weight has shape {Q.shape}, expected ({n}, {n})")
        if np.max(np.abs(Q - Q.T)) > 1e-10:
            raise ValueError("weight matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("weight matrix must be positive semidefinite")
        self.weight = Q
        self.name = name

    def utility(self, x):
        d = np.asarray(x) - self.center
        return -0.5 * float(d @ self.weight @ d)

    def augmented_utility(self, x, price, public, rho):
        x = np.asarray(x)
        return self.utility(x) + float(x @ price) - 0.5 * rho * float(np.sum((x - public) ** 2))

    def propose(self, public, price, rho, consistency_set=None):
        n = len(self.center)
        public = check_vector(public, "public", n)
        price = check_vector(price, "price", n)
        lhs = self.weight + rho * np.eye(n)
        try:
            np.linalg.cholesky(lhs)
        except np.linalg.LinAlgError:
            raise ValueError("Q + rho*I is singular; use rho > 0 or a definite Q") from None
        return np.linalg.solve(lhs, self.weight @ self.center + price + rho * public)


def _coerce_levels(entry):
    return {t: lv if isinstance(lv, ConfidenceLevel) else ConfidenceLevel.parse(lv) for t, lv in entry.items()}


class ScriptedLevelsAgent:
    """Replays a fixed schedule of level maps, ignoring prices and the public plan.

    Call ``k`` (1-based) uses ``schedule[k-1]``, clamped to the last entry.
    """

    name = "llm"

    def __init__(self, schedule, tickers=None, sparse=False):
        if not schedule:
            raise ValueError("schedule must be nonempty")
        self.schedule = [_coerce_levels(entry) for entry in schedule]
        self.tickers = list(tickers) if tickers is not None else list(self.schedule[0])
        self.sparse = sparse
        self.calls = 0

    def propose(self, public=None, price=None, rho=None, consistency_set=None):
        entry = self.schedule[min(self.calls, len(self.schedule) - 1)]
        self.calls += 1
        return levels_to_proposal(entry, self.tickers, sparse=self.sparse)


class FixedProposalAgent:
    """Always proposes the same vector."""

    def __init__(self, proposal, name="fixed"):
        self.proposal = check_vector(proposal, "proposal")
        self.name = name

    def propose(self, public=None, price=None, rho=None, consistency_set=None):
        return self.proposal.copy()
