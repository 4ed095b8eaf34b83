"""scikit-learn compatible wrappers around the optimizer and the consensus loop.

Both estimators are fitted on a ``(n_observations, n_assets)`` matrix of
per-period returns and expose ``weights_``. ``predict`` maps a returns matrix
to portfolio returns, so the estimators drop into pipelines and
cross-validation splitters like any regressor-shaped transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, validate_data

from .coordinator import CoordinatorConfig, run_consensus
from .core import ConsistencySet
from .markowitz import MarkowitzAgent, MarkowitzModel, estimate_moments, solve_markowitz


class MeanVariancePortfolio(BaseEstimator):
    """Minimum-variance portfolio for a target return.

    Parameters
    ----------
    target_return : float, default=None
        Required per-period portfolio return. ``None`` uses the mean of the
        estimated expected returns.
    ridge : float, default=None
        Diagonal loading added to the sample covariance. ``None`` uses
        ``1e-6 * trace(S) / n_assets``.
    lookback : int, default=None
        Fit on the last ``lookback`` observations only.

    Attributes
    ----------
    mu_ : ndarray of shape (n_assets,)
    covariance_ : ndarray of shape (n_assets, n_assets)
    model_ : MarkowitzModel
    weights_ : ndarray of shape (n_assets,)
    n_features_in_ : int
    """

    def __init__(self, target_return=None, ridge=None, lookback=None):
        self.target_return = target_return
        self.ridge = ridge
        self.lookback = lookback

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=2)
        if self.lookback is not None:
            X = X[-self.lookback :]
        self.mu_, self.covariance_ = estimate_moments(X, ridge=self.ridge)
        self.model_ = MarkowitzModel(self.covariance_, self.mu_, self.target_return)
        self.weights_ = solve_markowitz(self.model_)
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.weights_

    def score(self, X, y=None):
        """Negative realized variance of the portfolio on ``X``."""
        r = self.predict(X)
        return -float(np.var(r, ddof=1)) if len(r) > 1 else 0.0

    def propose(self, public, price, rho, consistency_set=None):
        """Consensus-agent interface backed by the fitted model."""
        check_is_fitted(self, "model_")
        return MarkowitzAgent(self.model_).propose(public, price, rho, consistency_set)


class SolidPortfolio(BaseEstimator):
    """Portfolio agreed between a mean-variance optimizer and a second agent.

    Parameters
    ----------
    llm_agent : object
        Any agent with ``propose(public, price, rho, consistency_set)``, for
        example :class:`~solid.llm.ChatLLMAgent` or a scripted replay.
    rho : float, default=1.0
        Deviation-penalty weight and price step.
    max_iterations : int, default=100
    eps_abs, eps_rel : float
        Residual stopping tolerances.
    consistency_set : {"unconstrained", "simplex"} or ConsistencySet, default="unconstrained"
    ordering : {"solid", "admm"}, default="solid"
    warm_start : bool, default=True
        Start the public decision at the (projected) optimizer solution
        instead of the set's symmetric default point.
    target_return, ridge, lookback
        Passed to the underlying :class:`MeanVariancePortfolio`.

    Attributes
    ----------
    optimizer_ : MeanVariancePortfolio
    consensus_ : ConsensusResult
    weights_ : ndarray of shape (n_assets,)
    prices_ : dict of ndarray
    n_iter_ : int
    converged_ : bool
    """

    def __init__(
        self,
        llm_agent=None,
        rho=1.0,
        max_iterations=100,
        eps_abs=1e-6,
        eps_rel=1e-4,
        consistency_set="unconstrained",
        ordering="solid",
        warm_start=True,
        target_return=None,
        ridge=None,
        lookback=None,
    ):
        self.llm_agent = llm_agent
        self.rho = rho
        self.max_iterations = max_iterations
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self.consistency_set = consistency_set
        self.ordering = ordering
        self.warm_start = warm_start
        self.target_return = target_return
        self.ridge = ridge
        self.lookback = lookback

    def fit(self, X, y=None):
        if self.llm_agent is None:
            raise ValueError("llm_agent is required")
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=2)
        self.optimizer_ = MeanVariancePortfolio(
            target_return=self.target_return, ridge=self.ridge, lookback=self.lookback
        ).fit(X)
        n = X.shape[1]
        cset = self.consistency_set
        if not isinstance(cset, ConsistencySet):
            cset = ConsistencySet.from_dict(cset, n=n)
        elif cset.n is None:
            cset = ConsistencySet(cset.kind, cset.lower, cset.upper, n=n)
        config = CoordinatorConfig(
            rho=self.rho,
            max_iterations=self.max_iterations,
            eps_abs=self.eps_abs,
            eps_rel=self.eps_rel,
            consistency_set=cset,
            ordering=self.ordering,
        )
        if self.warm_start:
            x0 = cset.project(self.optimizer_.weights_)
        else:
            x0 = cset.initial_point(n)
        agents = {"opt": MarkowitzAgent(self.optimizer_.model_), "llm": self.llm_agent}
        self.consensus_ = run_consensus(agents, config, x0=x0)
        self.weights_ = np.array(self.consensus_.public)
        self.prices_ = {k: np.array(v) for k, v in self.consensus_.prices.items()}
        self.n_iter_ = self.consensus_.iterations_used
        self.converged_ = self.consensus_.converged
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.weights_
