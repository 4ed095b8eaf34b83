"""Mean-variance optimization agent.

The agent's native problem is ``min 1/2 w'Sigma w  s.t.  w'mu = p, w'1 = 1``.
Inside the consensus loop it solves the augmented version

    max  -1/2 x'Sigma x + x'lambda - (rho/2)||x - x_prev||^2
    s.t. x'mu = p, x'1 = 1

Both are equality-constrained QPs solved through their KKT system. Short
positions are allowed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_returns, check_vector, frozen

KKT_TOL = 1e-9


class DegenerateReturnsError(ValueError):
    """Expected returns are parallel to the budget vector; the KKT system is singular."""


@dataclass(frozen=True)
class MarkowitzModel:
    """Covariance ``sigma``, expected returns ``mu`` and target return ``target_return``.

    ``target_return=None`` selects ``mean(mu)``, which is always attainable.
    """

    sigma: np.ndarray
    mu: np.ndarray
    target_return: float | None = None

    def __post_init__(self):
        mu = check_vector(self.mu, "mu")
        n = len(mu)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.shape != (n, n):
            raise ValueError(f"sigma has shape {sigma.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("sigma contains non-finite entries")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-10:
            raise ValueError("sigma is not symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("sigma is not positive definite; add a ridge term") from None
        p = float(np.mean(mu)) if self.target_return is None else float(self.target_return)
        if not np.isfinite(p):
            raise ValueError("target_return must be finite")
        if p < mu.min() or p > mu.max():
            warnings.warn(
                f"target return {p:.6g} lies outside [min(mu), max(mu)] = "
                f"[{mu.min():.6g}, {mu.max():.6g}]; weights will be leveraged",
                stacklevel=2,
            )
        object.__setattr__(self, "sigma", frozen(sigma))
        object.__setattr__(self, "mu", frozen(mu))
        object.__setattr__(self, "target_return", p)

    @property
    def n(self):
        return len(self.mu)

    def risk(self, w):
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.sigma @ w)


def _solve_kkt(hessian, linear, mu, p):
    """Solve ``min 1/2 x'Hx - linear'x  s.t. mu'x = p, 1'x = 1``."""
    n = len(mu)
    constraints = np.vstack([mu, np.ones(n)])
    if np.linalg.matrix_rank(constraints) < 2:
        raise DegenerateReturnsError("degenerate return structure: mu is parallel to the budget vector")
    kkt = np.zeros((n + 2, n + 2))
    kkt[:n, :n] = hessian
    kkt[:n, n:] = constraints.T
    kkt[n:, :n] = constraints
    rhs = np.concatenate([linear, [p, 1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateReturnsError("degenerate return structure: singular KKT system") from None
    # one step of iterative refinement
    sol += np.linalg.solve(kkt, rhs - kkt @ sol)
    resid = np.max(np.abs(kkt @ sol - rhs))
    if not resid <= KKT_TOL:
        raise RuntimeError(f"KKT residual {resid:.3e} exceeds {KKT_TOL:g}")
    return sol[:n]


def kkt_residual(model, w, rho=0.0, price=None, prev_public=None):
    """Infinity norm of the KKT residual at ``w`` (multipliers fitted by least squares)."""
    n = model.n
    hessian = model.sigma + rho * np.eye(n)
    linear = np.zeros(n)
    if price is not None:
        linear = linear + price
    if prev_public is not None:
        linear = linear + rho * np.asarray(prev_public)
    constraints = np.vstack([model.mu, np.ones(n)])
    grad = hessian @ w - linear
    nu, *_ = np.linalg.lstsq(constraints.T, -grad, rcond=None)
    stationarity = grad + constraints.T @ nu
    feas = constraints @ w - np.array([model.target_return, 1.0])
    return float(max(np.max(np.abs(stationarity)), np.max(np.abs(feas))))


def solve_markowitz(model):
    """Minimum-variance weights attaining ``model.target_return``."""
    return _solve_kkt(model.sigma, np.zeros(model.n), model.mu, model.target_return)


def propose_augmented(model, price, prev_public, rho, consistency_set=None):
    """Maximizer of the augmented utility on the model's constraint plane.

    The consistency set is not imposed here; the coordinator reconciles
    feasibility when it updates the public decision.
    """
    n = model.n
    price = check_vector(price, "price", n)
    prev_public = check_vector(prev_public, "prev_public", n)
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho!r}")
    hessian = model.sigma + rho * np.eye(n)
    return _solve_kkt(hessian, price + rho * prev_public, model.mu, model.target_return)


def default_ridge(sample_cov):
    n = sample_cov.shape[0]
    return max(1e-6 * float(np.trace(sample_cov)) / n, 1e-12)


def estimate_moments(returns, ridge=None):
    """Sample mean and covariance (divisor ``T - 1``) plus ``ridge * I``.

    Parameters
    ----------
    returns : array-like of shape (T, n)
        Per-period simple returns, ``T >= 2``.
    ridge : float, optional
        Diagonal loading. Defaults to ``1e-6 * trace(S) / n`` (floored at 1e-12).

    Returns
    -------
    mu : ndarray of shape (n,)
    sigma : ndarray of shape (n, n)
    """
    X = check_returns(returns, min_samples=2)
    mu = X.mean(axis=0)
    centered = X - mu
    sample = centered.T @ centered / (X.shape[0] - 1)
    if ridge is None:
        ridge = default_ridge(sample)
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge!r}")
    sigma = sample + ridge * np.eye(X.shape[1])
    # exact symmetry
    sigma = 0.5 * (sigma + sigma.T)
    return mu, sigma


class MarkowitzAgent:
    """Optimization agent bound to a fixed model."""

    name = "opt"

    def __init__(self, model):
        self.model = model

    def propose(self, public, price, rho, consistency_set=None):
        return propose_augmented(self.model, price, public, rho, consistency_set)

    def solve(self):
        return solve_markowitz(self.model)
