"""Consistency sets, projections and residual bookkeeping.

Decision vectors and dual prices are plain 1-D float64 arrays. Records that
are handed out of the coordinator hold read-only copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ._validation import check_positive, check_same_length, check_vector, frozen

UNCONSTRAINED = "unconstrained"
BOX = "box"
SIMPLEX = "simplex"
_KINDS = (UNCONSTRAINED, BOX, SIMPLEX)


def project_simplex(v):
    """Euclidean projection of ``v`` onto ``{x : x >= 0, sum(x) = 1}``.

    Sort-then-threshold: find the largest ``r`` with
    ``u_r - (sum_{j<=r} u_j - 1) / r > 0`` for ``u`` sorted decreasingly and
    shift every entry by the resulting threshold.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, v.shape[0] + 1)
    cond = u - cssv / ind > 0
    r = np.count_nonzero(cond)
    theta = cssv[r - 1] / r
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True)
class ConsistencySet:
    """Feasible region for the public decision.

    Parameters
    ----------
    kind : {"unconstrained", "box", "simplex"}
    lower, upper : array-like, optional
        Elementwise bounds, required for ``kind="box"``.
    n : int, optional
        Dimension. Inferred from the bounds for boxes; when ``None`` the set
        accepts vectors of any length.
    """

    kind: str = UNCONSTRAINED
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    n: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown consistency set kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == BOX:
            if self.lower is None or self.upper is None:
                raise ValueError("box set requires lower and upper bounds")
            lo = np.asarray(self.lower, dtype=np.float64).ravel()
            hi = np.asarray(self.upper, dtype=np.float64).ravel()
            check_same_length(lo, hi, names=["lower", "upper"])
            if np.any(lo > hi):
                bad = np.flatnonzero(lo > hi).tolist()
                raise ValueError(f"box lower > upper at indices {bad}")
            if self.n is not None and self.n != lo.shape[0]:
                raise ValueError(f"box bounds have length {lo.shape[0]}, set declared n={self.n}")
            object.__setattr__(self, "lower", frozen(lo))
            object.__setattr__(self, "upper", frozen(hi))
            object.__setattr__(self, "n", int(lo.shape[0]))
        elif self.lower is not None or self.upper is not None:
            raise ValueError(f"bounds are only meaningful for box sets, not {self.kind!r}")

    @classmethod
    def unconstrained(cls, n=None):
        return cls(UNCONSTRAINED, n=n)

    @classmethod
    def simplex(cls, n=None):
        return cls(SIMPLEX, n=n)

    @classmethod
    def box(cls, lower, upper):
        return cls(BOX, lower=lower, upper=upper)

    def _check(self, v):
        return check_vector(v, "decision vector", self.n)

    def contains(self, v, tol=1e-12):
        v = self._check(v)
        if self.kind == UNCONSTRAINED:
            return True
        if self.kind == BOX:
            return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))
        return bool(np.all(v >= -tol) and abs(v.sum() - 1.0) <= tol)

    def project(self, v):
        v = self._check(v)
        if self.kind == UNCONSTRAINED:
            return v.copy()
        if self.kind == BOX:
            return np.clip(v, self.lower, self.upper)
        return project_simplex(v)

    def initial_point(self, n=None):
        """Symmetric default start: 1/n on the simplex, box midpoint, else zero."""
        n = self.n if self.n is not None else n
        if n is None:
            raise ValueError("dimension unknown; pass n")
        if self.kind == SIMPLEX:
            return np.full(n, 1.0 / n)
        if self.kind == BOX:
            return 0.5 * (self.lower + self.upper)
        return np.zeros(n)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == BOX:
            out["lower"] = self.lower.tolist()
            out["upper"] = self.upper.tolist()
        return out

    @classmethod
    def from_dict(cls, spec, n=None):
        if isinstance(spec, str):
            return cls(spec, n=n)
        kind = spec.get("kind", UNCONSTRAINED)
        if kind == BOX:
            lo, hi = spec["lower"], spec["upper"]
            if np.isscalar(lo) or np.isscalar(hi):
                if n is None:
                    raise ValueError("scalar box bounds need the problem dimension")
                lo, hi = np.full(n, float(lo)), np.full(n, float(hi))
            return cls.box(lo, hi)
        return cls(kind, n=n)


def project(consistency_set, v):
    """Euclidean projection of ``v`` onto ``consistency_set``."""
    return consistency_set.project(v)


@dataclass(frozen=True)
class ResidualRecord:
    """Euclidean residual norms after one consensus update."""

    primal: Mapping[str, float]
    dual: float

    @property
    def primal_max(self):
        return max(self.primal.values())

    def __getattr__(self, name):
        # primal_opt, primal_llm, ... as attribute shorthands
        if name.startswith("primal_"):
            try:
                return self.primal[name[len("primal_"):]]
            except KeyError:
                pass
        raise AttributeError(name)

    def to_dict(self):
        return {"primal": dict(self.primal), "dual": self.dual}


def residuals(proposals, public_new, public_prev, rho):
    """Primal residuals ``||x_a - x_new||`` per agent and dual ``rho * ||x_new - x_prev||``.

    ``proposals`` maps agent names to proposal vectors.
    """
    rho = check_positive(rho, "rho")
    public_new = check_vector(public_new, "public_new")
    public_prev = check_vector(public_prev, "public_prev", len(public_new))
    primal = {}
    for name, p in proposals.items():
        p = check_vector(p, f"proposal[{name}]", len(public_new))
        primal[name] = float(np.linalg.norm(p - public_new))
    dual = rho * float(np.linalg.norm(public_new - public_prev))
    return ResidualRecord(primal=primal, dual=dual)


@dataclass(frozen=True)
class IterationRecord:
    """Snapshot of one coordinator iteration."""

    k: int
    proposals: Mapping[str, np.ndarray]
    prices: Mapping[str, np.ndarray]
    public: np.ndarray
    public_prev: np.ndarray
    residuals: ResidualRecord
    rho: float = field(default=1.0)

    def to_dict(self):
        return {
            "k": self.k,
            "proposals": {a: v.tolist() for a, v in self.proposals.items()},
            "prices": {a: v.tolist() for a, v in self.prices.items()},
            "public": self.public.tolist(),
            "residuals": self.residuals.to_dict(),
        }
