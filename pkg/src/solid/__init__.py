"""Consensus coordination of an optimization agent and a language-model agent.

Agents exchange proposals with a coordinator that prices deviations from a
shared public decision, in the style of consensus ADMM.
"""

from .coordinator import (
    AgentError,
    ConsensusResult,
    CoordinatorConfig,
    run_consensus,
    update_price,
    update_public,
)
from .core import ConsistencySet, IterationRecord, ResidualRecord, project, project_simplex, residuals
from .estimators import MeanVariancePortfolio, SolidPortfolio
from .markowitz import (
    DegenerateReturnsError,
    MarkowitzAgent,
    MarkowitzModel,
    estimate_moments,
    propose_augmented,
    solve_markowitz,
)

__version__ = "0.1.0"

__all__ = [
    "AgentError",
    "ConsensusResult",
    "ConsistencySet",
    "CoordinatorConfig",
    "DegenerateReturnsError",
    "IterationRecord",
    "MarkowitzAgent",
    "MarkowitzModel",
    "MeanVariancePortfolio",
    "ResidualRecord",
    "SolidPortfolio",
    "estimate_moments",
    "project",
    "project_simplex",
    "propose_augmented",
    "residuals",
    "run_consensus",
    "solve_markowitz",
    "update_price",
    "update_public",
]
