"""Decision policies: trained agents and search/heuristic baselines."""

from .base import BasePolicy, evaluate_policy
from .dqn import DdqnAgent
from .sdac import SdacAgent, arn_normalize, epsilon_lope

__all__ = [
    "BasePolicy", "evaluate_policy",
    "DdqnAgent", "SdacAgent", "arn_normalize", "epsilon_lope",
]
