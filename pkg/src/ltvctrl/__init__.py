"""Online control of linear time-varying systems: simulators, controllers, estimators, hard instances."""

from .core import (DimensionError, LtvInstance, MarkovOperator, Trace, markov_operator,
                   markov_operators, nature_x, psi, simulate, total_variability, variability,
                   verify_assumptions)
from .costs import (DsigmaCost, QuadraticTracking, SatCost, SeparationCost, CustomCost,
                    check_cost_growth)
from .policies import (DivergenceError, PolicyKind, PolicyParam, clip_to_ball, policy_action,
                       rollout_policy)

__all__ = [
    "DimensionError", "LtvInstance", "MarkovOperator", "Trace", "markov_operator",
    "markov_operators", "nature_x", "psi", "simulate", "total_variability", "variability",
    "verify_assumptions", "DsigmaCost", "QuadraticTracking", "SatCost", "SeparationCost",
    "CustomCost", "check_cost_growth", "DivergenceError", "PolicyKind", "PolicyParam",
    "clip_to_ball", "policy_action", "rollout_policy",
]
