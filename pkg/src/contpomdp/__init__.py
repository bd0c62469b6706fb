"""Online tree-search planning for POMDPs with continuous spaces."""

from contpomdp.belief import WeightedParticleBelief, filter_update, gpf_step
from contpomdp.core import ConfigurationError, DiscretizationWrapper, DomainError, GenerativePomdp, make_rng
from contpomdp.solvers import SolverConfig, TreePlanner

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DiscretizationWrapper", "DomainError", "GenerativePomdp", "SolverConfig",
    "TreePlanner", "WeightedParticleBelief", "filter_update", "gpf_step", "make_rng",
]
