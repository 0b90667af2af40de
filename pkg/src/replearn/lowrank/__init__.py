"""
replearn low-rank MDP module: environments, exact evaluation and model classes
"""

from replearn.lowrank.mdp import (
    GapForm,
    induced_transition,
    occupancy,
    policy_value,
    sample_rollin,
    sample_triple,
    simulation_gap,
    validate_factorization,
    value_of_policy,
)
from replearn.lowrank.modelclass import expected_sq_tv, log_likelihood, mle_fit
from replearn.lowrank.models import (
    Factorization,
    LowRankMDP,
    ModelClass,
    OccupancyMeasure,
    Policy,
    Provenance,
    Transition,
    TransitionDataset,
    ValidationReport,
)

__all__ = [
    "Factorization",
    "GapForm",
    "LowRankMDP",
    "ModelClass",
    "OccupancyMeasure",
    "Policy",
    "Provenance",
    "Transition",
    "TransitionDataset",
    "ValidationReport",
    "expected_sq_tv",
    "induced_transition",
    "log_likelihood",
    "mle_fit",
    "occupancy",
    "policy_value",
    "sample_rollin",
    "sample_triple",
    "simulation_gap",
    "validate_factorization",
    "value_of_policy",
]
