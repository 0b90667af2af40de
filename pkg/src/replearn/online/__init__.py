"""
replearn online module: optimistic representation learning and its diagnostics
"""

from replearn.online.bonus import bonus_eval, empirical_covariance, schedules
from replearn.online.diagnostics import (
    elliptical_trace,
    iterations_for_epsilon,
    optimism_margin,
)
from replearn.online.models import (
    BonusModel,
    EllipticalTrace,
    EpisodeRecord,
    RefitSchedule,
    RunDiagnostics,
    UcbConfig,
)
from replearn.online.repucb import run_rep_ucb

__all__ = [
    "BonusModel",
    "EllipticalTrace",
    "EpisodeRecord",
    "RefitSchedule",
    "RunDiagnostics",
    "UcbConfig",
    "bonus_eval",
    "elliptical_trace",
    "empirical_covariance",
    "iterations_for_epsilon",
    "optimism_margin",
    "run_rep_ucb",
    "schedules",
]
