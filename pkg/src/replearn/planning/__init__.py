"""
replearn planning module
"""

from replearn.planning.planner import (
    PlanningProblem,
    PlanningResult,
    plan,
    value_iteration,
)

__all__ = ["PlanningProblem", "PlanningResult", "plan", "value_iteration"]
