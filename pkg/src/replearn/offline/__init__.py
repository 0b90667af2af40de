"""
replearn offline module: pessimistic representation learning and coverage
"""

from replearn.offline.coverage import (
    coverage_report,
    omega,
    relative_condition_number,
)
from replearn.offline.models import CoverageReport, OfflineSpec, Unbounded
from replearn.offline.replcb import (
    generate_offline_dataset,
    pessimism_margin,
    run_rep_lcb,
)

__all__ = [
    "CoverageReport",
    "OfflineSpec",
    "Unbounded",
    "coverage_report",
    "generate_offline_dataset",
    "omega",
    "pessimism_margin",
    "relative_condition_number",
    "run_rep_lcb",
]
