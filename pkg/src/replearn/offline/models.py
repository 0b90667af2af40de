from enum import Enum
from typing import Optional, TypeGuard, Union

from pydantic import Field

from replearn.lowrank.models import Policy, ReplearnBaseModel


class Unbounded(str, Enum):
    """
    Tagged +infinity for coverage quantities; never enters linear algebra.
    """

    INFINITY = "inf"

    def __str__(self) -> str:
        return self.value


Extended = Union[Unbounded, float]

# Penalty scale tuned on the shipped latent-variable and comblock benchmarks;
# c_alpha = 1 reproduces the worst-case schedule.
LCB_C_ALPHA = 0.05


def is_finite(value: Extended) -> TypeGuard[float]:
    return not isinstance(value, Unbounded)


class OfflineSpec(ReplearnBaseModel):
    """
    Offline run settings. The dataset law is rho = d^{pi_b} of the behavior
    policy. ``c_alpha`` defaults to LCB_C_ALPHA.
    """

    behavior_policy: Policy
    n: int = Field(default=1000, ge=0)
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    c_alpha: float = Field(default=LCB_C_ALPHA, ge=0.0)
    c_lambda: float = Field(default=1.0, gt=0.0)
    clamp: float = Field(default=2.0, gt=0.0, le=2.0)
    planner_tolerance: float = Field(default=1e-8, gt=0.0)
    seed: int = 0


class CoverageReport(ReplearnBaseModel):
    relative_condition_number: Extended = Field(union_mode="left_to_right")
    omega: Extended = Field(union_mode="left_to_right")
    tabular_density_ratio: Optional[Extended] = Field(
        default=None, union_mode="left_to_right"
    )
