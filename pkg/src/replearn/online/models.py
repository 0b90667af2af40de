from enum import Enum
from functools import cached_property
from typing import Any, Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from replearn.exceptions import StructuralError
from replearn.lowrank.models import ReplearnBaseModel, readonly_array


class RefitSchedule(str, Enum):
    """
    When the online loop refits the MLE. ``doubling`` refits only when the
    dataset size reaches a power of two and is not the canonical schedule.
    """

    EVERY_EPISODE = "every_episode"
    DOUBLING = "doubling"


# ===========================================
# Configuration
# ===========================================
class UcbConfig(ReplearnBaseModel):
    """
    Configuration of an online run. ``c_alpha`` and ``c_lambda`` are the
    constants of the bonus and regularization schedules; ``c1`` scales the
    almost-optimism threshold reported by the diagnostics.
    """

    episodes: int = Field(default=1000, ge=0)
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    c_alpha: float = Field(default=1.0, ge=0.0)
    c_lambda: float = Field(default=1.0, gt=0.0)
    bonus_clamp: float = Field(default=2.0, gt=0.0, le=2.0)
    planner_tolerance: float = Field(default=1e-8, gt=0.0)
    seed: int = 0
    refit: RefitSchedule = RefitSchedule.EVERY_EPISODE
    diagnostics: bool = False
    c1: float = Field(default=1.0, gt=0.0)


# ===========================================
# Bonus
# ===========================================
class BonusModel(ReplearnBaseModel):
    """
    Elliptical bonus b(s,a) = min(alpha * ||phi_hat(s,a)||_{Sigma^-1}, clamp).

    The same model doubles as the offline penalty.
    """

    phi_hat: np.ndarray
    sigma_hat: np.ndarray
    alpha: float = Field(ge=0.0)
    clamp: float = Field(default=2.0, gt=0.0)
    num_actions: int = Field(gt=0)
    model_index: Optional[int] = None

    @field_validator("phi_hat", "sigma_hat", mode="before")
    @classmethod
    def freeze_array(cls, value: Any) -> np.ndarray:
        return readonly_array(value)

    @model_validator(mode="after")
    def check_shapes(self) -> "BonusModel":
        dim = self.phi_hat.shape[1]
        if self.sigma_hat.shape != (dim, dim):
            raise StructuralError(
                f"sigma_hat must be {dim}x{dim}, got {self.sigma_hat.shape}."
            )
        if self.phi_hat.shape[0] % self.num_actions:
            raise StructuralError("phi_hat rows must be a multiple of num_actions.")
        return self

    @property
    def dim(self) -> int:
        return int(self.phi_hat.shape[1])

    @property
    def num_states(self) -> int:
        return int(self.phi_hat.shape[0] // self.num_actions)

    @cached_property
    def table(self) -> np.ndarray:
        """
        |S| x |A| matrix of bonus values.
        """
        from replearn.online.bonus import bonus_table

        return bonus_table(self)


# ===========================================
# Diagnostics
# ===========================================
class EpisodeRecord(ReplearnBaseModel):
    """
    Per-episode record; truth-dependent fields are None outside diagnostic mode.
    """

    episode: int = Field(ge=1)
    n: int = Field(ge=1)
    model_index: int = Field(ge=0)
    sq_tv: Optional[float] = None
    optimism_margin_pistar: Optional[float] = None
    value_pin: float
    bonus_mean: float
    potential_increment: Optional[float] = None
    rollin_capped: bool = False


class EllipticalTrace(ReplearnBaseModel):
    """
    Elliptical potential of a run under the true feature.

    ``increments[n-1]`` is E_{d^{pi_n bar}}[phi^T Sigma_{rho_n}^-1 phi] and
    ``bound`` is d ln(1 + N / (d lambda_1)). ``trace_sum`` and ``logdet_gap``
    are the two sides of the log-determinant process inequality with fixed
    regularizer lambda_1; ``logdet_bound`` is twice ``bound``.
    """

    increments: list[float] = Field(default_factory=list)
    cumulative: list[float] = Field(default_factory=list)
    bound: float = 0.0
    trace_sum: float = 0.0
    logdet_gap: float = 0.0
    logdet_bound: float = 0.0

    @property
    def total(self) -> float:
        return self.cumulative[-1] if self.cumulative else 0.0

    def process_holds(self, slack: float = 1e-6) -> bool:
        return (
            self.trace_sum <= self.logdet_gap + slack
            and self.logdet_gap <= self.logdet_bound + slack
        )


class RunDiagnostics(ReplearnBaseModel):
    records: list[EpisodeRecord] = Field(default_factory=list)
    elliptical: Optional[EllipticalTrace] = None

    @property
    def rollin_cap_firings(self) -> int:
        return sum(record.rollin_capped for record in self.records)

    def values(self) -> np.ndarray:
        return np.array([record.value_pin for record in self.records])


class OneStepBackCheck(ReplearnBaseModel):
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-9
