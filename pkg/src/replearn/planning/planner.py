"""
Exact planning in a known (learned) low-rank model.

The learned kernel P_hat = mu_hat^T phi_hat is materialized as a tabular
tensor and solved by Bellman-optimality iteration. Greedy policies break ties
by the lowest action index.
"""

import itertools
import logging
import math
from typing import Any, NamedTuple, Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from replearn.exceptions import PlannerNonConvergenceError, ReplearnValidationError
from replearn.lowrank.mdp import induced_transition, value_of_policy
from replearn.lowrank.mdputils import MDPUtils
from replearn.lowrank.models import (
    Factorization,
    Policy,
    ReplearnBaseModel,
    readonly_array,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-8
REWARD_BOUND = 3.0


class PlanningProblem(ReplearnBaseModel):
    """
    A tabular planning problem with an effective (bonus-shifted) reward.
    """

    transition: np.ndarray
    reward_effective: np.ndarray
    gamma: float = Field(ge=0.0, lt=1.0)
    tolerance: float = Field(default=DEFAULT_TOLERANCE, gt=0.0)
    initial_values: Optional[np.ndarray] = None

    @field_validator("transition", "reward_effective", "initial_values", mode="before")
    @classmethod
    def freeze_array(cls, value: Any) -> Optional[np.ndarray]:
        return None if value is None else readonly_array(value)

    @model_validator(mode="after")
    def check_problem(self) -> "PlanningProblem":
        MDPUtils.check_transition(self.transition)
        if self.reward_effective.shape != self.transition.shape[:2]:
            raise ReplearnValidationError(
                f"reward_effective must have shape {self.transition.shape[:2]}."
            )
        if np.abs(self.reward_effective).max() > REWARD_BOUND + 1e-9:
            raise ReplearnValidationError(
                f"|reward_effective| must not exceed {REWARD_BOUND}."
            )
        if self.initial_values is not None and self.initial_values.shape != (
            self.transition.shape[0],
        ):
            raise ReplearnValidationError("initial_values must have shape (|S|,).")
        return self


class PlanningResult(NamedTuple):
    values: np.ndarray
    q_values: np.ndarray
    policy: Policy
    iterations: int


def iteration_cap(tolerance: float, gamma: float) -> int:
    return int(10.0 * math.log(1.0 / tolerance) / (1.0 - gamma)) + 100


def greedy_policy(q_values: np.ndarray) -> Policy:
    """
    Deterministic greedy policy; among actions within round-off of the
    maximum, the lowest index wins.
    """
    scale = max(1.0, float(np.abs(q_values).max(initial=0.0)))
    best = q_values.max(axis=1, keepdims=True)
    near_best = q_values >= best - 1e-12 * scale
    return Policy.deterministic(np.argmax(near_best, axis=1), q_values.shape[1])


def value_iteration(problem: PlanningProblem) -> PlanningResult:
    """
    Bellman-optimality iteration to sup-norm update tolerance*(1-gamma)/(2*gamma),
    which guarantees ||V - V*||_inf <= tolerance.

    Raises:
        PlannerNonConvergenceError: If the iteration cap is exceeded or an
        update violates the gamma-contraction.
    """
    transition, reward, gamma = (
        problem.transition,
        problem.reward_effective,
        problem.gamma,
    )
    if gamma == 0.0:
        q_values = np.array(reward)
        return PlanningResult(
            values=q_values.max(axis=1),
            q_values=q_values,
            policy=greedy_policy(q_values),
            iterations=1,
        )

    threshold = problem.tolerance * (1.0 - gamma) / (2.0 * gamma)
    cap = iteration_cap(problem.tolerance, gamma)
    values = (
        np.zeros(transition.shape[0])
        if problem.initial_values is None
        else np.array(problem.initial_values)
    )
    previous_step: Optional[float] = None
    for iteration in range(1, cap + 1):
        updated = (reward + gamma * transition @ values).max(axis=1)
        step = float(np.abs(updated - values).max())
        slack = 1e-12 * max(1.0, float(np.abs(updated).max()))
        if previous_step is not None and step > gamma * previous_step + slack:
            raise PlannerNonConvergenceError(
                f"Contraction violated at iteration {iteration}: "
                f"{step:.3e} > {gamma} * {previous_step:.3e}."
            )
        values = updated
        previous_step = step
        if step <= threshold:
            break
    else:
        raise PlannerNonConvergenceError(
            f"Value iteration did not converge within {cap} iterations."
        )

    q_values = reward + gamma * transition @ values
    return PlanningResult(
        values=values,
        q_values=q_values,
        policy=greedy_policy(q_values),
        iterations=iteration,
    )


def plan(
    model: Factorization | np.ndarray,
    reward_effective: np.ndarray,
    gamma: float,
    tolerance: float = DEFAULT_TOLERANCE,
) -> Policy:
    """
    Greedy optimal policy of a known model under ``reward_effective``.

    Args:
        model (Factorization | np.ndarray): A factorization, or an already
        induced |S| x |A| x |S| tensor.
        reward_effective (np.ndarray): r + b or r - b, bounded by 3.
        gamma (float): Discount in [0, 1).
        tolerance (float): Value accuracy of the underlying iteration.
    """
    transition = (
        induced_transition(model) if isinstance(model, Factorization) else model
    )
    problem = PlanningProblem(
        transition=transition,
        reward_effective=reward_effective,
        gamma=gamma,
        tolerance=tolerance,
    )
    return value_iteration(problem).policy


def best_deterministic_policy(
    transition: np.ndarray,
    reward: np.ndarray,
    gamma: float,
    init_dist: np.ndarray,
) -> tuple[Policy, float]:
    """
    Exhaustive search over all |A|^|S| deterministic policies. Only for small
    instances; used as a planning oracle.
    """
    num_states, num_actions = reward.shape
    best_policy: Optional[Policy] = None
    best_value = -math.inf
    for actions in itertools.product(range(num_actions), repeat=num_states):
        policy = Policy.deterministic(actions, num_actions)
        values, _ = value_of_policy(transition, reward, policy, gamma)
        value = float(init_dist @ values)
        if value > best_value:
            best_policy, best_value = policy, value
    assert best_policy is not None
    return best_policy, best_value
