"""
Offline representation learning with a pessimistic (LCB) penalty.
"""

import logging
import math

import numpy as np

from replearn.exceptions import ConfigurationError, StructuralError
from replearn.lowrank.mdp import expected_value, policy_value, sample_triple
from replearn.lowrank.modelclass import TransitionLike, as_transition, mle_fit
from replearn.lowrank.models import (
    LowRankMDP,
    ModelClass,
    Policy,
    Provenance,
    TransitionDataset,
)
from replearn.offline.coverage import omega
from replearn.offline.models import Extended, OfflineSpec, Unbounded, is_finite
from replearn.online.bonus import empirical_covariance, make_bonus
from replearn.online.models import BonusModel
from replearn.planning.planner import PlanningProblem, value_iteration

logger = logging.getLogger(__name__)


def generate_offline_dataset(
    env: LowRankMDP, behavior: Policy, n: int, rng: np.random.Generator
) -> TransitionDataset:
    """
    n i.i.d. triples with (s, a) ~ d^{pi_b} and s' ~ P*(.|s,a). Both the roll-in
    and the recorded action follow the behavior policy.
    """
    samples = [
        sample_triple(
            env.transition,
            behavior,
            env.init_dist,
            env.gamma,
            rng,
            action_policy=behavior,
        )
        for _ in range(n)
    ]
    capped = sum(sample.capped for sample in samples)
    if capped:
        logger.warning("%d of %d offline roll-ins were capped.", capped, n)
    return TransitionDataset.from_triples(
        [sample.transition for sample in samples],
        env.num_states,
        env.num_actions,
        Provenance.OFFLINE,
    )


def offline_schedules(
    dim: int,
    behavior_omega: float,
    class_size: int,
    delta: float,
    gamma: float,
    c_alpha: float = 1.0,
    c_lambda: float = 1.0,
) -> tuple[float, float]:
    """
    alpha = c_alpha sqrt((omega + d^2) gamma ln(|M|/delta)) and
    lambda = c_lambda d ln(|M|/delta).
    """
    log_term = math.log(class_size / delta)
    alpha = c_alpha * math.sqrt((behavior_omega + dim**2) * gamma * log_term)
    return alpha, c_lambda * dim * log_term


def run_rep_lcb(
    data: TransitionDataset,
    model_class: ModelClass,
    reward: np.ndarray,
    gamma: float,
    init_dist: np.ndarray,
    spec: OfflineSpec,
) -> tuple[Policy, BonusModel]:
    """
    Fit the MLE on ``data`` and plan pessimistically on (P_hat, r - b_hat).

    Args:
        data (TransitionDataset): Offline triples drawn from d^{pi_b}.
        model_class (ModelClass): Finite class searched by the MLE oracle.
        reward (np.ndarray): Known |S| x |A| reward.
        gamma (float): Discount in [0, 1).
        init_dist (np.ndarray): Initial distribution; the pessimistic value of
        the returned policy from it is logged.
        spec (OfflineSpec): Penalty constants and the behavior policy.

    Returns:
        tuple[Policy, BonusModel]: The greedy pessimistic policy and the
        penalty, which records the selected model index.

    Raises:
        ConfigurationError: If the behavior policy has a zero action
        probability (omega is unbounded).
    """
    behavior_omega = omega(spec.behavior_policy)
    if isinstance(behavior_omega, Unbounded):
        raise ConfigurationError(
            "Behavior policy assigns zero probability to some action; "
            "omega is unbounded."
        )
    if reward.shape != (model_class.num_states, model_class.num_actions) or (
        init_dist.shape != (model_class.num_states,)
    ):
        raise StructuralError("Reward or initial distribution shape mismatch.")

    index, fitted = mle_fit(model_class, data)
    alpha, lam = offline_schedules(
        fitted.dim,
        behavior_omega,
        model_class.size,
        spec.delta,
        gamma,
        spec.c_alpha,
        spec.c_lambda,
    )
    penalty = make_bonus(
        fitted,
        empirical_covariance(fitted, data, lam),
        alpha,
        spec.clamp,
        index,
    )
    problem = PlanningProblem(
        transition=model_class.transitions[index],
        reward_effective=reward - penalty.table,
        gamma=gamma,
        tolerance=spec.planner_tolerance,
    )
    result = value_iteration(problem)
    logger.info(
        "Offline fit on %d triples: model %d, alpha %.4f, lambda %.4f, "
        "pessimistic value %.6f.",
        len(data),
        index,
        alpha,
        lam,
        float(result.values @ init_dist),
    )
    return result.policy, penalty


def pessimism_margin(
    policy: Policy, fitted: TransitionLike, penalty: BonusModel, env: LowRankMDP
) -> float:
    """
    V^pi_{P_hat, r - b_hat} - V^pi_{P*, r}.
    """
    pessimistic = expected_value(
        as_transition(fitted),
        env.reward - penalty.table,
        policy,
        env.gamma,
        env.init_dist,
    )
    return pessimistic - policy_value(env, policy)


def pessimism_slack(
    c1: float,
    behavior_omega: float,
    class_size: int,
    delta: float,
    gamma: float,
    n: int,
) -> float:
    """
    c1 sqrt(omega ln(|M|/delta) (1 - gamma) / n); a margin above it is a violation.
    """
    return c1 * math.sqrt(
        behavior_omega * math.log(class_size / delta) * (1.0 - gamma) / n
    )


def lcb_suboptimality_bound(
    dim: int,
    behavior_omega: Extended,
    condition_number: Extended,
    class_size: int,
    delta: float,
    gamma: float,
    n: int,
) -> Extended:
    """
    omega d^2 / (1 - gamma) sqrt(C* ln(|M|/delta) / n), with unit constant.
    """
    if is_finite(behavior_omega) and is_finite(condition_number) and n > 0:
        return (
            behavior_omega
            * dim**2
            / (1.0 - gamma)
            * math.sqrt(condition_number * math.log(class_size / delta) / n)
        )
    return Unbounded.INFINITY
