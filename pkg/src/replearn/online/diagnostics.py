"""
Numerical checks of the online analysis: almost optimism, the elliptical
potential, bonus concentration, the one-step-back inequality, and conversion
of error bounds into sample counts.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from replearn.exceptions import ReplearnValidationError
from replearn.lowrank.mdp import expected_value, occupancy, policy_value
from replearn.lowrank.modelclass import (
    TransitionLike,
    as_transition,
    sampling_occupancy,
)
from replearn.lowrank.models import (
    LowRankMDP,
    OccupancyMeasure,
    Policy,
    TransitionDataset,
)
from replearn.online.bonus import (
    empirical_covariance,
    feature_matrix,
    squared_norms,
    weighted_covariance,
)
from replearn.online.models import BonusModel, EllipticalTrace, OneStepBackCheck

logger = logging.getLogger(__name__)


def second_moment(phi: np.ndarray, measure: OccupancyMeasure) -> np.ndarray:
    """
    E_{(s,a) ~ measure}[phi phi^T].
    """
    return phi.T @ (measure.flat[:, None] * phi)


# ===========================================
# Almost optimism
# ===========================================
def optimism_margin(
    policy: Policy, fitted: TransitionLike, bonus: BonusModel, env: LowRankMDP
) -> float:
    """
    V^pi_{P_hat, r + b_hat} - V^pi_{P*, r}, both by exact evaluation.
    """
    optimistic = expected_value(
        as_transition(fitted),
        env.reward + bonus.table,
        policy,
        env.gamma,
        env.init_dist,
    )
    return optimistic - policy_value(env, policy)


def optimism_slack(
    c1: float,
    num_actions: int,
    class_size: int,
    n: int,
    delta: float,
    gamma: float,
) -> float:
    """
    c1 * sqrt(|A| zeta_n (1 - gamma)) with zeta_n = ln(|M| n / delta) / n; an
    optimism margin below minus this value is a violation.
    """
    zeta = math.log(class_size * n / delta) / n
    return c1 * math.sqrt(num_actions * zeta * (1.0 - gamma))


# ===========================================
# Elliptical potential
# ===========================================
def elliptical_trace(
    env: LowRankMDP,
    policies: Sequence[Policy],
    phi_star: np.ndarray,
    lambdas: Sequence[float],
    initial_policy: Optional[Policy] = None,
) -> EllipticalTrace:
    """
    Elliptical potential of the policies pi_1..pi_N of an online run.

    Roll-in policies are pi_0 (``initial_policy``, uniform by default) followed
    by ``policies``; rho_n mixes the first n of them. Occupancies are exact.

    Args:
        env (LowRankMDP): True environment.
        policies (Sequence[Policy]): pi_1..pi_N.
        phi_star (np.ndarray): True feature matrix, rows s * |A| + a.
        lambdas (Sequence[float]): lambda_1..lambda_N.

    Raises:
        ReplearnValidationError: If the schedule length differs from N.
    """
    count = len(policies)
    if len(lambdas) != count:
        raise ReplearnValidationError(
            f"Expected {count} regularizers, got {len(lambdas)}."
        )
    if count == 0:
        return EllipticalTrace()

    phi = feature_matrix(phi_star)
    dim = phi.shape[1]
    start = initial_policy or Policy.uniform(env.num_states, env.num_actions)
    measures = [sampling_occupancy(env, policy) for policy in [start, *policies]]
    moments = [second_moment(phi, measure) for measure in measures]

    increments = []
    accumulated = np.zeros((dim, dim))
    for n in range(1, count + 1):
        accumulated += moments[n - 1]
        covariance = accumulated + lambdas[n - 1] * np.eye(dim)
        norms = squared_norms(phi, covariance)
        increments.append(float(measures[n].flat @ norms))

    lambda_first = float(lambdas[0])
    process = lambda_first * np.eye(dim)
    trace_sum = 0.0
    for moment in moments[:count]:
        factor = linalg.cho_factor(process, lower=True)
        trace_sum += float(np.trace(linalg.cho_solve(factor, moment)))
        process = process + moment
    _, logdet = np.linalg.slogdet(process)
    logdet_gap = 2.0 * (float(logdet) - dim * math.log(lambda_first))
    bound = dim * math.log(1.0 + count / (dim * lambda_first))

    logger.debug(
        "Elliptical potential %.4f against bound %.4f over %d episodes.",
        sum(increments),
        bound,
        count,
    )
    return EllipticalTrace(
        increments=increments,
        cumulative=np.cumsum(increments).tolist(),
        bound=bound,
        trace_sum=trace_sum,
        logdet_gap=logdet_gap,
        logdet_bound=2.0 * bound,
    )


# ===========================================
# Concentration and one-step-back checks
# ===========================================
def bonus_concentration_ratios(
    phi: np.ndarray, rho: OccupancyMeasure, data: TransitionDataset, lam: float
) -> np.ndarray:
    """
    ||phi||_{Sigma_hat^-1} / ||phi||_{Sigma_{rho,phi}^-1} at every (s, a), with
    Sigma_{rho,phi} = n E_rho[phi phi^T] + lam I and n the dataset size.
    """
    features = feature_matrix(phi)
    empirical = empirical_covariance(features, data, lam)
    population = weighted_covariance(features, len(data) * rho.flat, lam)
    ratios = np.sqrt(
        squared_norms(features, empirical) / squared_norms(features, population)
    )
    return ratios.reshape(data.num_states, data.num_actions)


def one_step_back_check(
    env: LowRankMDP,
    policy: Policy,
    rho: OccupancyMeasure,
    n: int,
    lam: float,
    g: np.ndarray,
) -> OneStepBackCheck:
    """
    Both sides of the one-step-back inequality under the true model:

        E_{d^pi}[g] <= E_{d^pi}||phi*||_{Sigma^-1} sqrt(gamma)
                           * sqrt(n |A| E_rho[g^2] + lam d B^2)
                       + sqrt((1 - gamma) |A| E_rho[g^2])

    where Sigma = n E_rho[phi* phi*^T] + lam I and B = max |g|. The inequality
    assumes rho mixes occupancies with uniform actions.
    """
    phi = env.factorization.phi
    measure = occupancy(env.transition, policy, env.init_dist, env.gamma)
    covariance = weighted_covariance(phi, n * rho.flat, lam)
    width = float(measure.flat @ np.sqrt(squared_norms(phi, covariance)))
    bound = float(np.abs(g).max(initial=0.0))
    mean_square = float(np.sum(rho.dist * g**2))
    num_actions = env.num_actions
    rhs = width * math.sqrt(env.gamma) * math.sqrt(
        n * num_actions * mean_square + lam * env.dim * bound**2
    ) + math.sqrt((1.0 - env.gamma) * num_actions * mean_square)
    return OneStepBackCheck(lhs=float(np.sum(measure.dist * g)), rhs=rhs)


# ===========================================
# Sample complexity
# ===========================================
def iterations_for_epsilon(
    epsilon: float, a1: float, a2: float = 0.0, a3: float = 0.0
) -> int:
    """
    Number of iterations N for which an error bound of the form
    a1 sqrt(ln(e + a2 N) ln(e + a3 N) / N) drops below ``epsilon``.

    Returns:
        int: ceil((1/eps'^2) ln^2(1 + 1/eps'^2)) with
        eps' = eps / (a1 sqrt(ln(e + a2)) sqrt(ln(e + a3))).
    """
    if epsilon <= 0.0 or a1 <= 0.0:
        raise ReplearnValidationError("epsilon and a1 must be positive.")
    scaled = epsilon / (
        a1 * math.sqrt(math.log(math.e + a2)) * math.sqrt(math.log(math.e + a3))
    )
    inverse = 1.0 / scaled**2
    return int(math.ceil(inverse * math.log(1.0 + inverse) ** 2))


def ucb_sample_budget(
    dim: int,
    num_actions: int,
    class_size: int,
    delta: float,
    gamma: float,
    epsilon: float,
) -> tuple[int, int]:
    """
    Online PAC budget with unit constants.

    Returns:
        tuple[int, int]: Episodes
        N = K / ((1-gamma)^3 eps^2) ln^2(1 + K / ((1-gamma)^2 eps^2))
        with K = d^4 |A|^4 ln(|M|/delta), and the interaction count N ln(N/delta).
    """
    if not 0.0 < epsilon < 1.0 or not 0.0 < delta < 1.0:
        raise ReplearnValidationError("epsilon and delta must lie in (0, 1).")
    complexity = dim**4 * num_actions**4 * math.log(class_size / delta)
    horizon = 1.0 - gamma
    episodes = (
        complexity
        / (horizon**3 * epsilon**2)
        * math.log(1.0 + complexity / (horizon**2 * epsilon**2)) ** 2
    )
    episodes = max(1, int(math.ceil(episodes)))
    return episodes, int(math.ceil(episodes * math.log(episodes / delta)))
