"""
Exact evaluation and sampling for finite low-rank MDPs.

Everything here works on explicit tensors: a transition tensor has shape
|S| x |A| x |S| with ``transition[s, a, s_next] = P(s_next | s, a)``. Policy
evaluation and occupancy computation are direct linear solves of
(I - gamma P_pi); the fixed-point iteration in ``iterative_policy_evaluation``
is kept only as an oracle. All randomized routines take a caller-owned
``numpy.random.Generator``.
"""

import logging
import math
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from replearn.exceptions import InvalidModelError, StructuralError
from replearn.lowrank.mdputils import MDPUtils
from replearn.lowrank.models import (
    Factorization,
    LowRankMDP,
    OccupancyMeasure,
    Policy,
    Transition,
    ValidationReport,
    Violation,
)

logger = logging.getLogger(__name__)


class GapForm(str, Enum):
    FIRST = "first"
    SECOND = "second"


class RolloutResult(NamedTuple):
    state: int
    steps_taken: int
    capped: bool


class SampledTransition(NamedTuple):
    transition: Transition
    capped: bool


# ===========================================
# Validation
# ===========================================
def validate_factorization(factorization: Factorization) -> ValidationReport:
    """
    Check the low-rank invariants of a factorization.

    Args:
        factorization (Factorization): The candidate (mu, phi) pair.

    Returns:
        ValidationReport: Empty iff stochasticity, non-negativity, the feature
        norm bound and the sqrt(d) bound on mu all hold.
    """
    mu, phi, dim = factorization.mu, factorization.phi, factorization.dim
    violations: list[Violation] = []

    kernel = phi @ mu.T
    row_deviation = float(np.abs(kernel.sum(axis=1) - 1.0).max())
    if row_deviation > MDPUtils.stochastic_tolerance():
        violations.append(
            Violation(
                invariant="stochasticity",
                magnitude=row_deviation,
                detail="sum over s' of mu(s')^T phi(s,a) differs from 1",
            )
        )
    most_negative = float(kernel.min())
    if most_negative < -MDPUtils.dust_tolerance():
        violations.append(
            Violation(
                invariant="non_negativity",
                magnitude=-most_negative,
                detail="mu(s')^T phi(s,a) is negative",
            )
        )

    norm_excess = float(np.linalg.norm(phi, axis=1).max() - 1.0)
    if norm_excess > MDPUtils.norm_tolerance():
        violations.append(
            Violation(
                invariant="feature_norm",
                magnitude=norm_excess,
                detail="||phi(s,a)||_2 exceeds 1",
            )
        )

    mu_excess = _max_mu_vertex_norm(mu) - math.sqrt(dim)
    if mu_excess > MDPUtils.norm_tolerance():
        violations.append(
            Violation(
                invariant="mu_norm",
                magnitude=mu_excess,
                detail="||sum_s mu(s) g(s)||_2 exceeds sqrt(d) for some binary g",
            )
        )
    return ValidationReport(violations=violations)


def _binary_vertices(start: int, stop: int, num_states: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)[:, None]
    return ((codes >> np.arange(num_states, dtype=np.int64)) & 1).astype(np.float64)


def _max_mu_vertex_norm(mu: np.ndarray) -> float:
    """
    max over binary g of ||mu^T g||_2. Vertices are enumerated in fixed-size
    chunks up to the enumeration limit, and sampled beyond it.
    """
    num_states = mu.shape[0]
    if num_states > MDPUtils.vertex_enumeration_max_states():
        # fixed seed keeps validation deterministic
        rng = np.random.default_rng(0)
        vertices = rng.integers(
            0, 2, size=(MDPUtils.random_vertex_samples(), num_states)
        ).astype(np.float64)
        return float(np.linalg.norm(vertices @ mu, axis=1).max())
    total = 1 << num_states
    chunk = MDPUtils.vertex_chunk_size()
    return max(
        float(
            np.linalg.norm(
                _binary_vertices(start, min(start + chunk, total), num_states) @ mu,
                axis=1,
            ).max()
        )
        for start in range(0, total, chunk)
    )


def validate_environment(env: LowRankMDP) -> ValidationReport:
    """
    Validate an environment's factorization and report the per-step reward
    normalization r <= 1 - gamma as a warning.
    """
    report = validate_factorization(env.factorization)
    warnings: list[Violation] = []
    excess = float(env.reward.max() - (1.0 - env.gamma))
    if excess > MDPUtils.norm_tolerance():
        logger.warning(
            "Reward exceeds 1 - gamma by %.3e; trajectory normalization not ensured.",
            excess,
        )
        warnings.append(
            Violation(
                invariant="reward_normalization",
                magnitude=excess,
                detail="max r(s,a) exceeds 1 - gamma",
            )
        )
    return ValidationReport(violations=report.violations, warnings=warnings)


# ===========================================
# Transition kernels
# ===========================================
def induced_transition(factorization: Factorization) -> np.ndarray:
    """
    Materialize P(s'|s,a) = mu(s')^T phi(s,a).

    Negative dust in [-1e-12, 0) is clamped to zero and rows are renormalized
    when their deviation from 1 is at most 1e-9.

    Raises:
        InvalidModelError: If an entry is below -1e-12 or a row deviates from 1
        by more than 1e-9.
    """
    num_states, num_actions = factorization.num_states, factorization.num_actions
    kernel = factorization.phi @ factorization.mu.T
    most_negative = float(kernel.min())
    if most_negative < -MDPUtils.dust_tolerance():
        raise InvalidModelError(
            f"Factorization induces negative probability {most_negative:.3e}."
        )
    kernel = np.maximum(kernel, 0.0)
    sums = kernel.sum(axis=1, keepdims=True)
    deviation = float(np.abs(sums - 1.0).max())
    if deviation > MDPUtils.stochastic_tolerance():
        raise InvalidModelError(
            f"Factorization rows deviate from stochasticity by {deviation:.3e}."
        )
    kernel = kernel / sums
    tensor = kernel.reshape(num_states, num_actions, num_states)
    tensor.setflags(write=False)
    return tensor


def tabular_factorization(transition: np.ndarray) -> Factorization:
    """
    Embed a tabular kernel as a low-rank factorization with d = |S||A|:
    phi(s,a) is the one-hot vector of (s,a) and mu(s') holds P(s'|.,.).
    """
    if transition.ndim != 3:
        raise StructuralError("Expected an |S|x|A|x|S| transition tensor.")
    num_states, num_actions, _ = transition.shape
    dim = num_states * num_actions
    return Factorization(
        num_states=num_states,
        num_actions=num_actions,
        dim=dim,
        mu=transition.reshape(dim, num_states).T,
        phi=np.eye(dim),
    )


def policy_kernel(transition: np.ndarray, policy: Policy) -> np.ndarray:
    """
    State-to-state kernel P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a).
    """
    return np.einsum("sa,sat->st", policy.probs, transition)


# ===========================================
# Exact evaluation
# ===========================================
@MDPUtils.require_discount
@MDPUtils.require_stochastic
def value_of_policy(
    transition: np.ndarray, reward: np.ndarray, policy: Policy, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Evaluate a policy exactly.

    Args:
        transition (np.ndarray): |S| x |A| x |S| kernel.
        reward (np.ndarray): |S| x |A| reward.
        policy (Policy): The policy to evaluate.
        gamma (float): Discount in [0, 1).

    Returns:
        tuple[np.ndarray, np.ndarray]: V (|S|) solving V = r_pi + gamma P_pi V,
        and Q(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) V(s').
    """
    num_states = transition.shape[0]
    reward_pi = np.einsum("sa,sa->s", policy.probs, reward)
    system = np.eye(num_states) - gamma * policy_kernel(transition, policy)
    values = linalg.solve(system, reward_pi)
    q_values = reward + gamma * transition @ values
    return values, q_values


def expected_value(
    transition: np.ndarray,
    reward: np.ndarray,
    policy: Policy,
    gamma: float,
    init_dist: np.ndarray,
) -> float:
    """
    V^pi_{P,r} = E_{s0 ~ d0} V^pi(s0).
    """
    values, _ = value_of_policy(transition, reward, policy, gamma)
    return float(init_dist @ values)


def policy_value(env: LowRankMDP, policy: Policy) -> float:
    """
    Value of ``policy`` in the true environment at the initial distribution.
    """
    return expected_value(
        env.transition, env.reward, policy, env.gamma, env.init_dist
    )


def iterative_policy_evaluation(
    transition: np.ndarray,
    reward: np.ndarray,
    policy: Policy,
    gamma: float,
    residual: float = 1e-12,
    max_iterations: int = 1_000_000,
) -> np.ndarray:
    """
    Fixed-point Bellman evaluation, run until the sup-norm update is below
    ``residual``. Oracle for ``value_of_policy``.
    """
    reward_pi = np.einsum("sa,sa->s", policy.probs, reward)
    kernel = policy_kernel(transition, policy)
    values = np.zeros(transition.shape[0])
    for _ in range(max_iterations):
        updated = reward_pi + gamma * kernel @ values
        if np.abs(updated - values).max() <= residual:
            return updated
        values = updated
    return values


@MDPUtils.require_discount
@MDPUtils.require_stochastic
def occupancy(
    transition: np.ndarray, policy: Policy, init_dist: np.ndarray, gamma: float
) -> OccupancyMeasure:
    """
    Discounted state-action occupancy d^pi by solving the flow equation
    d(s) = (1-gamma) d0(s) + gamma sum P(s|s~,a~) d(s~,a~).
    """
    num_states = transition.shape[0]
    system = np.eye(num_states) - gamma * policy_kernel(transition, policy).T
    states = linalg.solve(system, (1.0 - gamma) * init_dist)
    return OccupancyMeasure(dist=states[:, None] * policy.probs)


def flow_residual(
    transition: np.ndarray,
    policy: Policy,
    init_dist: np.ndarray,
    gamma: float,
    measure: OccupancyMeasure,
) -> float:
    """
    Sup-norm residual of the flow equation for ``measure``.
    """
    inflow = np.einsum("sa,sat->t", measure.dist, transition)
    residual = measure.state_marginal - (1.0 - gamma) * init_dist - gamma * inflow
    return float(np.abs(residual).max())


# ===========================================
# Sampling
# ===========================================
def _draw(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    cumulative = np.cumsum(probabilities)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], "right"))
    return min(index, probabilities.size - 1)


def sample_rollin(
    transition: np.ndarray,
    policy: Policy,
    init_dist: np.ndarray,
    gamma: float,
    rng: np.random.Generator,
    cap: Optional[int] = None,
) -> RolloutResult:
    """
    Draw a state from the discounted state visitation d^pi.

    Starting from s0 ~ d0, the rollout terminates with probability 1 - gamma
    before every step; otherwise a ~ pi(s) and s ~ P(.|s,a).

    Args:
        cap (Optional[int]): Safety cap on steps, default 100/(1-gamma). When it
        fires the current state is returned with ``capped`` set.
    """
    limit = MDPUtils.rollin_cap(gamma) if cap is None else cap
    state = _draw(init_dist, rng)
    steps = 0
    while rng.random() < gamma:
        if steps >= limit:
            logger.warning("Roll-in capped after %d steps at state %d.", steps, state)
            return RolloutResult(state=state, steps_taken=steps, capped=True)
        action = _draw(policy.probs[state], rng)
        state = _draw(transition[state, action], rng)
        steps += 1
    return RolloutResult(state=state, steps_taken=steps, capped=False)


def sample_triple(
    transition: np.ndarray,
    policy: Policy,
    init_dist: np.ndarray,
    gamma: float,
    rng: np.random.Generator,
    action_policy: Optional[Policy] = None,
) -> SampledTransition:
    """
    Collect (s, a, s') with s ~ d^pi (roll-in), a uniform (or drawn from
    ``action_policy``), and s' ~ P(.|s,a).
    """
    rollout = sample_rollin(transition, policy, init_dist, gamma, rng)
    state = rollout.state
    if action_policy is None:
        action = int(rng.integers(transition.shape[1]))
    else:
        action = _draw(action_policy.probs[state], rng)
    next_state = _draw(transition[state, action], rng)
    return SampledTransition(
        transition=Transition(s=state, a=action, s_next=next_state),
        capped=rollout.capped,
    )


# ===========================================
# Simulation lemma
# ===========================================
@MDPUtils.require_discount
@MDPUtils.require_stochastic
def simulation_gap(
    model_transition: np.ndarray,
    reference_transition: np.ndarray,
    reward: np.ndarray,
    bonus: np.ndarray,
    policy: Policy,
    gamma: float,
    init_dist: np.ndarray,
    form: GapForm | str = GapForm.FIRST,
) -> float:
    """
    Evaluate V^pi_{P', r+b} - V^pi_{P, r} through the simulation lemma.

    ``form="first"`` takes the expectation over d^pi_{P'} with the reference
    values V^pi_{P,r}; ``form="second"`` takes it over d^pi_P with the model
    values V^pi_{P',r+b}. Both equal the direct value difference.
    """
    form = GapForm(form)
    if form is GapForm.FIRST:
        weights = occupancy(model_transition, policy, init_dist, gamma).dist
        values, _ = value_of_policy(reference_transition, reward, policy, gamma)
    else:
        weights = occupancy(reference_transition, policy, init_dist, gamma).dist
        values, _ = value_of_policy(model_transition, reward + bonus, policy, gamma)
    shift = gamma * (model_transition @ values - reference_transition @ values)
    return float(np.sum(weights * (bonus + shift)) / (1.0 - gamma))
