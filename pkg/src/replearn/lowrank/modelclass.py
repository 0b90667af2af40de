"""
Finite model classes: exact MLE oracle and total-variation diagnostics.
"""

import logging
from typing import Sequence

import numpy as np
from pydantic import Field

from replearn.exceptions import ReplearnValidationError, StructuralError
from replearn.lowrank.mdp import induced_transition, occupancy, sample_triple
from replearn.lowrank.mdputils import MDPUtils
from replearn.lowrank.models import (
    Factorization,
    LowRankMDP,
    ModelClass,
    OccupancyMeasure,
    Policy,
    Provenance,
    ReplearnBaseModel,
    TransitionDataset,
)

logger = logging.getLogger(__name__)

TransitionLike = Factorization | np.ndarray


def as_transition(model: TransitionLike) -> np.ndarray:
    if isinstance(model, Factorization):
        return induced_transition(model)
    return np.asarray(model, dtype=np.float64)


# ===========================================
# Likelihood and MLE oracle
# ===========================================
def log_likelihood(model: TransitionLike, data: TransitionDataset) -> float:
    """
    Sum of ln max(P(s'|s,a), p_floor) over the dataset, p_floor = 1e-12.
    An empty dataset has log-likelihood 0.
    """
    if len(data) == 0:
        return 0.0
    transition = as_transition(model)
    probabilities = transition[data.states, data.actions, data.next_states]
    return float(np.log(np.maximum(probabilities, MDPUtils.likelihood_floor())).sum())


def log_likelihoods(model_class: ModelClass, data: TransitionDataset) -> np.ndarray:
    """
    Log-likelihood of every candidate, in class order.
    """
    if (data.num_states, data.num_actions) != (
        model_class.num_states,
        model_class.num_actions,
    ):
        raise StructuralError("Dataset shape does not match the model class.")
    if len(data) == 0:
        return np.zeros(model_class.size)
    counts = data.transition_counts()
    return np.einsum("msat,sat->m", model_class.log_transitions, counts)


def select_index(scores: np.ndarray) -> int:
    """
    Argmax with ties broken by the lowest index.
    """
    return int(np.argmax(scores))


def mle_fit(
    model_class: ModelClass, data: TransitionDataset
) -> tuple[int, Factorization]:
    """
    Exact maximum-likelihood oracle over a finite class.

    Returns:
        tuple[int, Factorization]: Index and candidate maximizing the
        log-likelihood; ties go to the lowest index.
    """
    index = select_index(log_likelihoods(model_class, data))
    return index, model_class.candidates[index]


# ===========================================
# Total-variation diagnostics
# ===========================================
def expected_sq_tv(
    model: TransitionLike, truth: TransitionLike, dist: OccupancyMeasure
) -> float:
    """
    E_{(s,a) ~ dist} ||P_model(.|s,a) - P_truth(.|s,a)||_1^2, a value in [0, 4].
    """
    model_transition = as_transition(model)
    truth_transition = as_transition(truth)
    if model_transition.shape != truth_transition.shape:
        raise StructuralError("Model and truth kernels have different shapes.")
    l1 = np.abs(model_transition - truth_transition).sum(axis=2)
    return float(np.sum(dist.dist * l1**2))


def is_realizable(model_class: ModelClass, env: LowRankMDP) -> bool:
    """
    True when ``candidates[true_index]`` induces the environment's kernel.
    """
    if model_class.true_index is None:
        return False
    candidate = model_class.transitions[model_class.true_index]
    return bool(
        np.abs(candidate - env.transition).max() <= MDPUtils.stochastic_tolerance()
    )


def sampling_occupancy(env: LowRankMDP, policy: Policy) -> OccupancyMeasure:
    """
    d^{pi bar}(s,a) = d^pi(s) U(a): roll-in with ``policy``, uniform action.
    """
    states = occupancy(env.transition, policy, env.init_dist, env.gamma)
    return OccupancyMeasure(
        dist=np.repeat(
            states.state_marginal[:, None] / env.num_actions, env.num_actions, axis=1
        )
    )


# ===========================================
# MLE decay curve
# ===========================================
class DecayPoint(ReplearnBaseModel):
    n: int = Field(gt=0)
    mean_sq_tv: float
    median_sq_tv: float
    truth_selected_fraction: float


class DecayCurve(ReplearnBaseModel):
    """
    Expected squared TV error of the MLE under rho_n, averaged over seeds.
    """

    points: list[DecayPoint]

    def loglog_slope(self) -> float:
        """
        Least-squares slope of ln(mean error) against ln(n) over the prefix of
        points with non-zero error.
        """
        prefix: list[DecayPoint] = []
        for point in self.points:
            if point.mean_sq_tv <= 0.0:
                break
            prefix.append(point)
        if len(prefix) < 2:
            raise ReplearnValidationError(
                "Need at least two non-zero points to fit a log-log slope."
            )
        x = np.log([point.n for point in prefix])
        y = np.log([point.mean_sq_tv for point in prefix])
        slope, _ = np.polyfit(x, y, 1)
        return float(slope)


def _round_robin_counts(n: int, k: int) -> list[int]:
    """
    How many of the first n draws used each of k policies taken in turn.
    """
    return [n // k + (i < n % k) for i in range(k)]


def mle_decay_curve(
    env: LowRankMDP,
    model_class: ModelClass,
    sampler_policies: Sequence[Policy],
    n_grid: Sequence[int],
    seeds: Sequence[int],
) -> DecayCurve:
    """
    Fit the MLE on growing prefixes of a sampled dataset and measure its error.

    Triple j is drawn from d^{pi_j bar} with pi_j = sampler_policies[j mod k].
    For each n in the grid the MLE is fit on the first n triples and scored by
    expected_sq_tv under rho_n = (1/n) sum_{j<n} d^{pi_j bar}.
    """
    if not sampler_policies:
        raise ReplearnValidationError("At least one sampler policy is required.")
    if not seeds:
        raise ReplearnValidationError("At least one seed is required.")
    grid = sorted(set(int(n) for n in n_grid))
    if not grid or grid[0] <= 0:
        raise ReplearnValidationError("n_grid must contain positive sizes.")
    horizon = grid[-1]

    sampling = [sampling_occupancy(env, policy) for policy in sampler_policies]
    rhos = {
        n: OccupancyMeasure.mixture(sampling, _round_robin_counts(n, len(sampling)))
        for n in grid
    }

    errors = np.zeros((len(seeds), len(grid)))
    truth_hits = np.zeros((len(seeds), len(grid)))
    for row, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        triples = [
            sample_triple(
                env.transition,
                sampler_policies[j % len(sampler_policies)],
                env.init_dist,
                env.gamma,
                rng,
            ).transition
            for j in range(horizon)
        ]
        dataset = TransitionDataset.from_triples(
            triples, env.num_states, env.num_actions, Provenance.ONLINE
        )
        for column, n in enumerate(grid):
            index, _ = mle_fit(model_class, dataset.head(n))
            errors[row, column] = expected_sq_tv(
                model_class.transitions[index], env.transition, rhos[n]
            )
            truth_hits[row, column] = float(index == model_class.true_index)
        logger.debug("MLE decay curve: seed %d done.", seed)

    return DecayCurve(
        points=[
            DecayPoint(
                n=n,
                mean_sq_tv=float(errors[:, column].mean()),
                median_sq_tv=float(np.median(errors[:, column])),
                truth_selected_fraction=float(truth_hits[:, column].mean()),
            )
            for column, n in enumerate(grid)
        ]
    )
