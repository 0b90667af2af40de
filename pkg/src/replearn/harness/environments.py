"""
Environment generators. All parameters here are artifact choices for desk-scale
experiments: latent-variable models (phi a distribution over latent states, mu
columns emission distributions), block MDPs, combination locks and fully random
low-rank MDPs.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from replearn.exceptions import GenerationError
from replearn.harness.decoys import assemble_class, make_model_class
from replearn.harness.models import EnvKind, EnvSpec
from replearn.lowrank.mdp import validate_factorization
from replearn.lowrank.models import Factorization, LowRankMDP, ModelClass

logger = logging.getLogger(__name__)


def _point_mass(num_states: int, state: int = 0) -> np.ndarray:
    init_dist = np.zeros(num_states)
    init_dist[state] = 1.0
    return init_dist


def _check_generated(factorization: Factorization) -> None:
    report = validate_factorization(factorization)
    if not report.is_valid:
        raise GenerationError(
            f"Generated factorization violates {report.invariants()}."
        )


def _check_latent_spec(spec: EnvSpec) -> None:
    if spec.dim > spec.num_states:
        raise GenerationError(
            f"Latent dimension {spec.dim} exceeds the state count {spec.num_states}."
        )


# ===========================================
# Latent-variable family
# ===========================================
def random_factorization(
    num_states: int,
    num_actions: int,
    dim: int,
    rng: np.random.Generator,
    concentration: float = 1.0,
    emission_concentration: float = 1.0,
) -> Factorization:
    """
    phi(s,a) ~ Dirichlet(concentration) over d latents and every mu column an
    emission distribution ~ Dirichlet(emission_concentration) over states.
    """
    phi = rng.dirichlet(np.full(dim, concentration), size=num_states * num_actions)
    mu = rng.dirichlet(np.full(num_states, emission_concentration), size=dim).T
    return Factorization(
        num_states=num_states, num_actions=num_actions, dim=dim, mu=mu, phi=phi
    )


def block_factorization(
    num_states: int,
    num_actions: int,
    dim: int,
    rng: np.random.Generator,
    emission_concentration: float = 1.0,
) -> Factorization:
    """
    One-hot phi (an exact latent decoder) with emission supports forming a
    partition of the states into d disjoint blocks.
    """
    latents = rng.integers(dim, size=num_states * num_actions)
    phi = np.eye(dim)[latents]
    blocks = np.array_split(rng.permutation(num_states), dim)
    mu = np.zeros((num_states, dim))
    for latent, block in enumerate(blocks):
        mu[block, latent] = rng.dirichlet(np.full(block.size, emission_concentration))
    return Factorization(
        num_states=num_states, num_actions=num_actions, dim=dim, mu=mu, phi=phi
    )


def _latent_env(
    spec: EnvSpec, factorization: Factorization, rng: np.random.Generator
) -> tuple[LowRankMDP, ModelClass]:
    _check_generated(factorization)
    reward = (1.0 - spec.gamma) * rng.random((spec.num_states, spec.num_actions))
    init_dist = (
        rng.dirichlet(np.ones(spec.num_states))
        if spec.kind is EnvKind.RANDOM_LOWRANK
        else _point_mass(spec.num_states)
    )
    env = LowRankMDP(
        factorization=factorization,
        reward=reward,
        gamma=spec.gamma,
        init_dist=init_dist,
    )
    model_class = make_model_class(
        factorization, spec.decoys, spec.decoy_strategy, rng, spec.decoy_min_weight
    )
    return env, model_class


def make_latent_variable_env(spec: EnvSpec) -> tuple[LowRankMDP, ModelClass]:
    """
    Latent-variable low-rank MDP and a realizable class around it.

    ``kind=block`` gives the block-MDP sub-case with one-hot phi; any other
    latent kind draws phi from a Dirichlet. Reward is (1-gamma) U[0,1] and the
    start state is 0 (random for ``random_lowrank``).

    Raises:
        GenerationError: If d > |S| or the generated model is invalid.
    """
    _check_latent_spec(spec)
    rng = np.random.default_rng(spec.seed)
    if spec.kind is EnvKind.BLOCK:
        factorization = block_factorization(
            spec.num_states,
            spec.num_actions,
            spec.dim,
            rng,
            spec.emission_concentration,
        )
    elif spec.dim == 1:
        factorization = Factorization(
            num_states=spec.num_states,
            num_actions=spec.num_actions,
            dim=1,
            mu=rng.dirichlet(
                np.full(spec.num_states, spec.emission_concentration)
            )[:, None],
            phi=np.ones((spec.num_states * spec.num_actions, 1)),
        )
    else:
        factorization = random_factorization(
            spec.num_states,
            spec.num_actions,
            spec.dim,
            rng,
            spec.concentration,
            spec.emission_concentration,
        )
    return _latent_env(spec, factorization, rng)


def random_lowrank(spec: EnvSpec) -> tuple[LowRankMDP, ModelClass]:
    """
    Fully random low-rank MDP with a random initial distribution.
    """
    random_spec = spec.model_copy(update={"kind": EnvKind.RANDOM_LOWRANK})
    return make_latent_variable_env(random_spec)


# ===========================================
# Combination lock
# ===========================================
def comblock_optimal_value(lock_length: int, gamma: float, p_stay: float) -> float:
    """
    gamma^(H-1) (1 - gamma) / (1 - gamma p_stay).
    """
    return gamma ** (lock_length - 1) * (1.0 - gamma) / (1.0 - gamma * p_stay)


def comblock_factorization(
    lock_length: int,
    num_actions: int,
    combination: Sequence[int],
    p_stay: float,
) -> Factorization:
    """
    Chain of ``lock_length`` good states and a dead state (index H). The
    correct action advances (or, at the last good state, stays with
    probability ``p_stay``); any other action leads to the dead state. mu is
    the identity and phi(s,a) the next-state distribution.
    """
    num_states = lock_length + 1
    dead = lock_length
    next_states = np.zeros((num_states, num_actions, num_states))
    next_states[:, :, dead] = 1.0
    for state, correct in enumerate(combination):
        next_states[state, correct, dead] = 0.0
        if state < lock_length - 1:
            next_states[state, correct, state + 1] = 1.0
        else:
            next_states[state, correct, state] = p_stay
            next_states[state, correct, dead] = 1.0 - p_stay
    return Factorization(
        num_states=num_states,
        num_actions=num_actions,
        dim=num_states,
        mu=np.eye(num_states),
        phi=next_states.reshape(num_states * num_actions, num_states),
    )


def make_comblock_env(
    lock_length: int,
    num_actions: int,
    gamma: float,
    p_stay: float = 0.9,
    seed: int = 0,
    decoys: int = 3,
) -> tuple[LowRankMDP, ModelClass]:
    """
    Combination lock with a seed-drawn combination; reward (1 - gamma) for the
    correct action at the last good state. Decoys are alternative combinations.

    Raises:
        GenerationError: If H < 2, |A| < 2 or there are not enough distinct
        combinations for the requested decoys.
    """
    if lock_length < 2:
        raise GenerationError(f"Lock length must be >= 2, got {lock_length}.")
    if num_actions < 2 or decoys >= num_actions**lock_length:
        raise GenerationError("Not enough distinct combinations for the decoys.")
    rng = np.random.default_rng(seed)
    combination = rng.integers(num_actions, size=lock_length)
    truth = comblock_factorization(lock_length, num_actions, combination, p_stay)
    _check_generated(truth)

    num_states = lock_length + 1
    reward = np.zeros((num_states, num_actions))
    reward[lock_length - 1, combination[-1]] = 1.0 - gamma
    env = LowRankMDP(
        factorization=truth,
        reward=reward,
        gamma=gamma,
        init_dist=_point_mass(num_states),
    )

    alternatives = [
        comblock_factorization(lock_length, num_actions, other, p_stay)
        for other in _alternative_combinations(combination, num_actions, decoys, rng)
    ]
    logger.debug("Comblock combination %s.", combination.tolist())
    return env, assemble_class(truth, alternatives, rng)


def _alternative_combinations(
    combination: np.ndarray,
    num_actions: int,
    count: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """
    Combinations differing from the truth in one position first, in random
    order, then fully random distinct combinations.
    """
    single_changes = []
    for position in range(combination.size):
        for action in range(num_actions):
            if action != combination[position]:
                other = combination.copy()
                other[position] = action
                single_changes.append(other)
    order = rng.permutation(len(single_changes))
    chosen = [single_changes[index] for index in order[:count]]
    seen = {tuple(int(a) for a in other) for other in [combination, *chosen]}
    while len(chosen) < count:
        other = rng.integers(num_actions, size=combination.size)
        key = tuple(int(a) for a in other)
        if key not in seen:
            seen.add(key)
            chosen.append(other)
    return chosen


def comblock_combination(env: LowRankMDP) -> list[int]:
    """
    Recover the correct action per good state from a comblock environment.
    """
    lock_length = env.num_states - 1
    return [
        int(np.argmin(env.transition[state, :, lock_length]))
        for state in range(lock_length)
    ]


# ===========================================
# Dispatch
# ===========================================
def make_env(spec: EnvSpec) -> tuple[LowRankMDP, ModelClass]:
    if spec.kind is EnvKind.COMBLOCK:
        return make_comblock_env(
            spec.lock_length,
            spec.num_actions,
            spec.gamma,
            spec.p_stay,
            spec.seed,
            spec.decoys,
        )
    if spec.kind is EnvKind.RANDOM_LOWRANK:
        return random_lowrank(spec)
    return make_latent_variable_env(spec)


def optimal_value(spec: EnvSpec, env: LowRankMDP) -> Optional[float]:
    """
    Analytic optimal value where one is known (comblock), else None.
    """
    if spec.kind is EnvKind.COMBLOCK:
        return comblock_optimal_value(spec.lock_length, spec.gamma, spec.p_stay)
    return None
