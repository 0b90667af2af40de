"""
Configuration file for pytest.
This file contains fixtures and setup code for tests.
"""
import numpy as np
import pytest

from replearn.harness.environments import (
    make_comblock_env,
    make_latent_variable_env,
    random_factorization,
)
from replearn.harness.models import EnvKind, EnvSpec
from replearn.lowrank.models import LowRankMDP, ModelClass, Policy


@pytest.fixture
def rng() -> np.random.Generator:
    """
    Creates a fixed-seed generator.
    """
    return np.random.default_rng(1234)


@pytest.fixture
def small_env(rng) -> LowRankMDP:
    """
    Creates a random 4-state, 2-action, rank-2 environment.
    """
    return LowRankMDP(
        factorization=random_factorization(4, 2, 2, rng),
        reward=0.1 * rng.random((4, 2)),
        gamma=0.9,
        init_dist=np.array([1.0, 0.0, 0.0, 0.0]),
    )


@pytest.fixture
def stochastic_policy(rng, small_env) -> Policy:
    return Policy(
        probs=rng.dirichlet(np.ones(small_env.num_actions), size=small_env.num_states)
    )


@pytest.fixture
def latent_env() -> tuple[LowRankMDP, ModelClass]:
    """
    Creates a realizable latent-variable environment with three decoys.
    """
    return make_latent_variable_env(
        EnvSpec(num_states=6, num_actions=2, dim=2, decoys=3, seed=7)
    )


@pytest.fixture
def block_env() -> tuple[LowRankMDP, ModelClass]:
    return make_latent_variable_env(
        EnvSpec(kind=EnvKind.BLOCK, num_states=6, num_actions=2, dim=3, seed=3)
    )


@pytest.fixture
def comblock() -> tuple[LowRankMDP, ModelClass]:
    """
    Creates a length-3 combination lock with two actions and three decoys.
    """
    return make_comblock_env(lock_length=3, num_actions=2, gamma=0.9, seed=0)
