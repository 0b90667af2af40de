"""
Tests for the environment generators, decoy classes and the baselines.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replearn.exceptions import GenerationError, ReplearnValidationError
from replearn.harness.baselines import baseline_eps_greedy, baseline_uniform
from replearn.harness.decoys import (
    graded_weights,
    make_model_class,
    merge_latents,
    perturb_emissions,
    permute_latents,
)
from replearn.harness.environments import (
    comblock_combination,
    comblock_optimal_value,
    make_comblock_env,
    make_env,
    make_latent_variable_env,
    optimal_value,
    random_factorization,
)
from replearn.harness.models import DecoyStrategy, EnvKind, EnvSpec
from replearn.lowrank.mdp import (
    induced_transition,
    policy_value,
    validate_factorization,
    value_of_policy,
)
from replearn.lowrank.modelclass import is_realizable
from replearn.lowrank.models import ModelClass, Policy
from replearn.offline.coverage import is_one_hot
from replearn.online.models import UcbConfig
from replearn.planning.planner import plan


def distinct_kernels(model_class: ModelClass) -> bool:
    kernels = model_class.transitions
    return all(
        np.abs(kernels[i] - kernels[j]).max() > 1e-6
        for i in range(len(kernels))
        for j in range(i)
    )


class TestLatentVariable:
    """
    Tests for the latent-variable and block generators.
    """

    @given(
        seed=st.integers(min_value=0, max_value=10_000),
        dim=st.integers(min_value=1, max_value=4),
    )
    @settings(max_examples=20, deadline=None)
    def test_valid_and_realizable(self, seed, dim):
        """Test that generated environments validate and their class is realizable."""
        env, model_class = make_latent_variable_env(
            EnvSpec(num_states=5, num_actions=2, dim=dim, decoys=3, seed=seed)
        )

        assert validate_factorization(env.factorization).is_valid
        assert is_realizable(model_class, env)
        assert model_class.size == 4
        assert distinct_kernels(model_class)

    def test_reward_and_start(self, latent_env):
        """Test that rewards lie in [0, 1 - gamma] and the start state is 0."""
        env, _ = latent_env

        assert env.reward.min() >= 0.0
        assert env.reward.max() <= 1.0 - env.gamma
        np.testing.assert_array_equal(env.init_dist, [1, 0, 0, 0, 0, 0])

    def test_dim_one(self):
        """Test that d = 1 gives constant unit features."""
        env, _ = make_latent_variable_env(
            EnvSpec(num_states=4, num_actions=2, dim=1, decoys=2, seed=0)
        )

        np.testing.assert_array_equal(env.factorization.phi, np.ones((8, 1)))

    def test_block_is_one_hot(self, block_env):
        """Test that block environments have an exact one-hot decoder."""
        env, model_class = block_env

        assert is_one_hot(env.factorization.phi)
        assert validate_factorization(env.factorization).is_valid
        assert is_realizable(model_class, env)

    def test_dim_exceeds_states(self):
        """Test that d > |S| raises GenerationError."""
        with pytest.raises(GenerationError):
            make_latent_variable_env(EnvSpec(num_states=2, num_actions=2, dim=3))

    def test_seeded(self):
        """Test that the same spec generates the same environment."""
        spec = EnvSpec(num_states=5, num_actions=2, dim=2, seed=42)
        first, first_class = make_env(spec)
        second, second_class = make_env(spec)

        np.testing.assert_array_equal(first.transition, second.transition)
        assert first_class.true_index == second_class.true_index

    def test_random_lowrank_start(self):
        """Test that random low-rank environments draw the initial distribution."""
        env, _ = make_env(
            EnvSpec(kind=EnvKind.RANDOM_LOWRANK, num_states=5, dim=2, seed=1)
        )

        assert np.count_nonzero(env.init_dist) > 1


class TestDecoys:
    """
    Tests for decoy strategies.
    """

    def test_permute_keeps_mu(self, rng):
        """Test that latent permutation only reorders phi columns."""
        truth = random_factorization(5, 2, 3, rng)

        decoy = permute_latents(truth, rng)

        np.testing.assert_array_equal(decoy.mu, truth.mu)
        np.testing.assert_array_equal(
            np.sort(decoy.phi, axis=1), np.sort(truth.phi, axis=1)
        )

    def test_perturb_keeps_phi(self, rng):
        """Test that emission perturbation keeps phi and valid columns."""
        truth = random_factorization(5, 2, 3, rng)

        decoy = perturb_emissions(truth, rng)

        np.testing.assert_array_equal(decoy.phi, truth.phi)
        assert validate_factorization(decoy).is_valid

    def test_merge_pads(self, rng):
        """Test that merged decoys keep the dimension via a zero column."""
        truth = random_factorization(5, 2, 3, rng)

        decoy = merge_latents(truth, rng)

        assert decoy.dim == 3
        np.testing.assert_array_equal(decoy.phi[:, -1], 0.0)
        assert validate_factorization(decoy).is_valid

    @pytest.mark.parametrize("strategy", [DecoyStrategy.PERMUTE, DecoyStrategy.MERGE])
    def test_needs_two_latents(self, strategy, rng):
        """Test that latent-structure decoys need d >= 2."""
        truth = random_factorization(4, 2, 1, rng)
        maker = permute_latents if strategy is DecoyStrategy.PERMUTE else merge_latents

        with pytest.raises(GenerationError):
            maker(truth, rng)

    @pytest.mark.parametrize("strategy", list(DecoyStrategy))
    def test_strategies_realizable(self, strategy, rng):
        """Test that every strategy yields a realizable class of distinct kernels."""
        truth = random_factorization(5, 2, 3, rng)

        model_class = make_model_class(truth, 4, strategy, rng)

        assert model_class.size == 5
        assert model_class.true_index is not None
        np.testing.assert_allclose(
            model_class.transitions[model_class.true_index],
            induced_transition(truth),
            atol=1e-12,
        )
        assert distinct_kernels(model_class)

    def test_zero_decoys(self, rng):
        """Test that no decoys gives the singleton class."""
        truth = random_factorization(4, 2, 2, rng)

        model_class = make_model_class(truth, 0, DecoyStrategy.MIXED, rng)

        assert model_class.size == 1
        assert model_class.true_index == 0

    def test_graded_distances(self, rng):
        """Test that graded decoys sit within their weight of the truth."""
        truth = random_factorization(5, 2, 3, rng)
        weights = graded_weights(6, 1e-3)

        model_class = make_model_class(truth, 6, DecoyStrategy.GRADED, rng, 1e-3)

        decoys = [
            kernel
            for index, kernel in enumerate(model_class.transitions)
            if index != model_class.true_index
        ]
        assert weights[0] == 1.0
        assert weights[-1] == pytest.approx(1e-3)
        for kernel, weight in zip(decoys, weights):
            l1 = np.abs(kernel - induced_transition(truth)).sum(axis=2)
            assert 0.0 < l1.max() <= 2.0 * weight + 1e-12


class TestComblock:
    """
    Tests for the combination lock.
    """

    @pytest.mark.parametrize(
        "lock_length, num_actions, gamma, p_stay",
        [(2, 2, 0.9, 0.9), (3, 2, 0.9, 0.9), (4, 3, 0.95, 0.5), (5, 2, 0.8, 1.0)],
    )
    def test_optimal_value(self, lock_length, num_actions, gamma, p_stay):
        """Test that the correct combination attains the closed-form V*."""
        env, _ = make_comblock_env(lock_length, num_actions, gamma, p_stay, seed=3)
        combination = comblock_combination(env)
        actions = [*combination, 0]

        values, _ = value_of_policy(
            env.transition,
            env.reward,
            Policy.deterministic(actions, num_actions),
            env.gamma,
        )

        assert values[0] == pytest.approx(
            comblock_optimal_value(lock_length, gamma, p_stay), abs=1e-10
        )

    def test_structure(self, comblock):
        """Test the shape, the identity mu and the single rewarded pair."""
        env, model_class = comblock

        assert env.num_states == 4
        assert env.dim == 4
        np.testing.assert_array_equal(env.factorization.mu, np.eye(4))
        assert np.count_nonzero(env.reward) == 1
        assert validate_factorization(env.factorization).is_valid
        assert is_realizable(model_class, env)
        assert distinct_kernels(model_class)

    def test_wrong_action_is_absorbing(self, comblock):
        """Test that a wrong action leads to the dead state, which absorbs."""
        env, _ = comblock
        combination = comblock_combination(env)
        wrong = 1 - combination[0]

        assert env.transition[0, wrong, 3] == 1.0
        np.testing.assert_array_equal(env.transition[3, :, 3], [1.0, 1.0])

    def test_planning_opens_lock(self, comblock):
        """Test that the optimal policy follows the combination."""
        env, _ = comblock

        policy = plan(env.transition, env.reward, env.gamma, 1e-10)

        np.testing.assert_array_equal(
            policy.greedy_actions()[:3], comblock_combination(env)
        )

    def test_single_change_decoys_first(self):
        """Test that decoys differ from the truth in one position when possible."""
        env, model_class = make_comblock_env(4, 3, 0.9, seed=5, decoys=4)
        truth = comblock_combination(env)

        for index, candidate in enumerate(model_class.candidates):
            if index == model_class.true_index:
                continue
            kernel = induced_transition(candidate)
            decoy = [int(np.argmin(kernel[state, :, 4])) for state in range(4)]
            assert sum(a != b for a, b in zip(decoy, truth)) == 1

    @pytest.mark.parametrize(
        "lock_length, num_actions, decoys",
        [(1, 2, 0), (3, 1, 0), (2, 2, 4)],
    )
    def test_invalid(self, lock_length, num_actions, decoys):
        """Test that degenerate locks and too many decoys raise GenerationError."""
        with pytest.raises(GenerationError):
            make_comblock_env(lock_length, num_actions, 0.9, decoys=decoys)

    def test_dispatch(self):
        """Test that make_env and optimal_value route comblock specs."""
        spec = EnvSpec(kind=EnvKind.COMBLOCK, lock_length=3, num_actions=2, seed=0)

        env, _ = make_env(spec)

        assert env.num_states == 4
        assert optimal_value(spec, env) == pytest.approx(
            comblock_optimal_value(3, 0.9, 0.9)
        )
        assert optimal_value(EnvSpec(), env) is None


class TestBaselines:
    """
    Tests for the epsilon-greedy and uniform control conditions.
    """

    @pytest.mark.parametrize("epsilon", [-0.1, 1.5])
    def test_invalid_epsilon(self, latent_env, epsilon):
        """Test that epsilon outside [0, 1] is rejected."""
        env, model_class = latent_env

        with pytest.raises(ReplearnValidationError):
            baseline_eps_greedy(env, model_class, 5, epsilon)

    def test_greedy_with_truth(self, small_env, rng):
        """Test that with the true model alone greedy is optimal from episode 1."""
        model_class = ModelClass(candidates=[small_env.factorization], true_index=0)
        optimal = plan(small_env.transition, small_env.reward, small_env.gamma, 1e-10)

        policies, diagnostics = baseline_eps_greedy(
            small_env, model_class, 3, 0.0, rng
        )

        assert len(policies) == 3
        assert diagnostics.records[0].value_pin == pytest.approx(
            policy_value(small_env, optimal), abs=1e-6
        )

    def test_uniform(self, latent_env, rng):
        """Test that the uniform baseline plays the uniform policy every episode."""
        env, model_class = latent_env

        policies, diagnostics = baseline_uniform(
            env, model_class, 4, rng, UcbConfig(seed=9)
        )

        assert len(diagnostics.records) == 4
        for policy in policies:
            np.testing.assert_allclose(policy.probs, 0.5)
