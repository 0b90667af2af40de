"""
Tests for the value-iteration planner.
"""
from unittest.mock import patch

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replearn.exceptions import (
    InvalidModelError,
    PlannerNonConvergenceError,
    ReplearnValidationError,
)
from replearn.harness.checks import random_env
from replearn.harness.environments import comblock_combination, comblock_optimal_value
from replearn.lowrank.mdp import expected_value, policy_value
from replearn.planning.planner import (
    PlanningProblem,
    best_deterministic_policy,
    greedy_policy,
    iteration_cap,
    plan,
    value_iteration,
)


class TestPlanningProblem:
    """
    Tests for PlanningProblem validation.
    """

    def test_reward_bound(self, small_env):
        """Test that effective rewards beyond 3 in magnitude are rejected."""
        with pytest.raises(ReplearnValidationError):
            PlanningProblem(
                transition=small_env.transition,
                reward_effective=np.full((4, 2), 3.5),
                gamma=0.9,
            )

    def test_reward_shape(self, small_env):
        """Test that the reward must be |S| x |A|."""
        with pytest.raises(ReplearnValidationError):
            PlanningProblem(
                transition=small_env.transition,
                reward_effective=np.zeros((4, 3)),
                gamma=0.9,
            )

    def test_invalid_transition(self, small_env):
        """Test that a non-stochastic kernel raises InvalidModelError."""
        with pytest.raises(InvalidModelError):
            PlanningProblem(
                transition=0.5 * np.array(small_env.transition),
                reward_effective=np.zeros((4, 2)),
                gamma=0.9,
            )

    def test_initial_values_shape(self, small_env):
        """Test that a warm start must have one value per state."""
        with pytest.raises(ReplearnValidationError):
            PlanningProblem(
                transition=small_env.transition,
                reward_effective=np.zeros((4, 2)),
                gamma=0.9,
                initial_values=np.zeros(3),
            )


class TestValueIteration:
    """
    Tests for value iteration and greedy extraction.
    """

    def test_gamma_zero(self, small_env):
        """Test that with gamma = 0 the plan is greedy on the reward."""
        result = value_iteration(
            PlanningProblem(
                transition=small_env.transition,
                reward_effective=small_env.reward,
                gamma=0.0,
            )
        )

        np.testing.assert_array_equal(
            result.policy.greedy_actions(), np.argmax(small_env.reward, axis=1)
        )
        np.testing.assert_allclose(result.values, small_env.reward.max(axis=1))
        assert result.iterations == 1

    def test_ties_break_low(self, small_env):
        """Test that constant rewards give action 0 everywhere."""
        policy = plan(small_env.transition, np.full((4, 2), 0.05), 0.9)

        np.testing.assert_array_equal(policy.greedy_actions(), [0, 0, 0, 0])

    def test_greedy_tolerance(self):
        """Test that near-ties within round-off go to the lowest index."""
        q_values = np.array([[1.0, 1.0 + 1e-14], [0.0, 1.0]])

        policy = greedy_policy(q_values)

        np.testing.assert_array_equal(policy.greedy_actions(), [0, 1])

    def test_accuracy(self, small_env):
        """Test that values are within the tolerance of a tight solve."""
        loose = value_iteration(
            PlanningProblem(
                transition=small_env.transition,
                reward_effective=small_env.reward,
                gamma=0.9,
                tolerance=1e-4,
            )
        )
        tight = value_iteration(
            PlanningProblem(
                transition=small_env.transition,
                reward_effective=small_env.reward,
                gamma=0.9,
                tolerance=1e-12,
            )
        )

        assert np.abs(loose.values - tight.values).max() <= 1e-4

    def test_warm_start(self, small_env):
        """Test that starting from the solution converges immediately."""
        problem = PlanningProblem(
            transition=small_env.transition,
            reward_effective=small_env.reward,
            gamma=0.9,
        )
        cold = value_iteration(problem)
        warm = value_iteration(
            problem.model_copy(update={"initial_values": cold.values})
        )

        assert warm.iterations < cold.iterations
        np.testing.assert_array_equal(
            warm.policy.greedy_actions(), cold.policy.greedy_actions()
        )

    def test_iteration_cap(self, small_env):
        """Test that exceeding the iteration cap raises."""
        problem = PlanningProblem(
            transition=small_env.transition,
            reward_effective=small_env.reward,
            gamma=0.9,
        )
        with patch("replearn.planning.planner.iteration_cap", return_value=2):
            with pytest.raises(PlannerNonConvergenceError):
                value_iteration(problem)

    def test_iteration_cap_formula(self):
        """Test the iteration cap 10 ln(1/tol) / (1 - gamma) + 100."""
        assert iteration_cap(1e-8, 0.9) == int(10 * np.log(1e8) / 0.1) + 100

    def test_plan_accepts_factorization(self, small_env):
        """Test that a factorization and its induced tensor plan alike."""
        from_factorization = plan(small_env.factorization, small_env.reward, 0.9)
        from_tensor = plan(small_env.transition, small_env.reward, 0.9)

        np.testing.assert_array_equal(from_factorization.probs, from_tensor.probs)

    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_matches_enumeration(self, seed):
        """Test that the planner is within 2 * tol of the best deterministic policy."""
        env = random_env(np.random.default_rng(seed), max_states=4, max_actions=3)
        tolerance = 1e-8

        planned = plan(env.transition, env.reward, env.gamma, tolerance)
        _, best = best_deterministic_policy(
            env.transition, env.reward, env.gamma, env.init_dist
        )
        value = expected_value(
            env.transition, env.reward, planned, env.gamma, env.init_dist
        )

        assert best - value <= 2 * tolerance

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("offset", [-2.0, 0.5, 2.0])
    def test_reward_offset(self, seed, offset):
        """Test that a constant reward shift leaves the greedy actions unchanged."""
        env = random_env(np.random.default_rng(seed), max_states=5, max_actions=3)

        base = plan(env.transition, env.reward, env.gamma, 1e-10)
        shifted = plan(env.transition, env.reward + offset, env.gamma, 1e-10)

        np.testing.assert_array_equal(base.greedy_actions(), shifted.greedy_actions())


class TestComblockPlanning:
    """
    Tests for planning in the combination lock.
    """

    def test_optimal_policy(self, comblock):
        """Test that planning on the truth opens the lock with value V*."""
        env, _ = comblock

        policy = plan(env.transition, env.reward, env.gamma, 1e-10)

        combination = comblock_combination(env)
        np.testing.assert_array_equal(policy.greedy_actions()[:3], combination)
        assert policy_value(env, policy) == pytest.approx(
            comblock_optimal_value(3, 0.9, 0.9), abs=1e-10
        )
