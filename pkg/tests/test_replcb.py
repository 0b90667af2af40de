"""
Tests for the offline algorithm and the coverage measures.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from replearn.exceptions import (
    ConfigurationError,
    ReplearnValidationError,
    StructuralError,
)
from replearn.harness.checks import (
    comparator_policies,
    pessimism_violations,
    random_env,
    random_policy,
)
from replearn.harness.environments import comblock_combination
from replearn.lowrank.mdp import (
    expected_value,
    occupancy,
    policy_value,
    tabular_factorization,
)
from replearn.lowrank.models import (
    LowRankMDP,
    ModelClass,
    OccupancyMeasure,
    Policy,
    Provenance,
)
from replearn.offline.coverage import (
    coverage_report,
    covered_policies,
    density_ratio,
    distribution_shift_gap,
    generalized_max_eigenvalue,
    is_one_hot,
    mixed_coverage_curve,
    omega,
    relative_condition_number,
)
from replearn.offline.models import OfflineSpec, Unbounded, is_finite
from replearn.offline.replcb import (
    generate_offline_dataset,
    lcb_suboptimality_bound,
    offline_schedules,
    pessimism_margin,
    pessimism_slack,
    run_rep_lcb,
)
from replearn.planning.planner import plan


def tabular_env(env: LowRankMDP) -> LowRankMDP:
    """The same kernel written with one-hot (s, a) features."""
    return LowRankMDP(
        factorization=tabular_factorization(env.transition),
        reward=env.reward,
        gamma=env.gamma,
        init_dist=env.init_dist,
    )


class TestOmega:
    """
    Tests for the behavior-policy bound omega.
    """

    def test_uniform(self):
        """Test that the uniform policy over four actions has omega 4."""
        assert omega(Policy.uniform(3, 4)) == pytest.approx(4.0)

    def test_skewed(self):
        """Test that omega is one over the smallest probability."""
        assert omega(Policy(probs=[[0.25, 0.75], [0.5, 0.5]])) == pytest.approx(4.0)

    def test_deterministic(self):
        """Test that a zero probability makes omega unbounded."""
        value = omega(Policy.deterministic([0, 1], 2))

        assert value is Unbounded.INFINITY
        assert not is_finite(value)
        assert str(value) == "inf"


class TestRelativeConditionNumber:
    """
    Tests for the generalized eigenvalue and the relative condition number.
    """

    def test_diagonal_pencil(self):
        """Test that diag(1, 0) against diag(0.5, 1) gives 2."""
        value = generalized_max_eigenvalue(np.diag([1.0, 0.0]), np.diag([0.5, 1.0]))

        assert value == pytest.approx(2.0)

    def test_null_space_leak(self):
        """Test that mass on the null space of the base is unbounded."""
        value = generalized_max_eigenvalue(np.diag([0.0, 1.0]), np.diag([1.0, 0.0]))

        assert value is Unbounded.INFINITY

    def test_restricted_to_range(self):
        """Test that a target inside the range of a singular base stays finite."""
        value = generalized_max_eigenvalue(np.diag([3.0, 0.0]), np.diag([1.0, 0.0]))

        assert value == pytest.approx(3.0)

    def test_pencil_shapes(self):
        """Test that mismatched matrices raise StructuralError."""
        with pytest.raises(StructuralError):
            generalized_max_eigenvalue(np.eye(2), np.eye(3))

    def test_self_coverage(self, small_env, stochastic_policy):
        """Test that a distribution covers itself with condition number 1."""
        measure = occupancy(
            small_env.transition,
            stochastic_policy,
            small_env.init_dist,
            small_env.gamma,
        )

        value = relative_condition_number(
            measure, measure, small_env.factorization.phi
        )

        assert value == pytest.approx(1.0, rel=1e-8)

    def test_one_hot_matches_density_ratio(self, small_env):
        """Test that with one-hot features the measure is the density ratio."""
        env = tabular_env(small_env)
        comparator = occupancy(
            env.transition,
            Policy.deterministic([1, 0, 1, 0], 2),
            env.init_dist,
            env.gamma,
        )
        rho = occupancy(env.transition, Policy.uniform(4, 2), env.init_dist, env.gamma)

        assert is_one_hot(env.factorization.phi)
        assert relative_condition_number(
            comparator, rho, env.factorization.phi
        ) == pytest.approx(density_ratio(comparator, rho), rel=1e-8)

    def test_density_ratio_outside_support(self):
        """Test that comparator mass outside rho's support is unbounded."""
        comparator = OccupancyMeasure(dist=[[0.5, 0.5]])
        rho = OccupancyMeasure(dist=[[1.0, 0.0]])

        assert density_ratio(comparator, rho) is Unbounded.INFINITY

    def test_distribution_shift(self, small_env):
        """Test that scaling rho by the condition number dominates d^pi."""
        comparator = occupancy(
            small_env.transition,
            Policy.deterministic([0, 0, 0, 0], 2),
            small_env.init_dist,
            small_env.gamma,
        )
        rho = occupancy(
            small_env.transition,
            Policy.uniform(4, 2),
            small_env.init_dist,
            small_env.gamma,
        )
        phi = small_env.factorization.phi
        scale = relative_condition_number(comparator, rho, phi)

        assert is_finite(scale)
        assert distribution_shift_gap(comparator, rho, phi, scale) >= -1e-10

    def test_distribution_shift_unbounded(self, small_env):
        """Test that an unbounded scale is rejected."""
        rho = OccupancyMeasure(dist=np.full((4, 2), 0.125))
        with pytest.raises(ReplearnValidationError):
            distribution_shift_gap(
                rho, rho, small_env.factorization.phi, Unbounded.INFINITY
            )

    @pytest.mark.parametrize("seed", range(20))
    def test_mixing_monotone(self, seed):
        """Test that mixing d^pi into the behavior data never worsens coverage."""
        rng = np.random.default_rng(seed)
        env = random_env(rng, max_states=6, max_actions=3)
        policy = random_policy(env.num_states, env.num_actions, rng)
        behavior = random_policy(env.num_states, env.num_actions, rng)

        curve = mixed_coverage_curve(env, policy, behavior, [0.2, 0.4, 0.6, 0.8, 1.0])

        assert all(is_finite(value) for value in curve)
        for before, after in zip(curve, curve[1:]):
            assert after <= before * (1 + 1e-9) + 1e-9
        assert curve[-1] == pytest.approx(1.0, abs=1e-9)


class TestCoverageReport:
    """
    Tests for the combined coverage report.
    """

    def test_uniform_behavior(self, small_env):
        """Test the report of a policy against itself under uniform behavior."""
        uniform = Policy.uniform(4, 2)

        report = coverage_report(small_env, uniform, uniform)

        assert report.relative_condition_number == pytest.approx(1.0, rel=1e-8)
        assert report.omega == pytest.approx(2.0)
        assert report.tabular_density_ratio is None

    def test_tabular_ratio_reported(self, small_env):
        """Test that one-hot features add the tabular density ratio."""
        report = coverage_report(
            tabular_env(small_env),
            Policy.deterministic([0, 1, 0, 1], 2),
            Policy.uniform(4, 2),
        )

        assert report.tabular_density_ratio == pytest.approx(
            report.relative_condition_number, rel=1e-8
        )

    def test_deterministic_behavior(self, small_env):
        """Test that a deterministic behavior policy has unbounded omega."""
        behavior = Policy.deterministic([0, 0, 0, 0], 2)

        report = coverage_report(small_env, behavior, behavior)

        assert report.omega is Unbounded.INFINITY


class TestOfflineDataset:
    """
    Tests for offline data generation.
    """

    def test_empty(self, small_env, rng):
        """Test that n = 0 gives an empty offline dataset."""
        data = generate_offline_dataset(small_env, Policy.uniform(4, 2), 0, rng)

        assert len(data) == 0
        assert data.provenance is Provenance.OFFLINE

    def test_actions_follow_behavior(self, small_env, rng):
        """Test that recorded actions are drawn from the behavior policy."""
        behavior = Policy.deterministic([1, 1, 1, 1], 2)

        data = generate_offline_dataset(small_env, behavior, 100, rng)

        assert len(data) == 100
        np.testing.assert_array_equal(data.actions, np.ones(100))

    def test_state_law(self, small_env):
        """Test that states follow the behavior policy's state visitation."""
        behavior = Policy.uniform(4, 2)
        data = generate_offline_dataset(
            small_env, behavior, 20_000, np.random.default_rng(3)
        )

        empirical = np.bincount(data.states, minlength=4) / len(data)
        exact = occupancy(
            small_env.transition, behavior, small_env.init_dist, small_env.gamma
        ).state_marginal

        np.testing.assert_allclose(empirical, exact, atol=0.02)


class TestRunRepLcb:
    """
    Tests for the pessimistic offline planner.
    """

    def test_schedules(self):
        """Test the penalty and regularization schedules."""
        alpha, lam = offline_schedules(2, 2.0, 4, 0.1, 0.9)

        assert alpha == pytest.approx(math.sqrt(6 * 0.9 * math.log(40)))
        assert lam == pytest.approx(2 * math.log(40))

    def test_no_penalty_is_optimal(self, small_env, rng):
        """Test that a singleton class with zero penalty returns the optimal policy."""
        behavior = Policy.uniform(4, 2)
        data = generate_offline_dataset(small_env, behavior, 50, rng)
        model_class = ModelClass(candidates=[small_env.factorization], true_index=0)
        spec = OfflineSpec(behavior_policy=behavior, c_alpha=0.0)

        policy, penalty = run_rep_lcb(
            data,
            model_class,
            small_env.reward,
            small_env.gamma,
            small_env.init_dist,
            spec,
        )

        optimal = plan(small_env.transition, small_env.reward, small_env.gamma, 1e-10)
        assert penalty.model_index == 0
        np.testing.assert_array_equal(penalty.table, np.zeros((4, 2)))
        assert policy_value(small_env, policy) == pytest.approx(
            policy_value(small_env, optimal), abs=1e-6
        )

    def test_saturated_penalty(self, small_env, rng):
        """Test that a penalty clamped everywhere leaves the greedy policy unchanged."""
        behavior = Policy.uniform(4, 2)
        data = generate_offline_dataset(small_env, behavior, 20, rng)
        model_class = ModelClass(candidates=[small_env.factorization], true_index=0)
        spec = OfflineSpec(behavior_policy=behavior, c_alpha=1e6)

        policy, penalty = run_rep_lcb(
            data,
            model_class,
            small_env.reward,
            small_env.gamma,
            small_env.init_dist,
            spec,
        )

        np.testing.assert_allclose(penalty.table, 2.0)
        reference = plan(small_env.transition, small_env.reward, small_env.gamma)
        np.testing.assert_array_equal(
            policy.greedy_actions(), reference.greedy_actions()
        )

    def test_deterministic_behavior(self, small_env, rng):
        """Test that a behavior policy with unbounded omega is rejected."""
        behavior = Policy.deterministic([0, 0, 0, 0], 2)
        data = generate_offline_dataset(small_env, behavior, 10, rng)
        model_class = ModelClass(candidates=[small_env.factorization], true_index=0)

        with pytest.raises(ConfigurationError):
            run_rep_lcb(
                data,
                model_class,
                small_env.reward,
                small_env.gamma,
                small_env.init_dist,
                OfflineSpec(behavior_policy=behavior),
            )

    def test_reward_shape(self, small_env, rng):
        """Test that a reward of the wrong shape raises StructuralError."""
        behavior = Policy.uniform(4, 2)
        data = generate_offline_dataset(small_env, behavior, 10, rng)
        model_class = ModelClass(candidates=[small_env.factorization], true_index=0)

        with pytest.raises(StructuralError):
            run_rep_lcb(
                data,
                model_class,
                np.zeros((4, 3)),
                small_env.gamma,
                small_env.init_dist,
                OfflineSpec(behavior_policy=behavior),
            )

    def test_pessimism_exact_model(self, latent_env):
        """Test that with the true model the pessimistic value never exceeds V^pi."""
        env, model_class = latent_env
        behavior = Policy.uniform(6, 2)
        data = generate_offline_dataset(
            env, behavior, 500, np.random.default_rng(2)
        )
        spec = OfflineSpec(behavior_policy=behavior)

        policy, penalty = run_rep_lcb(
            data, model_class, env.reward, env.gamma, env.init_dist, spec
        )

        assert pessimism_margin(policy, env.transition, penalty, env) <= 1e-10

    def test_recovers_from_data(self, latent_env):
        """Test that ample uniform data yields a near-optimal policy."""
        env, model_class = latent_env
        behavior = Policy.uniform(6, 2)
        data = generate_offline_dataset(
            env, behavior, 5000, np.random.default_rng(4)
        )
        spec = OfflineSpec(behavior_policy=behavior, c_alpha=0.05)

        policy, penalty = run_rep_lcb(
            data, model_class, env.reward, env.gamma, env.init_dist, spec
        )

        optimal = plan(env.transition, env.reward, env.gamma, 1e-10)
        assert penalty.model_index is not None
        assert policy_value(env, optimal) - policy_value(env, policy) <= 0.05
    def test_logs_pessimistic_value(self, latent_env):
        """Test that the logged pessimistic value is taken from init_dist."""
        env, model_class = latent_env
        behavior = Policy.uniform(6, 2)
        data = generate_offline_dataset(
            env, behavior, 300, np.random.default_rng(5)
        )
        spec = OfflineSpec(behavior_policy=behavior)

        with patch("replearn.offline.replcb.logger") as logger:
            policy, penalty = run_rep_lcb(
                data, model_class, env.reward, env.gamma, env.init_dist, spec
            )

        assert penalty.model_index is not None
        expected = expected_value(
            model_class.transitions[penalty.model_index],
            env.reward - penalty.table,
            policy,
            env.gamma,
            env.init_dist,
        )
        logged = logger.info.call_args.args[-1]
        assert logged == pytest.approx(expected, abs=1e-6)


    def test_pessimism_fraction(self, latent_env):
        """Test that the pessimism margin rarely exceeds its slack across seeds."""
        env, model_class = latent_env
        behavior = Policy.uniform(6, 2)
        spec = OfflineSpec(behavior_policy=behavior, c_alpha=1.0)
        violations, fits = 0, 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            comparators = comparator_policies(6, 2, 20, rng)
            violations += pessimism_violations(
                env, model_class, behavior, comparators, 200, rng, spec
            )
            fits += len(comparators)

        assert violations / fits <= spec.delta + 0.05

    def test_uncovered_lock(self, comblock):
        """Test that data avoiding the combination still beats covered policies."""
        env, model_class = comblock
        wrong = [(action + 1) % 2 for action in comblock_combination(env)] + [0]
        behavior = Policy.deterministic(wrong, 2).mixed(Policy.uniform(4, 2), 0.9)
        data = generate_offline_dataset(
            env, behavior, 2000, np.random.default_rng(0)
        )
        spec = OfflineSpec(behavior_policy=behavior)

        policy, _ = run_rep_lcb(
            data, model_class, env.reward, env.gamma, env.init_dist, spec
        )

        comparators = comparator_policies(4, 2, 20, np.random.default_rng(1))
        covered = covered_policies(env, behavior, comparators, max_condition=100.0)
        assert covered
        best_covered = max(policy_value(env, candidate) for candidate in covered)
        assert policy_value(env, policy) >= best_covered - 0.1


class TestOfflineBounds:
    """
    Tests for the reported slack and suboptimality bounds.
    """

    def test_slack(self):
        """Test the pessimism slack formula."""
        slack = pessimism_slack(2.0, 4.0, 10, 0.1, 0.9, 100)

        assert slack == pytest.approx(2.0 * math.sqrt(4.0 * math.log(100) * 0.1 / 100))

    def test_bound(self):
        """Test the suboptimality bound formula."""
        bound = lcb_suboptimality_bound(2, 2.0, 3.0, 10, 0.1, 0.9, 400)

        assert bound == pytest.approx(
            2.0 * 4 / 0.1 * math.sqrt(3.0 * math.log(100) / 400)
        )

    @pytest.mark.parametrize(
        "behavior_omega, condition_number, n",
        [
            (Unbounded.INFINITY, 1.0, 10),
            (2.0, Unbounded.INFINITY, 10),
            (2.0, 1.0, 0),
        ],
    )
    def test_bound_unbounded(self, behavior_omega, condition_number, n):
        """Test that unbounded inputs or no data give an unbounded bound."""
        bound = lcb_suboptimality_bound(
            2, behavior_omega, condition_number, 10, 0.1, 0.9, n
        )

        assert bound is Unbounded.INFINITY
