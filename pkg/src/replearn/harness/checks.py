"""
Invariant suites run by ``replearn check-invariants``. Each suite draws small
random instances per seed and reports the worst observed value of every check.
"""

import logging
from typing import Callable

import numpy as np

from replearn.harness.decoys import make_model_class
from replearn.harness.environments import (
    make_latent_variable_env,
    random_factorization,
)
from replearn.harness.models import (
    CheckReport,
    CheckResult,
    CheckSuite,
    DecoyStrategy,
    EnvSpec,
)
from replearn.lowrank.mdp import (
    GapForm,
    expected_value,
    flow_residual,
    induced_transition,
    occupancy,
    simulation_gap,
    tabular_factorization,
    validate_factorization,
)
from replearn.lowrank.modelclass import mle_decay_curve
from replearn.lowrank.models import LowRankMDP, ModelClass, Policy
from replearn.offline.coverage import (
    density_ratio,
    distribution_shift_gap,
    mixed_coverage_curve,
    omega,
    relative_condition_number,
)
from replearn.offline.models import Extended, OfflineSpec, Unbounded, is_finite
from replearn.offline.replcb import (
    generate_offline_dataset,
    pessimism_margin,
    pessimism_slack,
    run_rep_lcb,
)
from replearn.online.diagnostics import optimism_slack
from replearn.online.models import UcbConfig
from replearn.online.repucb import run_rep_ucb
from replearn.planning.planner import best_deterministic_policy, plan

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-10
SLOPE_RANGE = (-1.4, -0.6)
MLE_GRID = [100, 300, 1000, 3000, 10000]
MLE_ENV = EnvSpec(
    num_states=6,
    num_actions=2,
    dim=3,
    decoys=15,
    decoy_strategy=DecoyStrategy.GRADED,
    seed=0,
)
MIX_GRID = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
COMPARATOR_COUNT = 20
PESSIMISM_SAMPLES = 200


def random_policy(
    num_states: int, num_actions: int, rng: np.random.Generator
) -> Policy:
    return Policy(probs=rng.dirichlet(np.ones(num_actions), size=num_states))


def random_env(
    rng: np.random.Generator,
    max_states: int = 8,
    max_actions: int = 4,
    gamma: float | None = None,
) -> LowRankMDP:
    num_states = int(rng.integers(2, max_states + 1))
    num_actions = int(rng.integers(1, max_actions + 1))
    dim = int(rng.integers(1, num_states + 1))
    return LowRankMDP(
        factorization=random_factorization(num_states, num_actions, dim, rng),
        reward=rng.random((num_states, num_actions)),
        gamma=float(rng.choice([0.5, 0.9])) if gamma is None else gamma,
        init_dist=rng.dirichlet(np.ones(num_states)),
    )


def _worst(name: str, values: list[float], threshold: float) -> CheckResult:
    worst = max(values) if values else 0.0
    return CheckResult(
        name=name, passed=worst <= threshold, value=worst, threshold=threshold
    )


# ===========================================
# Suites
# ===========================================
def core_suite(seeds: int) -> list[CheckResult]:
    validity, gaps, residuals, duality, planning = [], [], [], [], []
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        env = random_env(rng)
        validity.append(float(not validate_factorization(env.factorization).is_valid))

        other = random_factorization(env.num_states, env.num_actions, env.dim, rng)
        model = induced_transition(other)
        bonus = rng.random((env.num_states, env.num_actions))
        policy = random_policy(env.num_states, env.num_actions, rng)
        direct = expected_value(
            model, env.reward + bonus, policy, env.gamma, env.init_dist
        ) - expected_value(env.transition, env.reward, policy, env.gamma, env.init_dist)
        for form in GapForm:
            gap = simulation_gap(
                model,
                env.transition,
                env.reward,
                bonus,
                policy,
                env.gamma,
                env.init_dist,
                form,
            )
            gaps.append(abs(gap - direct))

        measure = occupancy(env.transition, policy, env.init_dist, env.gamma)
        residuals.append(
            flow_residual(env.transition, policy, env.init_dist, env.gamma, measure)
        )
        value = expected_value(
            env.transition, env.reward, policy, env.gamma, env.init_dist
        )
        duality.append(
            abs(float(np.sum(measure.dist * env.reward)) / (1.0 - env.gamma) - value)
        )

        small = random_env(rng, max_states=4, max_actions=3)
        tolerance = 1e-8
        planned = plan(small.transition, small.reward, small.gamma, tolerance)
        _, best = best_deterministic_policy(
            small.transition, small.reward, small.gamma, small.init_dist
        )
        planned_value = expected_value(
            small.transition, small.reward, planned, small.gamma, small.init_dist
        )
        planning.append((best - planned_value) / (2.0 * tolerance))

    return [
        _worst("factorization_valid", validity, 0.0),
        _worst("simulation_gap_identity", gaps, IDENTITY_TOLERANCE),
        _worst("flow_residual", residuals, IDENTITY_TOLERANCE),
        _worst("occupancy_value_duality", duality, IDENTITY_TOLERANCE),
        _worst("planner_vs_enumeration", planning, 1.0),
    ]


def mle_suite(seeds: int) -> list[CheckResult]:
    env, model_class = make_latent_variable_env(MLE_ENV)
    curve = mle_decay_curve(
        env,
        model_class,
        [Policy.uniform(env.num_states, env.num_actions)],
        MLE_GRID,
        list(range(seeds)),
    )
    first, last = curve.points[0], curve.points[-1]
    results = [
        CheckResult(
            name="mle_error_decreases",
            passed=last.mean_sq_tv <= first.mean_sq_tv,
            value=last.mean_sq_tv,
            threshold=first.mean_sq_tv,
        )
    ]
    if all(point.mean_sq_tv > 0.0 for point in curve.points):
        slope = curve.loglog_slope()
        results.append(
            CheckResult(
                name="mle_loglog_slope",
                passed=SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1],
                value=slope,
                detail=f"expected within {SLOPE_RANGE}",
            )
        )
    else:
        results.append(
            CheckResult(
                name="mle_loglog_slope",
                passed=False,
                detail="not measured: the error vanished inside the grid",
            )
        )
    return results


def ucb_suite(seeds: int) -> list[CheckResult]:
    spec = EnvSpec(num_states=6, num_actions=2, dim=2, decoys=3, seed=0)
    env, model_class = make_latent_variable_env(spec)
    cfg = UcbConfig(episodes=200, diagnostics=True)
    process, bonus_range, violations, episodes = [], [], 0, 0
    for seed in range(seeds):
        _, diagnostics = run_rep_ucb(
            env, model_class, cfg.model_copy(update={"seed": seed})
        )
        assert diagnostics.elliptical is not None
        trace = diagnostics.elliptical
        process.append(
            max(
                trace.trace_sum - trace.logdet_gap,
                trace.logdet_gap - trace.logdet_bound,
            )
        )
        for record in diagnostics.records:
            bonus_range.append(
                max(-record.bonus_mean, record.bonus_mean - cfg.bonus_clamp)
            )
            slack = optimism_slack(
                cfg.c1,
                env.num_actions,
                model_class.size,
                record.n,
                cfg.delta,
                env.gamma,
            )
            assert record.optimism_margin_pistar is not None
            violations += record.optimism_margin_pistar < -slack
            episodes += 1
    fraction = violations / max(episodes, 1)
    return [
        _worst("elliptical_process", process, 1e-6),
        _worst("bonus_range", bonus_range, 0.0),
        CheckResult(
            name="almost_optimism",
            passed=fraction <= cfg.delta + 0.05,
            value=fraction,
            threshold=cfg.delta + 0.05,
        ),
    ]


def comparator_policies(
    num_states: int, num_actions: int, count: int, rng: np.random.Generator
) -> list[Policy]:
    """
    A fixed comparator set: the uniform policy, then alternating random
    deterministic and random stochastic policies.
    """
    comparators = [Policy.uniform(num_states, num_actions)]
    while len(comparators) < count:
        if len(comparators) % 2:
            actions = rng.integers(num_actions, size=num_states).tolist()
            comparators.append(Policy.deterministic(actions, num_actions))
        else:
            comparators.append(random_policy(num_states, num_actions, rng))
    return comparators[:count]


def _monotone_excess(curve: list[Extended]) -> float:
    worst = 0.0
    for before, after in zip(curve, curve[1:]):
        if isinstance(after, Unbounded):
            if not isinstance(before, Unbounded):
                return np.inf
            continue
        if not isinstance(before, Unbounded):
            worst = max(worst, (after - before) / max(1.0, before))
    return worst


def pessimism_violations(
    env: LowRankMDP,
    model_class: ModelClass,
    behavior: Policy,
    comparators: list[Policy],
    n: int,
    rng: np.random.Generator,
    spec: OfflineSpec,
    c1: float = 1.0,
) -> int:
    """
    Fit once on n offline triples and count the comparators whose pessimism
    margin exceeds the slack c1 sqrt(omega ln(|M|/delta) (1 - gamma) / n).
    """
    data = generate_offline_dataset(env, behavior, n, rng)
    _, penalty = run_rep_lcb(
        data, model_class, env.reward, env.gamma, env.init_dist, spec
    )
    assert penalty.model_index is not None
    behavior_omega = omega(behavior)
    assert is_finite(behavior_omega)
    slack = pessimism_slack(
        c1, behavior_omega, model_class.size, spec.delta, env.gamma, n
    )
    fitted = model_class.transitions[penalty.model_index]
    return sum(
        pessimism_margin(candidate, fitted, penalty, env) > slack
        for candidate in comparators
    )


def lcb_suite(seeds: int) -> list[CheckResult]:
    identity, tabular, shift, omegas, monotone = [], [], [], [], []
    violations, fits = 0, 0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        env = random_env(rng, max_states=6, max_actions=3)
        policy = random_policy(env.num_states, env.num_actions, rng)
        behavior = random_policy(env.num_states, env.num_actions, rng)
        comparator = occupancy(env.transition, policy, env.init_dist, env.gamma)
        rho = occupancy(env.transition, behavior, env.init_dist, env.gamma)
        phi = env.factorization.phi

        self_cover = relative_condition_number(comparator, comparator, phi)
        identity.append(
            np.inf if isinstance(self_cover, Unbounded) else abs(self_cover - 1.0)
        )
        condition = relative_condition_number(comparator, rho, phi)
        if not isinstance(condition, Unbounded):
            shift.append(-distribution_shift_gap(comparator, rho, phi, condition))

        one_hot = tabular_factorization(env.transition).phi
        exact = relative_condition_number(comparator, rho, one_hot)
        ratio = density_ratio(comparator, rho)
        if isinstance(exact, Unbounded) or isinstance(ratio, Unbounded):
            tabular.append(0.0 if exact == ratio else np.inf)
        else:
            tabular.append(abs(exact - ratio) / max(1.0, ratio))

        uniform = Policy.uniform(env.num_states, env.num_actions)
        omegas.append(abs(float(omega(uniform)) - env.num_actions))
        monotone.append(
            _monotone_excess(mixed_coverage_curve(env, policy, behavior, MIX_GRID))
        )

        model_class = make_model_class(
            env.factorization, 3, DecoyStrategy.MIXED, rng
        )
        comparators = comparator_policies(
            env.num_states, env.num_actions, COMPARATOR_COUNT, rng
        )
        violations += pessimism_violations(
            env,
            model_class,
            uniform,
            comparators,
            PESSIMISM_SAMPLES,
            rng,
            OfflineSpec(behavior_policy=uniform, c_alpha=1.0),
        )
        fits += len(comparators)
    fraction = violations / max(fits, 1)
    delta = OfflineSpec.model_fields["delta"].default
    return [
        _worst("rcn_self_is_one", identity, 1e-9),
        _worst("rcn_tabular_density_ratio", tabular, 1e-9),
        _worst("distribution_shift_psd", shift, 1e-9),
        _worst("omega_uniform", omegas, 1e-12),
        _worst("rcn_monotone_in_mixing", monotone, 1e-9),
        CheckResult(
            name="almost_pessimism",
            passed=fraction <= delta + 0.05,
            value=fraction,
            threshold=delta + 0.05,
        ),
    ]


SUITES: dict[CheckSuite, Callable[[int], list[CheckResult]]] = {
    CheckSuite.CORE: core_suite,
    CheckSuite.MLE: mle_suite,
    CheckSuite.UCB: ucb_suite,
    CheckSuite.LCB: lcb_suite,
}


def run_suite(suite: CheckSuite | str, seeds: int) -> CheckReport:
    suite = CheckSuite(suite)
    report = CheckReport(suite=suite, seeds=seeds, results=SUITES[suite](seeds))
    for failure in report.failures():
        logger.warning("Check %s failed: value %s.", failure.name, failure.value)
    return report
