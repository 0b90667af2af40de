"""
Online representation learning with UCB-style exploration.

Every episode collects one (s, a, s') triple by rolling in with the previous
policy and acting uniformly, refits the maximum-likelihood model, builds an
elliptical bonus from the fitted features, and plans optimistically on the
fitted model with reward r + b.
"""

import logging
from typing import Optional

import numpy as np

from replearn.exceptions import ConfigurationError, StructuralError
from replearn.lowrank.mdp import policy_value, sample_triple
from replearn.lowrank.modelclass import (
    expected_sq_tv,
    is_realizable,
    sampling_occupancy,
    select_index,
)
from replearn.lowrank.models import (
    LowRankMDP,
    ModelClass,
    OccupancyMeasure,
    Policy,
)
from replearn.online.bonus import make_bonus, schedules, weighted_covariance
from replearn.online.diagnostics import elliptical_trace, optimism_margin
from replearn.online.models import (
    EpisodeRecord,
    RefitSchedule,
    RunDiagnostics,
    UcbConfig,
)
from replearn.planning.planner import PlanningProblem, value_iteration

logger = logging.getLogger(__name__)


def _refit_due(n: int, schedule: RefitSchedule) -> bool:
    if schedule is RefitSchedule.EVERY_EPISODE:
        return True
    return n & (n - 1) == 0


def run_online_loop(
    env: LowRankMDP,
    model_class: ModelClass,
    cfg: UcbConfig,
    rng: Optional[np.random.Generator] = None,
    use_bonus: bool = True,
    epsilon: float = 0.0,
) -> tuple[list[Policy], RunDiagnostics]:
    """
    Shared online pipeline. With ``use_bonus`` off and ``epsilon`` > 0 it is the
    epsilon-greedy control: alpha_n = 0 and each planned policy is mixed with
    the uniform policy at rate ``epsilon``.

    The MLE is maintained incrementally: per-candidate log-likelihoods and
    (s, a) visit counts are updated with each new triple, which is an exact
    refit of the argmax and of the empirical covariance.

    Raises:
        StructuralError: If the class and the environment disagree on |S| x |A|.
        ConfigurationError: If diagnostics are requested on an unrealizable class.
        PlannerNonConvergenceError: Propagated from the planner.
    """
    if (model_class.num_states, model_class.num_actions) != (
        env.num_states,
        env.num_actions,
    ):
        raise StructuralError("Model class and environment shapes differ.")
    if cfg.diagnostics and not is_realizable(model_class, env):
        raise ConfigurationError(
            "Diagnostics need a realizable model class with true_index set."
        )
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)

    num_states, num_actions, gamma = env.num_states, env.num_actions, env.gamma
    uniform = Policy.uniform(num_states, num_actions)
    log_scores = np.zeros(model_class.size)
    visits = np.zeros(num_states * num_actions)
    index = 0
    warm_values: Optional[np.ndarray] = None

    optimal: Optional[Policy] = None
    rho_sum = np.zeros((num_states, num_actions))
    if cfg.diagnostics:
        optimal = value_iteration(
            PlanningProblem(
                transition=env.transition,
                reward_effective=env.reward,
                gamma=gamma,
                tolerance=cfg.planner_tolerance,
            )
        ).policy

    policies: list[Policy] = []
    records: list[EpisodeRecord] = []
    lambdas: list[float] = []
    rollin = uniform
    progress_every = max(1, cfg.episodes // 10)
    for n in range(1, cfg.episodes + 1):
        sample = sample_triple(env.transition, rollin, env.init_dist, gamma, rng)
        triple = sample.transition
        log_scores += model_class.log_transitions[:, triple.s, triple.a, triple.s_next]
        visits[triple.s * num_actions + triple.a] += 1.0
        if cfg.diagnostics:
            rho_sum += sampling_occupancy(env, rollin).dist

        if _refit_due(n, cfg.refit):
            selected = select_index(log_scores)
            if selected != index:
                logger.debug("Episode %d: MLE moved to model %d.", n, selected)
            index = selected
        fitted = model_class.candidates[index]

        alpha, lam = schedules(
            n,
            fitted.dim,
            num_actions,
            model_class.size,
            cfg.delta,
            gamma,
            cfg.c_alpha,
            cfg.c_lambda,
        )
        if cfg.diagnostics:
            _, true_lam = schedules(
                n,
                env.dim,
                num_actions,
                model_class.size,
                cfg.delta,
                gamma,
                cfg.c_alpha,
                cfg.c_lambda,
            )
            lambdas.append(true_lam)
        bonus = make_bonus(
            fitted,
            weighted_covariance(fitted.phi, visits, lam),
            alpha if use_bonus else 0.0,
            cfg.bonus_clamp,
            index,
        )
        result = value_iteration(
            PlanningProblem(
                transition=model_class.transitions[index],
                reward_effective=env.reward + bonus.table,
                gamma=gamma,
                tolerance=cfg.planner_tolerance,
                initial_values=warm_values,
            )
        )
        warm_values = result.values
        policy = result.policy
        if epsilon > 0.0:
            policy = uniform.mixed(policy, epsilon)
        policies.append(policy)

        record = EpisodeRecord(
            episode=n,
            n=n,
            model_index=index,
            value_pin=policy_value(env, policy),
            bonus_mean=float(bonus.table.mean()),
            rollin_capped=sample.capped,
        )
        if optimal is not None:
            record = record.model_copy(
                update={
                    "sq_tv": expected_sq_tv(
                        model_class.transitions[index],
                        env.transition,
                        OccupancyMeasure(dist=rho_sum / n),
                    ),
                    "optimism_margin_pistar": optimism_margin(
                        optimal, model_class.transitions[index], bonus, env
                    ),
                }
            )
        records.append(record)
        rollin = policy
        if n % progress_every == 0:
            logger.info(
                "Episode %d/%d: model %d, value %.6f.",
                n,
                cfg.episodes,
                index,
                record.value_pin,
            )

    diagnostics = RunDiagnostics(records=records)
    if cfg.diagnostics and policies:
        assert model_class.true_index is not None
        trace = elliptical_trace(
            env,
            policies,
            model_class.candidates[model_class.true_index].phi,
            lambdas,
        )
        diagnostics = RunDiagnostics(
            records=[
                record.model_copy(update={"potential_increment": increment})
                for record, increment in zip(records, trace.increments)
            ],
            elliptical=trace,
        )
    return policies, diagnostics


def run_rep_ucb(
    env: LowRankMDP,
    model_class: ModelClass,
    cfg: UcbConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[list[Policy], RunDiagnostics]:
    """
    Run the online algorithm for ``cfg.episodes`` episodes.

    Args:
        env (LowRankMDP): The environment; only sampled from, except in
        diagnostic mode.
        model_class (ModelClass): Finite class the MLE oracle searches.
        cfg (UcbConfig): Run configuration.
        rng (Optional[np.random.Generator]): Defaults to a generator seeded
        with ``cfg.seed``.

    Returns:
        tuple[list[Policy], RunDiagnostics]: pi_1..pi_N and one record per
        episode.
    """
    return run_online_loop(env, model_class, cfg, rng)
