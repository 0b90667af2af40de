"""
Seeded experiment orchestration.

Each seed runs in its own worker with its own generator and output file. The
per-seed CSVs are the source of truth: the aggregate is recomputed from them.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import Field

import replearn
from replearn.exceptions import ExperimentIOError
from replearn.harness.baselines import baseline_eps_greedy, baseline_uniform
from replearn.harness.environments import make_env, optimal_value
from replearn.harness.models import Algorithm, ExperimentSpec
from replearn.harness.serialization import (
    env_hash,
    read_csv,
    records_frame,
    sha256_of,
    write_frame_csv,
    write_payload,
)
from replearn.lowrank.mdp import policy_value
from replearn.lowrank.models import (
    LowRankMDP,
    ModelClass,
    Policy,
    ReplearnBaseModel,
)
from replearn.offline.models import OfflineSpec
from replearn.offline.replcb import (
    generate_offline_dataset,
    pessimism_margin,
    run_rep_lcb,
)
from replearn.online.models import RunDiagnostics
from replearn.online.repucb import run_rep_ucb
from replearn.planning.planner import PlanningProblem, value_iteration

logger = logging.getLogger(__name__)

OFFLINE_COLUMNS = [
    "n",
    "model_index",
    "value",
    "suboptimality",
    "penalty_mean",
    "pessimism_margin_pistar",
]


class SeedOutcome(ReplearnBaseModel):
    seed: int
    csv_path: Path
    wall_clock: float
    summary: dict[str, float] = Field(default_factory=dict)


class ExperimentResult(ReplearnBaseModel):
    output_dir: Path
    seed_files: list[Path]
    aggregate: Path
    manifest: Path
    metadata: Path


def optimal_policy(env: LowRankMDP, tolerance: float = 1e-10) -> tuple[Policy, float]:
    """
    Optimal policy of the true model and its value at the initial distribution.
    """
    result = value_iteration(
        PlanningProblem(
            transition=env.transition,
            reward_effective=env.reward,
            gamma=env.gamma,
            tolerance=tolerance,
        )
    )
    return result.policy, policy_value(env, result.policy)


def config_hash(spec: ExperimentSpec) -> str:
    return sha256_of(spec.model_dump_json())


# ===========================================
# Per-seed runs
# ===========================================
def _run_online(
    spec: ExperimentSpec,
    env: LowRankMDP,
    model_class: ModelClass,
    rng: np.random.Generator,
) -> tuple[list[Policy], RunDiagnostics]:
    cfg = spec.ucb
    if spec.algorithm is Algorithm.REP_UCB:
        return run_rep_ucb(env, model_class, cfg, rng)
    if spec.algorithm is Algorithm.BASELINE_UNIFORM:
        return baseline_uniform(env, model_class, cfg.episodes, rng, cfg)
    return baseline_eps_greedy(env, model_class, cfg.episodes, spec.epsilon, rng, cfg)


def _run_offline(
    spec: ExperimentSpec,
    env: LowRankMDP,
    model_class: ModelClass,
    rng: np.random.Generator,
    optimal: Policy,
    best_value: float,
) -> pd.DataFrame:
    uniform = Policy.uniform(env.num_states, env.num_actions)
    behavior = optimal.mixed(uniform, spec.behavior_mix)
    rows = []
    for size in spec.offline_sizes:
        offline = OfflineSpec(
            behavior_policy=behavior,
            n=size,
            delta=spec.ucb.delta,
            c_alpha=spec.lcb_c_alpha,
            c_lambda=spec.ucb.c_lambda,
            clamp=spec.ucb.bonus_clamp,
            planner_tolerance=spec.ucb.planner_tolerance,
        )
        data = generate_offline_dataset(env, behavior, size, rng)
        policy, penalty = run_rep_lcb(
            data, model_class, env.reward, env.gamma, env.init_dist, offline
        )
        value = policy_value(env, policy)
        assert penalty.model_index is not None
        rows.append(
            {
                "n": size,
                "model_index": penalty.model_index,
                "value": value,
                "suboptimality": best_value - value,
                "penalty_mean": float(penalty.table.mean()),
                "pessimism_margin_pistar": pessimism_margin(
                    optimal,
                    model_class.transitions[penalty.model_index],
                    penalty,
                    env,
                ),
            }
        )
    return pd.DataFrame(rows, columns=OFFLINE_COLUMNS)


def run_seed(spec_json: str, seed: int) -> SeedOutcome:
    """
    Run one seed of an experiment and write its CSV. ``spec_json`` is an
    ExperimentSpec dump, the form workers receive.
    """
    spec = ExperimentSpec.model_validate_json(spec_json)
    env, model_class = make_env(spec.env)
    optimal, best_value = optimal_policy(env)
    rng = np.random.default_rng(seed)
    path = spec.output_dir / f"seed_{seed}.csv"

    start = time.perf_counter()
    summary: dict[str, float] = {"optimal_value": best_value}
    if spec.algorithm is Algorithm.REP_LCB:
        frame = _run_offline(spec, env, model_class, rng, optimal, best_value)
        if len(frame):
            summary["final_suboptimality"] = float(frame["suboptimality"].iloc[-1])
    else:
        policies, diagnostics = _run_online(spec, env, model_class, rng)
        frame = records_frame(diagnostics.records)
        values = diagnostics.values()
        if policies:
            sampled = int(rng.integers(len(policies)))
            summary["mixture_suboptimality"] = best_value - float(values.mean())
            summary["sampled_suboptimality"] = best_value - float(values[sampled])
            summary["rollin_cap_firings"] = float(diagnostics.rollin_cap_firings)
    wall_clock = time.perf_counter() - start

    write_frame_csv(path, frame)
    logger.info("Seed %d finished in %.2fs.", seed, wall_clock)
    return SeedOutcome(seed=seed, csv_path=path, wall_clock=wall_clock, summary=summary)


# ===========================================
# Aggregation
# ===========================================
def aggregate_curves(
    frames: dict[int, pd.DataFrame], key: str, value: str, optimal: float
) -> list[dict[str, float]]:
    """
    Median and interquartile range of suboptimality (optimal - value) per
    ``key`` across seeds.
    """
    if not frames:
        return []
    combined = pd.concat(
        [frame.assign(seed=seed) for seed, frame in frames.items()], ignore_index=True
    )
    if combined.empty:
        return []
    combined["suboptimality"] = optimal - combined[value]
    grouped = combined.groupby(key)["suboptimality"]
    table = pd.DataFrame(
        {
            "median": grouped.median(),
            "q25": grouped.quantile(0.25),
            "q75": grouped.quantile(0.75),
        }
    )
    return [
        {key: int(index), **{name: float(row[name]) for name in table.columns}}
        for index, row in table.iterrows()
    ]


def aggregate(spec: ExperimentSpec, outcomes: list[SeedOutcome]) -> dict:
    frames = {outcome.seed: read_csv(outcome.csv_path) for outcome in outcomes}
    optimal = outcomes[0].summary["optimal_value"]
    offline = spec.algorithm is Algorithm.REP_LCB
    key, value = ("n", "value") if offline else ("episode", "value_pin")
    summaries = pd.DataFrame([outcome.summary for outcome in outcomes])
    return {
        "algorithm": spec.algorithm.value,
        "optimal_value": optimal,
        "curve": aggregate_curves(frames, key, value, optimal),
        "summary_median": {
            column: float(summaries[column].median())
            for column in summaries.columns
            if column != "optimal_value"
        },
    }


# ===========================================
# Entry point
# ===========================================
def _prepare_output(directory: Path) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExperimentIOError(
            f"Cannot create output directory: {e}", path=str(directory)
        ) from e


def run_experiment(
    spec: ExperimentSpec, workers: Optional[int] = None
) -> ExperimentResult:
    """
    Run every seed of ``spec`` and write per-seed CSVs, ``aggregate.json``,
    ``metadata.json`` and ``manifest.json`` to the output directory.

    Args:
        spec (ExperimentSpec): The experiment.
        workers (Optional[int]): Worker pool size; defaults to ``spec.workers``
        and then to the available parallelism.

    Raises:
        ExperimentIOError: If an output file cannot be written.
    """
    _prepare_output(spec.output_dir)
    pool_size = min(workers or spec.workers or os.cpu_count() or 1, len(spec.seeds))
    spec_json = spec.model_dump_json()
    logger.info(
        "Running %s on %d seeds with %d workers.",
        spec.algorithm.value,
        len(spec.seeds),
        pool_size,
    )
    if pool_size == 1:
        outcomes = [run_seed(spec_json, seed) for seed in spec.seeds]
    else:
        with ProcessPoolExecutor(max_workers=pool_size) as executor:
            outcomes = list(
                executor.map(run_seed, [spec_json] * len(spec.seeds), spec.seeds)
            )

    env, _ = make_env(spec.env)
    aggregate_path = spec.output_dir / "aggregate.json"
    metadata_path = spec.output_dir / "metadata.json"
    manifest_path = spec.output_dir / "manifest.json"
    write_payload(aggregate_path, aggregate(spec, outcomes))
    write_payload(
        metadata_path,
        {
            "config": spec.model_dump(mode="json"),
            "seeds": spec.seeds,
            "environment_hash": env_hash(env),
            "analytic_optimal_value": optimal_value(spec.env, env),
            "constants": {
                "c_alpha": spec.ucb.c_alpha,
                "c_lambda": spec.ucb.c_lambda,
                "lcb_c_alpha": spec.lcb_c_alpha,
            },
            "wall_clock": {str(o.seed): o.wall_clock for o in outcomes},
            "seed_summaries": {str(o.seed): o.summary for o in outcomes},
        },
    )
    seed_files = [outcome.csv_path for outcome in outcomes]
    write_payload(
        manifest_path,
        {
            "config_sha256": config_hash(spec),
            "version": replearn.__version__,
            "files": sorted(
                path.name
                for path in [*seed_files, aggregate_path, metadata_path]
            ),
        },
    )
    return ExperimentResult(
        output_dir=spec.output_dir,
        seed_files=seed_files,
        aggregate=aggregate_path,
        manifest=manifest_path,
        metadata=metadata_path,
    )
