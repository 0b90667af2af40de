"""
Command line interface.

Settings resolve as model defaults < JSON config file (``--config``) < explicit
flags. Exit status is 0 on success, 1 on validation failure and 2 on I/O error.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from replearn.exceptions import ExperimentIOError, ReplearnBaseException
from replearn.harness.checks import run_suite
from replearn.harness.environments import make_env
from replearn.harness.experiment import run_experiment
from replearn.harness.models import CheckSuite, EnvKind, EnvSpec, ExperimentSpec
from replearn.harness.serialization import (
    env_hash,
    read_dataset_jsonl,
    read_env,
    read_model_class,
    read_payload,
    read_policy,
    write_dataset_jsonl,
    write_env,
    write_model,
    write_model_class,
    write_payload,
    write_policy,
    write_records_csv,
)
from replearn.lowrank.mdp import policy_value
from replearn.offline.coverage import coverage_report
from replearn.offline.models import OfflineSpec
from replearn.offline.replcb import generate_offline_dataset, run_rep_lcb
from replearn.online.models import UcbConfig
from replearn.online.repucb import run_rep_ucb

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

M = TypeVar("M", bound=BaseModel)


def resolve_settings(
    model: type[M],
    config: Optional[Path],
    overrides: dict[str, Any],
    section: Optional[str] = None,
) -> M:
    """
    Build ``model`` from its defaults, then the JSON config (or one of its
    sections), then every flag that was given explicitly.
    """
    values: dict[str, Any] = {}
    if config is not None:
        payload = read_payload(config)
        values.update(payload.get(section, {}) if section else payload)
    values.update({key: value for key, value in overrides.items() if value is not None})
    return model.model_validate(values)


def _print(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


# ===========================================
# Subcommands
# ===========================================
def cmd_gen_env(args: argparse.Namespace) -> int:
    spec = resolve_settings(
        EnvSpec,
        args.config,
        {
            "kind": args.kind,
            "num_states": args.states,
            "num_actions": args.actions,
            "dim": args.dim,
            "gamma": args.gamma,
            "lock_length": args.lock_length,
            "decoys": args.decoys,
            "seed": args.seed,
        },
    )
    env, model_class = make_env(spec)
    write_env(args.out / "env.json", env)
    write_model_class(args.out / "class.json", model_class)
    write_model(args.out / "env_spec.json", spec)
    _print(
        {
            "environment_hash": env_hash(env),
            "class_size": model_class.size,
            "true_index": model_class.true_index,
        }
    )
    return EXIT_OK


def cmd_run_ucb(args: argparse.Namespace) -> int:
    env = read_env(args.env)
    model_class = read_model_class(getattr(args, "class"))
    cfg = resolve_settings(
        UcbConfig,
        args.config,
        {
            "episodes": args.episodes,
            "delta": args.delta,
            "c_alpha": args.c_alpha,
            "c_lambda": args.c_lambda,
            "seed": args.seed,
            "diagnostics": True if args.diagnostics else None,
        },
        section="ucb",
    )
    start = time.perf_counter()
    policies, diagnostics = run_rep_ucb(env, model_class, cfg)
    wall_clock = time.perf_counter() - start
    write_records_csv(args.out / "episodes.csv", diagnostics.records)
    if policies:
        write_policy(args.out / "policy.json", policies[-1])
    write_payload(
        args.out / "metadata.json",
        {
            "config": cfg.model_dump(mode="json"),
            "seed": cfg.seed,
            "environment_hash": env_hash(env),
            "wall_clock": {str(cfg.seed): wall_clock},
            "rollin_cap_firings": diagnostics.rollin_cap_firings,
            "elliptical": (
                diagnostics.elliptical.model_dump()
                if diagnostics.elliptical is not None
                else None
            ),
        },
    )
    return EXIT_OK


def cmd_run_lcb(args: argparse.Namespace) -> int:
    env = read_env(args.env)
    model_class = read_model_class(getattr(args, "class"))
    behavior = read_policy(args.behavior)
    spec = resolve_settings(
        OfflineSpec,
        args.config,
        {
            "behavior_policy": behavior,
            "n": args.n,
            "delta": args.delta,
            "c_alpha": args.c_alpha,
            "c_lambda": args.c_lambda,
            "seed": args.seed,
        },
        section="offline",
    )
    if args.data is not None:
        data = read_dataset_jsonl(args.data, env.num_states, env.num_actions)
    else:
        rng = np.random.default_rng(spec.seed)
        data = generate_offline_dataset(env, behavior, spec.n, rng)
        write_dataset_jsonl(args.out / "dataset.jsonl", data)
    start = time.perf_counter()
    policy, penalty = run_rep_lcb(
        data, model_class, env.reward, env.gamma, env.init_dist, spec
    )
    wall_clock = time.perf_counter() - start
    write_policy(args.out / "policy.json", policy)
    summary = {
        "model_index": penalty.model_index,
        "alpha": penalty.alpha,
        "penalty_mean": float(penalty.table.mean()),
        "value": policy_value(env, policy),
        "n": len(data),
    }
    write_payload(args.out / "summary.json", summary)
    write_payload(
        args.out / "metadata.json",
        {
            "config": spec.model_dump(mode="json", exclude={"behavior_policy"}),
            "seed": spec.seed,
            "environment_hash": env_hash(env),
            "wall_clock": {str(spec.seed): wall_clock},
        },
    )
    _print(summary)
    return EXIT_OK


def cmd_check_invariants(args: argparse.Namespace) -> int:
    report = run_suite(args.suite, args.seeds)
    _print(report.model_dump(mode="json"))
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_coverage(args: argparse.Namespace) -> int:
    env = read_env(args.env)
    report = coverage_report(env, read_policy(args.policy), read_policy(args.behavior))
    if args.out is not None:
        write_model(args.out, report)
    _print(report.model_dump(mode="json"))
    return EXIT_OK


def cmd_run_experiment(args: argparse.Namespace) -> int:
    spec = resolve_settings(
        ExperimentSpec,
        args.config,
        {"output_dir": args.out, "seeds": args.seeds},
    )
    result = run_experiment(spec, workers=args.workers)
    _print({"aggregate": str(result.aggregate), "manifest": str(result.manifest)})
    return EXIT_OK


# ===========================================
# Parser
# ===========================================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replearn",
        description="Representation learning in low-rank MDPs: online and offline.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-env", help="generate an environment and class")
    gen.add_argument("--kind", choices=[kind.value for kind in EnvKind])
    gen.add_argument("--states", type=int)
    gen.add_argument("--actions", type=int)
    gen.add_argument("--dim", type=int)
    gen.add_argument("--gamma", type=float)
    gen.add_argument("--lock-length", type=int)
    gen.add_argument("--decoys", type=int)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--config", type=Path)
    gen.add_argument("--out", type=Path, required=True)
    gen.set_defaults(handler=cmd_gen_env)

    ucb = commands.add_parser("run-ucb", help="run the online algorithm")
    ucb.add_argument("--env", type=Path, required=True)
    ucb.add_argument("--class", type=Path, required=True)
    ucb.add_argument("--episodes", type=int)
    ucb.add_argument("--delta", type=float)
    ucb.add_argument("--c-alpha", type=float)
    ucb.add_argument("--c-lambda", type=float)
    ucb.add_argument("--seed", type=int)
    ucb.add_argument("--diagnostics", action="store_true")
    ucb.add_argument("--config", type=Path)
    ucb.add_argument("--out", type=Path, required=True)
    ucb.set_defaults(handler=cmd_run_ucb)

    lcb = commands.add_parser("run-lcb", help="run the offline algorithm")
    lcb.add_argument("--env", type=Path, required=True)
    lcb.add_argument("--class", type=Path, required=True)
    lcb.add_argument("--behavior", type=Path, required=True)
    lcb.add_argument("--n", type=int)
    lcb.add_argument("--data", type=Path)
    lcb.add_argument("--delta", type=float)
    lcb.add_argument("--c-alpha", type=float)
    lcb.add_argument("--c-lambda", type=float)
    lcb.add_argument("--seed", type=int)
    lcb.add_argument("--config", type=Path)
    lcb.add_argument("--out", type=Path, required=True)
    lcb.set_defaults(handler=cmd_run_lcb)

    checks = commands.add_parser("check-invariants", help="run an invariant suite")
    checks.add_argument(
        "--suite", choices=[suite.value for suite in CheckSuite], default="core"
    )
    checks.add_argument("--seeds", type=int, default=10)
    checks.set_defaults(handler=cmd_check_invariants)

    coverage = commands.add_parser("coverage", help="coverage of a policy by data")
    coverage.add_argument("--env", type=Path, required=True)
    coverage.add_argument("--policy", type=Path, required=True)
    coverage.add_argument("--behavior", type=Path, required=True)
    coverage.add_argument("--out", type=Path)
    coverage.set_defaults(handler=cmd_coverage)

    experiment = commands.add_parser("run-experiment", help="run a seeded experiment")
    experiment.add_argument("--config", type=Path, required=True)
    experiment.add_argument("--seeds", type=int, nargs="+")
    experiment.add_argument("--workers", type=int)
    experiment.add_argument("--out", type=Path)
    experiment.set_defaults(handler=cmd_run_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ExperimentIOError as e:
        logger.error("%s", e)
        return EXIT_IO
    except (ReplearnBaseException, ValidationError) as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
