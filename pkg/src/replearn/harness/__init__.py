"""
replearn harness module: environment generators, experiments and the CLI
"""

from replearn.harness.baselines import baseline_eps_greedy, baseline_uniform
from replearn.harness.environments import make_comblock_env, make_env
from replearn.harness.experiment import run_experiment, run_seed
from replearn.harness.models import (
    Algorithm,
    CheckReport,
    DecoyStrategy,
    EnvKind,
    EnvSpec,
    ExperimentSpec,
)

__all__ = [
    "Algorithm",
    "CheckReport",
    "DecoyStrategy",
    "EnvKind",
    "EnvSpec",
    "ExperimentSpec",
    "baseline_eps_greedy",
    "baseline_uniform",
    "make_comblock_env",
    "make_env",
    "run_experiment",
    "run_seed",
]
