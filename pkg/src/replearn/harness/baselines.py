"""
Control conditions for the online algorithm: the same pipeline with the bonus
switched off and epsilon-uniform action mixing.
"""

from typing import Optional

import numpy as np

from replearn.exceptions import ReplearnValidationError
from replearn.lowrank.models import LowRankMDP, ModelClass, Policy
from replearn.online.models import RunDiagnostics, UcbConfig
from replearn.online.repucb import run_online_loop


def baseline_eps_greedy(
    env: LowRankMDP,
    model_class: ModelClass,
    episodes: int,
    epsilon: float,
    rng: Optional[np.random.Generator] = None,
    cfg: Optional[UcbConfig] = None,
) -> tuple[list[Policy], RunDiagnostics]:
    """
    Greedy planning on the MLE model without a bonus, each policy mixed with
    the uniform policy at rate ``epsilon``.

    Raises:
        ReplearnValidationError: If epsilon is outside [0, 1].
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ReplearnValidationError(f"epsilon must lie in [0, 1], got {epsilon}.")
    base = cfg or UcbConfig()
    settings = UcbConfig.model_validate({**base.model_dump(), "episodes": episodes})
    return run_online_loop(
        env, model_class, settings, rng, use_bonus=False, epsilon=epsilon
    )


def baseline_uniform(
    env: LowRankMDP,
    model_class: ModelClass,
    episodes: int,
    rng: Optional[np.random.Generator] = None,
    cfg: Optional[UcbConfig] = None,
) -> tuple[list[Policy], RunDiagnostics]:
    """
    Pure uniform exploration (epsilon-greedy with epsilon = 1).
    """
    return baseline_eps_greedy(env, model_class, episodes, 1.0, rng, cfg)
