from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import Field

from replearn.lowrank.models import ReplearnBaseModel
from replearn.offline.models import LCB_C_ALPHA
from replearn.online.models import UcbConfig


class EnvKind(str, Enum):
    LATENT_VARIABLE = "latent_variable"
    BLOCK = "block"
    COMBLOCK = "comblock"
    RANDOM_LOWRANK = "random_lowrank"


class DecoyStrategy(str, Enum):
    """
    How decoy candidates of a model class are derived from the truth.

    ``permute`` relabels latents in phi only, ``perturb`` redraws mu columns
    around the true emissions, ``merge`` fuses the last two latents and pads
    with a zero column, ``mixed`` cycles through the three. ``graded`` blends
    the true emissions with random ones at geometrically spaced weights so
    decoys range from far to nearly indistinguishable. Comblock classes always
    use alternative lock combinations.
    """

    PERMUTE = "permute"
    PERTURB = "perturb"
    MERGE = "merge"
    MIXED = "mixed"
    GRADED = "graded"


class Algorithm(str, Enum):
    REP_UCB = "rep_ucb"
    REP_LCB = "rep_lcb"
    BASELINE_EPS_GREEDY = "baseline_eps_greedy"
    BASELINE_UNIFORM = "baseline_uniform"


class EnvSpec(ReplearnBaseModel):
    """
    Environment generator settings. For ``comblock`` the state count and the
    dimension are derived from ``lock_length`` (H good states plus a dead
    state, d = |S|) and ``num_states``/``dim`` are ignored.
    """

    kind: EnvKind = EnvKind.LATENT_VARIABLE
    num_states: int = Field(default=8, ge=1)
    num_actions: int = Field(default=3, ge=1)
    dim: int = Field(default=3, ge=1)
    gamma: float = Field(default=0.9, ge=0.0, lt=1.0)
    lock_length: int = Field(default=6, ge=2)
    p_stay: float = Field(default=0.9, gt=0.0, le=1.0)
    concentration: float = Field(default=1.0, gt=0.0)
    emission_concentration: float = Field(default=1.0, gt=0.0)
    decoys: int = Field(default=3, ge=0)
    decoy_strategy: DecoyStrategy = DecoyStrategy.MIXED
    decoy_min_weight: float = Field(default=1e-3, gt=0.0, le=1.0)
    seed: int = 0


class ExperimentSpec(ReplearnBaseModel):
    """
    A seeded experiment. The environment is generated once from ``env.seed``;
    each run seed drives the algorithm's sampling.

    Offline runs draw data from pi_b = behavior_mix * pi* + (1 - behavior_mix)
    * uniform, scale the penalty by ``lcb_c_alpha`` and reuse ``ucb.delta``,
    ``ucb.c_lambda``, ``ucb.bonus_clamp`` and ``ucb.planner_tolerance``.
    """

    env: EnvSpec = Field(default_factory=EnvSpec)
    algorithm: Algorithm = Algorithm.REP_UCB
    ucb: UcbConfig = Field(default_factory=UcbConfig)
    epsilon: float = Field(default=0.1, ge=0.0, le=1.0)
    behavior_mix: float = Field(default=0.9, ge=0.0, le=1.0)
    lcb_c_alpha: float = Field(default=LCB_C_ALPHA, ge=0.0)
    offline_sizes: list[int] = Field(default_factory=lambda: [500, 2000, 8000])
    seeds: list[int] = Field(min_length=1)
    output_dir: Path = Path("results")
    workers: Optional[int] = Field(default=None, ge=1)


class CheckSuite(str, Enum):
    CORE = "core"
    MLE = "mle"
    UCB = "ucb"
    LCB = "lcb"


class CheckResult(ReplearnBaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class CheckReport(ReplearnBaseModel):
    suite: CheckSuite
    seeds: int
    results: list[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def failures(self) -> list[CheckResult]:
        return [result for result in self.results if not result.passed]
