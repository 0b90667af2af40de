"""
replearn low-rank MDP models
"""
from enum import Enum
from functools import cached_property
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from replearn.exceptions import ReplearnValidationError, StructuralError
from replearn.lowrank.mdputils import MDPUtils


def readonly_array(value: Any, dtype: type = np.float64) -> np.ndarray:
    """
    Copy ``value`` into a numpy array of ``dtype`` and freeze it.
    """
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class ReplearnBaseModel(BaseModel):
    """
    Base model for replearn domain types. Instances are immutable and may hold
    numpy arrays.
    """

    model_config = {
        "arbitrary_types_allowed": True,
        "frozen": True,
        "extra": "forbid",
        "use_enum_values": False,
    }


class Provenance(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"


# ===========================================
# Validation reports
# ===========================================
class Violation(ReplearnBaseModel):
    """
    A single violated invariant together with its magnitude.
    """

    invariant: str
    magnitude: float
    detail: str = ""


class ValidationReport(ReplearnBaseModel):
    """
    Result of validating a factorization or an environment. Warnings never make
    a report invalid.
    """

    violations: list[Violation] = Field(default_factory=list)
    warnings: list[Violation] = Field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def invariants(self) -> list[str]:
        return [violation.invariant for violation in self.violations]


# ===========================================
# Factorization and environment
# ===========================================
class Factorization(ReplearnBaseModel):
    """
    A (mu, phi) pair defining P(s'|s,a) = mu(s')^T phi(s,a).

    ``mu`` has shape |S| x d; ``phi`` has shape (|S|*|A|) x d with row
    ``s * |A| + a`` holding phi(s, a).
    """

    num_states: int = Field(gt=0)
    num_actions: int = Field(gt=0)
    dim: int = Field(gt=0)
    mu: np.ndarray
    phi: np.ndarray

    @field_validator("mu", "phi", mode="before")
    @classmethod
    def freeze_array(cls, value: Any) -> np.ndarray:
        return readonly_array(value)

    @model_validator(mode="after")
    def check_shapes(self) -> "Factorization":
        expected_mu = (self.num_states, self.dim)
        expected_phi = (self.num_states * self.num_actions, self.dim)
        if self.mu.shape != expected_mu:
            raise StructuralError(
                f"mu must have shape {expected_mu}, got {self.mu.shape}."
            )
        if self.phi.shape != expected_phi:
            raise StructuralError(
                f"phi must have shape {expected_phi}, got {self.phi.shape}."
            )
        return self

    @property
    def phi_tensor(self) -> np.ndarray:
        """
        Features reshaped to |S| x |A| x d.
        """
        return self.phi.reshape(self.num_states, self.num_actions, self.dim)

    def feature(self, state: int, action: int) -> np.ndarray:
        return self.phi[state * self.num_actions + action]

    def padded(self, dim: int) -> "Factorization":
        """
        Return the same kernel with zero columns appended up to ``dim``.
        """
        if dim < self.dim:
            raise StructuralError(f"Cannot pad dimension {self.dim} down to {dim}.")
        extra = dim - self.dim
        return Factorization(
            num_states=self.num_states,
            num_actions=self.num_actions,
            dim=dim,
            mu=np.pad(self.mu, ((0, 0), (0, extra))),
            phi=np.pad(self.phi, ((0, 0), (0, extra))),
        )


class LowRankMDP(ReplearnBaseModel):
    """
    Environment: a factorization plus known reward, discount and initial
    distribution.
    """

    factorization: Factorization
    reward: np.ndarray
    gamma: float = Field(ge=0.0, lt=1.0)
    init_dist: np.ndarray

    @field_validator("reward", "init_dist", mode="before")
    @classmethod
    def freeze_array(cls, value: Any) -> np.ndarray:
        return readonly_array(value)

    @model_validator(mode="after")
    def check_environment(self) -> "LowRankMDP":
        shape = (self.num_states, self.num_actions)
        if self.reward.shape != shape:
            raise StructuralError(
                f"reward must have shape {shape}, got {self.reward.shape}."
            )
        if self.init_dist.shape != (self.num_states,):
            raise StructuralError(
                f"init_dist must have shape ({self.num_states},), "
                f"got {self.init_dist.shape}."
            )
        tolerance = MDPUtils.distribution_tolerance()
        if self.init_dist.min() < 0.0 or abs(self.init_dist.sum() - 1.0) > tolerance:
            raise ReplearnValidationError(
                "init_dist must be a probability vector (non-negative, summing to 1)."
            )
        return self

    @property
    def num_states(self) -> int:
        return self.factorization.num_states

    @property
    def num_actions(self) -> int:
        return self.factorization.num_actions

    @property
    def dim(self) -> int:
        return self.factorization.dim

    @cached_property
    def transition(self) -> np.ndarray:
        """
        True transition tensor P*(s'|s,a), computed once.
        """
        from replearn.lowrank.mdp import induced_transition

        return induced_transition(self.factorization)


# ===========================================
# Policies and occupancies
# ===========================================
class Policy(ReplearnBaseModel):
    """
    Markovian stochastic policy, row s holding pi(.|s).
    """

    probs: np.ndarray

    @field_validator("probs", mode="before")
    @classmethod
    def freeze_array(cls, value: Any) -> np.ndarray:
        return readonly_array(value)

    @model_validator(mode="after")
    def check_rows(self) -> "Policy":
        if self.probs.ndim != 2:
            raise StructuralError(
                f"Policy must be an |S|x|A| matrix, got shape {self.probs.shape}."
            )
        tolerance = MDPUtils.distribution_tolerance()
        if self.probs.min() < 0.0:
            raise ReplearnValidationError("Policy has negative probabilities.")
        deviation = float(np.abs(self.probs.sum(axis=1) - 1.0).max())
        if deviation > tolerance:
            raise ReplearnValidationError(
                f"Policy rows deviate from 1 by {deviation:.3e}."
            )
        return self

    @property
    def num_states(self) -> int:
        return int(self.probs.shape[0])

    @property
    def num_actions(self) -> int:
        return int(self.probs.shape[1])

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "Policy":
        return cls(probs=np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "Policy":
        probs = np.zeros((len(actions), num_actions))
        probs[np.arange(len(actions)), np.asarray(actions, dtype=int)] = 1.0
        return cls(probs=probs)

    def mixed(self, other: "Policy", weight: float) -> "Policy":
        """
        Return ``weight * self + (1 - weight) * other``.
        """
        probs = weight * self.probs + (1.0 - weight) * other.probs
        return Policy(probs=probs / probs.sum(axis=1, keepdims=True))

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)


class OccupancyMeasure(ReplearnBaseModel):
    """
    Discounted state-action occupancy, stored as an |S| x |A| matrix.
    """

    dist: np.ndarray

    @field_validator("dist", mode="before")
    @classmethod
    def freeze_array(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=np.float64, copy=True)
        dust = MDPUtils.dust_tolerance()
        if array.size and array.min() < -dust:
            raise ReplearnValidationError(
                f"Occupancy has negative mass {array.min():.3e}."
            )
        array[array < 0.0] = 0.0
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def check_total(self) -> "OccupancyMeasure":
        if self.dist.ndim != 2:
            raise StructuralError("Occupancy must be an |S|x|A| matrix.")
        deviation = abs(float(self.dist.sum()) - 1.0)
        if deviation > MDPUtils.occupancy_tolerance():
            raise ReplearnValidationError(
                f"Occupancy mass deviates from 1 by {deviation:.3e}."
            )
        return self

    @property
    def state_marginal(self) -> np.ndarray:
        return self.dist.sum(axis=1)

    @property
    def flat(self) -> np.ndarray:
        """
        Vector indexed by s * |A| + a, aligned with Factorization.phi rows.
        """
        return self.dist.reshape(-1)

    @classmethod
    def mixture(
        cls,
        measures: Sequence["OccupancyMeasure"],
        weights: Optional[Sequence[float]] = None,
    ) -> "OccupancyMeasure":
        """
        Weighted average of occupancies; equal weights by default. Weights are
        normalized to sum to one.
        """
        if not measures:
            raise ReplearnValidationError("Cannot mix an empty list of occupancies.")
        mass = np.ones(len(measures)) if weights is None else np.asarray(weights, float)
        if mass.shape != (len(measures),) or mass.min() < 0.0 or mass.sum() <= 0.0:
            raise ReplearnValidationError(
                "Mixture weights must be non-negative, one per measure, not all zero."
            )
        stacked = np.stack([measure.dist for measure in measures])
        return cls(dist=np.tensordot(mass / mass.sum(), stacked, axes=1))


# ===========================================
# Data
# ===========================================
class Transition(ReplearnBaseModel):
    """
    One observed (s, a, s') triple. Rewards are known and not stored.
    """

    s: int = Field(ge=0)
    a: int = Field(ge=0)
    s_next: int = Field(ge=0)


class TransitionDataset(ReplearnBaseModel):
    """
    Multiset of (s, a, s') triples with provenance, stored column-wise.
    """

    num_states: int = Field(gt=0)
    num_actions: int = Field(gt=0)
    provenance: Provenance
    states: np.ndarray = Field(default_factory=lambda: readonly_array([], np.int64))
    actions: np.ndarray = Field(default_factory=lambda: readonly_array([], np.int64))
    next_states: np.ndarray = Field(
        default_factory=lambda: readonly_array([], np.int64)
    )

    @field_validator("states", "actions", "next_states", mode="before")
    @classmethod
    def freeze_array(cls, value: Any) -> np.ndarray:
        return readonly_array(value, np.int64).reshape(-1)

    @model_validator(mode="after")
    def check_indices(self) -> "TransitionDataset":
        if not len(self.states) == len(self.actions) == len(self.next_states):
            raise StructuralError("Dataset columns must have equal lengths.")
        for name, column, bound in (
            ("s", self.states, self.num_states),
            ("a", self.actions, self.num_actions),
            ("s_next", self.next_states, self.num_states),
        ):
            if column.size and (column.min() < 0 or column.max() >= bound):
                raise ReplearnValidationError(
                    f"Dataset column '{name}' has indices outside [0, {bound})."
                )
        return self

    @classmethod
    def from_triples(
        cls,
        triples: Sequence[Transition],
        num_states: int,
        num_actions: int,
        provenance: Provenance,
    ) -> "TransitionDataset":
        return cls(
            num_states=num_states,
            num_actions=num_actions,
            provenance=provenance,
            states=[t.s for t in triples],
            actions=[t.a for t in triples],
            next_states=[t.s_next for t in triples],
        )

    def __len__(self) -> int:
        return int(self.states.size)

    @property
    def triples(self) -> list[Transition]:
        return [
            Transition(s=int(s), a=int(a), s_next=int(s_next))
            for s, a, s_next in zip(self.states, self.actions, self.next_states)
        ]

    def head(self, n: int) -> "TransitionDataset":
        """
        Dataset holding the first ``n`` triples.
        """
        return TransitionDataset(
            num_states=self.num_states,
            num_actions=self.num_actions,
            provenance=self.provenance,
            states=self.states[:n],
            actions=self.actions[:n],
            next_states=self.next_states[:n],
        )

    def visit_counts(self) -> np.ndarray:
        """
        |S| x |A| matrix of (s, a) counts.
        """
        flat = self.states * self.num_actions + self.actions
        counts = np.bincount(flat, minlength=self.num_states * self.num_actions)
        return counts.reshape(self.num_states, self.num_actions).astype(np.float64)

    def transition_counts(self) -> np.ndarray:
        """
        |S| x |A| x |S| tensor of (s, a, s') counts.
        """
        size = self.num_states * self.num_actions * self.num_states
        flat = (
            self.states * self.num_actions + self.actions
        ) * self.num_states + self.next_states
        counts = np.bincount(flat, minlength=size)
        return counts.reshape(
            self.num_states, self.num_actions, self.num_states
        ).astype(np.float64)


# ===========================================
# Model class
# ===========================================
class ModelClass(ReplearnBaseModel):
    """
    Finite, ordered model class. ``true_index`` is for diagnostics only.
    """

    candidates: list[Factorization]
    true_index: Optional[int] = None

    @model_validator(mode="after")
    def check_candidates(self) -> "ModelClass":
        if not self.candidates:
            raise ReplearnValidationError("Model class must be non-empty.")
        shape = (self.candidates[0].num_states, self.candidates[0].num_actions)
        for index, candidate in enumerate(self.candidates):
            if (candidate.num_states, candidate.num_actions) != shape:
                raise StructuralError(
                    f"Candidate {index} has shape "
                    f"{(candidate.num_states, candidate.num_actions)}, "
                    f"expected {shape}."
                )
        if self.true_index is not None and not (
            0 <= self.true_index < len(self.candidates)
        ):
            raise ReplearnValidationError(
                f"true_index {self.true_index} outside [0, {len(self.candidates)})."
            )
        return self

    @property
    def size(self) -> int:
        return len(self.candidates)

    @property
    def num_states(self) -> int:
        return self.candidates[0].num_states

    @property
    def num_actions(self) -> int:
        return self.candidates[0].num_actions

    @cached_property
    def transitions(self) -> np.ndarray:
        """
        Induced kernels of all candidates, shape |M| x |S| x |A| x |S|.
        """
        from replearn.lowrank.mdp import induced_transition

        return np.stack([induced_transition(c) for c in self.candidates])

    @cached_property
    def log_transitions(self) -> np.ndarray:
        """
        ln max(P, p_floor) for all candidates.
        """
        return np.log(np.maximum(self.transitions, MDPUtils.likelihood_floor()))
