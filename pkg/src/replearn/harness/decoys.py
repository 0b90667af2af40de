"""
Decoy construction for realizable model classes.
"""

import functools
import logging
from typing import Callable

import numpy as np

from replearn.exceptions import GenerationError
from replearn.harness.models import DecoyStrategy
from replearn.lowrank.mdp import induced_transition
from replearn.lowrank.models import Factorization, ModelClass

logger = logging.getLogger(__name__)

DISTINCT_TOLERANCE = 1e-6
MAX_ATTEMPTS = 100
PERTURB_CONCENTRATION = 50.0

DecoyMaker = Callable[[Factorization, np.random.Generator], Factorization]


def permute_latents(truth: Factorization, rng: np.random.Generator) -> Factorization:
    """
    Relabel the latents of phi with a non-identity permutation; mu is kept.
    """
    if truth.dim < 2:
        raise GenerationError("Latent permutation needs d >= 2.")
    permutation = np.arange(truth.dim)
    while np.array_equal(permutation, np.arange(truth.dim)):
        permutation = rng.permutation(truth.dim)
    return Factorization(
        num_states=truth.num_states,
        num_actions=truth.num_actions,
        dim=truth.dim,
        mu=truth.mu,
        phi=truth.phi[:, permutation],
    )


def perturb_emissions(truth: Factorization, rng: np.random.Generator) -> Factorization:
    """
    Redraw every mu column from a Dirichlet centred on the true emission.
    """
    columns = [
        rng.dirichlet(PERTURB_CONCENTRATION * column + 1e-2) for column in truth.mu.T
    ]
    return Factorization(
        num_states=truth.num_states,
        num_actions=truth.num_actions,
        dim=truth.dim,
        mu=np.stack(columns, axis=1),
        phi=truth.phi,
    )


def merge_latents(truth: Factorization, rng: np.random.Generator) -> Factorization:
    """
    Fuse the last two latents (phi summed, mu averaged) and pad back to d.
    """
    if truth.dim < 2:
        raise GenerationError("Latent merging needs d >= 2.")
    phi = np.column_stack([truth.phi[:, :-2], truth.phi[:, -2:].sum(axis=1)])
    mu = np.column_stack([truth.mu[:, :-2], truth.mu[:, -2:].mean(axis=1)])
    merged = Factorization(
        num_states=truth.num_states,
        num_actions=truth.num_actions,
        dim=truth.dim - 1,
        mu=mu,
        phi=phi,
    )
    return merged.padded(truth.dim)


def graded_weights(count: int, min_weight: float) -> np.ndarray:
    """
    Mixing weights from 1 down to ``min_weight``, geometrically spaced.
    """
    if count == 1:
        return np.ones(1)
    return np.geomspace(1.0, min_weight, count)


def blend_emissions(
    truth: Factorization, weight: float, rng: np.random.Generator
) -> Factorization:
    """
    mu = (1 - weight) mu* + weight mu', with mu' columns drawn uniformly from
    the simplex. The kernel moves away from the truth linearly in ``weight``.
    """
    alternative = rng.dirichlet(np.ones(truth.num_states), size=truth.dim).T
    return Factorization(
        num_states=truth.num_states,
        num_actions=truth.num_actions,
        dim=truth.dim,
        mu=(1.0 - weight) * truth.mu + weight * alternative,
        phi=truth.phi,
    )


_MAKERS: dict[DecoyStrategy, DecoyMaker] = {
    DecoyStrategy.PERMUTE: permute_latents,
    DecoyStrategy.PERTURB: perturb_emissions,
    DecoyStrategy.MERGE: merge_latents,
}


def _maker_cycle(
    strategy: DecoyStrategy, dim: int, count: int, min_weight: float
) -> list[DecoyMaker]:
    if strategy is DecoyStrategy.GRADED:
        return [
            functools.partial(_blend_at, weight=float(weight))
            for weight in graded_weights(count, min_weight)
        ]
    if strategy is not DecoyStrategy.MIXED:
        return [_MAKERS[strategy]]
    if dim < 2:
        return [perturb_emissions]
    return [permute_latents, perturb_emissions, merge_latents]


def _blend_at(
    truth: Factorization, rng: np.random.Generator, weight: float
) -> Factorization:
    return blend_emissions(truth, weight, rng)


def distinct_from(
    candidate: Factorization, others: list[np.ndarray]
) -> bool:
    kernel = induced_transition(candidate)
    return all(np.abs(kernel - other).max() > DISTINCT_TOLERANCE for other in others)


def assemble_class(
    truth: Factorization, decoys: list[Factorization], rng: np.random.Generator
) -> ModelClass:
    """
    Insert the truth at a random position among the decoys.
    """
    position = int(rng.integers(len(decoys) + 1))
    candidates = [*decoys[:position], truth, *decoys[position:]]
    return ModelClass(candidates=candidates, true_index=position)


def make_model_class(
    truth: Factorization,
    count: int,
    strategy: DecoyStrategy,
    rng: np.random.Generator,
    min_weight: float = 1e-3,
) -> ModelClass:
    """
    Build a realizable class with ``count`` decoys whose kernels differ from
    the truth and from each other. ``graded`` decoys blend the true emissions
    with random ones at weights from 1 down to ``min_weight``; a rejected
    graded decoy is redrawn at the same weight.

    Raises:
        GenerationError: If a distinct decoy cannot be found.
    """
    makers = _maker_cycle(strategy, truth.dim, count, min_weight)
    kernels = [induced_transition(truth)]
    decoys: list[Factorization] = []
    for position in range(count):
        maker = makers[position % len(makers)]
        for _ in range(MAX_ATTEMPTS):
            candidate = maker(truth, rng)
            if distinct_from(candidate, kernels):
                break
            if strategy is not DecoyStrategy.GRADED:
                maker = perturb_emissions
        else:
            raise GenerationError(
                f"Could not generate decoy {position} distinct from the class."
            )
        decoys.append(candidate)
        kernels.append(induced_transition(candidate))
    logger.debug("Built model class with %d decoys (%s).", count, strategy.value)
    return assemble_class(truth, decoys, rng)
