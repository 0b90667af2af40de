"""
Partial-coverage measures of an offline distribution relative to a comparator.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from replearn.exceptions import ReplearnValidationError, StructuralError
from replearn.lowrank.mdp import occupancy
from replearn.lowrank.mdputils import MDPUtils
from replearn.lowrank.models import LowRankMDP, OccupancyMeasure, Policy
from replearn.offline.models import CoverageReport, Extended, Unbounded, is_finite
from replearn.online.bonus import feature_matrix
from replearn.online.diagnostics import second_moment

logger = logging.getLogger(__name__)

NULL_MASS_TOLERANCE = 1e-9


def omega(behavior: Policy) -> Extended:
    """
    max over (s, a) of 1 / pi_b(a|s); any zero entry gives Unbounded.
    """
    smallest = float(behavior.probs.min())
    if smallest <= 0.0:
        return Unbounded.INFINITY
    return 1.0 / smallest


def generalized_max_eigenvalue(target: np.ndarray, base: np.ndarray) -> Extended:
    """
    sup_x (x^T target x) / (x^T base x) for symmetric PSD matrices.

    The pencil is solved on the range of ``base`` (eigenvalues above 1e-12);
    if ``target`` has mass on the null space of ``base`` the result is
    Unbounded.
    """
    if target.shape != base.shape or target.shape[0] != target.shape[1]:
        raise StructuralError("Pencil matrices must be square and of equal shape.")
    eigenvalues, eigenvectors = linalg.eigh(base)
    keep = eigenvalues > MDPUtils.eigen_threshold()
    null_basis = eigenvectors[:, ~keep]
    if null_basis.size:
        leaked = null_basis.T @ target @ null_basis
        if float(np.abs(leaked).max()) > NULL_MASS_TOLERANCE:
            return Unbounded.INFINITY
    if not keep.any():
        return 0.0
    range_basis = eigenvectors[:, keep]
    projected = range_basis.T @ target @ range_basis
    projected = 0.5 * (projected + projected.T)
    values = linalg.eigh(projected, np.diag(eigenvalues[keep]), eigvals_only=True)
    return max(0.0, float(values[-1]))


def relative_condition_number(
    comparator: OccupancyMeasure, rho: OccupancyMeasure, phi_star: np.ndarray
) -> Extended:
    """
    Largest generalized eigenvalue of (E_{d^pi}[phi* phi*^T], E_rho[phi* phi*^T]).

    Args:
        comparator (OccupancyMeasure): d^pi of the comparator policy.
        rho (OccupancyMeasure): The offline distribution.
        phi_star (np.ndarray): True feature matrix, rows s * |A| + a.
    """
    phi = feature_matrix(phi_star)
    if phi.shape[0] != comparator.flat.size or comparator.dist.shape != rho.dist.shape:
        raise StructuralError("Occupancies and features disagree on |S| x |A|.")
    return generalized_max_eigenvalue(
        second_moment(phi, comparator), second_moment(phi, rho)
    )


def density_ratio(comparator: OccupancyMeasure, rho: OccupancyMeasure) -> Extended:
    """
    max d^pi(s,a) / rho(s,a) over rho's support; Unbounded if d^pi puts mass
    outside it.
    """
    support = rho.dist > MDPUtils.eigen_threshold()
    outside = comparator.dist[~support]
    if outside.size and float(outside.max()) > NULL_MASS_TOLERANCE:
        return Unbounded.INFINITY
    return float((comparator.dist[support] / rho.dist[support]).max(initial=0.0))


def distribution_shift_gap(
    comparator: OccupancyMeasure,
    rho: OccupancyMeasure,
    phi_star: np.ndarray,
    scale: Extended,
) -> float:
    """
    Minimum eigenvalue of scale * E_rho[phi phi^T] - E_{d^pi}[phi phi^T]; it is
    >= 0 (up to round-off) when ``scale`` is the relative condition number.
    """
    if isinstance(scale, Unbounded):
        raise ReplearnValidationError("Distribution shift needs a finite scale.")
    phi = feature_matrix(phi_star)
    gap = scale * second_moment(phi, rho) - second_moment(phi, comparator)
    return float(linalg.eigvalsh(0.5 * (gap + gap.T))[0])


def is_one_hot(phi: np.ndarray) -> bool:
    return bool(
        np.all((phi == 0.0) | (phi == 1.0)) and np.all(phi.sum(axis=1) == 1.0)
    )


def coverage_report(
    env: LowRankMDP, policy: Policy, behavior: Policy
) -> CoverageReport:
    """
    Coverage of ``policy`` by data drawn from d^{behavior} in ``env``.
    """
    comparator = occupancy(env.transition, policy, env.init_dist, env.gamma)
    rho = occupancy(env.transition, behavior, env.init_dist, env.gamma)
    phi = env.factorization.phi
    tabular: Optional[Extended] = (
        density_ratio(comparator, rho) if is_one_hot(phi) else None
    )
    report = CoverageReport(
        relative_condition_number=relative_condition_number(comparator, rho, phi),
        omega=omega(behavior),
        tabular_density_ratio=tabular,
    )
    logger.debug("Coverage report: %s", report)
    return report


def mixed_coverage_curve(
    env: LowRankMDP, policy: Policy, behavior: Policy, betas: Sequence[float]
) -> list[Extended]:
    """
    Relative condition number of ``policy`` against rho' = beta d^pi +
    (1 - beta) d^{pi_b} for each beta; nonincreasing in beta.
    """
    comparator = occupancy(env.transition, policy, env.init_dist, env.gamma)
    rho = occupancy(env.transition, behavior, env.init_dist, env.gamma)
    return [
        relative_condition_number(
            comparator,
            OccupancyMeasure.mixture([comparator, rho], [beta, 1.0 - beta]),
            env.factorization.phi,
        )
        for beta in betas
    ]


def covered_policies(
    env: LowRankMDP,
    behavior: Policy,
    candidates: Sequence[Policy],
    max_condition: float,
) -> list[Policy]:
    """
    The candidates whose relative condition number against d^{pi_b} is at most
    ``max_condition``.
    """
    rho = occupancy(env.transition, behavior, env.init_dist, env.gamma)
    covered = []
    for candidate in candidates:
        condition = relative_condition_number(
            occupancy(env.transition, candidate, env.init_dist, env.gamma),
            rho,
            env.factorization.phi,
        )
        if is_finite(condition) and condition <= max_condition:
            covered.append(candidate)
    logger.debug("%d of %d candidates covered.", len(covered), len(candidates))
    return covered
