"""
Bonus schedules, regularized feature covariance and elliptical bonus evaluation.
"""

import math
from typing import Optional

import numpy as np
from scipy import linalg

from replearn.exceptions import ReplearnValidationError, StructuralError
from replearn.lowrank.models import Factorization, TransitionDataset
from replearn.online.models import BonusModel


def _confidence_log(class_size: int, n: int, delta: float) -> float:
    return math.log(class_size * n / delta)


def schedules(
    n: int,
    dim: int,
    num_actions: int,
    class_size: int,
    delta: float,
    gamma: float,
    c_alpha: float = 1.0,
    c_lambda: float = 1.0,
) -> tuple[float, float]:
    """
    Bonus scale and regularizer for episode ``n``.

    Returns:
        tuple[float, float]: alpha_n =
        c_alpha * sqrt((|A| + d^2) gamma ln(|M| n / delta)) and
        lambda_n = c_lambda * d * ln(|M| n / delta).

    Raises:
        ReplearnValidationError: If n < 1.
    """
    if n < 1:
        raise ReplearnValidationError(f"Episode index must be >= 1, got {n}.")
    log_term = _confidence_log(class_size, n, delta)
    alpha = c_alpha * math.sqrt((num_actions + dim**2) * gamma * log_term)
    lam = c_lambda * dim * log_term
    return alpha, lam


def feature_matrix(phi: Factorization | np.ndarray) -> np.ndarray:
    return phi.phi if isinstance(phi, Factorization) else np.asarray(phi, np.float64)


def weighted_covariance(phi: np.ndarray, weights: np.ndarray, lam: float) -> np.ndarray:
    """
    sum_i w_i phi_i phi_i^T + lam I, with ``weights`` aligned to the rows of phi.
    """
    covariance = phi.T @ (weights[:, None] * phi)
    covariance = 0.5 * (covariance + covariance.T)
    return covariance + lam * np.eye(phi.shape[1])


def empirical_covariance(
    phi_hat: Factorization | np.ndarray, data: TransitionDataset, lam: float
) -> np.ndarray:
    """
    Sigma_hat = sum over the dataset of phi_hat(s,a) phi_hat(s,a)^T + lam I.
    """
    if lam <= 0.0:
        raise ReplearnValidationError(f"Regularizer must be positive, got {lam}.")
    phi = feature_matrix(phi_hat)
    if phi.shape[0] != data.num_states * data.num_actions:
        raise StructuralError("Feature rows do not match the dataset's |S| x |A|.")
    return weighted_covariance(phi, data.visit_counts().reshape(-1), lam)


def squared_norms(phi: np.ndarray, covariance: np.ndarray) -> np.ndarray:
    """
    phi_i^T covariance^-1 phi_i for every row, through a Cholesky solve.
    """
    factor = linalg.cho_factor(covariance, lower=True)
    solved = linalg.cho_solve(factor, phi.T)
    return np.maximum(np.einsum("id,di->i", phi, solved), 0.0)


def make_bonus(
    fitted: Factorization,
    sigma_hat: np.ndarray,
    alpha: float,
    clamp: float = 2.0,
    model_index: Optional[int] = None,
) -> BonusModel:
    return BonusModel(
        phi_hat=fitted.phi,
        sigma_hat=sigma_hat,
        alpha=alpha,
        clamp=clamp,
        num_actions=fitted.num_actions,
        model_index=model_index,
    )


def bonus_eval(bonus: BonusModel, state: int, action: int) -> float:
    """
    min(alpha * sqrt(phi_hat^T Sigma_hat^-1 phi_hat), clamp) at (state, action).
    """
    phi = bonus.phi_hat[state * bonus.num_actions + action][None, :]
    width = math.sqrt(float(squared_norms(phi, bonus.sigma_hat)[0]))
    return min(bonus.alpha * width, bonus.clamp)


def bonus_table(bonus: BonusModel) -> np.ndarray:
    """
    The bonus at every (s, a), as an |S| x |A| matrix with values in [0, clamp].
    """
    if bonus.alpha == 0.0:
        return np.zeros((bonus.num_states, bonus.num_actions))
    widths = np.sqrt(squared_norms(bonus.phi_hat, bonus.sigma_hat))
    table = np.minimum(bonus.alpha * widths, bonus.clamp)
    return table.reshape(bonus.num_states, bonus.num_actions)
