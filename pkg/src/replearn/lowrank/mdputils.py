import functools
import inspect
import math
from typing import Any, Callable

import numpy as np

from replearn.exceptions import InvalidModelError, ReplearnValidationError


class MDPUtils:
    """
    Numeric tolerances shared by the low-rank MDP modules, and decorators that
    enforce the preconditions of the exact evaluation routines.
    """

    _stochastic_tolerance = 1e-9
    _dust_tolerance = 1e-12
    _norm_tolerance = 1e-9
    _distribution_tolerance = 1e-12
    _occupancy_tolerance = 1e-9
    _likelihood_floor = 1e-12
    _eigen_threshold = 1e-12
    _vertex_enumeration_max_states = 20
    _random_vertex_samples = 1000
    _vertex_chunk_size = 1 << 14
    _rollin_cap_factor = 100.0

    @classmethod
    def stochastic_tolerance(cls) -> float:
        return cls._stochastic_tolerance

    @classmethod
    def dust_tolerance(cls) -> float:
        return cls._dust_tolerance

    @classmethod
    def norm_tolerance(cls) -> float:
        return cls._norm_tolerance

    @classmethod
    def distribution_tolerance(cls) -> float:
        return cls._distribution_tolerance

    @classmethod
    def occupancy_tolerance(cls) -> float:
        return cls._occupancy_tolerance

    @classmethod
    def likelihood_floor(cls) -> float:
        return cls._likelihood_floor

    @classmethod
    def eigen_threshold(cls) -> float:
        return cls._eigen_threshold

    @classmethod
    def vertex_enumeration_max_states(cls) -> int:
        return cls._vertex_enumeration_max_states

    @classmethod
    def random_vertex_samples(cls) -> int:
        return cls._random_vertex_samples

    @classmethod
    def vertex_chunk_size(cls) -> int:
        return cls._vertex_chunk_size

    @classmethod
    def rollin_cap(cls, gamma: float) -> int:
        """
        Safety cap on roll-in length, 100/(1-gamma) steps.
        """
        return int(math.ceil(cls._rollin_cap_factor / (1.0 - gamma)))

    @classmethod
    def check_transition(cls, transition: np.ndarray) -> None:
        """
        Raises InvalidModelError unless every (s, a) slice of the tensor is a
        probability vector within the stochasticity tolerance.
        """
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise InvalidModelError(
                "Transition tensor must have shape |S|x|A|x|S|, "
                f"got {transition.shape}."
            )
        worst_negative = float(transition.min(initial=0.0))
        if worst_negative < -cls._dust_tolerance:
            raise InvalidModelError(
                f"Transition tensor has negative mass {worst_negative:.3e}."
            )
        deviation = float(np.abs(transition.sum(axis=2) - 1.0).max(initial=0.0))
        if deviation > cls._stochastic_tolerance:
            raise InvalidModelError(
                f"Transition rows deviate from stochasticity by {deviation:.3e}."
            )

    @staticmethod
    def require_stochastic(func: Callable) -> Callable:
        """
        Decorator validating every transition-tensor argument of an exact
        evaluation routine (parameters named ``transition``, ``model_transition``
        or ``reference_transition``).
        """
        signature = inspect.signature(func)
        watched = [
            name
            for name in ("transition", "model_transition", "reference_transition")
            if name in signature.parameters
        ]

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            bound = signature.bind(*args, **kwargs)
            for name in watched:
                if name in bound.arguments:
                    MDPUtils.check_transition(np.asarray(bound.arguments[name]))
            return func(*args, **kwargs)

        return wrapper

    @staticmethod
    def require_discount(func: Callable) -> Callable:
        """
        Decorator enforcing 0 <= gamma < 1 on the ``gamma`` parameter.
        """
        signature = inspect.signature(func)

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            bound = signature.bind(*args, **kwargs)
            gamma = bound.arguments.get("gamma")
            if gamma is not None and not 0.0 <= float(gamma) < 1.0:
                raise ReplearnValidationError(
                    f"Discount factor must lie in [0, 1), got {gamma}."
                )
            return func(*args, **kwargs)

        return wrapper
