"""
Tests for the replearn exceptions.
"""
import pickle

import pytest

from replearn.exceptions import (
    ConfigurationError,
    ExperimentIOError,
    GenerationError,
    InvalidModelError,
    PlannerNonConvergenceError,
    ReplearnBaseException,
    ReplearnValidationError,
    StructuralError,
)


class TestExceptions:
    """
    Tests for the replearn exception classes.
    """

    def test_base_exception(self):
        """Test that ReplearnBaseException is a subclass of Exception."""
        assert issubclass(ReplearnBaseException, Exception)

        exception = ReplearnBaseException("Test message")
        assert str(exception) == "Test message"

    @pytest.mark.parametrize(
        "exception_class",
        [
            StructuralError,
            InvalidModelError,
            ReplearnValidationError,
            PlannerNonConvergenceError,
            ConfigurationError,
            GenerationError,
            ExperimentIOError,
        ],
    )
    def test_subclasses(self, exception_class):
        """Test that every replearn error derives from ReplearnBaseException."""
        assert issubclass(exception_class, ReplearnBaseException)

        exception = exception_class("Something failed")
        assert str(exception) == "Something failed"

    def test_not_value_errors(self):
        """Test that domain errors are not ValueErrors, so pydantic validators
        let them through unchanged."""
        assert not issubclass(ReplearnValidationError, ValueError)
        assert not issubclass(StructuralError, ValueError)

    def test_experiment_io_error_path(self):
        """Test that ExperimentIOError keeps the offending path."""
        exception = ExperimentIOError("Cannot write", path="/tmp/out.csv")

        assert exception.path == "/tmp/out.csv"
        assert str(exception) == "Cannot write [/tmp/out.csv]"

    def test_experiment_io_error_without_path(self):
        """Test that ExperimentIOError works without a path."""
        exception = ExperimentIOError("Cannot write")

        assert exception.path is None
        assert str(exception) == "Cannot write"

    def test_experiment_io_error_pickles(self):
        """Test that the path survives a pickle round trip between processes."""
        exception = ExperimentIOError("Cannot write", path="/tmp/out.csv")

        restored = pickle.loads(pickle.dumps(exception))

        assert isinstance(restored, ExperimentIOError)
        assert restored.path == "/tmp/out.csv"
        assert str(restored) == "Cannot write [/tmp/out.csv]"
