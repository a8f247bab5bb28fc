"""Failure-memory reinforcement learning toolkit.

A replay memory for the terminal tails of hazard-ended episodes, a learned
state-action risk embedding over them, and an action selector that steers
sampled candidates away from remembered failures — plus two baseline
learners, hazard-terminating toy environments, and a CLI experiment
harness.
"""

from .errors import (
    CoherenceError,
    ConfigError,
    FemaError,
    SerializationError,
    ShapeError,
    TrainingError,
    UsageError,
)
from .memory import FailureMemory, FemaConfig, Transition, capture_failure

__version__ = "0.1.0"

__all__ = [
    "CoherenceError",
    "ConfigError",
    "FailureMemory",
    "FemaConfig",
    "FemaError",
    "SerializationError",
    "ShapeError",
    "TrainingError",
    "Transition",
    "UsageError",
    "capture_failure",
    "__version__",
]
