"""
Custom exceptions for the DTRformer engine.

Provides a clear exception hierarchy for better error handling and debugging.
Each exception type represents a specific failure mode that can be handled appropriately.
"""

from pathlib import Path
from typing import Optional


class DTRBaseException(Exception):
    """Base exception for all engine errors."""
    pass


class ConfigurationError(DTRBaseException):
    """Raised for invalid experiment or model configuration.

    Unknown config keys, values failing validation, a model width not
    divisible by the head count, or an ablation combination that leaves
    the fusion module without input.
    """
    pass


class DataValidationError(DTRBaseException):
    """Raised for invalid input data.

    Bad file magic, node ids out of range, conflicting duplicate edges,
    empty series or a split too short for a single window.
    """
    pass


class ShapeMismatchError(DTRBaseException):
    """Raised when operand shapes are incompatible for an op or block."""
    pass


# Numeric Exceptions

class NumericError(DTRBaseException):
    """Base class for numeric failures inside the tensor substrate."""
    pass


class NonFiniteError(NumericError):
    """Raised when an op receives NaN/Inf where a finite value is required."""
    pass


class NonFiniteGradientError(NumericError):
    """Raised when backpropagation or an optimizer step meets a NaN/Inf gradient.

    ``source`` names the op record or parameter that produced it.
    """

    def __init__(self, message: str, source: Optional[str] = None):
        super().__init__(message)
        self.source = source


class CheckpointError(DTRBaseException):
    """Raised for unreadable checkpoints or parameter sets that do not match the model."""
    pass


# Training Exceptions

class TrainingError(DTRBaseException):
    """Base class for training loop failures."""
    pass


class TrainingDivergedError(TrainingError):
    """Raised when the training loss becomes non-finite.

    The model is restored from ``checkpoint`` (the last good one) when it exists.
    """

    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        super().__init__(message)
        self.checkpoint = checkpoint
