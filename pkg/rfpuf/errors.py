"""Exceptions raised across the pipeline."""

from __future__ import annotations


class ConfigurationError(RuntimeError):
    """The experiment document or runtime settings are missing or invalid."""


class FrameRejectedError(ValueError):
    """Feature extraction cannot produce a vector from a received frame."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"{stage}: {message}")
        self.stage = stage


__all__ = [
    "ConfigurationError",
    "FrameRejectedError",
    "PipelineError",
    "TrainingDivergedError",
]
