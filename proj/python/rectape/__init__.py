"""Recommender models trained on a reverse-mode autodiff tape.

Experiments are described by INI-style config files; see docs/config.md.
"""

from ._rectape import (
    CheckpointError,
    Error,
    ExperimentConfig,
    Model,
    ValidationError,
    evaluate,
    load_model,
    model_names,
    run,
)

__all__ = [
    "CheckpointError",
    "Error",
    "ExperimentConfig",
    "Model",
    "ValidationError",
    "evaluate",
    "load_model",
    "model_names",
    "run",
]
