from __future__ import annotations

from typing import Type

from misspec_lab.core.experiment import BaseExperiment

EXPERIMENT_REGISTRY: dict[str, Type[BaseExperiment]] = {}


def register_experiment(name: str):
    """Decorator to register an experiment class under its subcommand name."""

    def decorator(cls: Type[BaseExperiment]):
        cls.name = name
        EXPERIMENT_REGISTRY[name] = cls
        return cls

    return decorator
