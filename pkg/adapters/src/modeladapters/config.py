"""Adapter configuration: model checkpoints, prompting, fine-tune recipe."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class AdapterConfig:
    """Checkpoint locations, the prompt template, and the fine-tune recipe.

    The training hyperparameter defaults are the supported recipe and
    are asserted verbatim by the tests; override them explicitly when
    experimenting.  The augmentation list is configurable because no
    single canonical set exists; only ``horizontal_flip`` is built in.
    """

    classifier_checkpoint: str = ""
    detector_checkpoint: str = ""
    segmenter_checkpoint: str = ""
    prompt_template: str = "a photo of a {}"

    optimizer: str = "adamw"
    learning_rate: float = 2e-5
    weight_decay: float = 0.7
    batch_size: int = 32
    lr_schedule: str = "cosine"
    epochs: int = 50
    seed: int = 0
    augmentations: tuple[str, ...] = ("horizontal_flip",)

    _KNOWN_AUGMENTATIONS = ("horizontal_flip",)

    def __post_init__(self):
        if self.optimizer != "adamw":
            raise ValueError(f"unsupported optimizer {self.optimizer!r} (only 'adamw')")
        if self.lr_schedule != "cosine":
            raise ValueError(f"unsupported lr schedule {self.lr_schedule!r} (only 'cosine')")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be at least 1")
        if "{}" not in self.prompt_template:
            raise ValueError("prompt template must contain a {} placeholder")
        unknown = sorted(set(self.augmentations) - set(self._KNOWN_AUGMENTATIONS))
        if unknown:
            raise ValueError(f"unknown augmentations {unknown}")

    def with_overrides(self, **kwargs) -> "AdapterConfig":
        return dataclasses.replace(self, **kwargs)

    def echo(self) -> dict:
        """The effective fine-tune recipe, for dry runs and training logs."""
        return {
            "optimizer": self.optimizer,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "lr_schedule": self.lr_schedule,
            "epochs": self.epochs,
            "seed": self.seed,
            "augmentations": list(self.augmentations),
        }
