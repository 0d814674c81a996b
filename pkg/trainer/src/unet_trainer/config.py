"""Training configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class TrainConfig:
    """Hyperparameters for the segmentation trainer.

    The network is fully convolutional, so ``resolution`` only has to be
    divisible by ``2 ** stages``; the deployed input size is 512.
    """

    stages: int = 4
    base_width: int = 8
    resolution: int = 512
    max_epochs: int = 100
    patience: int = 15
    learning_rate: float = 5e-5
    batch_size: int = 4
    repeats: int = 1
    seed: int = 0
    coral_compat: bool = False

    def __post_init__(self):
        if self.stages not in (3, 4):
            raise ValueError("stages must be 3 or 4")
        if self.resolution % (2 ** self.stages) != 0:
            raise ValueError(
                f"resolution must be divisible by {2 ** self.stages}")
        if self.base_width < 1:
            raise ValueError("base_width must be positive")
        if self.max_epochs < 1 or self.patience < 0:
            raise ValueError("bad epoch/patience configuration")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.repeats < 1:
            raise ValueError("batch_size and repeats must be positive")
