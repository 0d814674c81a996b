"""Training loop: early stopping on test loss, best-of-N repeats,
checkpoint of the best epoch, per-epoch history CSV."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import keras
import numpy as np

from .config import TrainConfig
from .data import load_pairs
from .model import build_unet


class _StopAtAccuracy(keras.callbacks.Callback):
    """Halt once training accuracy reaches a target (overfit sanity runs)."""

    def __init__(self, target: float):
        super().__init__()
        self.target = target

    def on_epoch_end(self, epoch, logs=None):
        if logs and logs.get("categorical_accuracy", 0.0) >= self.target:
            self.model.stop_training = True


@dataclass
class TrainResult:
    checkpoint_path: Path
    history_path: Path
    best_test_loss: float
    epochs_run: int
    repeat_losses: list


def _fit_once(train_xy, test_xy, config: TrainConfig, seed: int,
              stop_at_accuracy: float | None):
    keras.utils.set_random_seed(seed)
    model = build_unet(config)
    callbacks = [keras.callbacks.EarlyStopping(
        monitor="val_loss", patience=config.patience,
        restore_best_weights=True)]
    if stop_at_accuracy is not None:
        callbacks.append(_StopAtAccuracy(stop_at_accuracy))
    history = model.fit(
        train_xy[0], train_xy[1], batch_size=config.batch_size,
        epochs=config.max_epochs, validation_data=test_xy,
        callbacks=callbacks, verbose=0)
    best = float(np.min(history.history["val_loss"]))
    return model, history.history, best


def train(manifest_train, manifest_test, config: TrainConfig, out_dir,
          stop_at_accuracy: float | None = None) -> TrainResult:
    """Train ``config.repeats`` models and keep the one with the lowest
    test loss. Writes ``model.keras`` and ``history.csv`` under
    ``out_dir``. ``stop_at_accuracy`` optionally halts a run early once
    training accuracy reaches the given level (overfit sanity runs)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_xy = load_pairs(manifest_train, config.resolution)
    test_xy = load_pairs(manifest_test, config.resolution)

    best_model = None
    best_history = None
    best_loss = np.inf
    repeat_losses = []
    for r in range(config.repeats):
        model, hist, loss = _fit_once(train_xy, test_xy, config,
                                      config.seed + r, stop_at_accuracy)
        repeat_losses.append(loss)
        if loss < best_loss:
            best_model, best_history, best_loss = model, hist, loss

    losses = best_history["loss"]
    if len(losses) > 1 and all(b >= a for a, b in zip(losses, losses[1:])):
        warnings.warn("training loss never decreased", RuntimeWarning)

    checkpoint_path = out_dir / "model.keras"
    best_model.save(checkpoint_path)
    history_path = out_dir / "history.csv"
    fields = ["epoch", "loss", "categorical_accuracy", "val_loss",
              "val_categorical_accuracy"]
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for epoch in range(len(losses)):
            writer.writerow([epoch] + [best_history[f][epoch]
                                       for f in fields[1:]])
    return TrainResult(checkpoint_path=checkpoint_path,
                       history_path=history_path,
                       best_test_loss=best_loss,
                       epochs_run=len(losses),
                       repeat_losses=repeat_losses)
