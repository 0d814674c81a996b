"""Prediction export: per input frame, two 8-bit PNGs holding the softmax
channels (``safe_%06d.png`` / ``danger_%06d.png``) plus a ``video.json``
tag — the directory layout the evaluation pipeline consumes."""

from __future__ import annotations

import json
from pathlib import Path

import keras
import numpy as np
from PIL import Image

from .data import load_images


def _write_channel(channel: np.ndarray, path: Path) -> None:
    quantized = np.floor(channel * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path)


def predict(checkpoint, image_dir, out_dir, site_id: str,
            truth: str | None = None, fps: float | None = None,
            resolution: int = 512, batch_size: int = 4) -> list:
    """Run the checkpoint over every PNG in ``image_dir`` (sorted by name)
    and write the prediction video directory. Returns the frame names."""
    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise FileNotFoundError(f"missing checkpoint {checkpoint}")
    model = keras.saving.load_model(checkpoint)
    images, names = load_images(image_dir, resolution)
    probs = model.predict(images, batch_size=batch_size, verbose=0)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(len(names)):
        _write_channel(probs[t, ..., 0], out_dir / f"safe_{t:06d}.png")
        _write_channel(probs[t, ..., 1], out_dir / f"danger_{t:06d}.png")
    meta = {"site_id": site_id, "frames": names}
    if truth is not None:
        meta["truth"] = truth
    if fps is not None:
        meta["fps"] = fps
    with open(out_dir / "video.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return names
