"""Dataset loading through the manifest/PNG contract.

A dataset directory contains ``manifest.json`` whose ``entries`` list
relative ``image_path``/``mask_path`` pairs of 8-bit grayscale PNGs.
Masks are binarized at pixel value 128: white = safe, black = unsafe.
Channel order of the one-hot target is (safe, danger).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def _load_gray(path: Path, resolution: int) -> np.ndarray:
    with Image.open(path) as img:
        img = img.convert("L")
        if img.size != (resolution, resolution):
            img = img.resize((resolution, resolution), Image.BILINEAR)
        return np.asarray(img, dtype=np.float32) / 255.0


def load_pairs(manifest_path, resolution: int = 512):
    """Return (images (N,R,R,1) float32 in [0,1], targets (N,R,R,2) one-hot)."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    entries = manifest.get("entries", [])
    if not entries:
        raise ValueError(f"{manifest_path}: empty manifest")
    root = manifest_path.parent
    images = np.empty((len(entries), resolution, resolution, 1), np.float32)
    targets = np.empty((len(entries), resolution, resolution, 2), np.float32)
    for i, entry in enumerate(entries):
        images[i, ..., 0] = _load_gray(root / entry["image_path"], resolution)
        safe = _load_gray(root / entry["mask_path"], resolution) >= 128 / 255.0
        targets[i, ..., 0] = safe
        targets[i, ..., 1] = ~safe
    return images, targets


def load_images(image_dir, resolution: int = 512):
    """Return (stack (N,R,R,1), sorted file names) for every PNG in a dir."""
    image_dir = Path(image_dir)
    paths = sorted(image_dir.glob("*.png"))
    if not paths:
        raise ValueError(f"{image_dir}: no PNG images")
    stack = np.empty((len(paths), resolution, resolution, 1), np.float32)
    for i, path in enumerate(paths):
        stack[i, ..., 0] = _load_gray(path, resolution)
    return stack, [p.name for p in paths]
