"""Prediction post-processing and the video-level validation protocol.

The classifier emits two per-pixel channels, safety and danger. Frames
are post-processed (optional spatial box blur to patch holes between
sparse danger detections, optional temporal max over recent frames to
retain them), binarized against a threshold pair, and judged by the
majority of the frame's central region. Per-frame verdicts aggregate to
one safe/unsafe decision per video.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

DEFAULT_BLUR_KERNEL = 15
DEFAULT_TEMPORAL_WINDOW = 5
DEFAULT_REGION_FRACTION = 0.25
SWEEP_VALUES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class Thresholds:
    """Safety threshold; the danger threshold is its complement."""

    safety: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.safety < 1.0:
            raise ValueError("safety threshold must lie in (0, 1)")

    @property
    def danger(self) -> float:
        return 1.0 - self.safety


@dataclass
class PredictionFrame:
    p_safe: np.ndarray
    p_danger: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        self.p_safe = np.asarray(self.p_safe, dtype=np.float64)
        self.p_danger = np.asarray(self.p_danger, dtype=np.float64)
        if self.p_safe.shape != self.p_danger.shape:
            raise ValueError("channel dimension mismatch")


@dataclass
class ValidationVerdict:
    per_frame_safe: list
    safety_prediction: float
    final: str                 # "safe" | "unsafe"
    site_id: str = ""
    truth: str | None = None   # "safe" | "unsafe"

    @property
    def correct(self) -> bool | None:
        return None if self.truth is None else self.final == self.truth

    def to_json(self) -> dict:
        return {"site_id": self.site_id, "truth": self.truth,
                "final": self.final, "safety_prediction": self.safety_prediction,
                "per_frame_safe": [bool(v) for v in self.per_frame_safe],
                "correct": self.correct}


def binarize(frame: PredictionFrame, t: Thresholds,
             danger_channel: np.ndarray | None = None) -> np.ndarray:
    """Boolean danger map: a pixel is dangerous when the danger channel
    reaches the danger threshold or the safety channel misses the safety
    threshold. danger_channel overrides frame.p_danger so post-processed
    maps can be thresholded with the original safety channel."""
    danger = frame.p_danger if danger_channel is None else danger_channel
    if danger.shape != frame.p_safe.shape:
        raise ValueError("channel dimension mismatch")
    return (danger >= t.danger) | (frame.p_safe < t.safety)


def box_blur_e1(danger_map: np.ndarray, k: int = DEFAULT_BLUR_KERNEL) -> np.ndarray:
    """k x k mean filter with edge clamping on the continuous danger map."""
    if k < 1 or k % 2 == 0:
        raise ValueError("kernel size must be odd and >= 1")
    if k == 1:
        return np.asarray(danger_map, dtype=np.float64).copy()
    return uniform_filter(np.asarray(danger_map, dtype=np.float64),
                          size=k, mode="nearest")


def temporal_smooth_e2(history) -> np.ndarray:
    """Pointwise maximum over the frames in the history window, so sparse
    danger detections persist instead of averaging away."""
    maps = list(history)
    if not maps:
        raise ValueError("empty history")
    out = np.asarray(maps[0], dtype=np.float64).copy()
    for m in maps[1:]:
        np.maximum(out, m, out=out)
    return out


def center_region(shape, region_fraction: float = DEFAULT_REGION_FRACTION):
    """Slices delimiting the central square of side fraction * min(H, W)."""
    if not 0.0 < region_fraction <= 1.0:
        raise ValueError("region_fraction must lie in (0, 1]")
    h, w = shape
    side = int(round(region_fraction * min(h, w)))
    if side < 1:
        raise ValueError("central region smaller than one pixel")
    r0 = (h - side) // 2
    c0 = (w - side) // 2
    return slice(r0, r0 + side), slice(c0, c0 + side)


def center_verdict(danger_map: np.ndarray,
                   region_fraction: float = DEFAULT_REGION_FRACTION) -> bool:
    """True (safe) only when strictly more than half the central region is
    safe; ties go to unsafe."""
    rows, cols = center_region(danger_map.shape, region_fraction)
    region = np.asarray(danger_map, dtype=bool)[rows, cols]
    return int((~region).sum()) * 2 > region.size


def score_video(frames, truth: str | None = None,
                t: Thresholds = Thresholds(), use_e1: bool = False,
                use_e2: bool = False, k: int = DEFAULT_BLUR_KERNEL,
                n_history: int = DEFAULT_TEMPORAL_WINDOW,
                region_fraction: float = DEFAULT_REGION_FRACTION,
                site_id: str = "") -> ValidationVerdict:
    """Run the per-frame pipeline (E1 -> E2 -> binarize -> center verdict)
    and aggregate: the video is safe when at least half its frames are."""
    frames = list(frames)
    if not frames:
        raise ValueError("empty frame sequence")
    shape = frames[0].p_safe.shape
    history: deque = deque(maxlen=n_history)
    per_frame = []
    for frame in frames:
        if frame.p_safe.shape != shape:
            raise ValueError("inconsistent frame sizes")
        danger = frame.p_danger
        if use_e1:
            danger = box_blur_e1(danger, k=k)
        if use_e2:
            history.append(danger)
            danger = temporal_smooth_e2(history)
        binary = binarize(frame, t, danger_channel=danger)
        per_frame.append(center_verdict(binary, region_fraction))
    prediction = float(np.mean(per_frame))
    return ValidationVerdict(
        per_frame_safe=per_frame, safety_prediction=prediction,
        final="safe" if prediction >= 0.5 else "unsafe",
        site_id=site_id, truth=truth)


def metrics(pred_safe: np.ndarray, pred_danger: np.ndarray,
            truth_safe: np.ndarray) -> dict:
    """Two-class pixel metrics against a binary safe mask.

    categorical_accuracy is the argmax match rate; cross_entropy is the
    mean negative log-likelihood with probabilities clamped away from 0
    and 1.
    """
    pred_safe = np.asarray(pred_safe, dtype=np.float64)
    pred_danger = np.asarray(pred_danger, dtype=np.float64)
    truth_safe = np.asarray(truth_safe)
    if pred_safe.shape != truth_safe.shape or pred_danger.shape != truth_safe.shape:
        raise ValueError("shape mismatch")
    y = truth_safe.astype(bool)
    pred_is_safe = pred_safe >= pred_danger
    accuracy = float((pred_is_safe == y).mean())
    p_safe = np.clip(pred_safe, 1e-7, 1.0 - 1e-7)
    p_danger = np.clip(pred_danger, 1e-7, 1.0 - 1e-7)
    ce = float(-np.where(y, np.log(p_safe), np.log(p_danger)).mean())
    return {"categorical_accuracy": accuracy, "cross_entropy": ce}


@dataclass
class SweepRow:
    safety_threshold: float
    accuracy: float
    verdicts: list = field(default_factory=list)


def sweep_thresholds(videos, truths, values=SWEEP_VALUES,
                     use_e1: bool = True, use_e2: bool = True,
                     **score_kwargs) -> list[SweepRow]:
    """Score every video at each safety threshold; returns one row per
    threshold with the validation accuracy over the videos."""
    values = list(values)
    if not values:
        raise ValueError("empty sweep list")
    videos = [list(v) for v in videos]
    if len(videos) != len(truths):
        raise ValueError("videos and truths must align")
    rows = []
    for theta in values:
        verdicts = [
            score_video(v, truth=tr, t=Thresholds(theta),
                        use_e1=use_e1, use_e2=use_e2, **score_kwargs)
            for v, tr in zip(videos, truths)
        ]
        accuracy = float(np.mean([v.correct for v in verdicts]))
        rows.append(SweepRow(safety_threshold=theta, accuracy=accuracy,
                             verdicts=verdicts))
    return rows


# ---------------------------------------------------------------------------
# On-disk video format: safe_%06d.png / danger_%06d.png + video.json

def load_prediction_video(directory):
    """Read a directory of per-frame prediction pairs.

    Returns (frames, meta) where meta comes from video.json
    ({site_id, truth, fps, optional region_fraction}).
    """
    from .dataset import read_gray_png

    directory = Path(directory)
    safe_paths = sorted(directory.glob("safe_*.png"))
    if not safe_paths:
        raise ValueError(f"no safe_*.png frames in {directory}")
    frames = []
    for safe_path in safe_paths:
        m = re.match(r"safe_(\d+)\.png$", safe_path.name)
        danger_path = directory / f"danger_{m.group(1)}.png"
        if not danger_path.is_file():
            raise ValueError(f"missing {danger_path.name}")
        frames.append(PredictionFrame(
            p_safe=read_gray_png(safe_path),
            p_danger=read_gray_png(danger_path),
            timestamp=int(m.group(1))))
    meta_path = directory / "video.json"
    meta = {}
    if meta_path.is_file():
        with open(meta_path) as fh:
            meta = json.load(fh)
    return frames, meta
