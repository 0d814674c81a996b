"""Small U-Net trainer for landing-safety segmentation.

Consumes image/mask datasets through their manifest, trains a compact
encoder/decoder network with a two-channel softmax head, and emits
per-frame safe/danger probability PNG pairs for the evaluation pipeline.
"""

from .config import TrainConfig
from .model import build_unet

__all__ = ["TrainConfig", "build_unet"]
__version__ = "0.1.0"
