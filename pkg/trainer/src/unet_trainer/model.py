"""U-Net variant: N encoder stages, a bridge, N decoder stages with skip
connections, and a two-channel pixelwise softmax head.

The standard variant uses conv + batchnorm + leaky ReLU blocks with
2x max-pool downsampling and nearest-neighbor upsampling. The
``coral_compat`` variant drops the normalization layers, upsamples with
transpose convolutions, and keeps a fixed-slope leaky rectifier — the
substitutions needed for edge-TPU conversion.
"""

from __future__ import annotations

import keras
from keras import layers

from .config import TrainConfig

LEAK = 0.1


def _conv_block(x, width, coral_compat, name):
    for i in (1, 2):
        x = layers.Conv2D(width, 3, padding="same", use_bias=coral_compat,
                          name=f"{name}_conv{i}")(x)
        if not coral_compat:
            # momentum low enough that the inference-time moving statistics
            # converge within the few hundred steps a desk-scale run takes
            x = layers.BatchNormalization(momentum=0.9,
                                          name=f"{name}_norm{i}")(x)
        x = layers.LeakyReLU(negative_slope=LEAK, name=f"{name}_act{i}")(x)
    return x


def build_unet(config: TrainConfig) -> keras.Model:
    widths = [config.base_width * 2 ** s for s in range(config.stages)]
    inp = layers.Input((config.resolution, config.resolution, 1),
                       name="gray_in")
    x = inp
    skips = []
    for s, width in enumerate(widths):
        x = _conv_block(x, width, config.coral_compat, f"enc{s}")
        skips.append(x)
        x = layers.MaxPooling2D(2, name=f"down{s}")(x)
    x = _conv_block(x, widths[-1] * 2, config.coral_compat, "bridge")
    for s, width in reversed(list(enumerate(widths))):
        if config.coral_compat:
            x = layers.Conv2DTranspose(width, 2, strides=2,
                                       name=f"up{s}")(x)
        else:
            x = layers.UpSampling2D(2, name=f"up{s}")(x)
        x = layers.Concatenate(name=f"skip{s}")([x, skips[s]])
        x = _conv_block(x, width, config.coral_compat, f"dec{s}")
    out = layers.Conv2D(2, 1, activation="softmax", name="safety_head")(x)
    model = keras.Model(inp, out, name="safety_unet")
    model.compile(
        optimizer=keras.optimizers.Adam(config.learning_rate),
        loss="categorical_crossentropy",
        metrics=["categorical_accuracy"])
    return model
