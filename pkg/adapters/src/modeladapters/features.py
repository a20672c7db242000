"""Shared image featurization for the small local classifier.

The fine-tune path and the stub backend must agree on features, or a
trained checkpoint would be useless at emission time: both flatten a
grayscale 16x16 resize to a 256-float vector in [0, 1].
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

FEATURE_SIDE = 16
FEATURE_DIM = FEATURE_SIDE * FEATURE_SIDE


def image_features(path: Path | str, flip: bool = False) -> np.ndarray:
    with Image.open(path) as img:
        gray = img.convert("L").resize((FEATURE_SIDE, FEATURE_SIDE), Image.BILINEAR)
    arr = np.asarray(gray, dtype=np.float32) / 255.0
    if flip:
        arr = arr[:, ::-1]
    return arr.reshape(-1)


def image_size(path: Path | str) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.width, img.height
