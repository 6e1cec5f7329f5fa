"""Image preprocessing: shorter-side resize, center crop, normalization.

The standard ImageNet evaluation pipeline: resize so the shorter side is
256, center-crop 224x224, scale to [0, 1], then per-channel normalize
with the ImageNet mean and standard deviation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])


def preprocess_image(
    path: str | Path,
    resize: int = 256,
    crop: int = 224,
    mean: np.ndarray = IMAGENET_MEAN,
    std: np.ndarray = IMAGENET_STD,
) -> np.ndarray:
    """Load an RGB image file and return the normalized C x H x W tensor."""
    with Image.open(path) as img:
        img = img.convert("RGB")
        w, h = img.size
        if w <= h:
            new_w, new_h = resize, round(h * resize / w)
        else:
            new_w, new_h = round(w * resize / h), resize
        img = img.resize((new_w, new_h), Image.BILINEAR)
        left = (new_w - crop) // 2
        top = (new_h - crop) // 2
        img = img.crop((left, top, left + crop, top + crop))
        arr = np.asarray(img, dtype=np.float64) / 255.0  # H x W x C
    arr = (arr - mean) / std
    return np.transpose(arr, (2, 0, 1))
