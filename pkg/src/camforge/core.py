"""Core data types: activation maps, image tensors, top-k pixel selection.

An ActivationMap is the universal currency of the engine: an H×W grid of
finite activations.  All fusion and scoring operations consume maps that
have passed ``is_valid`` and (where required) ``normalize``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import InvalidK, NonFiniteInput


class PixelIndex(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class ActivationMap:
    """H×W saliency grid.  Values are copied and frozen at construction."""

    values: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"activation map must be 2-D, got shape {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ImageTensor:
    """C×H×W float image plus the per-channel normalization used upstream."""

    values: np.ndarray
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"image tensor must be C×H×W, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput("image tensor contains NaN/Inf")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        for name in ("mean", "std"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=np.float64))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def normalize(m: ActivationMap) -> ActivationMap:
    """Min-max rescale to [0, 1]; a constant map collapses to all-zero."""
    v = m.values
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"map {m.label!r} contains NaN/Inf")
    lo = v.min()
    hi = v.max()
    if hi == lo:
        out = np.zeros_like(v)
    else:
        out = (v - lo) / (hi - lo)
    return ActivationMap(out, label=m.label, meta=dict(m.meta))


def is_valid(m: ActivationMap) -> bool:
    """False for maps with non-finite entries or no signal (all zero)."""
    v = m.values
    if not np.all(np.isfinite(v)):
        return False
    return bool(np.any(v != 0.0))


def pixel_count(k_percent: float, height: int, width: int) -> int:
    """Number of pixels retained at level ``k_percent``: ceil(k% of H·W)."""
    if not (0.0 < k_percent <= 100.0):
        raise InvalidK(f"k_percent must be in (0, 100], got {k_percent}")
    return math.ceil(k_percent / 100.0 * height * width)


def top_k_flat(values: np.ndarray, count: int) -> np.ndarray:
    """Flat indices of the ``count`` largest values, ties by ascending index."""
    flat = values.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))
    return order[:count]


def bottom_k_flat(values: np.ndarray, count: int) -> np.ndarray:
    """Flat indices of the ``count`` smallest values, ties by descending index.

    The descending tie-break mirrors ``top_k_flat`` so that the extremes of a
    constant map are complements of each other.
    """
    flat = values.ravel()
    order = np.lexsort((-np.arange(flat.size), flat))
    return order[:count]


def top_k_mask(m: ActivationMap, k_percent: float) -> set[PixelIndex]:
    """The ceil(k% · H·W) highest-valued pixels, deterministic under ties."""
    count = pixel_count(k_percent, m.height, m.width)
    idx = top_k_flat(m.values, count)
    w = m.width
    return {PixelIndex(int(i) // w, int(i) % w) for i in idx}


def mask_to_flat(mask: Iterable[PixelIndex], width: int) -> np.ndarray:
    """Sorted flat indices for a collection of pixel indices."""
    flat = np.fromiter((r * width + c for r, c in mask), dtype=np.intp)
    flat.sort()
    return flat
