"""Combine component activation maps into a single meta map.

Three routes: plain average, weighted average (weights derived from ROAD
scores through one of four transforms), and consensus top-k thresholding
of the summed maps.  Individual maps can be thresholded the same way, and
a uniform-noise control map can be generated for inclusion studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ActivationMap, normalize, pixel_count, top_k_flat
from .errors import DimensionMismatch, EmptyInput, NonFiniteInput

TRANSFORMS = ("raw", "minmax", "softmax", "exponential")


@dataclass(frozen=True)
class FusionWeights:
    """Per-map weights after transforming a vector of ROAD scores.

    ``degenerate`` is set when the transform produced no usable mass and a
    uniform fallback was applied.
    """

    weights: np.ndarray
    transform: str
    degenerate: bool = False


@dataclass(frozen=True)
class ConsensusMap:
    """Top-k thresholded sum of normalized maps.

    Retained pixels keep their summed value (the ranking matters for ROAD);
    everything below the threshold is exactly zero.
    """

    map: ActivationMap
    k_percent: float
    threshold_value: float

    @property
    def values(self) -> np.ndarray:
        return self.map.values


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max()
    e = np.exp(z)
    return e / e.sum()


def compute_weights(road_scores: Sequence[float], transform: str) -> FusionWeights:
    """Turn raw ROAD scores into non-negative fusion weights."""
    if len(road_scores) == 0:
        raise EmptyInput("no ROAD scores")
    if transform not in TRANSFORMS:
        raise ValueError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")
    s = np.asarray(road_scores, dtype=np.float64)

    if transform == "raw":
        w = np.clip(s, 0.0, None)
    elif transform == "minmax":
        lo, hi = s.min(), s.max()
        w = np.zeros_like(s) if hi == lo else (s - lo) / (hi - lo)
    elif transform == "softmax":
        # Scores are amplified by a power of ten so the largest magnitude
        # reaches at least 10 before the softmax sharpens the contrast.
        m = np.abs(s).max()
        if m > 0 and m < 10.0:
            s = s * 10.0 ** math.ceil(math.log10(10.0 / m))
        w = _softmax(s)
    else:  # exponential
        w = _softmax(s)

    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        return FusionWeights(np.full(len(s), 1.0 / len(s)), transform, degenerate=True)
    return FusionWeights(w, transform)


def _check_stack(maps: Sequence[ActivationMap]) -> np.ndarray:
    if len(maps) == 0:
        raise EmptyInput("no activation maps to fuse")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise DimensionMismatch(f"map {m.label!r} has shape {m.shape}, expected {shape}")
    return np.stack([normalize(m).values for m in maps])


def fuse_average(maps: Sequence[ActivationMap]) -> ActivationMap:
    """Elementwise mean of normalized maps, re-normalized to [0, 1]."""
    stack = _check_stack(maps)
    mean = stack.mean(axis=0)
    return normalize(ActivationMap(mean, label="average"))


def fuse_weighted(
    maps: Sequence[ActivationMap],
    road_scores: Sequence[float],
    transform: str = "softmax",
) -> ActivationMap:
    """ROAD-weighted mean of normalized maps, re-normalized to [0, 1]."""
    if len(maps) != len(road_scores):
        raise DimensionMismatch(
            f"{len(maps)} maps but {len(road_scores)} ROAD scores"
        )
    stack = _check_stack(maps)
    fw = compute_weights(road_scores, transform)
    blended = np.tensordot(fw.weights, stack, axes=1) / fw.weights.sum()
    out = normalize(ActivationMap(blended, label=f"weighted[{transform}]"))
    out.meta["degenerate_weights"] = fw.degenerate
    return out


def fuse_consensus(maps: Sequence[ActivationMap], k_percent: float) -> ConsensusMap:
    """Sum normalized maps and keep only the top-k% of summed activations."""
    stack = _check_stack(maps)
    count = pixel_count(k_percent, *stack.shape[1:])
    summed = stack.sum(axis=0)
    keep = top_k_flat(summed, count)
    out = np.zeros_like(summed)
    out.ravel()[keep] = summed.ravel()[keep]
    threshold = float(summed.ravel()[keep].min())
    label = "consensus" if len(maps) > 1 else maps[0].label
    return ConsensusMap(ActivationMap(out, label=label), float(k_percent), threshold)


def threshold_single(m: ActivationMap, k_percent: float) -> ConsensusMap:
    """Top-k thresholding of one component map.

    Unlike ``fuse_consensus`` there is nothing to sum, so the map's own
    values are retained as-is (no re-normalization; the pixel ranking is
    identical either way).
    """
    if not np.all(np.isfinite(m.values)):
        raise NonFiniteInput(f"map {m.label!r} contains NaN/Inf")
    count = pixel_count(k_percent, m.height, m.width)
    keep = top_k_flat(m.values, count)
    out = np.zeros_like(m.values)
    out.ravel()[keep] = m.values.ravel()[keep]
    threshold = float(m.values.ravel()[keep].min())
    return ConsensusMap(ActivationMap(out, label=m.label), float(k_percent), threshold)


def random_cam(height: int, width: int, seed: int) -> ActivationMap:
    """Uniform[-1, 1] control map; normalized at fusion like any component."""
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-1.0, 1.0, size=(height, width))
    return ActivationMap(vals, label="RandomCAM")
