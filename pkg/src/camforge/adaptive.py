"""Adaptive top-k threshold search driven by ROAD.

Exhaustive sweep over a retention grid; ROAD(k) is not assumed unimodal,
so no bracketing shortcuts.  One noise seed is shared across all k in a
sweep: per-k scores form a paired comparison rather than being confounded
by independent imputation noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ActivationMap, ImageTensor
from .errors import EmptyInput, InvalidK
from .fusion import ConsensusMap, fuse_consensus, threshold_single
from .oracle import ModelOracle
from .road import DEFAULT_PERCENTILES, ImputationConfig, RoadScore, road_score

# Typical retention range determined experimentally; full-range mode is the
# integer grid over (0, 100].
DEFAULT_K_GRID = tuple(range(15, 46))
FULL_K_GRID = tuple(range(1, 101))


@dataclass(frozen=True)
class ThresholdSweep:
    k_values: tuple[float, ...]
    scores: tuple[RoadScore, ...]
    best_k: float
    best_score: float

    def combined(self) -> np.ndarray:
        return np.array([s.combined for s in self.scores])

    def to_dict(self) -> dict:
        return {
            "k_values": list(self.k_values),
            "scores": [s.to_dict() for s in self.scores],
            "best_k": self.best_k,
            "best_score": self.best_score,
        }


def adaptive_threshold(
    maps: Sequence[ActivationMap],
    image: ImageTensor,
    class_id: int,
    oracle: ModelOracle,
    k_grid: Sequence[float] = DEFAULT_K_GRID,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    config: ImputationConfig = ImputationConfig(),
    seed=0,
    fuser=None,
) -> tuple[ConsensusMap, ThresholdSweep]:
    """Score the consensus map at every k and return the best retention level.

    Ties resolve to the smallest k (the sparser, more refined map).
    ``fuser`` overrides how the map at a given k is built (k -> ConsensusMap).
    """
    if len(maps) == 0:
        raise EmptyInput("no maps for adaptive thresholding")
    if len(k_grid) == 0:
        raise InvalidK("k_grid is empty")
    ks = sorted(float(k) for k in k_grid)
    fuse = fuser if fuser is not None else lambda k: fuse_consensus(maps, k)

    consensus: list[ConsensusMap] = []
    scores: list[RoadScore] = []
    for k in ks:
        cm = fuse(k)
        consensus.append(cm)
        scores.append(
            road_score(image, cm.map, class_id, oracle, percentiles, config, seed)
        )

    best_i = 0
    for i in range(1, len(ks)):
        if scores[i].combined > scores[best_i].combined:
            best_i = i
    sweep = ThresholdSweep(
        tuple(ks), tuple(scores), ks[best_i], scores[best_i].combined
    )
    return consensus[best_i], sweep


def adaptive_threshold_single(
    m: ActivationMap,
    image: ImageTensor,
    class_id: int,
    oracle: ModelOracle,
    k_grid: Sequence[float] = DEFAULT_K_GRID,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    config: ImputationConfig = ImputationConfig(),
    seed=0,
) -> tuple[ConsensusMap, ThresholdSweep]:
    """Adaptive thresholding of one component map."""
    return adaptive_threshold(
        [m], image, class_id, oracle, k_grid, percentiles, config, seed,
        fuser=lambda k: threshold_single(m, k),
    )
