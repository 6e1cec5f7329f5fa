"""Model oracles: anything that maps an image to class confidences.

The engine only ever sees this interface; backends range from the ONNX
executor (production) to closed-form synthetic oracles used for testing
and calibration.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .core import ImageTensor


class ModelOracle(ABC):
    """Deterministic scorer: image -> post-softmax confidence vector."""

    @property
    @abstractmethod
    def class_count(self) -> int: ...

    @abstractmethod
    def predict(self, image: ImageTensor) -> np.ndarray:
        """Confidence per class; entries in [0, 1], summing to 1."""


class ConstantOracle(ModelOracle):
    """Ignores the image entirely; useful as a null baseline."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=np.float64)
        self._probs = p / p.sum()

    @property
    def class_count(self) -> int:
        return self._probs.size

    def predict(self, image: ImageTensor) -> np.ndarray:
        return self._probs.copy()


class RegionOracle(ModelOracle):
    """Two-class oracle keyed to a fixed spatial region.

    Class 0 confidence is a sigmoid of the mean pixel value (over channels)
    inside the region, centered at ``midpoint`` and sharpened by ``gain``.
    ``gain=inf`` gives a hard step, which is handy when tests need scores
    that are exactly reproducible across fixtures.
    """

    def __init__(self, region: np.ndarray, gain: float = 8.0, midpoint: float = 0.5):
        self.region = np.asarray(region, dtype=bool)
        if not self.region.any():
            raise ValueError("region mask is empty")
        self.gain = float(gain)
        self.midpoint = float(midpoint)

    @property
    def class_count(self) -> int:
        return 2

    def predict(self, image: ImageTensor) -> np.ndarray:
        if image.values.shape[1:] != self.region.shape:
            raise ValueError(
                f"image spatial dims {image.values.shape[1:]} != region {self.region.shape}"
            )
        mean = float(image.values[:, self.region].mean())
        x = mean - self.midpoint
        if np.isinf(self.gain):
            p = 1.0 if x > 0 else 0.0 if x < 0 else 0.5
        else:
            p = 1.0 / (1.0 + np.exp(-self.gain * x))
        return np.array([p, 1.0 - p])
