"""ROAD faithfulness scoring via noisy linear imputation.

The most (MRP) or least (LRP) relevant pixels of a map are replaced by the
solution of a neighbor-mean linear system (a blur-like infill), the model
oracle re-scores the perturbed image, and confidences across a set of
perturbation percentiles are combined into one scalar:

    combined = mean_p (C_LRP^p - C_MRP^p) / 2

A faithful map earns a high score: removing its most relevant pixels
destroys confidence while removing its least relevant pixels does not.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    ActivationMap,
    ImageTensor,
    PixelIndex,
    bottom_k_flat,
    mask_to_flat,
    pixel_count,
    top_k_flat,
)
from .errors import AllPixelsMasked, ClassOutOfRange, DimensionMismatch, SolverDivergence
from .oracle import ModelOracle

Mode = Literal["MRP", "LRP"]

DEFAULT_PERCENTILES = (20.0, 40.0, 60.0, 80.0)

# scipy renamed cg's `tol` to `rtol`
_CG_TOL_KW = "rtol" if "rtol" in inspect.signature(spla.cg).parameters else "tol"


@dataclass(frozen=True)
class ImputationConfig:
    """Knobs of the neighbor-mean infill.

    Noise is additive N(0, sigma^2) per masked pixel and channel, applied
    after solving.  The neighborhood is fixed 4-connected; boundary pixels
    average over their existing neighbors only.
    """

    noise_sigma: float = 0.05
    solver_tolerance: float = 1e-6
    max_iterations: int | None = None  # None -> 10 * H * W
    dense_threshold: int = 1000
    solver: str = "auto"  # auto | dense | cg


@dataclass(frozen=True)
class RoadScore:
    percentiles: tuple[float, ...]
    lrp_confidence: tuple[float, ...]
    mrp_confidence: tuple[float, ...]
    combined: float

    def to_dict(self) -> dict:
        return {
            "percentiles": list(self.percentiles),
            "lrp": list(self.lrp_confidence),
            "mrp": list(self.mrp_confidence),
            "combined": self.combined,
        }


def _as_flat_mask(mask, width: int) -> np.ndarray:
    if isinstance(mask, np.ndarray) and mask.dtype != object:
        flat = np.sort(mask.astype(np.intp))
    else:
        flat = mask_to_flat(mask, width)
    return flat


def _build_system(flat: np.ndarray, height: int, width: int):
    """Neighbor-mean equations for the masked pixels.

    Row for masked pixel p:  deg(p)·x_p − Σ_{q∈N(p), masked} x_q = Σ_{q∈N(p), unmasked} v_q
    Returns (A as CSR, degree vector, list of (masked_row, unmasked_flat_neighbor)).
    """
    n = flat.size
    npix = height * width
    pos = np.full(npix, -1, dtype=np.intp)
    pos[flat] = np.arange(n)
    rows = flat // width
    cols = flat % width

    diag = np.zeros(n)
    off_i: list[np.ndarray] = []
    off_j: list[np.ndarray] = []
    const_i: list[np.ndarray] = []
    const_j: list[np.ndarray] = []

    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = rows + dr, cols + dc
        ok = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
        diag += ok
        nb = rr[ok] * width + cc[ok]
        src = np.nonzero(ok)[0]
        masked_nb = pos[nb] >= 0
        off_i.append(src[masked_nb])
        off_j.append(pos[nb[masked_nb]])
        const_i.append(src[~masked_nb])
        const_j.append(nb[~masked_nb])

    oi = np.concatenate(off_i)
    oj = np.concatenate(off_j)
    data = np.concatenate([diag, -np.ones(oi.size)])
    i = np.concatenate([np.arange(n), oi])
    j = np.concatenate([np.arange(n), oj])
    A = sp.coo_matrix((data, (i, j)), shape=(n, n)).tocsr()
    return A, np.concatenate(const_i), np.concatenate(const_j)


def impute(
    image: ImageTensor,
    mask: Iterable[PixelIndex] | np.ndarray,
    config: ImputationConfig = ImputationConfig(),
    seed=0,
) -> ImageTensor:
    """Fill masked pixels from the neighbor-mean system, then add noise.

    Unmasked pixels are bit-identical to the input.  Deterministic for a
    fixed seed.
    """
    h, w = image.height, image.width
    flat = _as_flat_mask(mask, w)
    if flat.size == 0:
        return image
    if flat.size >= h * w:
        raise AllPixelsMasked(f"mask covers all {h * w} pixels")

    A, ci, cj = _build_system(flat, h, w)
    n = flat.size
    planes = image.values.reshape(image.channels, -1)
    rhs = np.zeros((image.channels, n))
    if ci.size:
        for c in range(image.channels):
            np.add.at(rhs[c], ci, planes[c, cj])

    use_dense = config.solver == "dense" or (
        config.solver == "auto" and n < config.dense_threshold
    )
    if use_dense:
        solved = np.linalg.solve(A.toarray(), rhs.T).T
    else:
        maxiter = config.max_iterations or 10 * h * w
        solved = np.empty_like(rhs)
        kw = {_CG_TOL_KW: config.solver_tolerance, "maxiter": maxiter}
        for c in range(image.channels):
            x, info = spla.cg(A, rhs[c], **kw)
            if info != 0:
                res = np.linalg.norm(A @ x - rhs[c])
                raise SolverDivergence(
                    f"CG failed (info={info}), residual {res:.3e} after {maxiter} iterations"
                )
            solved[c] = x

    rng = np.random.default_rng(seed)
    if config.noise_sigma > 0:
        solved = solved + rng.normal(0.0, config.noise_sigma, size=solved.shape)

    out = image.values.copy()
    out.reshape(image.channels, -1)[:, flat] = solved
    return ImageTensor(out, mean=image.mean, std=image.std)


def perturbation_mask(m: ActivationMap, percentile: float, mode: Mode) -> np.ndarray:
    """Flat indices of the top (MRP) or bottom (LRP) percentile% of pixels."""
    if not (0.0 < percentile < 100.0):
        raise ValueError(f"percentile must be in (0, 100), got {percentile}")
    count = pixel_count(percentile, m.height, m.width)
    count = min(count, m.height * m.width - 1)
    if mode == "MRP":
        return np.sort(top_k_flat(m.values, count))
    if mode == "LRP":
        return np.sort(bottom_k_flat(m.values, count))
    raise ValueError(f"mode must be 'MRP' or 'LRP', got {mode!r}")


def perturb_and_score(
    image: ImageTensor,
    m: ActivationMap,
    class_id: int,
    oracle: ModelOracle,
    percentile: float,
    mode: Mode,
    config: ImputationConfig = ImputationConfig(),
    seed=0,
) -> float:
    """Oracle confidence for ``class_id`` after imputing one percentile mask."""
    if m.shape != (image.height, image.width):
        raise DimensionMismatch(f"map {m.shape} vs image {(image.height, image.width)}")
    if not (0 <= class_id < oracle.class_count):
        raise ClassOutOfRange(f"class {class_id} outside [0, {oracle.class_count})")
    flat = perturbation_mask(m, percentile, mode)
    perturbed = impute(image, flat, config, seed)
    return float(oracle.predict(perturbed)[class_id])


def road_score(
    image: ImageTensor,
    m: ActivationMap,
    class_id: int,
    oracle: ModelOracle,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    config: ImputationConfig = ImputationConfig(),
    seed=0,
    swap_modes: bool = False,
) -> RoadScore:
    """Full ROAD evaluation across all percentiles.

    The imputation-noise stream at each percentile is shared between the
    LRP and MRP branches, so swapping the two roles (``swap_modes``)
    negates the combined score exactly.
    """
    if len(percentiles) == 0:
        raise ValueError("percentiles must be non-empty")
    children = np.random.SeedSequence(seed).spawn(len(percentiles))
    lrp_mode: Mode = "MRP" if swap_modes else "LRP"
    mrp_mode: Mode = "LRP" if swap_modes else "MRP"
    lrp, mrp = [], []
    for p, child in zip(percentiles, children):
        lrp.append(perturb_and_score(image, m, class_id, oracle, p, lrp_mode, config, child))
        mrp.append(perturb_and_score(image, m, class_id, oracle, p, mrp_mode, config, child))
    combined = float(np.mean([(a - b) / 2.0 for a, b in zip(lrp, mrp)]))
    return RoadScore(tuple(float(p) for p in percentiles), tuple(lrp), tuple(mrp), combined)
