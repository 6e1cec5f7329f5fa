"""Writers/readers for the engine's binary interchange formats.

CAMM: magic b"CAMM", u32-LE height, u32-LE width, H*W float32-LE row-major.
IMGT: magic b"IMGT", u32-LE channels, u32-LE height, u32-LE width,
planar float32-LE values.

These are deliberately reimplemented here rather than imported: the
exporter and the analysis engine are separate installables whose only
contract is the bytes on disk.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAP_MAGIC = b"CAMM"
IMAGE_MAGIC = b"IMGT"


def write_map(path: str | Path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"map must be 2-D, got shape {values.shape}")
    h, w = values.shape
    Path(path).write_bytes(
        MAP_MAGIC + struct.pack("<II", h, w) + values.astype("<f4").tobytes()
    )


def read_map(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAP_MAGIC:
        raise ValueError(f"{path}: not a CAMM map file")
    h, w = struct.unpack("<II", data[4:12])
    if len(data) != 12 + 4 * h * w:
        raise ValueError(f"{path}: CAMM size mismatch")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(np.float64)


def write_image(path: str | Path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ValueError(f"image tensor must be C x H x W, got shape {values.shape}")
    c, h, w = values.shape
    Path(path).write_bytes(
        IMAGE_MAGIC + struct.pack("<III", c, h, w) + values.astype("<f4").tobytes()
    )


def read_image(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != IMAGE_MAGIC:
        raise ValueError(f"{path}: not an IMGT image file")
    c, h, w = struct.unpack("<III", data[4:16])
    if len(data) != 16 + 4 * c * h * w:
        raise ValueError(f"{path}: IMGT size mismatch")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(c, h, w).astype(np.float64)
