"""Binary interchange formats for maps (CAMM) and image tensors (IMGT).

CAMM: magic b"CAMM", u32-LE height, u32-LE width, H·W float32-LE row-major.
IMGT: magic b"IMGT", u32-LE channels, u32-LE height, u32-LE width,
planar float32-LE values.  Both round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import ActivationMap, ImageTensor
from .errors import ManifestError

MAP_MAGIC = b"CAMM"
IMAGE_MAGIC = b"IMGT"


def map_to_bytes(m: ActivationMap) -> bytes:
    header = MAP_MAGIC + struct.pack("<II", m.height, m.width)
    return header + m.values.astype("<f4").tobytes()


def map_from_bytes(data: bytes, label: str = "") -> ActivationMap:
    if len(data) < 12 or data[:4] != MAP_MAGIC:
        raise ManifestError("not a CAMM map file")
    h, w = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * h * w
    if len(data) != expected:
        raise ManifestError(f"CAMM size mismatch: expected {expected} bytes, got {len(data)}")
    vals = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w)
    return ActivationMap(vals, label=label)


def write_map(path: str | Path, m: ActivationMap) -> None:
    Path(path).write_bytes(map_to_bytes(m))


def read_map(path: str | Path, label: str | None = None) -> ActivationMap:
    path = Path(path)
    return map_from_bytes(path.read_bytes(), label=label if label is not None else path.stem)


def image_to_bytes(img: ImageTensor) -> bytes:
    header = IMAGE_MAGIC + struct.pack("<III", img.channels, img.height, img.width)
    return header + img.values.astype("<f4").tobytes()


def image_from_bytes(data: bytes) -> ImageTensor:
    if len(data) < 16 or data[:4] != IMAGE_MAGIC:
        raise ManifestError("not an IMGT image file")
    c, h, w = struct.unpack("<III", data[4:16])
    expected = 16 + 4 * c * h * w
    if len(data) != expected:
        raise ManifestError(f"IMGT size mismatch: expected {expected} bytes, got {len(data)}")
    vals = np.frombuffer(data, dtype="<f4", offset=16).reshape(c, h, w)
    return ImageTensor(vals)


def write_image(path: str | Path, img: ImageTensor) -> None:
    Path(path).write_bytes(image_to_bytes(img))


def read_image(path: str | Path) -> ImageTensor:
    return image_from_bytes(Path(path).read_bytes())
