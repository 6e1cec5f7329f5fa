"""Experiment bundles: the (image, class, model) tuple plus component maps.

A bundle manifest is JSON with paths relative to the manifest file:

    {
      "image": "image.imgt",
      "class_id": 281,
      "maps": {"GradCAM": "maps/gradcam.camm", ...},
      "oracle": "model.onnx",
      "metadata": {"model": "densenet161", ...}
    }

A campaign manifest replaces "maps" with a "groups" table (group code ->
list of map file paths) and may add "k_grid", "percentiles", "sigma",
"seed" and "workers".  The "oracle" entry is either a path to an ONNX
graph or an inline synthetic oracle spec such as
``{"type": "constant", "probs": [...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ActivationMap, ImageTensor
from .errors import ClassOutOfRange, DimensionMismatch, ManifestError
from .formats import read_image, read_map
from .oracle import ConstantOracle, ModelOracle, RegionOracle


@dataclass
class ExperimentBundle:
    image: ImageTensor
    class_id: int
    maps: dict[str, ActivationMap]
    oracle: ModelOracle | None = None
    metadata: dict = field(default_factory=dict)
    manifest_path: Path | None = None

    def validate(self) -> None:
        for label, m in self.maps.items():
            if m.shape != (self.image.height, self.image.width):
                raise DimensionMismatch(
                    f"map {label!r} is {m.shape}, image is "
                    f"{(self.image.height, self.image.width)}"
                )
        if self.oracle is not None and not (0 <= self.class_id < self.oracle.class_count):
            raise ClassOutOfRange(
                f"class {self.class_id} outside [0, {self.oracle.class_count})"
            )


def load_oracle(spec, base: Path) -> ModelOracle:
    """Oracle from a manifest entry: ONNX graph path or inline synthetic spec."""
    if isinstance(spec, str):
        from .onnx_rt import OnnxOracle

        return OnnxOracle(base / spec)
    if isinstance(spec, dict):
        kind = spec.get("type")
        if kind == "constant":
            return ConstantOracle(spec["probs"])
        if kind == "region":
            region = read_map(base / spec["region_map"]).values > 0
            return RegionOracle(
                region,
                gain=float(spec.get("gain", 8.0)),
                midpoint=float(spec.get("midpoint", 0.5)),
            )
        raise ManifestError(f"unknown oracle type {kind!r}")
    raise ManifestError("oracle entry must be a path or an inline spec")


def _require(doc: dict, key: str):
    if key not in doc:
        raise ManifestError(f"manifest is missing required field {key!r}")
    return doc[key]


def load_bundle(manifest_path: str | Path, require_oracle: bool = False) -> ExperimentBundle:
    """Read a bundle manifest and all artifacts it references."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read manifest {manifest_path}: {e}") from e
    base = manifest_path.parent

    image = read_image(base / _require(doc, "image"))
    class_id = int(_require(doc, "class_id"))
    invalid = set(doc.get("invalid", []))
    maps = {
        label: read_map(base / rel, label=label)
        for label, rel in _require(doc, "maps").items()
        if label not in invalid
    }

    oracle = None
    if doc.get("oracle") is not None:
        oracle = load_oracle(doc["oracle"], base)
    elif require_oracle:
        raise ManifestError("manifest is missing required field 'oracle'")

    bundle = ExperimentBundle(
        image=image,
        class_id=class_id,
        maps=maps,
        oracle=oracle,
        metadata=doc.get("metadata", {}),
        manifest_path=manifest_path,
    )
    bundle.validate()
    return bundle


@dataclass
class CampaignSpec:
    bundle: ExperimentBundle
    groups: list  # list[CamGroup]; typed loosely to avoid an import cycle
    k_grid: list[float]
    percentiles: list[float]
    sigma: float
    seed: int
    workers: int


def load_campaign_manifest(manifest_path: str | Path) -> CampaignSpec:
    """Read a campaign manifest: group table plus run parameters."""
    from .adaptive import DEFAULT_K_GRID
    from .ensemble import CamGroup
    from .road import DEFAULT_PERCENTILES

    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read manifest {manifest_path}: {e}") from e
    base = manifest_path.parent

    group_table = _require(doc, "groups")
    maps: dict[str, ActivationMap] = {}
    groups = []
    for code, paths in group_table.items():
        members = []
        for rel in paths:
            label = Path(rel).stem
            if label in maps:
                raise ManifestError(f"duplicate map label {label!r} in groups table")
            maps[label] = read_map(base / rel, label=label)
            members.append(label)
        groups.append(CamGroup(code, tuple(members)))

    image = read_image(base / _require(doc, "image"))
    class_id = int(_require(doc, "class_id"))
    oracle = load_oracle(_require(doc, "oracle"), base)

    bundle = ExperimentBundle(
        image=image,
        class_id=class_id,
        maps=maps,
        oracle=oracle,
        metadata=doc.get("metadata", {}),
        manifest_path=manifest_path,
    )
    bundle.validate()
    return CampaignSpec(
        bundle=bundle,
        groups=groups,
        k_grid=[float(k) for k in doc.get("k_grid", DEFAULT_K_GRID)],
        percentiles=[float(p) for p in doc.get("percentiles", DEFAULT_PERCENTILES)],
        sigma=float(doc.get("sigma", 0.05)),
        seed=int(doc.get("seed", 0)),
        workers=int(doc.get("workers", 1)),
    )
