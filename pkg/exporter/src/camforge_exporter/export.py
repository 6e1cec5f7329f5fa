"""Bundle export and verification.

``export_bundle`` materializes everything the analysis engine needs for
one image/model/class triple: the preprocessed IMGT tensor, one CAMM map
per requested CAM method, the model as an ONNX graph with raw logits,
and a manifest JSON tying them together.  A CAM method that fails is
recorded under "invalid" in the manifest instead of aborting the export.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .cams import CAM_METHODS, compute_cam
from .errors import CamFailure, UnknownCamMethod
from .formats import read_image, read_map, write_image, write_map
from .onnx_graph import export_onnx
from .preprocess import preprocess_image
from .registry import ModelEntry, get_model_entry


@dataclass
class ExportSpec:
    model: str
    image: str | Path
    class_id: int
    methods: tuple[str, ...] = CAM_METHODS
    out_dir: str | Path = "bundle"
    pretrained: bool = True
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        for m in self.methods:
            if m not in CAM_METHODS:
                raise UnknownCamMethod(
                    f"unknown CAM method {m!r}; known: {', '.join(CAM_METHODS)}"
                )
        if not 0 <= self.class_id < 1000:
            raise ValueError(f"class_id {self.class_id} outside [0, 1000)")


def _map_filename(method: str) -> str:
    return method.lower().replace("+", "p") + ".camm"


def export_bundle(spec: ExportSpec, entry: ModelEntry | None = None) -> Path:
    """Run the requested CAM methods and write the bundle; returns the
    manifest path."""
    entry = entry if entry is not None else get_model_entry(spec.model)
    if spec.class_id >= entry.class_count:
        raise ValueError(
            f"class_id {spec.class_id} outside [0, {entry.class_count}) for {entry.name}"
        )
    model = entry.factory(spec.pretrained)
    model.eval()
    target_layer = entry.target_layer(model)

    image = preprocess_image(spec.image, resize=entry.input_size + 32,
                             crop=entry.input_size)
    x = torch.from_numpy(image[None]).float()

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_image(out_dir / "image.imgt", image)
    (out_dir / "model.onnx").write_bytes(
        export_onnx(model, (1, 3, entry.input_size, entry.input_size))
    )

    maps: dict[str, str] = {}
    invalid: list[str] = []
    for method in spec.methods:
        rel = _map_filename(method)
        try:
            cam = compute_cam(method, model, target_layer, x, spec.class_id,
                              seed=spec.seed)
        except CamFailure:
            invalid.append(method)
            write_map(out_dir / rel, np.zeros((entry.input_size, entry.input_size)))
        else:
            if not cam.any():
                invalid.append(method)
            write_map(out_dir / rel, cam)
        maps[method] = rel

    manifest = {
        "image": "image.imgt",
        "class_id": spec.class_id,
        "maps": maps,
        "invalid": sorted(invalid),
        "oracle": "model.onnx",
        "metadata": {
            "model": entry.name,
            "source_image": str(spec.image),
            "methods": list(spec.methods),
            "seed": spec.seed,
            "pretrained": spec.pretrained,
            **spec.metadata,
        },
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def verify_bundle(manifest_path: str | Path) -> dict[str, tuple[bool, str]]:
    """Check every artifact a manifest references; never raises.

    Returns {artifact: (ok, detail)} and prints one pass/fail line each.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    report: dict[str, tuple[bool, str]] = {}

    def check(name, fn):
        try:
            detail = fn() or "ok"
            report[name] = (True, detail)
        except Exception as e:
            report[name] = (False, str(e))

    try:
        doc = json.loads(manifest_path.read_text())
    except Exception as e:
        report["manifest"] = (False, str(e))
        _print_report(report)
        return report
    report["manifest"] = (True, "ok")

    shape = {}

    def check_image():
        img = read_image(base / doc["image"])
        shape["hw"] = img.shape[1:]
        return f"{img.shape[0]}x{img.shape[1]}x{img.shape[2]} tensor"

    check("image", check_image)

    def check_class():
        cid = int(doc["class_id"])
        if not 0 <= cid < 1000:
            raise ValueError(f"class_id {cid} outside [0, 1000)")
        return f"class {cid}"

    check("class_id", check_class)

    invalid = set(doc.get("invalid", []))
    for label, rel in sorted(doc.get("maps", {}).items()):
        def check_map(rel=rel, label=label):
            m = read_map(base / rel)
            if "hw" in shape and m.shape != shape["hw"]:
                raise ValueError(f"map is {m.shape}, image is {shape['hw']}")
            if label in invalid:
                return "marked invalid"
            lo, hi = m.min(), m.max()
            if not (-1e-6 <= lo and hi <= 1 + 1e-6):
                raise ValueError(f"values outside [0, 1]: [{lo:.3g}, {hi:.3g}]")
            if abs(lo) > 1e-6 or abs(hi - 1) > 1e-6:
                raise ValueError(f"not normalized: min {lo:.3g}, max {hi:.3g}")
            return "normalized map"

        check(f"map:{label}", check_map)

    def check_graph():
        data = (base / doc["oracle"]).read_bytes()
        if len(data) < 8:
            raise ValueError("graph file is implausibly small")
        return f"{len(data)} bytes"

    if isinstance(doc.get("oracle"), str):
        check("model_graph", check_graph)

    _print_report(report)
    return report


def _print_report(report: dict[str, tuple[bool, str]]) -> None:
    for name, (ok, detail) in report.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
