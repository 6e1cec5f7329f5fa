"""
End-to-end: export CAMs from a CNN, then analyze the bundle
===========================================================

The exporter package runs CAM methods against a torch model and writes
an interchange bundle (preprocessed tensor, one map per method, the
model as an ONNX graph, and a manifest).  The analysis engine then loads
that bundle with no torch dependency at all and sweeps the consensus
threshold.

This demo uses a small randomly initialized CNN so it runs anywhere;
with network access the same code works with e.g. model="resnet152"
and a real photograph.
"""

import numpy as np
import torch
import torch.nn as nn
from PIL import Image

from camforge_exporter import ExportSpec, ModelEntry, export_bundle, register

# a deliberately tiny CNN standing in for a pretrained classifier
torch.manual_seed(0)
model = nn.Sequential(
    nn.Conv2d(3, 8, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
    nn.Conv2d(8, 8, 3, padding=1), nn.ReLU(),
    nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(8, 5),
).eval()
register(ModelEntry(
    name="demo-cnn",
    factory=lambda pretrained: model,
    target_layer=lambda m: m[3],  # the last conv layer
    input_size=64,
    class_count=5,
))

# a synthetic photograph: bright subject on a dark background
rng = np.random.default_rng(7)
arr = (rng.random((96, 96, 3)) * 50).astype(np.uint8)
arr[28:68, 28:68] = (230, 170, 90)
Image.fromarray(arr).save("demo_photo.png")

manifest = export_bundle(ExportSpec(
    model="demo-cnn",
    image="demo_photo.png",
    class_id=2,
    methods=("GradCAM", "GradCAM++", "HiResCAM", "RandomCAM"),
    out_dir="demo_bundle",
    pretrained=False,
))
print("exported bundle manifest:", manifest)

# --- hand over to the analysis engine: files only, no shared objects ---
from camforge import adaptive_threshold, load_bundle
from camforge.core import is_valid

bundle = load_bundle(manifest, require_oracle=True)
maps = [m for m in bundle.maps.values() if is_valid(m)]
print(f"loaded {len(maps)} valid maps; "
      f"model has {bundle.oracle.class_count} classes")

best, sweep = adaptive_threshold(
    maps, bundle.image, bundle.class_id, bundle.oracle,
    k_grid=range(10, 101, 10),
)
print(f"best retention k = {sweep.best_k:.0f}% "
      f"with combined ROAD {sweep.best_score:+.3f}")
