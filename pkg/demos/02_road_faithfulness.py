"""
Scoring saliency maps with the ROAD faithfulness metric
=======================================================

ROAD perturbs the most-relevant and least-relevant pixels of a map (by
noisy linear imputation, a blur-like infill) and measures how much the
model's confidence moves.  A faithful map loses confidence fast when its
top pixels are removed and barely at all when its bottom pixels are —
so its combined score is high; a random map scores near zero.
"""

import numpy as np

from camforge import (
    ActivationMap,
    ImageTensor,
    RegionOracle,
    normalize,
    random_cam,
    road_score,
)

# a synthetic "model": confidence for class 0 follows the brightness of
# a fixed region, which makes the ground-truth saliency known exactly
h = w = 24
region = np.zeros((h, w), dtype=bool)
region[6:18, 6:18] = True
image = ImageTensor(np.where(region, 1.0, 0.0)[None])
oracle = RegionOracle(region, gain=8.0)

faithful = ActivationMap(region.astype(float), label="ground-truth")
inverted = ActivationMap((~region).astype(float), label="inverted")
noise = normalize(random_cam(h, w, seed=0))

for m in (faithful, inverted, noise):
    score = road_score(image, m, class_id=0, oracle=oracle, seed=0)
    lrp = np.round(score.lrp_confidence, 3)
    mrp = np.round(score.mrp_confidence, 3)
    print(f"{m.label:>12}: combined {score.combined:+.3f}  "
          f"(keep-least {lrp} vs keep-most {mrp})")

# the sign convention: positive means the map ranks evidence correctly,
# negative means it is anti-correlated with the model's evidence
