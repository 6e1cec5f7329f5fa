"""Report emission: canonical JSON, CSV tables, and charts.

JSON and CSV are the machine-readable record and are written first;
chart rendering comes last and is best-effort, so a plotting failure can
never corrupt the tabular outputs.  Identical inputs and seed produce
byte-identical JSON.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np

from .core import ActivationMap, ImageTensor, normalize
from .cre import CreReport
from .ensemble import CampaignResult

REPORT_SCHEMA = "camforge-campaign-report/1"


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def campaign_to_dict(result: CampaignResult, params: dict | None = None) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "params": params or {},
        "groups": {g.code: list(g.members) for g in result.groups},
        "invalid_maps": list(result.invalid_labels),
        "k_values": list(result.k_values),
        "mean_by_k": list(result.mean_by_k),
        "ci95_halfwidth_by_k": list(result.ci_halfwidth_by_k),
        "best_k_counts": {str(k): c for k, c in result.best_k_counts.items()},
        "best": {
            "bitmask": format(result.best_bitmask, f"0{len(result.groups)}b"),
            "score": result.best_score,
        },
        "experiments": [
            {
                "bitmask": str(r.camset),
                "maps": list(r.map_labels),
                "executed": r.executed,
                "sweep": r.sweep.to_dict() if r.sweep else None,
            }
            for r in result.records
        ],
    }


def write_experiments_csv(path: Path, result: CampaignResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bitmask", "k", "combined", "best_k", "best_score"])
        for r in result.records:
            if r.sweep is None:
                continue
            for k, s in zip(r.sweep.k_values, r.sweep.scores):
                w.writerow([str(r.camset), k, s.combined, r.sweep.best_k, r.sweep.best_score])


def write_k_stats_csv(path: Path, result: CampaignResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "mean", "ci95_halfwidth", "best_k_count"])
        for k, m, ci in zip(result.k_values, result.mean_by_k, result.ci_halfwidth_by_k):
            w.writerow([k, m, ci, result.best_k_counts[k]])


def write_cre_csv(path: Path, report: CreReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "cumulative_residual", "inclusion_count"])
        for code in sorted(report.residuals):
            w.writerow([code, report.residuals[code], report.inclusion_counts[code]])


def _image_to_rgb(image: ImageTensor) -> np.ndarray:
    """Undo channel normalization (when recorded) and map to [0, 1] HWC."""
    v = image.values
    if image.mean is not None and image.std is not None:
        v = v * image.std.reshape(-1, 1, 1) + image.mean.reshape(-1, 1, 1)
    v = np.clip(v, 0.0, 1.0) if v.min() >= -0.01 and v.max() <= 1.01 else (
        (v - v.min()) / (v.max() - v.min() + 1e-12)
    )
    if v.shape[0] == 1:
        v = np.repeat(v, 3, axis=0)
    return np.transpose(v[:3], (1, 2, 0))


def render_overlay(
    image: ImageTensor,
    m: ActivationMap,
    path: str | Path,
    alpha: float = 0.5,
    cmap: str = "inferno",
) -> None:
    """Alpha-blend the map (perceptually-uniform ramp) over the image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rgb = _image_to_rgb(image)
    heat = plt.get_cmap(cmap)(normalize(m).values)[..., :3]
    blend = (1 - alpha) * rgb + alpha * heat
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(blend)
    ax.set_axis_off()
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)


def render_campaign_charts(outdir: Path, result: CampaignResult, cre: CreReport) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ks = np.array(result.k_values)
    mean = np.array(result.mean_by_k)
    ci = np.array(result.ci_halfwidth_by_k)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, mean, color="tab:blue")
    ax.fill_between(ks, mean - ci, mean + ci, alpha=0.3, color="tab:blue")
    ax.set_xlabel("top-k% retention")
    ax.set_ylabel("mean ROAD (95% CI)")
    fig.savefig(outdir / "mean_road_vs_k.png", bbox_inches="tight", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    counts = [result.best_k_counts[k] for k in result.k_values]
    ax.bar(ks, counts, width=0.8 * (ks[1] - ks[0] if len(ks) > 1 else 1.0))
    ax.set_xlabel("top-k% retention")
    ax.set_ylabel("times k was the best threshold")
    fig.savefig(outdir / "best_k_hist.png", bbox_inches="tight", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    codes = sorted(cre.residuals)
    vals = [cre.residuals[c] for c in codes]
    colors = ["tab:green" if v >= 0 else "tab:red" for v in vals]
    ax.bar(codes, vals, color=colors)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("CAM group")
    ax.set_ylabel("cumulative residual effect")
    fig.savefig(outdir / "cre_bars.png", bbox_inches="tight", dpi=150)
    plt.close(fig)


def write_campaign_outputs(
    outdir: str | Path,
    result: CampaignResult,
    cre: CreReport,
    params: dict | None = None,
    best_overlay: tuple[ImageTensor, ActivationMap] | None = None,
) -> Path:
    """Emit the full report set; returns the report.json path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    report_path = outdir / "report.json"
    report_path.write_text(canonical_json(campaign_to_dict(result, params)))
    (outdir / "cre.json").write_text(canonical_json(cre.to_dict()))
    write_experiments_csv(outdir / "experiments.csv", result)
    write_k_stats_csv(outdir / "k_stats.csv", result)
    write_cre_csv(outdir / "cre.csv", cre)

    try:
        render_campaign_charts(outdir, result, cre)
        if best_overlay is not None:
            render_overlay(*best_overlay, outdir / "best_metacam.png")
    except Exception as e:  # charts are best-effort
        print(f"warning: chart rendering failed: {e}", file=sys.stderr)
    return report_path
