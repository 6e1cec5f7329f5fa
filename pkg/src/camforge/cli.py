"""Command-line surface of the engine.

Subcommands: fuse, road, sweep, campaign, cre, render.  Exit codes:
0 success, 2 input/manifest error, 3 computation error.  Diagnostics go
to stderr; machine-readable results go to stdout or files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import adaptive, cre as cre_mod, ensemble, fusion, reports, road as road_mod
from .bundle import load_bundle, load_campaign_manifest
from .core import is_valid, normalize
from .errors import CamforgeError, ManifestError
from .formats import write_map

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


def _parse_k_grid(text: str) -> list[float]:
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return [float(k) for k in range(lo, hi + 1, step)]
    return [float(k) for k in text.split(",")]


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _valid_maps(bundle, labels=None):
    items = bundle.maps.items()
    if labels is not None:
        items = [(l, bundle.maps[l]) for l in labels]
    out = [m for _, m in sorted(items) if is_valid(m)]
    if not out:
        raise CamforgeError("no valid maps in bundle after validity filtering")
    return out


def _select_map(bundle, label: str | None):
    if label is not None:
        if label not in bundle.maps:
            raise ManifestError(f"bundle has no map labelled {label!r}")
        return bundle.maps[label]
    if len(bundle.maps) != 1:
        raise ManifestError(
            f"bundle holds {len(bundle.maps)} maps; pick one with --map"
        )
    return next(iter(bundle.maps.values()))


def _config(args) -> road_mod.ImputationConfig:
    return road_mod.ImputationConfig(noise_sigma=args.sigma)


def cmd_fuse(args) -> int:
    bundle = load_bundle(args.bundle)
    maps = _valid_maps(bundle)
    if args.mode == "average":
        out = fusion.fuse_average(maps)
    elif args.mode == "weighted":
        if args.scores is not None:
            scores = _parse_floats(args.scores)
        else:
            if bundle.oracle is None:
                raise ManifestError(
                    "weighted fusion needs --scores or an 'oracle' entry in the manifest"
                )
            scores = [
                road_mod.road_score(
                    bundle.image, normalize(m), bundle.class_id, bundle.oracle,
                    config=_config(args), seed=args.seed,
                ).combined
                for m in maps
            ]
        out = fusion.fuse_weighted(maps, scores, args.transform)
    elif args.mode == "consensus":
        out = fusion.fuse_consensus(maps, args.k).map
    else:
        raise ManifestError(f"unknown fusion mode {args.mode!r}")

    write_map(args.out, out)
    if bundle.oracle is not None:
        score = road_mod.road_score(
            bundle.image, out, bundle.class_id, bundle.oracle,
            config=_config(args), seed=args.seed,
        )
        print(json.dumps(score.to_dict()))
    return EXIT_OK


def cmd_road(args) -> int:
    bundle = load_bundle(args.bundle, require_oracle=True)
    m = _select_map(bundle, args.map)
    score = road_mod.road_score(
        bundle.image, m, bundle.class_id, bundle.oracle,
        percentiles=_parse_floats(args.percentiles),
        config=_config(args), seed=args.seed,
    )
    print(json.dumps(score.to_dict()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle = load_bundle(args.bundle, require_oracle=True)
    k_grid = _parse_k_grid(args.k_grid)
    kwargs = dict(
        k_grid=k_grid,
        percentiles=_parse_floats(args.percentiles),
        config=_config(args),
        seed=args.seed,
    )
    if args.map is not None:
        m = _select_map(bundle, args.map)
        best, sweep = adaptive.adaptive_threshold_single(
            m, bundle.image, bundle.class_id, bundle.oracle, **kwargs
        )
    else:
        maps = _valid_maps(bundle)
        best, sweep = adaptive.adaptive_threshold(
            maps, bundle.image, bundle.class_id, bundle.oracle, **kwargs
        )
    if args.out:
        write_map(args.out, best.map)
    print(json.dumps(sweep.to_dict()))
    return EXIT_OK


def cmd_campaign(args) -> int:
    spec = load_campaign_manifest(args.manifest)
    workers = args.workers if args.workers is not None else spec.workers
    config = road_mod.ImputationConfig(noise_sigma=spec.sigma)
    result = ensemble.run_campaign(
        spec.bundle, spec.groups, spec.k_grid, spec.percentiles,
        config, spec.seed, workers,
    )
    report = cre_mod.compute_cre(
        result.scores_for_cre(), [g.code for g in spec.groups]
    )

    outdir = Path(args.out)
    best_overlay = None
    best = next(
        (r for r in result.records if r.camset.bitmask == result.best_bitmask and r.executed),
        None,
    )
    if best is not None:
        best_map = fusion.fuse_consensus(
            [spec.bundle.maps[l] for l in best.map_labels], best.sweep.best_k
        ).map
        outdir.mkdir(parents=True, exist_ok=True)
        write_map(outdir / "best_metacam.camm", best_map)
        best_overlay = (spec.bundle.image, best_map)

    params = {
        "manifest": str(args.manifest),
        "k_grid": list(spec.k_grid),
        "percentiles": list(spec.percentiles),
        "sigma": spec.sigma,
        "seed": spec.seed,
    }
    report_path = reports.write_campaign_outputs(outdir, result, report, params, best_overlay)
    print(str(report_path))
    return EXIT_OK


def cmd_cre(args) -> int:
    try:
        doc = json.loads(Path(args.report).read_text())
        experiments = doc["experiments"]
        codes = sorted(doc["groups"])
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise ManifestError(f"cannot read campaign report: {e}") from e
    results = []
    for e in experiments:
        if not e["executed"]:
            continue
        bits = e["bitmask"]
        results.append(
            (ensemble.CamSetId(int(bits, 2), len(bits)), e["sweep"]["best_score"])
        )
    report = cre_mod.compute_cre(results, codes)
    if args.out:
        Path(args.out).write_text(reports.canonical_json(report.to_dict()))
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_render(args) -> int:
    bundle = load_bundle(args.bundle)
    m = _select_map(bundle, args.map)
    reports.render_overlay(bundle.image, m, args.out, alpha=args.alpha)
    return EXIT_OK


def _add_common(p, oracle_opts=True):
    p.add_argument("--bundle", required=True, help="bundle manifest JSON")
    if oracle_opts:
        p.add_argument("--sigma", type=float, default=0.05, help="imputation noise sigma")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument(
            "--percentiles", default="20,40,60,80", help="comma-separated ROAD percentiles"
        )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="camforge")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse component maps into one map")
    _add_common(p)
    p.add_argument("--mode", required=True, choices=["average", "weighted", "consensus"])
    p.add_argument("--k", type=float, default=100.0, help="retention level for consensus")
    p.add_argument("--transform", default="softmax", choices=fusion.TRANSFORMS)
    p.add_argument("--scores", help="comma-separated ROAD scores for weighted mode")
    p.add_argument("--out", required=True, help="output CAMM path")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("road", help="ROAD-score a single map")
    _add_common(p)
    p.add_argument("--map", help="map label within the bundle")
    p.set_defaults(func=cmd_road)

    p = sub.add_parser("sweep", help="adaptive threshold search")
    _add_common(p)
    p.add_argument("--map", help="sweep one map instead of the consensus of all")
    p.add_argument("--k-grid", default="15:45", help="lo:hi[:step] or comma list")
    p.add_argument("--out", help="write the best thresholded map here (CAMM)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("campaign", help="run the group inclusion/exclusion lattice")
    p.add_argument("--manifest", required=True, help="campaign manifest JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, help="override manifest worker count")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("cre", help="cumulative residual effect from a campaign report")
    p.add_argument("--report", required=True, help="campaign report.json")
    p.add_argument("--out", help="write CRE JSON here")
    p.set_defaults(func=cmd_cre)

    p = sub.add_parser("render", help="heat-map overlay PNG")
    _add_common(p, oracle_opts=False)
    p.add_argument("--map", help="map label within the bundle")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    import os

    args = build_parser().parse_args(argv)
    if "CAMFORGE_WORKERS" in os.environ and getattr(args, "workers", None) is None:
        if args.command == "campaign":
            args.workers = int(os.environ["CAMFORGE_WORKERS"])
    try:
        return args.func(args)
    except (ManifestError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except CamforgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    raise SystemExit(main())
