"""CLI for exporting and verifying CAM bundles.

Exit codes: 0 success, 2 input error, 3 computation error.
"""

from __future__ import annotations

import argparse
import sys

from .cams import CAM_METHODS
from .errors import ExporterError, UnknownCamMethod, UnknownModel
from .export import ExportSpec, export_bundle, verify_bundle
from .registry import known_models

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


def cmd_export(args) -> int:
    methods = (
        CAM_METHODS if args.methods == "all" else tuple(args.methods.split(","))
    )
    spec = ExportSpec(
        model=args.model,
        image=args.image,
        class_id=args.class_id,
        methods=methods,
        out_dir=args.out,
        pretrained=not args.random_weights,
        seed=args.seed,
    )
    manifest = export_bundle(spec)
    print(str(manifest))
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify_bundle(args.manifest)
    return EXIT_OK if all(ok for ok, _ in report.values()) else EXIT_COMPUTE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="camforge-export")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export a CAM bundle for one image/model/class")
    p.add_argument("--model", required=True, help=f"one of: {', '.join(known_models())}")
    p.add_argument("--image", required=True, help="source image file (JPEG/PNG)")
    p.add_argument("--class", dest="class_id", type=int, required=True)
    p.add_argument("--methods", default="all",
                   help="comma-separated CAM methods, or 'all'")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random-weights", action="store_true",
                   help="skip pretrained weight download (maps will be meaningless)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("verify", help="check every artifact a manifest references")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UnknownModel, UnknownCamMethod, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ExporterError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    raise SystemExit(main())
