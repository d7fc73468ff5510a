"""Batch CLI: torch checkpoint + calibration tensor -> EMQB bundle + manifest."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from .exporter import ExportError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emqb-export", description=__doc__)
    parser.add_argument("--model", required=True,
                        help="torch.save'd nn.Module (trusted local file)")
    parser.add_argument("--calib", required=True,
                        help="torch.save'd tensor of calibration inputs, first dim = samples")
    parser.add_argument("--bits", type=int, choices=[4, 8], required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--manifest-out", default=None,
                        help="default: <out>.manifest.json")
    parser.add_argument("--model-id", default=None)
    parser.add_argument("--calib-id", default=None)
    parser.add_argument("--layer-filter", default=None,
                        help="regex over module paths; default exports every linear layer")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--max-samples", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1,
                        help="torch intra-op threads; 1 keeps calibration bit-reproducible")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    torch.set_num_threads(args.threads)
    try:
        # full-module checkpoints are pickles; only local, trusted files here
        model = torch.load(args.model, map_location="cpu", weights_only=False)
        calibration = torch.load(args.calib, map_location="cpu", weights_only=False)
        if not isinstance(model, torch.nn.Module):
            raise ExportError(f"{args.model}: not an nn.Module checkpoint")
        if not isinstance(calibration, torch.Tensor) or calibration.shape[0] < 1:
            raise ExportError(f"{args.calib}: expected a non-empty tensor")
        if args.max_samples:
            calibration = calibration[: args.max_samples]
        manifest = export(
            model,
            calibration,
            args.bits,
            args.out,
            model_id=args.model_id or Path(args.model).name,
            calibration_id=args.calib_id or Path(args.calib).name,
            layer_filter=args.layer_filter,
            batch_size=args.batch_size,
            manifest_path=args.manifest_out or f"{args.out}.manifest.json",
        )
    except (ExportError, OSError, RuntimeError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    print(f"exported {len(manifest.layers)} layers at INT{manifest.bit_width} -> {args.out}")
    print(f"content hash {manifest.content_hash}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
