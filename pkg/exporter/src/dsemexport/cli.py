"""Command-line entry point for the .dsem exporter."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cropping import CropError
from .dataset import DatasetError
from .exporter import ExportConfig, WeightsUnavailable, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dsemexport",
        description="Compute deep patch features for every scanpath and "
                    "write .dsem interchange files",
    )
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="output directory for .dsem files")
    p.add_argument("--patch-size", type=int, default=100, dest="patch_size")
    p.add_argument("--input-size", type=int, default=224, dest="input_size")
    p.add_argument("--weights", default="imagenet",
                   help="'imagenet', a state-dict path, or 'seeded:<n>'")
    p.add_argument("--batch-size", type=int, default=8, dest="batch_size")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExportConfig(
        manifest=Path(args.manifest),
        out_dir=Path(args.out),
        patch_size=args.patch_size,
        input_size=args.input_size,
        weights=args.weights,
        batch_size=args.batch_size,
    )
    try:
        meta = export_embeddings(cfg)
    except WeightsUnavailable as exc:
        print(json.dumps({"error": "WeightsUnavailable", "message": str(exc)}),
              file=sys.stderr)
        return 2
    except (DatasetError, CropError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 3
    print(json.dumps({"out": str(cfg.out_dir), "files": meta["files"],
                      "dim": meta["dim"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
