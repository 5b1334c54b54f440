"""Command line for the feature exporter.

    gsf-export --manifest items.json --out features.gsf [--encoder toy:32x4]
               [--condition-layers 1,2,3] [--terminal-layer 4]
               [--device cpu] [--standardize-layers] [--no-input-normalize]

Exit codes: 0 success (skipped files are reported but tolerated),
2 manifest/argument errors, 3 encoder errors, 4 export produced nothing.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import EncoderError, ExportError, ManifestError
from .exporting import ExportManifest, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsf-export",
        description="average a frozen speech encoder's hidden states into GSF1 feature files",
    )
    parser.add_argument("--manifest", required=True, help="JSON manifest path")
    parser.add_argument("--out", required=True, help="output feature file")
    parser.add_argument("--encoder", help="toy:<w>x<l>[@seed] or hf:<model-id-or-path>")
    parser.add_argument(
        "--condition-layers",
        help="comma-separated 1-based hidden layers for the condition stack "
        "(default: all layers before the final one)",
    )
    parser.add_argument(
        "--terminal-layer", type=int, help="1-based layer used as the terminal vector"
    )
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--standardize-layers",
        action="store_true",
        help="standardize each averaged layer vector to zero mean / unit variance",
    )
    parser.add_argument(
        "--no-input-normalize",
        action="store_true",
        help="skip waveform normalization before hf encoders",
    )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    condition = None
    if args.condition_layers:
        try:
            condition = tuple(int(s) for s in args.condition_layers.split(","))
        except ValueError:
            print(f"bad --condition-layers {args.condition_layers!r}", file=sys.stderr)
            return 2
    try:
        manifest = ExportManifest.from_file(args.manifest)
        result = export(
            manifest,
            args.out,
            encoder_id=args.encoder,
            condition_layers=condition,
            terminal_layer=args.terminal_layer,
            device=args.device,
            standardize_layers=args.standardize_layers,
            normalize_input=not args.no_input_normalize,
        )
    except ManifestError as e:
        print(f"manifest error: {e}", file=sys.stderr)
        return 2
    except EncoderError as e:
        print(f"encoder error: {e}", file=sys.stderr)
        return 3
    except ExportError as e:
        print(f"export failed: {e}", file=sys.stderr)
        return 4
    print(
        f"wrote {result.written} records to {result.output_path} "
        f"(encoder {result.encoder}, condition layers {list(result.condition_layers)}, "
        f"terminal layer {result.terminal_layer})"
    )
    for path, reason in result.skipped:
        print(f"skipped {path}: {reason}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
