"""Command line entry point: one subcommand per exporter, driven by a manifest."""

from __future__ import annotations

import argparse
import logging
import sys

from . import exporters
from .manifest import BridgeError, ExportManifest


def build_parser():
    parser = argparse.ArgumentParser(prog="polarlens-bridge")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("export-embeddings", "export-inferences", "export-translations"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--manifest", required=True)
        if name == "export-translations":
            cmd.add_argument("--endpoint", default=None, help="Translation API url.")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        manifest = ExportManifest.load(args.manifest)
        if args.command == "export-embeddings":
            result = exporters.export_embeddings(manifest)
        elif args.command == "export-inferences":
            result = exporters.export_inferences(manifest)
        else:
            from . import backends

            translator = backends.load_translator(manifest, url=args.endpoint)
            result = exporters.export_translations(manifest, translator=translator)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2 if result.failures else 0


if __name__ == "__main__":
    sys.exit(main())
