"""qg-annotate: tag raw sentences into the tagged-corpus line format."""

from __future__ import annotations

import argparse
import sys

from qgannotator.annotate import annotate_file
from qgannotator.toolkits import ToolkitUnavailable, make_toolkit


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qg-annotate", description=__doc__)
    parser.add_argument("--in", dest="in_path", required=True, help="one sentence per line, UTF-8")
    parser.add_argument("--out", dest="out_path", required=True, help="tagged-corpus output file")
    parser.add_argument("--toolkit", default="builtin", help="builtin (default) or corenlp")
    parser.add_argument("--url", default=None, help="CoreNLP server URL (corenlp toolkit)")
    parser.add_argument("--report", default=None, help="sidecar file for per-line failures")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        toolkit = make_toolkit(args.toolkit, url=args.url)
    except ToolkitUnavailable as err:
        print(f"toolkit unavailable: {err}", file=sys.stderr)
        return 2
    try:
        summary = annotate_file(args.in_path, args.out_path, toolkit, report_path=args.report)
    except ToolkitUnavailable as err:
        print(f"toolkit unavailable: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 1
    print(f"annotated {summary.sentences} sentences ({summary.flagged} flagged)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
