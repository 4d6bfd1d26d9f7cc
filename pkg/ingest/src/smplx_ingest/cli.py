"""ingest command-line entry point."""

from __future__ import annotations

import argparse
import sys

from .convert import ArchiveError, convert


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ingest",
        description="Convert an SMPL-X parameter archive (npz or JSON) to a "
                    "motion-clip JSON file.")
    parser.add_argument("archive", help="parameter archive (.npz or .json)")
    parser.add_argument("-o", "--output", required=True,
                        help="output clip JSON path")
    parser.add_argument("--fps", type=float, default=None,
                        help="override the archive frame rate")
    parser.add_argument("--fields", default=None,
                        help="JSON file mapping canonical field names "
                             "(betas, poses, trans, fps) to archive keys")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        clip = convert(args.archive, args.output, fps=args.fps,
                       field_map_path=args.fields)
    except ArchiveError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {len(clip['frames'])} frame(s) to {args.output}")
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
