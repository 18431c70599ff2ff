"""Command line entry point.

    reenact --config run.cfg [--workers N] [--dump-diagnostics | --validate-self]

Exit status is 0 on success; failures print a stage-tagged message to stderr
and return 1.
"""

import argparse
import sys

from .errors import ReenactError
from .media_io import RunConfig
from .pipeline import cmd_dump_diagnostics, cmd_reenact, cmd_validate_self


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reenact",
        description="Replace the inner face in a target video with a source performance.",
    )
    parser.add_argument("--config", required=True, help="path to a key=value run configuration")
    parser.add_argument(
        "--workers", type=int, default=None, help="parallel frame workers (default: CPU count)"
    )
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--dump-diagnostics",
        action="store_true",
        help="write the matching audit files from the cache of a previous run",
    )
    mode.add_argument(
        "--validate-self",
        action="store_true",
        help="self-reenactment check: match the sequence against itself and report mismatches",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_file(args.config)
        if args.dump_diagnostics:
            paths = cmd_dump_diagnostics(config)
            for path in paths:
                print(path)
        elif args.validate_self:
            report = cmd_validate_self(config, workers=args.workers)
            print(
                f"clusters={len(report.spans)} mismatches={report.mismatches} "
                f"rate={report.mismatch_rate:.4f}"
            )
        else:
            report = cmd_reenact(config, workers=args.workers)
            print(
                f"wrote {report.target_frames} frames to {config.output_dir} "
                f"({len(report.spans)} clusters, backend={report.backend})"
            )
        return 0
    except ReenactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
