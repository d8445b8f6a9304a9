"""Command-line entry point: ``ritescene <command> ...``.

Exit codes: 0 success, 1 usage error, 2 input I/O error, 3 data or model
format error, 4 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline, synth
from .config import PipelineConfig, resolve_config

logger = logging.getLogger("ritescene")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_INTERNAL = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _flag(key: str) -> str:
    return "--" + key.replace(".", "-").replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (default: $RITESCENE_CONFIG)")
    p.add_argument("--seed", type=int, help="run.seed")
    g = p.add_argument_group("config overrides")
    for key in PipelineConfig.keys():
        if key == "run.seed":
            continue
        g.add_argument(_flag(key), dest=key, metavar="V", help=key)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ritescene", description="Ritual-location recognition from video frames.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("shots", help="detect shots and copy keyframes")
    p.add_argument("input", help="directory of frames")
    p.add_argument("--out", required=True)
    _add_config_flags(p)

    p = sub.add_parser("segment", help="background / mask / foreground images per keyframe")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--shots", help="resume from a shots.json written by 'shots'")
    _add_config_flags(p)

    p = sub.add_parser("features", help="dump SIFT descriptors (and pooled feature with --bundle)")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--bundle")
    _add_config_flags(p)

    p = sub.add_parser("train", help="learn dictionary and classifier(s) from a labelled tree")
    p.add_argument("data", help="root with one directory per label")
    p.add_argument("--out", required=True)
    p.add_argument("--kinds", help="comma-separated classifier kinds (default: classifier.kind)")
    _add_config_flags(p)

    p = sub.add_parser("classify", help="label frame directories with a trained bundle")
    p.add_argument("bundle")
    p.add_argument("input", help="a frame directory or a tree of them")
    p.add_argument("--out", help="directory for predictions.json (default: stdout)")
    p.add_argument("--workers", type=int)
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)

    p = sub.add_parser("eval", help="per-class and comparison reports on a labelled tree")
    p.add_argument("data")
    p.add_argument("--bundle", action="append", required=True, help="repeat for several classifiers")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)

    p = sub.add_parser("synth", help="write the seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--samples", type=int, default=10, help="samples per class")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--split", action="append", metavar="NAME=COUNT",
                   help="write NAME/<label>/... with COUNT samples per class; repeatable")
    p.add_argument("--config", help=argparse.SUPPRESS)
    return parser


def _config(args) -> PipelineConfig:
    values = {k: getattr(args, k) for k in PipelineConfig.keys() if hasattr(args, k)}
    values["run.seed"] = args.seed
    try:
        return resolve_config(values, args.config)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc


def _splits(items):
    if not items:
        return None
    out = {}
    for item in items:
        name, sep, count = item.partition("=")
        if not sep or not count.isdigit():
            raise UsageError(f"--split expects NAME=COUNT, got {item!r}")
        out[name] = int(count)
    return out


def run(args) -> int:
    cmd = args.command
    if cmd == "synth":
        dest = synth.generate_synthetic(args.out, args.seed, args.classes, args.samples, args.frames,
                                        args.height, args.width, _splits(args.split))
        print(dest)
        return EXIT_OK
    if cmd == "classify":
        preds = pipeline.run_classify(args.bundle, args.input, args.workers)
        text = pipeline.predictions_json(preds)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "predictions.json").write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if cmd == "eval":
        result = pipeline.run_eval(args.bundle, args.data, args.out, args.workers)
        for kind, rep in result.reports.items():
            logger.info("%s accuracy %.1f%%", kind, rep.accuracy or 0.0)
        return EXIT_OK

    cfg = _config(args)
    if cmd == "shots":
        shots = pipeline.run_preprocess(args.input, cfg, args.out)
        print(f"{len(shots.shots)} shots, {len(shots.keyframes)} keyframes")
    elif cmd == "segment":
        shots = pipeline.load_shots(args.shots) if args.shots else None
        results = pipeline.run_segment(args.input, cfg, args.out, shots)
        print(f"{len(results)} keyframes segmented")
    elif cmd == "features":
        described = pipeline.run_features(args.input, cfg, args.out, args.bundle)
        print(f"{len(described.stacked())} background descriptors")
    elif cmd == "train":
        kinds = args.kinds.split(",") if args.kinds else None
        if kinds and any(k not in ("knn", "ann", "svm") for k in kinds):
            raise UsageError(f"--kinds must list knn, ann or svm, got {args.kinds!r}")
        for kind, path in pipeline.run_train(args.data, cfg, args.out, kinds).items():
            print(f"{kind}: {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"ritescene: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except UsageError as exc:
        print(f"ritescene: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, NotADirectoryError, IsADirectoryError, PermissionError) as exc:
        print(f"ritescene: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"ritescene: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"ritescene: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        logger.exception("internal error")
        print(f"ritescene: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
