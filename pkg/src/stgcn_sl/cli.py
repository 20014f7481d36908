"""Command-line interface: dataset preparation, training and evaluation.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoint as ckpt
from .autograd import NonFiniteError
from .graph import LayoutError, builtin_filter
from .harness import report
from .harness.synth import generate_synthetic
from .harness.train import (
    CompatibilityError,
    ExperimentConfig,
    TrainingError,
    evaluate,
    load_model,
    read_metrics,
    train,
    window_mean,
)
from .pipeline import bundle as bundle_io
from .pipeline.runner import (
    Manifest,
    filter_bundle,
    normalize_bundle,
    pack_bundle,
    run_all,
    segment_corpus,
    split_bundle,
)
from .pipeline.steps import DEFAULT_FRAMES, PipelineError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("stgcn_sl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _window(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like A:B, got {text!r}") from None
    if a > b:
        raise argparse.ArgumentTypeError("window start exceeds its end")
    return a, b


def _read_filter(spec: str) -> list[int]:
    """Builtin filter name, a JSON file (list or {"indices": [...]}), or inline ``1,2,3``."""
    path = Path(spec)
    if path.is_file():
        doc = json.loads(path.read_text())
        return [int(i) for i in (doc["indices"] if isinstance(doc, dict) else doc)]
    try:
        return builtin_filter(spec)
    except KeyError:
        return _int_list(spec)


def cmd_segment(args) -> int:
    manifest = Manifest.load(args.manifest)
    bundle_io.save(args.out, segment_corpus(manifest))
    return EXIT_OK


def cmd_filter(args) -> int:
    bundle = bundle_io.load(args.input)
    bundle_io.save(args.out, filter_bundle(bundle, _read_filter(args.indices), args.layout))
    return EXIT_OK


def cmd_split(args) -> int:
    train_b, test_b = split_bundle(bundle_io.load(args.input), args.ratio, args.seed)
    bundle_io.save(args.train_out, train_b)
    bundle_io.save(args.test_out, test_b)
    return EXIT_OK


def cmd_normalize(args) -> int:
    bundle_io.save(args.out, normalize_bundle(bundle_io.load(args.input), args.frames))
    return EXIT_OK


def cmd_pack(args) -> int:
    bundle_io.save(args.out, pack_bundle(bundle_io.load(args.input)))
    return EXIT_OK


def cmd_run_all(args) -> int:
    manifest = Manifest.load(args.manifest)
    if args.out is not None:
        manifest.output_dir = str(Path(args.out).resolve())
    train_b, test_b = run_all(manifest)
    print(f"train: {len(train_b)} samples, test: {len(test_b)} samples -> {manifest.resolve(manifest.output_dir)}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = ExperimentConfig.load(args.config)
    if config.train_data is None:
        raise UsageError("experiment config has no train_data")
    train_b = bundle_io.load(config.train_data)
    eval_b = bundle_io.load(config.eval_data) if config.eval_data else None
    out = args.out or config.output_dir
    result = train(config, train_b, eval_b, out)
    best = "-" if result.best_top1 is None else f"{result.best_top1:.4f} (epoch {result.best_epoch})"
    print(f"epochs: {len(result.records)}  best top-1: {best}  output: {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint, args.model)
    scores = evaluate(model, bundle_io.load(args.data), args.topk)
    result: dict = {f"top{k}": v for k, v in scores.items()}
    if args.window is not None:
        metrics = Path(args.checkpoint).parent / "metrics.jsonl"
        if not metrics.is_file():
            raise UsageError(f"--window needs {metrics}")
        result["window"] = dict(window_mean(read_metrics(metrics), *args.window), range=f"{args.window[0]}:{args.window[1]}")
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_synth(args) -> int:
    train_b, test_b = generate_synthetic(
        args.classes, args.spc, args.frames, args.nodes, args.seed, test_per_class=args.test_spc
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle_io.save(out / "train.stgs", train_b)
    bundle_io.save(out / "test.stgs", test_b)
    print(f"train: {len(train_b)} samples, test: {len(test_b)} samples -> {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    sys.stdout.write(report.inspect_file(args.file))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stgcn-sl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", help="cut one raw sample per annotation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("filter", help="keep a subset of keypoints")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--indices", default="sign-27", help="builtin name, JSON file or comma list")
    p.add_argument("--layout", default="sign-27", help="layout name or JSON file attached to the output")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("split", help="seeded train/test split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("normalize", help="loop or truncate samples to a fixed length")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("pack", help="validate a normalized bundle for training")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("run-all", help="segment, filter, split, normalize and pack from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output directory (overrides the manifest)")
    p.set_defaults(func=cmd_run_all)

    p = sub.add_parser("train", help="train a model from an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-k accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--topk", type=_int_list, default=[1, 5])
    p.add_argument("--window", type=_window, help="also average logged top-k over epochs A:B")
    p.add_argument("--model", help="model config (default: model.json beside the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic train/test bundle pair")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--spc", type=int, required=True, help="training samples per class")
    p.add_argument("--test-spc", type=int, default=0, help="test samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    p.add_argument("--nodes", type=int, default=27)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="summarize a dataset bundle or checkpoint")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, NonFiniteError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        bundle_io.FormatError,
        ckpt.CheckpointError,
        PipelineError,
        LayoutError,
        CompatibilityError,
        OSError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
