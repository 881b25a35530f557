"""Command-line entry point: ``p3d {transform,augment,scan,batch,verify,bench}``.

Exit codes: 0 success, 1 validation/configuration error (including failed
verification), 2 data error. Errors are reported on stderr as a single JSON
line ``{"error": <reason>, "message": ...}``. Each run also echoes its fully
resolved configuration to stderr as ``{"config": {...}}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .augment import AugmentSpec, augment
from .bench import BenchCase, DEFAULT_CASES, run_bench
from .dataset import BatchPlan, CorpusManifest, scan_corpus, write_batches
from .errors import ConfigurationError, DataError, P3DError
from .p3d import P3DConfig, auto_crop, pseudo3d_for_model, to_pseudo3d

EXIT_OK, EXIT_VALIDATION, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_tuple(text: str, sep: str = ",") -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.replace("x", sep).split(sep) if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers separated by '{sep}', got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"extents must be positive, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="p3d", description="Pseudo-3D transform and joint 2D/3D data tooling.")
    parser.add_argument("--seed", type=int, default=None, help="override the random seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: $P3D_THREADS or 1)")
    parser.add_argument("--quiet", action="store_true", help="suppress human-readable output")
    parser.add_argument("--config", type=Path, default=None, help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("transform", help="2D image -> pseudo-3D volume")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--target", type=_int_tuple, default=None, help="resize to H,W,D")
    p.add_argument("--auto-crop", action="store_true", help="center-crop to a compatible size first")
    p.add_argument("--figure", type=Path, default=None, help="also render depth slices to this image")

    p = sub.add_parser("augment", help="apply an augmentation recipe to a volume")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--item-index", type=int, default=0)
    p.add_argument("--view", type=int, default=0)

    p = sub.add_parser("scan", help="index a corpus directory into a manifest")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--rule", action="append", default=[], metavar="GLOB=MODALITY")

    p = sub.add_parser("batch", help="materialise one epoch of joint batches")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--epoch", type=int, default=0)

    p = sub.add_parser("verify", help="run the oracle and gradient-check suite")
    p.add_argument("--cases", type=int, default=20, help="random instances per check")

    p = sub.add_parser("bench", help="benchmark lowering vs direct convolution")
    p.add_argument("--case", action="append", default=[], metavar="OP:SHAPE:k[:s[:P[:M]]]",
                   help="e.g. conv2d:64x64x16:3:1:1:16 or pseudo3d:224x224:5")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--output", type=Path, default=None, help="write the JSON report here")
    p.add_argument("--figure", type=Path, default=None, help="render a timing chart here")
    parser.subcommands = sub.choices
    return parser


def parse_case(text: str) -> BenchCase:
    parts = text.split(":")
    if len(parts) < 3:
        raise ConfigurationError(f"bench case {text!r} must look like OP:SHAPE:k[:s[:P[:M]]]")
    try:
        shape = _int_tuple(parts[1], "x")
        nums = [int(v) for v in parts[2:]]
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigurationError(f"bad bench case {text!r}: {exc}") from exc
    keys = ["k", "s", "P", "M"]
    return BenchCase(parts[0], shape, **dict(zip(keys, nums)))


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            defaults = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        known = set(vars(args))
        unknown = set(defaults) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        # Command-line flags win over the config file: re-parse with file values as defaults.
        parser = build_parser()
        parser.set_defaults(**defaults)
        parser.subcommands[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.threads is None:
        env = os.environ.get("P3D_THREADS")
        try:
            args.threads = int(env) if env else 1
        except ValueError:
            raise ConfigurationError(f"P3D_THREADS must be an integer, got {env!r}")
    if args.threads < 1:
        raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")
    return args


def _echo_config(args) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    print(json.dumps({"config": resolved}, sort_keys=True), file=sys.stderr)


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def run_transform(args) -> int:
    cfg = P3DConfig(args.window, args.stride)
    arr, header = io.load_any(args.input)
    if arr.ndim != 2:
        raise DataError(f"{args.input}: transform expects a 2D image, got shape {arr.shape}")
    if args.auto_crop:
        arr = auto_crop(arr, cfg)
    dtype = arr.dtype if args.input.suffix.lower() not in io.IMAGE_SUFFIXES else np.float32
    if args.target is not None:
        if len(args.target) != 3:
            raise ConfigurationError(f"--target needs H,W,D, got {args.target}")
        vol = pseudo3d_for_model(arr, cfg, args.target)
    else:
        vol = to_pseudo3d(arr, cfg)
    vol = vol.astype(dtype)
    io.save_tensor(args.output, vol)
    if args.figure is not None:
        from .plotting import plot_slices

        plot_slices(vol, args.figure, title=f"k={cfg.k}, s={cfg.s}, shape {vol.shape}")
    _say(args, json.dumps({"output": str(io.tensor_stem(args.output)), "shape": list(vol.shape)}))
    return EXIT_OK


def run_augment(args) -> int:
    spec = AugmentSpec.load(args.spec)
    if args.seed is not None:
        spec = AugmentSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    vol = io.load_tensor(args.input)
    if vol.ndim != 3:
        raise DataError(f"{args.input}: augment expects an H x W x D volume, got shape {vol.shape}")
    if vol.min() < 0 or vol.max() > 1:
        raise DataError(f"{args.input}: intensities must be normalised to [0, 1]")
    out = augment(vol, spec, args.item_index, view=args.view)
    io.save_tensor(args.output, out.astype(vol.dtype))
    _say(args, json.dumps({"output": str(io.tensor_stem(args.output)), "shape": list(out.shape)}))
    return EXIT_OK


def run_scan(args) -> int:
    rules = {}
    for rule in args.rule:
        if "=" not in rule:
            raise ConfigurationError(f"--rule must be GLOB=MODALITY, got {rule!r}")
        pattern, modality = rule.rsplit("=", 1)
        rules[pattern] = modality
    manifest = scan_corpus(args.root, rules, threads=args.threads)
    manifest.save(args.output)
    _say(args, json.dumps({"2d": manifest.n2d, "3d": manifest.n3d, "rejects": len(manifest.rejects)}))
    return EXIT_OK


def load_plan(path, seed_override=None):
    """Read a batch plan JSON: BatchPlan fields plus optional window, stride, augment."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read plan {path}: {exc}") from exc
    allowed = {"batch_size", "mix_ratio", "seed", "epoch_length", "window", "stride", "augment"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"unknown plan keys: {sorted(unknown)}")
    if seed_override is not None:
        d["seed"] = seed_override
    plan = BatchPlan(**{k: d[k] for k in ("batch_size", "mix_ratio", "seed", "epoch_length") if k in d})
    p3d = P3DConfig(d.get("window", 5), d.get("stride", 1))
    aug = AugmentSpec.from_dict(d["augment"]) if "augment" in d else AugmentSpec(seed=plan.seed)
    return plan, p3d, aug


def run_batch(args) -> int:
    manifest = CorpusManifest.load(args.manifest)
    plan, p3d, aug = load_plan(args.plan, args.seed)
    audit = write_batches(manifest, plan, aug, p3d, args.out_dir, epoch=args.epoch, threads=args.threads)
    _say(args, json.dumps({"batches": len(audit["batches"]), **audit["counts"], "rejects": len(audit["rejects"])}))
    return EXIT_OK


def run_verify(args) -> int:
    from .verification import run_verify as suite

    results = suite(n=args.cases, seed=args.seed or 0)
    for r in results:
        _say(args, r.row())
    failed = [r.name for r in results if not r.passed]
    _say(args, f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print(json.dumps({"error": "verification", "message": f"failed: {', '.join(failed)}"}), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def run_bench_cmd(args) -> int:
    cases = [parse_case(c) for c in args.case] or list(DEFAULT_CASES)
    report = run_bench(cases, repetitions=args.repetitions, threads=args.threads, seed=args.seed or 0)
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.output is not None:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(text + "\n")
    if args.figure is not None:
        from .plotting import plot_benchmark

        plot_benchmark(report, args.figure)
    _say(args, text)
    return EXIT_OK


COMMANDS = {
    "transform": run_transform,
    "augment": run_augment,
    "scan": run_scan,
    "batch": run_batch,
    "verify": run_verify,
    "bench": run_bench_cmd,
}


def _fail(reason: str, message: str, code: int) -> int:
    print(json.dumps({"error": reason, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        _echo_config(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_VALIDATION)
    except DataError as exc:
        return _fail(exc.reason, str(exc), EXIT_DATA)
    except P3DError as exc:
        return _fail(exc.reason, str(exc), EXIT_VALIDATION)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
