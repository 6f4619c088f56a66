"""Command-line entry point.

Exit codes: 0 success, 1 domain error (message on stderr names the violated
precondition), 2 usage error. Machine output goes to stdout or the --out
path; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._version import __version__
from .analysis import ErrorThresholds, classify_errors
from .dataset import augment, load_manifest, split
from .ensemble import EnsembleConfig, majority_vote
from .exceptions import SegbenchError
from .harness import (
    SweepConfig,
    degradation_profile,
    emit_report,
    emit_summary,
    run_sweep,
)
from .masks import load_image, load_mask, save_image, save_mask
from .metrics import ConfusionMatrix, accumulate, breakdown
from .noise import NOISE_FAMILIES, NOISE_LEVELS, NoiseSpec, resolve_level
from .synth import STRUCTURES, corrupt_iid, corrupt_structured

log = logging.getLogger("segbench")

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise SegbenchError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segbench",
        description="Segmentation mask scoring, majority-vote ensembling, "
        "and noise-robustness benchmarking.",
    )
    parser.add_argument("--version", action="version", version=f"segbench {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="increase log verbosity"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="mIOU of a prediction mask against ground truth")
    p.add_argument("--pred", required=True, help="prediction mask PNG")
    p.add_argument("--gt", required=True, help="ground-truth mask PNG")
    p.add_argument("--num-classes", type=int, default=None, help="override inferred K")
    p.add_argument("--class-filter", default=None, help="comma-separated class ids to average over")
    p.add_argument("--out", default=None, help="write full JSON breakdown here")

    p = sub.add_parser("ensemble", help="fuse masks by pixel-wise majority vote")
    p.add_argument("masks", nargs="+", help="member mask PNGs, in tie-break priority order")
    p.add_argument("--out", required=True, help="fused mask PNG path")
    p.add_argument("--names", default=None, help="comma-separated member names")
    p.add_argument("--weights", default=None, help="comma-separated positive vote weights")
    p.add_argument("--num-classes", type=int, default=None, help="override inferred K")

    p = sub.add_parser("noise", help="perturb an image (or a directory of images)")
    p.add_argument("input", help="image file, or directory for batch mode")
    p.add_argument("--family", required=True, choices=NOISE_FAMILIES)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--level", choices=NOISE_LEVELS, help="severity ladder step")
    group.add_argument("--sigma", type=float, help="explicit sigma / amount")
    p.add_argument("--out", required=True, help="output image path (or directory in batch mode)")
    _add_seed(p)

    p = sub.add_parser("corrupt", help="corrupt a ground-truth mask into a synthetic prediction")
    p.add_argument("mask", help="ground-truth mask PNG")
    p.add_argument("--mode", required=True, choices=STRUCTURES)
    p.add_argument("--p", type=float, default=0.0, help="flip probability (iid mode)")
    p.add_argument(
        "--magnitude", type=float, default=1,
        help="radius for dilate/erode, fraction for drop_component",
    )
    p.add_argument("--target-class", type=int, default=1, help="class the structured modes act on")
    p.add_argument("--num-classes", type=int, default=None, help="override inferred K")
    p.add_argument("--out", required=True, help="corrupted mask PNG path")
    _add_seed(p)

    p = sub.add_parser("split", help="seeded train/test split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", default=None, help="write split JSON here (default stdout)")
    _add_seed(p)

    p = sub.add_parser("augment", help="apply one random transform to an image/mask pair")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--prob", type=float, default=0.2, help="application probability (default 0.2)")
    p.add_argument("--out-dir", required=True, help="directory for image.png, mask.png, applied.json")
    _add_seed(p)

    p = sub.add_parser("validate-manifest", help="check a manifest's schema and file references")
    p.add_argument("manifest")

    p = sub.add_parser("sweep", help="run the noise-robustness sweep and emit report tables")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--out", default=None, help="output directory (default stdout, report only)")
    p.add_argument("--format", default="csv", choices=("csv", "json", "markdown"))
    p.add_argument("--seed", type=int, default=None, help="override the config's master_seed")
    p.add_argument("--profile", action="store_true", help="also emit the degradation profile")

    p = sub.add_parser("analyze", help="classify segmentation failure modes")
    p.add_argument("--pred", default=None, help="prediction mask PNG (single-pair mode)")
    p.add_argument("--gt", default=None, help="ground-truth mask PNG (single-pair mode)")
    p.add_argument("--manifest", default=None, help="manifest JSON (batch mode)")
    p.add_argument("--predictor", default=None, help="prediction-set name (batch mode)")
    p.add_argument("--class-id", type=int, required=True)
    p.add_argument("--recall-hi", type=float, default=0.85)
    p.add_argument("--recall-lo", type=float, default=0.8)
    p.add_argument("--ideal-eps", type=float, default=0.02)
    p.add_argument("--out", default=None, help="JSON path (single) or directory (batch)")

    return parser


def _dump_json(payload, out: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _cmd_score(args) -> int:
    gt = load_mask(args.gt, num_classes=args.num_classes)
    pred = load_mask(args.pred, num_classes=gt.num_classes)
    class_filter = set(_parse_int_list(args.class_filter)) if args.class_filter else None
    matrix = accumulate(ConfusionMatrix.zeros(gt.num_classes), pred, gt)
    result = breakdown(matrix, class_filter)
    if args.out:
        _dump_json(result.to_dict(), args.out)
    value = "undefined" if result.miou is None else result.miou
    print(f"mIOU {value}")
    return 0


def _cmd_ensemble(args) -> int:
    names = args.names.split(",") if args.names else [f"m{i}" for i in range(len(args.masks))]
    weights = tuple(float(w) for w in args.weights.split(",")) if args.weights else None
    config = EnsembleConfig(member_names=tuple(names), weights=weights)
    first = load_mask(args.masks[0], num_classes=args.num_classes)
    masks = [first] + [
        load_mask(path, num_classes=first.num_classes) for path in args.masks[1:]
    ]
    fused = majority_vote(masks, config)
    save_mask(fused, args.out)
    log.info("wrote fused mask to %s", args.out)
    return 0


def _noise_spec(args) -> NoiseSpec:
    if args.level is not None:
        return NoiseSpec.from_level(args.family, args.level, args.seed)
    return NoiseSpec(family=args.family, sigma=args.sigma, seed=args.seed)


def _cmd_noise(args) -> int:
    from .noise import apply_noise

    src = Path(args.input)
    spec = _noise_spec(args)
    if src.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise SegbenchError(f"no images found in {src}")
        for path in files:
            perturbed = apply_noise(load_image(path), spec)
            save_image(perturbed, out_dir / (path.stem + ".png"))
        log.info("perturbed %d images into %s", len(files), out_dir)
    else:
        save_image(apply_noise(load_image(src), spec), args.out)
    return 0


def _cmd_corrupt(args) -> int:
    gt = load_mask(args.mask, num_classes=args.num_classes)
    if args.mode == "iid":
        out = corrupt_iid(gt, args.p, args.seed)
    else:
        out = corrupt_structured(gt, args.mode, args.magnitude, args.target_class, args.seed)
    save_mask(out, args.out)
    return 0


def _cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    result = split(manifest, test_fraction=args.test_fraction, seed=args.seed)
    _dump_json(result.to_dict(), args.out)
    return 0


def _cmd_augment(args) -> int:
    img = load_image(args.image)
    mask = load_mask(args.mask)
    out_img, out_mask, applied = augment(img, mask, prob=args.prob, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(out_img, out_dir / "image.png")
    save_mask(out_mask, out_dir / "mask.png")
    _dump_json({"applied": applied}, str(out_dir / "applied.json"))
    return 0


def _cmd_validate_manifest(args) -> int:
    manifest = load_manifest(args.manifest)
    print(f"ok: {len(manifest.entries)} entries")
    return 0


def _cmd_sweep(args) -> int:
    config = SweepConfig.load(args.config)
    if args.seed is not None:
        config = config.with_master_seed(args.seed)
    report = run_sweep(config)
    ext = {"csv": "csv", "json": "json", "markdown": "md"}[args.format]
    report_bytes = emit_report(report, args.format)
    if args.out is None:
        sys.stdout.write(report_bytes.decode("utf-8"))
    else:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"report.{ext}").write_bytes(report_bytes)
        (out_dir / f"summary.{ext}").write_bytes(emit_summary(report, args.format))
        if args.profile:
            _dump_json(degradation_profile(report), str(out_dir / "degradation.json"))
        log.info("wrote report to %s", out_dir)
    return 0


def _cmd_analyze(args) -> int:
    thresholds = ErrorThresholds(
        recall_hi=args.recall_hi, recall_lo=args.recall_lo, ideal_eps=args.ideal_eps
    )
    if args.pred and args.gt:
        gt = load_mask(args.gt)
        pred = load_mask(args.pred, num_classes=gt.num_classes)
        report = classify_errors(pred, gt, args.class_id, thresholds)
        _dump_json(report.to_dict(), args.out)
        return 0
    if not (args.manifest and args.predictor):
        raise SegbenchError(
            "analyze needs either --pred and --gt, or --manifest and --predictor"
        )
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    histogram = {}
    for entry in manifest.entries:
        if args.predictor not in entry.predictions:
            raise SegbenchError(f"entry {entry.id!r} has no prediction set {args.predictor!r}")
        gt = load_mask(entry.gt_mask)
        pred = load_mask(entry.predictions[args.predictor], num_classes=gt.num_classes)
        report = classify_errors(pred, gt, args.class_id, thresholds, entry_id=entry.id)
        for verdict in report.verdicts:
            histogram[verdict] = histogram.get(verdict, 0) + 1
        if out_dir:
            _dump_json(report.to_dict(), str(out_dir / f"{entry.id}.json"))
    lines = ["verdict,count"] + [f"{k},{v}" for k, v in sorted(histogram.items())]
    text = "\n".join(lines) + "\n"
    if out_dir:
        (out_dir / "verdict_histogram.csv").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


_HANDLERS = {
    "score": _cmd_score,
    "ensemble": _cmd_ensemble,
    "noise": _cmd_noise,
    "corrupt": _cmd_corrupt,
    "split": _cmd_split,
    "augment": _cmd_augment,
    "validate-manifest": _cmd_validate_manifest,
    "sweep": _cmd_sweep,
    "analyze": _cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        return _HANDLERS[args.command](args)
    except SegbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
