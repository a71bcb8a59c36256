"""Command-line front end.

Subcommands: pool (dump pooled samples + window metadata), loss (JSON loss
report, optional gradient dump), cka (block-similarity CSV/PGM), hist
(confidence histogram CSV), selftest (built-in verification suite).

Exit codes: 0 success, 2 validation failure, 3 I/O failure, 4 empty
selection. All output is deterministic given identical inputs and flags;
floats print with 17 significant digits so they re-parse losslessly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import selftest
from .cka import heatmap, load_activation_set
from .errors import EmptySelectionError, ManifestError, TensorIOError
from .losses import LossConfig, total_loss
from .manifest import BatchManifest, build_scale_spec, load_batch_manifest
from .npyio import write_tensor
from .pooling import multi_scale_pool
from .selection import (DEFAULT_ALPHA, DEFAULT_BETA, Thresholds, confidence,
                        confidence_histogram)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, "
                                         f"got {text!r}") from exc


def _add_config_flags(sub: argparse.ArgumentParser, losses: bool) -> None:
    sub.add_argument("--scales", type=_parse_int_list, default=None,
                     help="comma-separated pooling scales, e.g. 1,2,4")
    sub.add_argument("--scale-mode", choices=["output-grid", "kernel-stride"],
                     default=None)
    sub.add_argument("--strides", type=_parse_int_list, default=None,
                     help="kernel-stride mode: one stride per scale")
    sub.add_argument("--include-gap", action="store_true", default=None,
                     help="kernel-stride mode: append a global-average window")
    if losses:
        sub.add_argument("--alpha", type=float, default=None,
                         help="filtering threshold (default %.2f)" % DEFAULT_ALPHA)
        sub.add_argument("--beta", type=float, default=None,
                         help="confidence split (default %.2f)" % DEFAULT_BETA)
        sub.add_argument("--lambda1", type=float, default=None,
                         help="sample-loss weight (default 1)")
        sub.add_argument("--lambda2", type=float, default=None,
                         help="feature-loss weight (default 1)")
        sub.add_argument("--no-center", action="store_true", default=None,
                         help="skip mean subtraction of normalized rows")
        sub.add_argument("--temperature", type=float, default=None,
                         help="similarity divisor (default 1)")
        sub.add_argument("--eps", type=float, default=None,
                         help="norm guard (default 1e-12)")


def _pick(flag, manifest_value, default):
    if flag is not None:
        return flag
    if manifest_value is not None:
        return manifest_value
    return default


def _thresholds(args, manifest: BatchManifest) -> Thresholds:
    alpha = _pick(args.alpha, manifest.alpha, None)
    beta = _pick(args.beta, manifest.beta, None)
    if alpha is None:
        alpha = DEFAULT_ALPHA
        print(f"warning: alpha not given, using default {alpha}", file=sys.stderr)
    if beta is None:
        beta = DEFAULT_BETA
        print(f"warning: beta not given, using default {beta}", file=sys.stderr)
    try:
        return Thresholds(alpha=alpha, beta=beta)
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc


def _loss_config(args, manifest: BatchManifest) -> LossConfig:
    centering = manifest.centering if manifest.centering is not None else True
    if args.no_center:
        centering = False
    try:
        return LossConfig(
            lambda1=_pick(args.lambda1, manifest.lambda1, 1.0),
            lambda2=_pick(args.lambda2, manifest.lambda2, 1.0),
            centering=centering,
            eps=_pick(args.eps, manifest.eps, 1e-12),
            temperature=_pick(args.temperature, manifest.temperature, 1.0))
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc


def _write_window_csv(path: Path, pooled) -> None:
    lines = ["row,image_index,window_index,scale,top,left,height,width"]
    for n, meta in enumerate(pooled.meta_rows()):
        lines.append(",".join(str(v) for v in (n, *meta)))
    path.write_text("\n".join(lines) + "\n")


def cmd_pool(args) -> int:
    manifest = load_batch_manifest(args.manifest)
    spec = build_scale_spec(manifest, args.scales, args.scale_mode,
                            args.strides, args.include_gap)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, feats in (("student", manifest.student), ("teacher", manifest.teacher)):
        pooled = multi_scale_pool(feats, spec)
        write_tensor(out_dir / f"{name}_pooled.npy", pooled.samples)
        _write_window_csv(out_dir / f"{name}_windows.csv", pooled)
    return 0


def cmd_loss(args) -> int:
    manifest = load_batch_manifest(args.manifest)
    spec = build_scale_spec(manifest, args.scales, args.scale_mode,
                            args.strides, args.include_gap)
    th = _thresholds(args, manifest)
    cfg = _loss_config(args, manifest)
    result = total_loss(manifest.student, manifest.teacher, manifest.head,
                        manifest.projector, spec, th, cfg, manifest.labels)
    if args.grad_out:
        write_tensor(args.grad_out, result.grad_student)
    task = "null" if result.loss_task is None else _fmt(result.loss_task)
    print("{"
          f'"loss_sample": {_fmt(result.loss_sample)}, '
          f'"loss_feature": {_fmt(result.loss_feature)}, '
          f'"loss_task": {task}, '
          f'"loss_total": {_fmt(result.loss_total)}, '
          f'"N_high": {result.n_high}, '
          f'"N_low": {result.n_low}, '
          f'"N_filtered": {result.n_filtered}'
          "}")
    return 0


def cmd_cka(args) -> int:
    blocks_x = load_activation_set(args.manifest_x)
    blocks_y = load_activation_set(args.manifest_y)
    hm = heatmap(blocks_x, blocks_y)
    lines = ["x_index,y_index,cka"]
    for p in range(hm.values.shape[0]):
        for q in range(hm.values.shape[1]):
            v = hm.values[p, q]
            lines.append(f"{p},{q},{'nan' if np.isnan(v) else _fmt(v)}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    if args.pgm_out:
        vals = np.nan_to_num(hm.values, nan=0.0)
        pixels = np.clip(np.rint(vals * 255.0), 0, 255).astype(np.uint8)
        height, width = pixels.shape
        with open(args.pgm_out, "wb") as fh:
            fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
    return 0


def cmd_hist(args) -> int:
    manifest = load_batch_manifest(args.manifest)
    spec = build_scale_spec(manifest, args.scales, args.scale_mode,
                            args.strides, args.include_gap)
    pooled = multi_scale_pool(manifest.teacher, spec)
    table = confidence(pooled, manifest.head)
    counts = confidence_histogram(table, args.bins)
    print("bin_index,low,high,count")
    for i, count in enumerate(counts):
        print(f"{i},{_fmt(i / args.bins)},{_fmt((i + 1) / args.bins)},{int(count)}")
    return 0


def cmd_selftest(args) -> int:
    return 0 if selftest.run() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msdcrd",
        description="Multi-scale decoupled contrastive distillation toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("pool", help="dump pooled samples and window metadata "
                                     "(features are pooled as stored; no projector)")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    _add_config_flags(p, losses=False)
    p.set_defaults(func=cmd_pool)

    p = subs.add_parser("loss", help="print the loss report as JSON")
    p.add_argument("manifest")
    p.add_argument("--grad-out", default=None,
                   help="write the student-feature gradient to this tensor file")
    _add_config_flags(p, losses=True)
    p.set_defaults(func=cmd_loss)

    p = subs.add_parser("cka", help="block-similarity heatmap as CSV (and PGM)")
    p.add_argument("manifest_x")
    p.add_argument("manifest_y")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--pgm-out", default=None, help="optional grayscale PGM path")
    p.set_defaults(func=cmd_cka)

    p = subs.add_parser("hist", help="teacher-confidence histogram as CSV")
    p.add_argument("manifest")
    p.add_argument("--bins", type=int, default=10)
    _add_config_flags(p, losses=False)
    p.set_defaults(func=cmd_hist)

    p = subs.add_parser("selftest", help="run the built-in verification suite")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmptySelectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except TensorIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ManifestError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
