"""Command-line interface: ``segens {loss,eval,fuse,train,synth,bench}``.

Errors are reported on stderr as ``error: <message>`` with a nonzero exit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import losses
from .bench import BenchConfig, run_bench, write_bench
from .ensemble import MASK_EXT, RASTER_EXT, EnsembleSpec, binarize, fuse_image, list_ids
from .metrics import MODES, evaluate_dataset
from .nnet import FcnModel, TrainConfig, default_pool, stochastic_select, synth_dataset, train
from .raster import load_mask, load_raster, resize_nearest, save_mask, save_raster, validate_probmap
from .ssim import SsimParams

log = logging.getLogger("segens")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"error: {message}\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None


def _map(fn, items, threads):
    # order-preserving, so outputs do not depend on the thread count
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _require_dir(path, what):
    if not os.path.isdir(path):
        raise CliError(f"{what} {path!r} is not a directory")


# --------------------------------------------------------------------------


def cmd_loss(args):
    if args.kind not in losses.LOSSES:
        raise CliError(f"unknown loss kind {args.kind!r}; valid kinds: {', '.join(losses.LOSSES)}")
    pred = load_raster(args.pred)
    try:
        validate_probmap(pred)
    except ValueError as exc:
        raise CliError(f"{args.pred}: {exc}") from None
    k = pred.shape[2]
    mask = load_mask(args.target, max(k, 2))
    if mask.shape != pred.shape[:2]:
        raise CliError(f"dimension mismatch: prediction {pred.shape[:2]} vs target {mask.shape}")
    params, ssim_params = losses.DEFAULT_PARAMS, losses.DEFAULT_SSIM
    if args.params:
        raw = dict(_read_json(args.params))
        if "ssim" in raw:
            ssim_params = SsimParams.from_dict(raw.pop("ssim"))
        params = losses.LossParams.from_dict(raw)
    if k == 1:
        target = (mask[..., None] == 1).astype(np.float64)
    else:
        target = (mask[..., None] == np.arange(k)).astype(np.float64)
    res = losses.compute_loss(args.kind, pred, target, params, ssim_params)
    print(f"{res.value:.9f}")
    if args.grad_out:
        save_raster(args.grad_out, res.grad)
    return 0


def _load_prediction(path, shape, threshold, classes):
    if path.endswith(MASK_EXT):
        mask = load_mask(path, classes)
        return resize_nearest(mask, *shape)
    return binarize(resize_nearest(load_raster(path), *shape), threshold)


def _prediction_files(pred_dir):
    files = {}
    for f in sorted(os.listdir(pred_dir)):
        stem, ext = os.path.splitext(f)
        if ext in (MASK_EXT, RASTER_EXT):
            # a raster wins over a mask with the same stem
            if stem not in files or ext == RASTER_EXT:
                files[stem] = os.path.join(pred_dir, f)
    return files


def cmd_eval(args):
    _require_dir(args.pred_dir, "--pred-dir")
    _require_dir(args.gt_dir, "--gt-dir")
    preds = _prediction_files(args.pred_dir)
    ids = list_ids(args.gt_dir, MASK_EXT)
    if not ids:
        raise CliError(f"no {MASK_EXT} masks in {args.gt_dir}")
    missing = [i for i in ids if i not in preds]
    extra = sorted(set(preds) - set(ids))
    if missing or extra:
        parts = []
        if missing:
            parts.append("no prediction for: " + ", ".join(missing))
        if extra:
            parts.append("no ground truth for: " + ", ".join(extra))
        raise CliError("unmatched ids; " + "; ".join(parts))

    def pair(image_id):
        truth = load_mask(os.path.join(args.gt_dir, image_id + MASK_EXT), args.classes)
        return _load_prediction(preds[image_id], truth.shape, args.threshold, args.classes), truth

    report = evaluate_dataset(_map(pair, ids, args.threads), args.mode, ids)
    text = report.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not args.quiet and args.out:
        print(f"dice {report.aggregate_dice:.6f} iou {report.aggregate_iou:.6f}")
    return 0


def cmd_fuse(args):
    spec = EnsembleSpec.load(args.spec)
    for m in spec.members:
        _require_dir(m.source, "member dir")
    ids = list_ids(spec.members[0].source, RASTER_EXT)
    if not ids:
        raise CliError(f"no {RASTER_EXT} rasters in {spec.members[0].source}")
    os.makedirs(args.out_dir, exist_ok=True)

    def one(image_id):
        fused = fuse_image(spec, image_id)
        save_raster(os.path.join(args.out_dir, image_id + RASTER_EXT), fused)
        if args.pgm:
            save_mask(os.path.join(args.out_dir, image_id + MASK_EXT), binarize(fused, spec.threshold),
                      max(fused.shape[2], 2))
        return image_id

    _map(one, ids, args.threads)
    if not args.quiet:
        print(f"fused {len(ids)} images from {len(spec.members)} members into {args.out_dir}")
    return 0


def cmd_synth(args):
    data = synth_dataset(args.n, args.height, args.width, args.seed if args.seed is not None else 0)
    img_dir = os.path.join(args.out_dir, "images")
    mask_dir = os.path.join(args.out_dir, "masks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    for i, (image, mask) in enumerate(data):
        save_raster(os.path.join(img_dir, f"img_{i:04d}{RASTER_EXT}"), image)
        save_mask(os.path.join(mask_dir, f"img_{i:04d}{MASK_EXT}"), mask, 2)
    if not args.quiet:
        print(f"wrote {len(data)} samples to {args.out_dir}")
    return 0


def _load_dataset(data_dir):
    img_dir, mask_dir = os.path.join(data_dir, "images"), os.path.join(data_dir, "masks")
    _require_dir(img_dir, "images dir")
    _require_dir(mask_dir, "masks dir")
    ids = list_ids(img_dir, RASTER_EXT)
    missing = [i for i in ids if not os.path.exists(os.path.join(mask_dir, i + MASK_EXT))]
    if missing:
        raise CliError("no mask for: " + ", ".join(missing))
    if not ids:
        raise CliError(f"no images in {img_dir}")
    return ids, [(load_raster(os.path.join(img_dir, i + RASTER_EXT)),
                  load_mask(os.path.join(mask_dir, i + MASK_EXT), 2)) for i in ids]


def cmd_train(args):
    cfg = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    overrides = {k: v for k, v in (("loss", args.loss), ("epochs", args.epochs), ("seed", args.seed))
                 if v is not None}
    cfg = replace(cfg, **overrides)
    _, trainset = _load_dataset(args.data_dir)
    val = _load_dataset(args.val_dir)[1] if args.val_dir else None
    acts = stochastic_select(default_pool(), cfg.seed) if args.stochastic else None
    model = FcnModel(trainset[0][0].shape[2], 2, acts, seed=cfg.seed)
    model, hist = train(model, trainset, cfg, val)
    os.makedirs(args.out_dir, exist_ok=True)
    model.save(os.path.join(args.out_dir, "manifest.json"), os.path.join(args.out_dir, "weights.segw"),
               extra={"loss": cfg.loss, "train": cfg.to_dict()})
    with open(os.path.join(args.out_dir, "history.csv"), "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_loss", "val_dice"])
        w.writerow([0, "", f"{hist.initial_loss:.9f}", ""])
        for e, (lr, loss) in enumerate(zip(hist.lr, hist.train_loss), start=1):
            vd = f"{hist.val_dice[e - 1]:.6f}" if hist.val_dice else ""
            w.writerow([e, f"{lr:.6g}", f"{loss:.9f}", vd])
    if args.predict_dir:
        ids, items = _load_dataset(args.predict_dir)
        pdir = os.path.join(args.out_dir, "pred")
        os.makedirs(pdir, exist_ok=True)
        preds = _map(model.forward, [im for im, _ in items], args.threads)
        for i, p in zip(ids, preds):
            save_raster(os.path.join(pdir, i + RASTER_EXT), p)
    if not args.quiet:
        print(f"loss {hist.initial_loss:.6f} -> {hist.final_loss:.6f}")
    return 0


def cmd_bench(args):
    cfg = BenchConfig.from_dict(_read_json(args.config)) if args.config else BenchConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    result = run_bench(cfg, threads=args.threads)
    write_bench(result, cfg, args.out_dir)
    if not args.quiet:
        sys.stdout.write(result.table_csv())
    return 0


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="segens", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="seed for synth/train/bench")
    p.add_argument("--threads", type=int, default=1, help="worker threads for per-image work")
    p.add_argument("--quiet", action="store_true")
    # the global flags are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("loss", parents=[common], help="evaluate a loss on one prediction/target pair")
    s.add_argument("--kind", required=True, help="one of: " + ", ".join(losses.LOSSES))
    s.add_argument("--pred", required=True, help="SEGF probability map")
    s.add_argument("--target", required=True, help="PGM label mask")
    s.add_argument("--params", help="JSON loss parameters (optional 'ssim' block)")
    s.add_argument("--grad-out", help="write the gradient as a SEGF raster")
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("eval", parents=[common], help="score predictions against ground-truth masks")
    s.add_argument("--pred-dir", required=True)
    s.add_argument("--gt-dir", required=True)
    s.add_argument("--mode", choices=MODES, default="mean_per_image")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--classes", type=int, default=2)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("fuse", parents=[common], help="sum-rule fusion of member rasters")
    s.add_argument("--spec", required=True, help="ensemble JSON")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--pgm", action="store_true", help="also write binarized masks")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("train", parents=[common], help="train one network")
    s.add_argument("--data-dir", required=True, help="directory with images/ and masks/")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--config", help="JSON training config")
    s.add_argument("--loss", help="override the loss kind")
    s.add_argument("--epochs", type=int)
    s.add_argument("--stochastic", action="store_true", help="draw both activations at random")
    s.add_argument("--val-dir")
    s.add_argument("--predict-dir", help="write predictions for this dataset's images")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--height", "--h", type=int, default=64)
    s.add_argument("--width", "--w", type=int, default=64)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("bench", parents=[common], help="loss-diversity ensemble benchmark")
    s.add_argument("--config", help="JSON bench config")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
