"""Command-line interface: train, finetune, predict, observer."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import load_split
from .errors import IilrError
from .model import desk_spec, paper_spec
from .observer import (ObserverTrainConfig, build_patch_set, observer_auc,
                       train_observer)
from .predict import predict_dataset
from .train import TrainConfig, finetune_config, train


def _add_train_args(p):
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--lr-min", type=float, default=1e-5)
    p.add_argument("--lr-max", type=float, default=1e-2)
    p.add_argument("--cycle-steps", type=int, default=200)
    p.add_argument("--augment-ratio", type=int, default=3)
    p.add_argument("--channels", choices=["rt", "r", "t"], default="rt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", choices=["desk", "paper"], default="desk")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--quiet", action="store_true")


def _config_from(args, tumor_weight=1.0) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        lr_min=args.lr_min, lr_max=args.lr_max,
        cycle_steps=args.cycle_steps, augment_ratio=args.augment_ratio,
        tumor_weight=tumor_weight, channel_mode=args.channels,
        seed=args.seed)


def cmd_train(args) -> int:
    n_in = 2 if args.channels == "rt" else 1
    spec = desk_spec(n_in) if args.size == "desk" else paper_spec(n_in)
    history = train(args.data, args.out, spec=spec,
                    cfg=_config_from(args), resume=args.resume,
                    quiet=args.quiet)
    print(f"trained {len(history)} epochs; "
          f"best val {min(h['val_loss'] for h in history):.6f}")
    return 0


def cmd_finetune(args) -> int:
    cfg = finetune_config(_config_from(args), args.tumor_weight)
    history = train(args.data, args.out, cfg=cfg, resume=args.resume,
                    init_from=args.init_from, quiet=args.quiet)
    print(f"fine-tuned {len(history)} epochs; "
          f"best val {min(h['val_loss'] for h in history):.6f}")
    return 0


def cmd_predict(args) -> int:
    written = predict_dataset(args.checkpoint, args.data, args.split,
                              args.out, mode=args.channels)
    print(f"wrote {len(written)} predictions to {args.out}")
    return 0


def cmd_observer(args) -> int:
    items = load_split(args.data, args.split)
    patch = args.patch_size
    targets = [it.target for it in items]
    labels = [np.asarray(it.labels) for it in items]
    x_ref, y_ref = build_patch_set(targets, labels, patch, seed=args.seed)
    cfg = ObserverTrainConfig(epochs=args.epochs, seed=args.seed)
    model = train_observer(x_ref, y_ref, cfg=cfg)
    result = {"target_auc": observer_auc(model, x_ref, y_ref)}
    if args.images:
        pred_dir = Path(args.images)
        from .fieldio import read_field
        images = []
        for it in items:
            arr = read_field(pred_dir / f"{it.item_id}.uctf")
            images.append(arr.astype(np.float32) - it.water_sos)
        x_img, y_img = build_patch_set(images, labels, patch,
                                       seed=args.seed)
        model = train_observer(x_img, y_img, cfg=cfg, model=model)
        result["image_auc"] = observer_auc(model, x_img, y_img)
    print(json.dumps(result, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iilr",
        description="Learned refinement of paired tomography images")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the regressor")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune",
                       help="tumor-weighted fine-tuning from a checkpoint")
    _add_train_args(p)
    p.add_argument("--init-from", default=None,
                   help="checkpoint directory to start from")
    p.add_argument("--tumor-weight", type=float, default=20.0)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="apply a trained model to a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--channels", choices=["rt", "r", "t"], default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("observer",
                       help="lesion detectability via a patch observer")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--images", default=None,
                   help="directory of predicted .uctf images to score")
    p.add_argument("--patch-size", type=int, default=96)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the result JSON here")
    p.set_defaults(func=cmd_observer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IilrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
