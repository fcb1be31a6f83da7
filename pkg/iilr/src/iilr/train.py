"""Training loops for the image-to-image regressor.

Optimization uses Adam with a triangular cyclic learning rate swept per
optimizer step. The best model by validation loss is checkpointed
atomically (write to a temporary file, then rename). A JSON history
file records one entry per epoch; resuming continues the epoch
numbering monotonically. Fine-tuning restarts from a checkpoint with
the tumor-weighted loss and a reduced learning-rate band.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import as_batches, load_split
from .errors import ConfigError
from .losses import mse_loss, weight_matrix, wmse_loss
from .model import UNet, UNetSpec, build_model, parameter_count


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    epochs: int = 200
    batch_size: int = 4
    lr_min: float = 1e-5
    lr_max: float = 1e-2
    cycle_steps: int = 200       # full triangular period in optimizer steps
    augment_ratio: int = 3       # augmented variants per original item
    tumor_weight: float = 1.0    # > 1 switches to the weighted loss
    channel_mode: str = "rt"     # "rt", "r", or "t"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 < self.lr_min <= self.lr_max:
            raise ConfigError("need 0 < lr_min <= lr_max")
        if self.cycle_steps < 2:
            raise ConfigError("cycle_steps must be >= 2")
        if self.augment_ratio < 0:
            raise ConfigError("augment_ratio must be >= 0")
        if self.channel_mode not in ("rt", "r", "t"):
            raise ConfigError("channel_mode must be 'rt', 'r', or 't'")
        if self.tumor_weight != 1.0 and self.tumor_weight <= 1.0:
            raise ConfigError("tumor_weight must be 1 or > 1")


def triangular_lr(step: int, lr_min: float, lr_max: float,
                  cycle_steps: int) -> float:
    """Piecewise-linear rate: lr_min -> lr_max -> lr_min each cycle."""
    half = cycle_steps / 2.0
    phase = step % cycle_steps
    frac = phase / half if phase <= half else (cycle_steps - phase) / half
    return lr_min + (lr_max - lr_min) * frac


def dataset_hash(root) -> str:
    """Order-independent digest of the dataset's manifest or file list."""
    root = Path(root)
    manifest = root / "manifest.json"
    h = hashlib.sha256()
    if manifest.exists():
        h.update(manifest.read_bytes())
    else:
        for p in sorted(root.rglob("*.uctf")):
            h.update(str(p.relative_to(root)).encode())
            h.update(str(p.stat().st_size).encode())
    return h.hexdigest()


def _atomic_save(obj, path, saver) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            saver(obj, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_CHECKPOINT_FILES = {"best": ("model.pt", "model.json"),
                     "last": ("last.pt", "last.json")}


def save_checkpoint(out_dir, model: UNet, cfg: TrainConfig,
                    data_digest: str, extra: dict | None = None,
                    which: str = "best") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pt_name, json_name = _CHECKPOINT_FILES[which]
    _atomic_save(model.state_dict(), out_dir / pt_name, torch.save)
    desc = {
        "spec": dataclasses.asdict(model.spec),
        "config": dataclasses.asdict(cfg),
        "dataset_hash": data_digest,
        "parameters": parameter_count(model),
    }
    if extra:
        desc.update(extra)
    _atomic_save(desc, out_dir / json_name,
                 lambda o, fh: fh.write(json.dumps(o, indent=2).encode()))


def load_checkpoint(out_dir, which: str = "best"):
    """Return (model, descriptor) from a checkpoint directory."""
    out_dir = Path(out_dir)
    pt_name, json_name = _CHECKPOINT_FILES[which]
    with open(out_dir / json_name) as fh:
        desc = json.load(fh)
    model = build_model(UNetSpec(**desc["spec"]))
    state = torch.load(out_dir / pt_name, map_location="cpu",
                       weights_only=True)
    model.load_state_dict(state)
    return model, desc


def _load_history(path):
    path = Path(path)
    if path.exists():
        with open(path) as fh:
            return json.load(fh)
    return []


def _eval_loss(model, items, mode, batch_size):
    model.eval()
    total = 0.0
    count = 0
    with torch.no_grad():
        for x, y, _ in as_batches(items, mode, batch_size):
            total += float(mse_loss(model(x), y)) * x.shape[0]
            count += x.shape[0]
    return total / count


def train(data_root, out_dir, spec: UNetSpec | None = None,
          cfg: TrainConfig | None = None, resume: bool = False,
          init_from=None, quiet: bool = True):
    """Train (or fine-tune) and return the history list.

    With ``resume`` the model restarts from the checkpoint in
    ``out_dir`` and epoch numbering continues. With ``init_from`` the
    weights are seeded from another checkpoint directory first.
    """
    cfg = cfg or TrainConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hist_path = out_dir / "history.json"
    history = _load_history(hist_path) if resume else []

    in_channels = 2 if cfg.channel_mode == "rt" else 1
    if resume and (out_dir / "last.json").exists():
        model, _ = load_checkpoint(out_dir, which="last")
    elif resume and (out_dir / "model.json").exists():
        model, _ = load_checkpoint(out_dir)
    elif init_from is not None:
        which = "last" if (Path(init_from) / "last.json").exists() \
            else "best"
        model, _ = load_checkpoint(init_from, which=which)
    else:
        spec = spec or UNetSpec(in_channels=in_channels)
        if spec.in_channels != in_channels:
            raise ConfigError(
                "spec channel count does not match channel_mode")
        torch.manual_seed(cfg.seed)
        model = build_model(spec)
    if model.spec.in_channels != in_channels:
        raise ConfigError(
            "checkpoint channel count does not match channel_mode")

    train_items = load_split(data_root, "train")
    val_items = load_split(data_root, "val")
    weights = None
    if cfg.tumor_weight > 1.0:
        weights = {it.item_id: weight_matrix(it.labels, cfg.tumor_weight)
                   for it in train_items}

    digest = dataset_hash(data_root)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr_min)
    rng = np.random.default_rng(cfg.seed)
    step = 0
    start_epoch = (history[-1]["epoch"] + 1) if history else 0
    best_val = min((h["val_loss"] for h in history), default=np.inf)

    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        model.train()
        total = 0.0
        count = 0
        for x, y, w in as_batches(train_items, cfg.channel_mode,
                                  cfg.batch_size, rng=rng,
                                  augment_ratio=cfg.augment_ratio,
                                  weights=weights):
            lr = triangular_lr(step, cfg.lr_min, cfg.lr_max,
                               cfg.cycle_steps)
            for group in opt.param_groups:
                group["lr"] = lr
            opt.zero_grad()
            pred = model(x)
            loss = wmse_loss(pred, y, w) if w is not None \
                else mse_loss(pred, y)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * x.shape[0]
            count += x.shape[0]
            step += 1
        val_loss = _eval_loss(model, val_items, cfg.channel_mode,
                              cfg.batch_size)
        entry = {"epoch": epoch, "train_loss": total / count,
                 "val_loss": val_loss}
        history.append(entry)
        if val_loss < best_val:
            best_val = val_loss
            save_checkpoint(out_dir, model, cfg, digest,
                            extra={"best_epoch": epoch,
                                   "best_val_loss": val_loss})
        save_checkpoint(out_dir, model, cfg, digest,
                        extra={"epoch": epoch}, which="last")
        _atomic_save(history, hist_path,
                     lambda o, fh: fh.write(json.dumps(o).encode()))
        if not quiet:
            print(f"epoch {epoch}: train {entry['train_loss']:.6f} "
                  f"val {val_loss:.6f}")
    return history


def finetune_config(cfg: TrainConfig, tumor_weight: float) -> TrainConfig:
    """Weighted-loss configuration with the learning-rate band reduced."""
    if tumor_weight <= 1.0:
        raise ConfigError("tumor_weight must exceed 1 for fine-tuning")
    return dataclasses.replace(
        cfg, tumor_weight=tumor_weight,
        lr_max=min(cfg.lr_max, 1e-3),
        lr_min=min(cfg.lr_min, 1e-3))
