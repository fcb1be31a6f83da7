"""Dataset access for the paired-image layout.

Reads `<root>/{train,val,test}/<id>/{brtt.uctf, das.uctf, target.uctf,
labels.uctf, meta.json}`. Water SOS is subtracted from the SOS channels
on load; predictions add it back. Augmentation applies random
90-degree rotations and horizontal/vertical flips at a configurable
augmented-to-original ratio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DatasetError
from .fieldio import read_field

SPLITS = ("train", "val", "test")
ITEM_FILES = ("brtt.uctf", "das.uctf", "target.uctf", "labels.uctf",
              "meta.json")


@dataclass
class Item:
    """One dataset record, already water-subtracted."""

    brtt: np.ndarray       # SOS deviation from water, low-resolution
    das: np.ndarray        # signed reflectivity, normalized to max |f| = 1
    target: np.ndarray     # SOS deviation from water, ground truth
    labels: np.ndarray     # tissue class ids
    water_sos: float
    item_id: str


def load_item(item_dir) -> Item:
    item_dir = Path(item_dir)
    for name in ITEM_FILES:
        if not (item_dir / name).exists():
            raise DatasetError(f"missing {name} in {item_dir}")
    with open(item_dir / "meta.json") as fh:
        meta = json.load(fh)
    water = float(meta["water_sos"])
    das = read_field(item_dir / "das.uctf").astype(np.float32)
    norm = float(np.max(np.abs(das)))
    if norm > 0:
        das = das / norm
    return Item(
        brtt=read_field(item_dir / "brtt.uctf").astype(np.float32) - water,
        das=das,
        target=read_field(item_dir / "target.uctf").astype(np.float32)
        - water,
        labels=read_field(item_dir / "labels.uctf"),
        water_sos=water,
        item_id=item_dir.name,
    )


def load_split(root, split: str) -> list:
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    base = Path(root) / split
    if not base.is_dir():
        raise DatasetError(f"no {split} directory under {root}")
    items = [load_item(d) for d in sorted(base.iterdir())
             if (d / "meta.json").exists()]
    if not items:
        raise DatasetError(f"split {split} is empty")
    return items


def channels(item: Item, mode: str) -> np.ndarray:
    """Stack the requested input channels: 'rt', 'r', or 't'."""
    if mode == "rt":
        return np.stack([item.brtt, item.das])
    if mode == "r":
        return item.brtt[None]
    if mode == "t":
        return item.das[None]
    raise ConfigError(f"unknown channel mode {mode!r}")


def augment(arrays, rng: np.random.Generator):
    """Apply one random rotate-and-flip transform to every array."""
    k = int(rng.integers(0, 4))
    flip_h = rng.random() < 0.5
    flip_v = rng.random() < 0.5
    out = []
    for a in arrays:
        a = np.rot90(a, k, axes=(-2, -1))
        if flip_h:
            a = np.flip(a, axis=-1)
        if flip_v:
            a = np.flip(a, axis=-2)
        out.append(np.ascontiguousarray(a))
    return out


def as_batches(items, mode: str, batch_size: int,
               rng: np.random.Generator | None = None,
               augment_ratio: int = 0, weights: dict | None = None):
    """Yield (x, y, w) tensors; w is None when no weights were given.

    With ``augment_ratio`` = r and an rng, each epoch holds the
    originals plus r augmented variants of every item, shuffled.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    records = []
    for it in items:
        x = channels(it, mode)
        y = it.target[None]
        w = None if weights is None else weights[it.item_id][None]
        records.append((x, y, w))
        if rng is not None:
            for _ in range(augment_ratio):
                if w is None:
                    xa, ya = augment([x, y], rng)
                    wa = None
                else:
                    xa, ya, wa = augment([x, y, w], rng)
                records.append((xa, ya, wa))
    if rng is not None:
        order = rng.permutation(len(records))
        records = [records[i] for i in order]
    for i in range(0, len(records), batch_size):
        chunk = records[i:i + batch_size]
        x = torch.from_numpy(np.stack([c[0] for c in chunk]))
        y = torch.from_numpy(np.stack([c[1] for c in chunk]))
        w = None
        if chunk[0][2] is not None:
            w = torch.from_numpy(np.stack([c[2] for c in chunk]))
        yield x, y, w
