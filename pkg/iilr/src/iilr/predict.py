"""Inference: apply a trained regressor to dataset items.

Outputs are written as field files with the background SOS added back,
so they can be evaluated with the same tooling as the reconstructions
they refine.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .data import channels, load_item
from .errors import ConfigError
from .fieldio import write_field
from .train import load_checkpoint


def predict_item(model, item, mode: str) -> np.ndarray:
    """Water-referenced SOS estimate for one item."""
    n_in = 2 if mode == "rt" else 1
    if model.spec.in_channels != n_in:
        raise ConfigError(
            f"model expects {model.spec.in_channels} channels but "
            f"channel mode {mode!r} provides {n_in}")
    x = torch.from_numpy(channels(item, mode)[None])
    model.eval()
    with torch.no_grad():
        out = model(x)[0, 0].numpy()
    return out + item.water_sos


def predict_dataset(checkpoint_dir, data_root, split: str, out_dir,
                    mode: str | None = None) -> list:
    """Run the model over every item in a split; return output paths."""
    model, desc = load_checkpoint(checkpoint_dir)
    mode = mode or desc.get("config", {}).get("channel_mode", "rt")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = Path(data_root) / split
    written = []
    for item_dir in sorted(p for p in base.iterdir()
                           if (p / "meta.json").exists()):
        item = load_item(item_dir)
        sos = predict_item(model, item, mode).astype(np.float32)
        dest = out_dir / f"{item.item_id}.uctf"
        write_field(dest, sos)
        with open(item_dir / "meta.json") as fh:
            meta = json.load(fh)
        with open(dest.with_suffix(".json"), "w") as fh:
            json.dump(meta, fh, indent=2)
        written.append(dest)
    return written
