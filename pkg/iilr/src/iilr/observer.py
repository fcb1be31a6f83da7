"""Patch-based model observer for lesion detectability.

The observer scores square patches for the presence of a lesion. It is
pretrained on ground-truth images and then adapted to a particular
reconstruction style. Detectability is summarized as the area under
the ROC curve of the signal-present scores against the signal-absent
scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, DatasetError
from .model import ObserverNet, ObserverSpec

LABEL_TUMOR = 4


@dataclass
class ObserverTrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("invalid observer training configuration")


def roc_auc(signal_scores, noise_scores) -> float:
    """Probability a signal score exceeds a noise score, ties half."""
    s = np.asarray(signal_scores, dtype=float)
    n = np.asarray(noise_scores, dtype=float)
    if s.size == 0 or n.size == 0:
        raise ConfigError("both score groups must be non-empty")
    wins = (s[:, None] > n[None, :]).sum()
    ties = (s[:, None] == n[None, :]).sum()
    return float((wins + 0.5 * ties) / (s.size * n.size))


def _tumor_components(labels):
    """Connected tumor regions as (jmin, jmax, lmin, lmax) bounding boxes."""
    from scipy import ndimage
    mask = labels == LABEL_TUMOR
    lab, n = ndimage.label(mask)
    boxes = []
    for sl in ndimage.find_objects(lab):
        boxes.append((sl[1].start, sl[1].stop, sl[0].start, sl[0].stop))
    return boxes


def extract_patches(image, labels, patch_size: int,
                    rng: np.random.Generator, n_absent: int = 4):
    """Signal-present and signal-absent patches from one image.

    Present patches each fully contain one tumor bounding box. Absent
    patches contain no tumor pixels and lie inside the image.
    """
    image = np.asarray(image)
    labels = np.asarray(labels)
    if image.shape != labels.shape:
        raise ConfigError("image/label shape mismatch")
    ny, nx = image.shape
    if patch_size > min(ny, nx):
        raise ConfigError("patch larger than the image")
    present = []
    for jmin, jmax, lmin, lmax in _tumor_components(labels):
        if jmax - jmin > patch_size or lmax - lmin > patch_size:
            continue
        j0 = int(np.clip((jmin + jmax - patch_size) // 2, 0,
                         nx - patch_size))
        l0 = int(np.clip((lmin + lmax - patch_size) // 2, 0,
                         ny - patch_size))
        present.append(image[l0:l0 + patch_size, j0:j0 + patch_size])
    absent = []
    tumor = labels == LABEL_TUMOR
    for _ in range(200):
        if len(absent) >= n_absent:
            break
        j0 = int(rng.integers(0, nx - patch_size + 1))
        l0 = int(rng.integers(0, ny - patch_size + 1))
        if not tumor[l0:l0 + patch_size, j0:j0 + patch_size].any():
            absent.append(image[l0:l0 + patch_size, j0:j0 + patch_size])
    return present, absent


def build_patch_set(images, labels_list, patch_size: int, seed: int = 0):
    """Patches and binary targets from a list of image/label pairs."""
    rng = np.random.default_rng(seed)
    patches = []
    targets = []
    for img, lab in zip(images, labels_list):
        p, a = extract_patches(img, lab, patch_size, rng)
        patches += p + a
        targets += [1.0] * len(p) + [0.0] * len(a)
    if not any(targets) or all(targets):
        raise DatasetError(
            "need both signal-present and signal-absent patches")
    x = np.stack(patches).astype(np.float32)[:, None]
    y = np.asarray(targets, dtype=np.float32)
    return x, y


def train_observer(x, y, spec: ObserverSpec | None = None,
                   cfg: ObserverTrainConfig | None = None,
                   model: ObserverNet | None = None) -> ObserverNet:
    """Fit the patch classifier with binary cross-entropy."""
    cfg = cfg or ObserverTrainConfig()
    spec = spec or ObserverSpec(patch_size=x.shape[-1])
    torch.manual_seed(cfg.seed)
    if model is None:
        model = ObserverNet(spec)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    bce = torch.nn.BCELoss()
    xt = torch.from_numpy(np.asarray(x, dtype=np.float32))
    yt = torch.from_numpy(np.asarray(y, dtype=np.float32))
    rng = np.random.default_rng(cfg.seed)
    n = xt.shape[0]
    model.train()
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for i in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(order[i:i + cfg.batch_size])
            opt.zero_grad()
            loss = bce(model(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
    return model


def score_patches(model: ObserverNet, x) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        xt = torch.from_numpy(np.asarray(x, dtype=np.float32))
        return model(xt).numpy()


def observer_auc(model: ObserverNet, x, y) -> float:
    """AUC of the observer's scores over a labeled patch set."""
    scores = score_patches(model, x)
    y = np.asarray(y)
    return roc_auc(scores[y > 0.5], scores[y <= 0.5])
