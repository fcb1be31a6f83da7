"""Training losses and the per-pixel weight matrix.

Both losses use the 1/(2I) convention: half the squared Frobenius norm
per image, averaged over the batch. The weighted variant multiplies the
difference by the weight before squaring, so the effective per-pixel
weight is W**2.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import ConfigError, ShapeError

LABEL_WATER = 0
LABEL_TUMOR = 4


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """(1/2I) * sum_i ||pred_i - target_i||_F^2."""
    if pred.shape != target.shape:
        raise ShapeError("pred/target shape mismatch")
    n = pred.shape[0]
    return ((pred - target) ** 2).sum() / (2.0 * n)


def wmse_loss(pred: torch.Tensor, target: torch.Tensor,
              weights: torch.Tensor) -> torch.Tensor:
    """(1/2I) * sum_i ||W_i * (pred_i - target_i)||_F^2."""
    if pred.shape != target.shape:
        raise ShapeError("pred/target shape mismatch")
    if weights.shape[-2:] != pred.shape[-2:]:
        raise ShapeError("weight shape mismatch")
    n = pred.shape[0]
    return ((weights * (pred - target)) ** 2).sum() / (2.0 * n)


def weight_matrix(labels: np.ndarray, w: float) -> np.ndarray:
    """Per-pixel weights: 0 in water, w in tumor regions, 1 elsewhere."""
    if w <= 1.0:
        raise ConfigError("tumor weight must exceed 1")
    out = np.ones(labels.shape, dtype=np.float32)
    out[labels == LABEL_WATER] = 0.0
    out[labels == LABEL_TUMOR] = float(w)
    return out
