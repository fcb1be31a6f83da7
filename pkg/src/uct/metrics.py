"""Image-quality and statistical evaluation utilities.

NRMSE is normalized by the deviation of the target from the constant water
SOS; PSNR is computed after mapping the [1.4, 1.6] mm/us band to [0, 1];
SSIM follows the Wang defaults (11x11 Gaussian window, sigma 1.5, K1=0.01,
K2=0.03) with the dynamic-range parameter fixed to the 0.2 mm/us SOS span.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import LABEL_TUMOR, LabelMap
from .errors import DegenerateSignalError, InvalidArgumentError

SOS_RANGE = (1.4, 1.6)


def nrmse(target, estimate, water: float) -> float:
    """||C - C_hat||_F / ||C - C_w||_F."""
    target = np.asarray(target, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if target.shape != estimate.shape:
        raise InvalidArgumentError("shape mismatch")
    denom = np.linalg.norm(target - water)
    if denom == 0:
        raise DegenerateSignalError("target identical to water map")
    return float(np.linalg.norm(target - estimate) / denom)


def psnr_scaled(target, estimate, value_range=SOS_RANGE) -> float:
    """PSNR in dB after scaling value_range to [0, 1]; inf for identical."""
    target = np.asarray(target, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if target.shape != estimate.shape:
        raise InvalidArgumentError("shape mismatch")
    span = value_range[1] - value_range[0]
    mse = float(np.mean(((target - estimate) / span) ** 2))
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _ssim_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def ssim(target, estimate, data_range: float = SOS_RANGE[1] - SOS_RANGE[0],
         k1: float = 0.01, k2: float = 0.03, window_size: int = 11,
         sigma: float = 1.5) -> float:
    """Mean local SSIM with a Gaussian window, computed on the valid region."""
    x = np.asarray(target, dtype=float)
    y = np.asarray(estimate, dtype=float)
    if x.shape != y.shape:
        raise InvalidArgumentError("shape mismatch")
    if min(x.shape) < window_size:
        raise InvalidArgumentError("image smaller than the SSIM window")
    w = _ssim_window(window_size, sigma)

    def filt(a):
        return ndimage.convolve(a, w, mode="constant")

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_x = filt(x)
    mu_y = filt(y)
    sxx = filt(x * x) - mu_x ** 2
    syy = filt(y * y) - mu_y ** 2
    sxy = filt(x * y) - mu_x * mu_y
    s = ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)) / \
        ((mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2))
    half = window_size // 2
    return float(np.mean(s[half:-half, half:-half]))


@dataclass(frozen=True)
class RoiBox:
    """Square ROI around a tumor component: (row0, col0) inclusive, side px."""

    row0: int
    col0: int
    side: int

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.row0:self.row0 + self.side,
          self.col0:self.col0 + self.side] = True
        return m

    def slices(self):
        return (slice(self.row0, self.row0 + self.side),
                slice(self.col0, self.col0 + self.side))


def tumor_rois(labels: LabelMap, margin: int = 4) -> list[RoiBox]:
    """One square ROI per 8-connected tumor component.

    Side = max(component width, height) + 2*margin, centered on the
    component bounding box and clipped to the image.
    """
    arr = labels.labels == LABEL_TUMOR
    structure = np.ones((3, 3), dtype=bool)  # 8-connectivity
    lab, n = ndimage.label(arr, structure=structure)
    rois = []
    for sl in ndimage.find_objects(lab):
        h = sl[0].stop - sl[0].start
        w = sl[1].stop - sl[1].start
        side = max(h, w) + 2 * margin
        cr = (sl[0].start + sl[0].stop) / 2.0
        cc = (sl[1].start + sl[1].stop) / 2.0
        r0 = int(round(cr - side / 2.0))
        c0 = int(round(cc - side / 2.0))
        ny, nx = arr.shape
        side_r = min(side, ny, nx)
        r0 = min(max(r0, 0), ny - side_r)
        c0 = min(max(c0, 0), nx - side_r)
        rois.append(RoiBox(r0, c0, side_r))
    return rois


def region_nrmse(target, estimate, water: float, mask) -> float:
    """NRMSE restricted to masked pixels (both norms over the mask)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InvalidArgumentError("empty mask")
    t = np.asarray(target, dtype=float)[mask]
    e = np.asarray(estimate, dtype=float)[mask]
    denom = np.linalg.norm(t - water)
    if denom == 0:
        raise DegenerateSignalError("masked target identical to water")
    return float(np.linalg.norm(t - e) / denom)


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled))
    sorted_vals = pooled[order]
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_rank_sum_p(ranks2: np.ndarray, n_a: int, w2_obs: int):
    """Two-tailed exact p for the rank-sum statistic via subset-sum counting.

    ``ranks2`` are doubled midranks (integers), ``w2_obs`` the doubled
    observed rank sum of sample a. Equivalent to full enumeration of all
    C(n, n_a) assignments.
    """
    total = int(ranks2.sum())
    # dp[k][s] = number of k-subsets with doubled rank sum s
    dp = [np.zeros(total + 1, dtype=np.float64) for _ in range(n_a + 1)]
    dp[0][0] = 1.0
    for r in ranks2:
        r = int(r)
        for k in range(min(n_a, len(ranks2)), 0, -1):
            dp[k][r:] += dp[k - 1][:total + 1 - r]
    counts = dp[n_a]
    n_total = counts.sum()
    lo = counts[:w2_obs + 1].sum() / n_total
    hi = counts[w2_obs:].sum() / n_total
    return min(1.0, 2.0 * min(lo, hi))


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """Mann-Whitney U with midrank ties; exact p when n_a*n_b <= 400.

    Returns (U of sample_a, two-tailed p). The exact path counts the full
    permutation distribution of the rank sum (tie-aware); larger samples use
    the normal approximation with tie and continuity corrections.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise InvalidArgumentError("samples must be non-empty")
    n_a, n_b = a.size, b.size
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        return 0.5 * n_a * n_b, 1.0
    ranks = _midranks(pooled)
    r_a = ranks[:n_a].sum()
    u_a = r_a - n_a * (n_a + 1) / 2.0

    if n_a * n_b <= 400:
        ranks2 = np.round(2.0 * ranks).astype(int)
        w2 = int(round(2.0 * r_a))
        p = _exact_rank_sum_p(ranks2, n_a, w2)
        return float(u_a), float(p)

    mu = n_a * n_b / 2.0
    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = np.sum(tie_counts ** 3 - tie_counts) / (n * (n - 1))
    var = n_a * n_b / 12.0 * (n + 1 - tie_term)
    if var == 0:
        return float(u_a), 1.0
    z = (abs(u_a - mu) - 0.5) / np.sqrt(var)
    from math import erfc, sqrt
    p = erfc(max(z, 0.0) / sqrt(2.0))
    return float(u_a), float(min(1.0, p))


def roc_auc(scores_positive, scores_negative) -> tuple[float, float]:
    """Empirical (trapezoidal) AUC with Hanley-McNeil standard error.

    Ties between a positive and a negative score count one half.
    """
    pos = np.asarray(scores_positive, dtype=float)
    neg = np.asarray(scores_negative, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise InvalidArgumentError("score lists must be non-empty")
    diff = pos[:, None] - neg[None, :]
    auc = float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) /
                (pos.size * neg.size))
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc ** 2 / (1.0 + auc)
    n_p, n_n = pos.size, neg.size
    var = (auc * (1 - auc) + (n_p - 1) * (q1 - auc ** 2) +
           (n_n - 1) * (q2 - auc ** 2)) / (n_p * n_n)
    return auc, float(np.sqrt(max(var, 0.0)))


@dataclass
class MetricReport:
    """Per-image metrics plus optional tumor/non-tumor regional NRMSE."""

    nrmse: float
    ssim: float
    psnr: float
    tumor_nrmse: float | None = None
    nontumor_nrmse: float | None = None

    def to_dict(self) -> dict:
        def clean(v):
            if v is None:
                return None
            return "inf" if np.isinf(v) else float(v)
        return {"nrmse": clean(self.nrmse), "ssim": clean(self.ssim),
                "psnr": clean(self.psnr),
                "tumor_nrmse": clean(self.tumor_nrmse),
                "nontumor_nrmse": clean(self.nontumor_nrmse)}


def evaluate_image(target, estimate, water: float,
                   labels: LabelMap | None = None,
                   roi_margin: int = 4) -> MetricReport:
    """All per-image metrics; regional NRMSE when a label map is supplied."""
    rep = MetricReport(nrmse=nrmse(target, estimate, water),
                       ssim=ssim(target, estimate),
                       psnr=psnr_scaled(target, estimate))
    if labels is not None:
        rois = tumor_rois(labels, roi_margin)
        if rois:
            tumor_mask = np.zeros(np.asarray(target).shape, dtype=bool)
            for roi in rois:
                tumor_mask |= roi.mask(tumor_mask.shape)
            breast = labels.labels != 0
            nontumor = breast & ~tumor_mask
            rep.tumor_nrmse = region_nrmse(target, estimate, water, tumor_mask)
            if nontumor.any():
                rep.nontumor_nrmse = region_nrmse(target, estimate, water,
                                                  nontumor)
    return rep
