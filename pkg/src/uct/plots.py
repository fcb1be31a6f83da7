"""Figure rendering for datasets and reconstruction reports.

SOS images use a fixed display window of [1.4, 1.6] mm/us; reflectivity
images use a symmetric window of +/- max|f|. Figures are written as PNG
next to the delimited report output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

from .errors import InvalidArgumentError

SOS_WINDOW = (1.4, 1.6)


def save_sos_image(sos, path, title: str | None = None, dpi: int = 150):
    """Grayscale SOS rendering with the fixed [1.4, 1.6] window."""
    arr = np.asarray(sos, dtype=float)
    if arr.ndim != 2:
        raise InvalidArgumentError("expected a 2D image")
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(arr, cmap="gray", vmin=SOS_WINDOW[0], vmax=SOS_WINDOW[1],
                   origin="lower")
    fig.colorbar(im, ax=ax, fraction=0.046, label="SOS (mm/us)")
    if title:
        ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.savefig(path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)


def save_reflectivity_image(f, path, title: str | None = None,
                            dpi: int = 150):
    """Signed reflectivity rendering, window symmetric at max |f|."""
    arr = np.asarray(f, dtype=float)
    if arr.ndim != 2:
        raise InvalidArgumentError("expected a 2D image")
    vmax = float(np.max(np.abs(arr))) or 1.0
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(arr, cmap="gray", vmin=-vmax, vmax=vmax, origin="lower")
    fig.colorbar(im, ax=ax, fraction=0.046, label="reflectivity (a.u.)")
    if title:
        ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.savefig(path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)


def emit_plots(pair, out_dir, prefix: str = "item") -> list:
    """Render the standard panel set for one image pair; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    panels = [
        ("target", pair.target_sos, save_sos_image),
        ("brtt", pair.brtt_sos, save_sos_image),
        ("das", pair.das_reflectivity, save_reflectivity_image),
    ]
    for name, arr, renderer in panels:
        p = out / f"{prefix}_{name}.png"
        renderer(arr, p, title=name)
        paths.append(p)
    return paths


def save_convergence_plot(objectives, path, dpi: int = 150):
    """Semilog objective-vs-iteration curve for a reconstruction trace."""
    obj = np.asarray(objectives, dtype=float)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.semilogy(np.arange(1, obj.size + 1), obj, marker="o")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("objective")
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)
