"""Delay-and-sum reflection tomography on bent-ray traveltime fields.

Traces are Wiener-deconvolved with the source pulse, two-way times are read
from per-element eikonal traveltime fields on the BRTT slowness model, and
admitted (near-backscatter) pairs are summed after modified-Akima
interpolation of the traces at the two-way times.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import Akima1DInterpolator

from .core import Grid2D, RingArray, snap_to_grid_jl
from .eikonal import SlownessMap, solve_eikonal
from .errors import InvalidArgumentError
from .wavesim import MeasurementData, SourcePulse

DECONV_EPS = 1e-3  # Wiener regularization, relative to max |S|^2


@dataclass(frozen=True)
class ApodizationRule:
    """Admit pairs whose arc-wise separation fits in an arc of length sigma*R.

    A pair is admitted when the central angle between the elements is at most
    sigma/2, so the admitted receivers of an emitter span an arc of total
    angle sigma centered on it. sigma = 0 admits only the self pair;
    sigma = 2*pi admits everything.
    """

    sigma: float  # radians
    array: RingArray

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 2.0 * np.pi:
            raise InvalidArgumentError("sigma must lie in [0, 2*pi]")


@dataclass
class ReflectivityMap:
    grid: Grid2D
    f: np.ndarray


def deconvolve_source(data: MeasurementData, pulse: SourcePulse | None = None,
                      eps: float = DECONV_EPS) -> MeasurementData:
    """Per-trace frequency-domain Wiener deconvolution with the source pulse."""
    if pulse is None:
        pulse = data.pulse
    if pulse is None:
        raise InvalidArgumentError("no source pulse available")
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    if abs(pulse.dt - data.dt) > 1e-12:
        raise InvalidArgumentError("pulse.dt must equal data dt")
    if not np.any(pulse.samples):
        raise InvalidArgumentError("zero source pulse")
    n = data.n_samples
    S = np.fft.rfft(pulse.samples, n)
    denom = np.abs(S) ** 2
    denom += eps * denom.max()
    G = np.fft.rfft(data.g.astype(np.float64), n, axis=-1)
    out = np.fft.irfft(G * np.conj(S) / denom, n, axis=-1)
    return replace(data, g=out)


def compute_apodization(array: RingArray, sigma: float) -> np.ndarray:
    """Binary mask [n_e, n_r]; see ApodizationRule for the admission rule."""
    rule = ApodizationRule(sigma, array)
    n = array.n_elements
    i = np.arange(n)
    sep = np.abs(i[:, None] - i[None, :])
    sep = np.minimum(sep, n - sep)
    central = 2.0 * np.pi * sep / n
    return central <= rule.sigma / 2.0 + 1e-12


def das_image(data: MeasurementData, slowness: SlownessMap,
              apod: ApodizationRule, grid: Grid2D) -> ReflectivityMap:
    """Back-project traces at eikonal two-way times over admitted pairs.

    Two-way times beyond the acquisition window contribute zero. The caller
    decides whether traces were deconvolved first.
    """
    array = apod.array
    mask = compute_apodization(array, apod.sigma)
    n = array.n_elements
    jl = snap_to_grid_jl(array.positions(), slowness.grid)

    # one traveltime field per element, evaluated at the output pixel centers
    Xo, Yo = grid.meshgrid()
    sx = (Xo - slowness.grid.origin[0]) / slowness.grid.dx
    sy = (Yo - slowness.grid.origin[1]) / slowness.grid.dx
    sx = np.clip(sx, 0, slowness.grid.nx - 1)
    sy = np.clip(sy, 0, slowness.grid.ny - 1)
    j0 = np.clip(sx.astype(int), 0, slowness.grid.nx - 2)
    l0 = np.clip(sy.astype(int), 0, slowness.grid.ny - 2)
    fx = sx - j0
    fy = sy - l0

    t_elem = np.empty((n,) + grid.shape)
    for e in range(n):
        t = solve_eikonal(slowness, jl[e]).t
        t_elem[e] = ((1 - fy) * ((1 - fx) * t[l0, j0] + fx * t[l0, j0 + 1]) +
                     fy * ((1 - fx) * t[l0 + 1, j0] + fx * t[l0 + 1, j0 + 1]))

    t_axis = np.arange(data.n_samples) * data.dt
    t_max = t_axis[-1]
    f = np.zeros(grid.shape)
    for mi, m in enumerate(data.emitters):
        for nr in range(n):
            if not mask[m, nr]:
                continue
            trace = data.g[mi, nr].astype(np.float64)
            interp = Akima1DInterpolator(t_axis, trace, method="makima")
            tt = t_elem[m] + t_elem[nr]
            inside = tt <= t_max
            vals = np.zeros(grid.shape)
            vals[inside] = interp(tt[inside])
            f += vals
    return ReflectivityMap(grid, f)
