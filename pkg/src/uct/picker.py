"""First-arrival picking: zero-phase Butterworth low-pass + AIC onset picker.

Also provides water-calibrated differential picking: the delay of each
phantom trace against the matching water-bath trace is measured by windowed
cross-correlation and added to model-predicted water traveltimes. The
differencing cancels systematic offsets shared by both acquisitions
(element snapping, source onset, filter delay), which matters once the
timestep is coarse relative to the tissue-induced delays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import RingArray
from .errors import ConfigError, DegenerateSignalError, InvalidArgumentError

VAR_FLOOR = 1e-20      # keeps log(var) finite on silent segments
REL_VAR_FLOOR = 1e-2   # fraction of window variance treated as quiet


@dataclass
class TofTable:
    t_obs: np.ndarray      # [n_emitters, n_receivers] us
    valid: np.ndarray      # boolean mask, same shape
    water_sos: float       # mm/us used for the search windows


def butterworth_lowpass(x, order: int, cutoff: float, dt: float) -> np.ndarray:
    """Zero-phase (forward-backward) Butterworth low-pass along the last axis.

    ``cutoff`` in MHz, ``dt`` in us; DC gain is exactly 1.
    """
    nyquist = 0.5 / dt
    if not 0 < cutoff < nyquist:
        raise ConfigError(f"cutoff {cutoff} MHz not in (0, {nyquist}) MHz")
    sos = signal.butter(order, cutoff / nyquist, btype="low", output="sos")
    return signal.sosfiltfilt(sos, np.asarray(x, dtype=float), axis=-1)


def _aic_curve(x):
    """AIC(k) over an interior k for a single window of samples.

    Segment variances are floored at REL_VAR_FLOOR times the whole-window
    variance: segments quieter than that are indistinguishable from silence,
    which keeps the pick from latching onto the low-level spectral ringing
    that a grid point source radiates just ahead of the wavefront.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    c1 = np.cumsum(x)
    c2 = np.cumsum(x * x)
    k = np.arange(2, n - 2)          # >= 2 samples on each side
    n1 = k + 1.0
    var1 = c2[k] / n1 - (c1[k] / n1) ** 2
    n2 = n - n1
    var2 = (c2[-1] - c2[k]) / n2 - ((c1[-1] - c1[k]) / n2) ** 2
    var_tot = c2[-1] / n - (c1[-1] / n) ** 2
    floor = max(REL_VAR_FLOOR * var_tot, VAR_FLOOR)
    var1 = np.maximum(var1, floor)
    var2 = np.maximum(var2, floor)
    aic = k * np.log(var1) + (n - k - 1.0) * np.log(var2)
    return k, aic, var1, var2


def aic_pick(x, window, dt: float) -> float:
    """Two-segment variance AIC onset pick inside ``window = (i_lo, i_hi)``.

    Returns the arrival time in us (absolute, i.e. relative to sample 0 of
    ``x``). Ties break toward the earliest index.
    """
    i_lo, i_hi = int(window[0]), int(window[1])
    x = np.asarray(x, dtype=float)
    if i_lo < 0 or i_hi > x.size or i_hi - i_lo < 16:
        raise ConfigError("pick window must hold at least 16 samples")
    seg = x[i_lo:i_hi]
    k, aic, var1, var2 = _aic_curve(seg)
    if np.all(var1 <= VAR_FLOOR) and np.all(var2 <= VAR_FLOOR):
        raise DegenerateSignalError("window has zero variance everywhere")
    best = k[np.argmin(aic)]  # argmin returns the first minimum
    return (i_lo + best) * dt


def pick_all(data, array: RingArray, water_sos: float,
             half_window: float = 6.0, filter_order: int = 4,
             filter_cutoff: float = 1.5) -> TofTable:
    """Pick first arrivals for all emitter/receiver pairs of a measurement.

    Each trace is low-pass filtered, then AIC-picked within a window of
    +/- ``half_window`` us around the homogeneous-water TOF for the pair.
    Failed picks (self pairs, windows off the record, degenerate signals)
    are flagged invalid rather than raising.
    """
    if half_window <= 0:
        raise ConfigError("half_window must be positive")
    g = data.g
    dt = data.dt
    n_e, n_r, n_s = g.shape
    pos = array.positions()
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    t_water = dist / water_sos

    emitters = getattr(data, "emitters", None)
    if emitters is None:
        emitters = tuple(range(n_e))

    t_obs = np.full((n_e, n_r), np.nan)
    valid = np.zeros((n_e, n_r), dtype=bool)
    for mi, m in enumerate(emitters):
        filt = butterworth_lowpass(g[mi], filter_order, filter_cutoff, dt)
        for n in range(n_r):
            if n == m or dist[m, n] == 0.0:
                continue
            i_lo = int(np.floor((t_water[m, n] - half_window) / dt))
            i_hi = int(np.ceil((t_water[m, n] + half_window) / dt)) + 1
            i_lo = max(i_lo, 0)
            i_hi = min(i_hi, n_s)
            if i_hi - i_lo < 16:
                continue
            try:
                t_obs[mi, n] = aic_pick(filt[n], (i_lo, i_hi), dt)
                valid[mi, n] = True
            except DegenerateSignalError:
                pass
    return TofTable(t_obs, valid, water_sos)


def _xcorr_lag(a, b, dt: float, upsample: int = 16) -> float:
    """Sub-sample lag of ``a`` relative to ``b`` by FFT cross-correlation.

    The peak neighborhood is Fourier-resampled by ``upsample`` before the
    maximum is located.
    """
    n = a.size
    if n < 8 or b.size != n:
        raise ConfigError("correlation windows must match and hold >= 8 samples")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    c = np.fft.irfft(np.fft.rfft(a, nfft) * np.conj(np.fft.rfft(b, nfft)),
                     nfft)
    c = np.concatenate([c[-n + 1:], c[:n]])   # lags -(n-1) .. (n-1)
    if not np.any(c):
        raise DegenerateSignalError("zero cross-correlation")
    k = int(np.argmax(c))
    lo = max(k - 4, 0)
    hi = min(k + 5, c.size)
    fine = signal.resample(c[lo:hi], (hi - lo) * upsample)
    return (lo + int(np.argmax(fine)) / upsample - (n - 1)) * dt


def differential_tof(data, data_water, t_ref: np.ndarray, array: RingArray,
                     water_sos: float, pre_window: float = 4.0,
                     post_window: float = 14.0, filter_order: int = 4,
                     filter_cutoff: float = 1.5,
                     upsample: int = 16) -> TofTable:
    """Water-calibrated TOF table: model reference plus measured delay.

    ``t_ref[m, n]`` are the model-predicted water traveltimes for the same
    discretization the reconstruction will use (so model bias cancels in the
    residuals). Each phantom trace is cross-correlated with the matching
    water-bath trace inside a window around the geometric water arrival;
    windows that fall off the record are flagged invalid.
    """
    if data.g.shape != data_water.g.shape:
        raise InvalidArgumentError("phantom/water measurements differ in shape")
    if abs(data.dt - data_water.dt) > 1e-12:
        raise InvalidArgumentError("phantom/water measurements differ in dt")
    if tuple(data.emitters) != tuple(data_water.emitters):
        raise InvalidArgumentError("phantom/water emitter sets differ")
    dt = data.dt
    n_e, n_r, n_s = data.g.shape
    t_ref = np.asarray(t_ref, dtype=float)
    if t_ref.shape != (n_e, n_r):
        raise InvalidArgumentError("t_ref shape mismatch")
    pos = array.positions()
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)

    t_obs = np.full((n_e, n_r), np.nan)
    valid = np.zeros((n_e, n_r), dtype=bool)
    for mi, m in enumerate(data.emitters):
        fm = butterworth_lowpass(data.g[mi], filter_order, filter_cutoff, dt)
        fw = butterworth_lowpass(data_water.g[mi], filter_order,
                                 filter_cutoff, dt)
        for n in range(n_r):
            if n == m or dist[m, n] == 0.0:
                continue
            t_w = dist[m, n] / water_sos
            i_lo = max(int((t_w - pre_window) / dt), 0)
            i_hi = min(int((t_w + post_window) / dt), n_s)
            if i_hi - i_lo < 8:
                continue
            try:
                lag = _xcorr_lag(fm[n, i_lo:i_hi], fw[n, i_lo:i_hi], dt,
                                 upsample)
                t_obs[mi, n] = t_ref[mi, n] + lag
                valid[mi, n] = True
            except DegenerateSignalError:
                pass
    return TofTable(t_obs, valid, water_sos)
