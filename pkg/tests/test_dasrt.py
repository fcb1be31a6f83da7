"""Delay-and-sum reflectivity: apodization, deconvolution, imaging."""

import numpy as np
import pytest

from uct.core import Grid2D, make_ring_array, snap_to_grid_jl
from uct.dasrt import (ApodizationRule, compute_apodization, das_image,
                       deconvolve_source)
from uct.eikonal import SlownessMap, solve_eikonal
from uct.errors import InvalidArgumentError
from uct.wavesim import MeasurementData, SourcePulse


def test_apodization_limits():
    arr = make_ring_array(80.0, 16)
    with pytest.raises(InvalidArgumentError):
        ApodizationRule(-0.1, arr)
    with pytest.raises(InvalidArgumentError):
        ApodizationRule(2 * np.pi + 0.1, arr)
    m0 = compute_apodization(arr, 0.0)
    np.testing.assert_array_equal(m0, np.eye(16, dtype=bool))
    mall = compute_apodization(arr, 2 * np.pi)
    assert mall.all()


def test_apodization_symmetric_counts():
    arr = make_ring_array(80.0, 64)
    mask = compute_apodization(arr, np.pi / 4)
    # central angle <= pi/8 -> 4 steps of 2*pi/64 on each side, plus self
    assert (mask.sum(axis=1) == 9).all()
    np.testing.assert_array_equal(mask, mask.T)


def test_deconvolve_source_recovers_impulse():
    dt = 0.1
    t = np.arange(0, 4.0, dt)
    s = np.sin(2 * np.pi * 1.0 * t) * np.exp(-0.5 * ((t - 2.0) / 0.6) ** 2)
    pulse = SourcePulse(1.0, s, dt)
    arr = make_ring_array(10.0, 4)
    n_s = 300
    k0 = 120
    g = np.zeros((4, 4, n_s))
    g[0, 1, k0:k0 + len(s)] = s      # trace = pulse delayed by k0 samples
    data = MeasurementData(g=g, dt=dt, array=arr, emitters=(0, 1, 2, 3),
                           pulse=pulse)
    dec = deconvolve_source(data)
    trace = dec.g[0, 1]
    assert np.argmax(np.abs(trace)) == k0
    # regularized inverse keeps some ringing, but the energy concentrates
    # in a tight neighborhood of the impulse sample
    e = trace ** 2
    near = np.abs(np.arange(n_s) - k0) <= 5
    assert e[near].sum() > 0.9 * e.sum()


def test_deconvolve_source_validation():
    arr = make_ring_array(10.0, 4)
    data = MeasurementData(g=np.zeros((4, 4, 64)), dt=0.1, array=arr,
                           emitters=(0, 1, 2, 3), pulse=None)
    with pytest.raises(InvalidArgumentError):
        deconvolve_source(data)
    pulse = SourcePulse(1.0, np.zeros(8), 0.1)
    with pytest.raises(InvalidArgumentError):
        deconvolve_source(data, pulse)


def test_das_image_focuses_point_scatterer():
    # synthetic impulses at the exact two-way eikonal times for one
    # scatterer pixel; DAS should put its global |max| on that pixel
    grid = Grid2D.centered(64, 2.0)
    arr = make_ring_array(55.0, 12)
    sl = SlownessMap.uniform(grid, 1.0 / 1.5)
    scat = (40, 28)
    jl = snap_to_grid_jl(arr.positions(), grid)
    t_one = np.array([solve_eikonal(sl, jl[e]).t[scat[1], scat[0]]
                      for e in range(12)])
    dt = 0.2
    n_s = 600
    g = np.zeros((12, 12, n_s))
    t_axis = np.arange(n_s) * dt
    for m in range(12):
        for r in range(12):
            tt = t_one[m] + t_one[r]
            # narrow Gaussian stand-in for a deconvolved echo
            g[m, r] = np.exp(-0.5 * ((t_axis - tt) / (2 * dt)) ** 2)
    data = MeasurementData(g=g, dt=dt, array=arr,
                           emitters=tuple(range(12)), pulse=None)
    img = das_image(data, sl, ApodizationRule(2 * np.pi, arr), grid)
    assert img.f.shape == grid.shape
    l, j = np.unravel_index(np.argmax(np.abs(img.f)), img.f.shape)
    assert abs(j - scat[0]) <= 1 and abs(l - scat[1]) <= 1


def test_das_image_zero_data_gives_zero_image():
    grid = Grid2D.centered(32, 2.0)
    arr = make_ring_array(25.0, 8)
    sl = SlownessMap.uniform(grid, 1.0 / 1.5)
    data = MeasurementData(g=np.zeros((8, 8, 128)), dt=0.2, array=arr,
                           emitters=tuple(range(8)), pulse=None)
    img = das_image(data, sl, ApodizationRule(np.pi, arr), grid)
    np.testing.assert_allclose(img.f, 0.0)
