"""Fast-sweeping eikonal solver and bent-ray tracing."""

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from uct.core import Grid2D, make_ring_array, snap_to_grid_jl
from uct.eikonal import (SlownessMap, build_ray_system, solve_eikonal,
                         trace_ray)
from uct.errors import InvalidArgumentError


def test_slowness_map_constructors():
    g = Grid2D.centered(16, 1.0)
    b = SlownessMap.uniform(g, 1.0 / 1.5)
    np.testing.assert_allclose(b.b, 1.0 / 1.5)
    b2 = SlownessMap.from_sos(g, np.full(g.shape, 1.5))
    np.testing.assert_allclose(b2.b, b.b)
    with pytest.raises(InvalidArgumentError):
        SlownessMap(g, np.zeros((4, 4)))


def test_homogeneous_traveltimes_match_distance():
    g = Grid2D.centered(96, 1.0)
    b = SlownessMap.uniform(g, 1.0 / 1.5)
    src = (20, 48)
    f = solve_eikonal(b, src)
    X, Y = g.meshgrid()
    sx, sy = g.pixel_center(*src)
    d = np.hypot(X - sx, Y - sy)
    far = d > 12 * g.dx
    rel = np.abs(f.t[far] - d[far] / 1.5) / (d[far] / 1.5)
    assert rel.max() < 0.01


def test_traveltime_scales_with_slowness():
    g = Grid2D.centered(48, 1.0)
    f1 = solve_eikonal(SlownessMap.uniform(g, 1.0 / 1.5), (24, 24))
    f2 = solve_eikonal(SlownessMap.uniform(g, 2.0 / 1.5), (24, 24))
    np.testing.assert_allclose(f2.t, 2.0 * f1.t, rtol=1e-9)


def test_ray_trace_homogeneous_is_straight():
    g = Grid2D.centered(96, 1.0)
    b = SlownessMap.uniform(g, 1.0 / 1.5)
    src = (10, 48)
    f = solve_eikonal(b, src)
    rec = (85, 60)
    lengths, ok = trace_ray(f, b, rec)
    assert ok
    sx, sy = g.pixel_center(*src)
    rx, ry = g.pixel_center(*rec)
    d = np.hypot(rx - sx, ry - sy)
    assert abs(lengths.sum() - d) / d < 0.01
    # path integral of slowness reproduces the traveltime
    assert abs(lengths @ np.full(g.nx * g.ny, 1.0 / 1.5) - d / 1.5) \
        / (d / 1.5) < 0.01


def test_rays_bend_toward_fast_region():
    # slowness dips (medium speeds up) above the straight path; the bent
    # ray should detour through the fast lane and beat the straight time
    g = Grid2D.centered(96, 1.0)
    b_arr = np.full(g.shape, 1.0 / 1.5)
    X, Y = g.meshgrid()
    fast = np.hypot(X, Y - 12.0) < 10.0
    b_arr[fast] = 1.0 / 1.5 * 0.85
    b = SlownessMap(g, b_arr)
    f = solve_eikonal(b, (8, 48))
    lengths, ok = trace_ray(f, b, (88, 48))
    assert ok
    t_bent = lengths @ b_arr.ravel()
    t_straight = 80.0 / 1.5
    assert t_bent < t_straight
    # the bent path is longer than the chord
    assert lengths.sum() > 80.0


def test_build_ray_system_consistency():
    g = Grid2D.centered(64, 2.0)
    arr = make_ring_array(55.0, 12)
    b = SlownessMap.uniform(g, 1.0 / 1.5)
    rays = build_ray_system(b, arr)
    assert not rays.valid.diagonal().any()
    assert rays.valid.sum() == 12 * 11
    t = rays.predict_tof(b.b.ravel())
    jl = snap_to_grid_jl(arr.positions(), g)
    pos = np.array([g.pixel_center(j, l) for j, l in jl])
    d = np.linalg.norm(pos[:, None] - pos[None, :], axis=-1)
    rel = np.abs(t - d / 1.5)[rays.valid] / (d / 1.5)[rays.valid]
    assert rel.max() < 0.02


def test_heterogeneous_field_is_causal_and_finite():
    g = Grid2D.centered(64, 2.0)
    rng = np.random.default_rng(0)
    pert = gaussian_filter(rng.standard_normal(g.shape), 6)
    pert = pert / np.abs(pert).max() * 0.05
    b = SlownessMap(g, (1.0 / 1.5) * (1 + pert))
    f = solve_eikonal(b, (32, 32))
    assert np.isfinite(f.t).all()
    assert f.t[32, 32] <= f.t.min() + 1e-9
    # lower bound: straight distance times the minimum slowness
    X, Y = g.meshgrid()
    sx, sy = g.pixel_center(32, 32)
    d = np.hypot(X - sx, Y - sy)
    assert (f.t >= d * b.b.min() - 1e-6).all()
