"""End-to-end acceptance suite.

One test per top-level claim, each printing a single PASS/FAIL summary
line with the measured value and its tolerance. These tests exercise the
full physics chain and take several minutes combined; the heavier
problems are sized for a single CPU.
"""

import filecmp
import itertools
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.ndimage import gaussian_filter
from scipy.sparse.csgraph import dijkstra

from uct.brtt import (BoxConstraint, GnConfig, gn_reconstruct,
                      slowness_to_sos)
from uct.core import (AcousticMaps, Grid2D, PhantomSpec, TissueLayer,
                      LABEL_FAT, generate_phantom, make_ring_array,
                      snap_to_grid_jl)
from uct.dasrt import ApodizationRule, compute_apodization, das_image, \
    deconvolve_source
from uct.eikonal import SlownessMap, build_ray_system, solve_eikonal
from uct.metrics import mann_whitney_u, nrmse, psnr_scaled, roc_auc, ssim
from uct.picker import TofTable, differential_tof, pick_all
from uct.pipeline import PipelineConfig, run_pipeline
from uct.wavesim import SimConfig, add_noise, make_pulse, simulate

WATER_SOS = 1.5
WATER_B = 1.0 / WATER_SOS


def _report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# eikonal accuracy


def _dijkstra_oracle(slowness, grid, src_jl, knight=True):
    """Shortest-path traveltimes on a pixel graph with trapezoid weights."""
    ny, nx = grid.shape
    offsets = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
               if (dy, dx) != (0, 0)]
    if knight:
        offsets += [(dy, dx) for dy in (-2, -1, 1, 2)
                    for dx in (-2, -1, 1, 2) if abs(dy) + abs(dx) == 3]
    Y, X = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    rows, cols, w = [], [], []
    for dy, dx in offsets:
        dist = np.hypot(dy, dx) * grid.dx
        Y2, X2 = Y + dy, X + dx
        m = (Y2 >= 0) & (Y2 < ny) & (X2 >= 0) & (X2 < nx)
        rows.append(Y[m] * nx + X[m])
        cols.append(Y2[m] * nx + X2[m])
        w.append(dist * 0.5 * (slowness[Y[m], X[m]] + slowness[Y2[m], X2[m]]))
    G = sp.csr_matrix((np.concatenate(w),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ny * nx, ny * nx))
    j, l = src_jl
    return dijkstra(G, indices=l * nx + j).reshape(ny, nx)


def test_eikonal_accuracy():
    t0 = time.time()

    # homogeneous: all ring pairs separated by more than 20 pixels
    grid = Grid2D.centered(128, 2.0)
    b = SlownessMap.uniform(grid, WATER_B)
    arr = make_ring_array(110.0, 64)
    jl = snap_to_grid_jl(arr.positions(), grid)
    pos = np.array([grid.pixel_center(j, l) for j, l in jl])
    worst = 0.0
    for m in range(64):
        f = solve_eikonal(b, jl[m])
        for n in range(64):
            if n == m:
                continue
            d = np.hypot(*(pos[n] - pos[m]))
            if d <= 20 * grid.dx:
                continue
            rel = abs(f.t[jl[n][1], jl[n][0]] - d / WATER_SOS) \
                / (d / WATER_SOS)
            worst = max(worst, rel)

    # heterogeneous: smooth +/-5 % slowness field against a shortest-path
    # oracle; the graph includes knight moves so the oracle's own
    # metrication error (2.8 % worst case) stays below the tolerance
    g2 = Grid2D.centered(64, 2.0)
    rng = np.random.default_rng(0)
    pert = gaussian_filter(rng.standard_normal(g2.shape), 6)
    pert = pert / np.abs(pert).max() * 0.05
    sl = WATER_B * (1 + pert)
    f2 = solve_eikonal(SlownessMap(g2, sl), (32, 32))
    oracle = _dijkstra_oracle(sl, g2, (32, 32))
    X, Y = g2.meshgrid()
    far = np.hypot(X, Y) / g2.dx > 8
    het = (np.abs(f2.t - oracle)[far] / oracle[far]).max()

    elapsed = time.time() - t0
    ok = worst < 0.01 and het < 0.03 and elapsed < 5.0
    _report("eikonal accuracy", ok,
            f"ring max rel err {worst:.4f} < 0.01, heterogeneous vs "
            f"shortest-path oracle {het:.4f} < 0.03, {elapsed:.1f} s < 5 s")


# ---------------------------------------------------------------------------
# wave simulator


def test_wavesim_arrival_fidelity():
    grid = Grid2D.centered(512, 0.4)
    maps = AcousticMaps.homogeneous(grid, WATER_SOS)
    arr = make_ring_array(50.0, 16)
    dt = 0.125
    pulse = make_pulse(0.5, dt)
    cfg = SimConfig(dt=dt, duration=74.0, lossless=True)
    t0 = time.time()
    data = simulate(maps, arr, pulse, cfg)
    tofs = pick_all(data, arr, WATER_SOS)
    elapsed = time.time() - t0
    # the simulation is exact with respect to the snapped element pixels,
    # so the reference distances use the snapped positions
    jl = snap_to_grid_jl(arr.positions(), grid)
    snapped = np.stack([grid.origin[0] + jl[:, 0] * grid.dx,
                        grid.origin[1] + jl[:, 1] * grid.dx], axis=1)
    dist = np.linalg.norm(snapped[:, None] - snapped[None, :], axis=-1)
    err = np.abs(tofs.t_obs - dist / WATER_SOS)[tofs.valid]
    ok = tofs.valid.sum() == 16 * 15 and err.max() <= 2 * dt \
        and elapsed < 120.0
    _report("wave-sim arrival fidelity", ok,
            f"max |pick - d/c| {err.max():.3f} us <= {2 * dt:.3f} us over "
            f"{int(tofs.valid.sum())} pairs, {elapsed:.1f} s < 120 s")


@pytest.fixture(scope="module")
def heterogeneous_measurement():
    grid = Grid2D.centered(256, 0.8)
    from uct.core import default_phantom_spec
    spec = default_phantom_spec(seed=3, breast_radius=50.0)
    maps, _ = generate_phantom(spec, grid)
    arr = make_ring_array(80.0, 8)
    dt = 0.2
    pulse = make_pulse(0.5, dt)
    cfg = SimConfig(dt=dt, duration=125.0, lossless=True)
    return simulate(maps, arr, pulse, cfg)


def test_reciprocity(heterogeneous_measurement):
    data = heterogeneous_measurement
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        m, n = rng.choice(8, 2, replace=False)
        gmn = data.g[m, n].astype(float)
        gnm = data.g[n, m].astype(float)
        worst = max(worst,
                    np.linalg.norm(gmn - gnm) / np.linalg.norm(gmn))
    ok = worst < 1e-2
    _report("reciprocity", ok,
            f"max relative RMS over 5 random pairs {worst:.2e} < 1e-2")


def test_noise_calibration(heterogeneous_measurement):
    data = heterogeneous_measurement
    noisy = add_noise(data, 36.0, seed=1)
    worst = 0.0
    for i, m in enumerate(data.emitters):
        opp = (m + 4) % 8
        ps = np.mean(data.g[i, opp].astype(float) ** 2)
        pn = np.mean((noisy.g[i, opp].astype(float) -
                      data.g[i, opp].astype(float)) ** 2)
        worst = max(worst, abs(10 * np.log10(ps / pn) - 36.0))
    ok = worst < 0.5
    _report("noise calibration", ok,
            f"max |measured - 36 dB| at antipodal receivers "
            f"{worst:.2f} dB < 0.5 dB")


# ---------------------------------------------------------------------------
# bent-ray traveltime tomography


def test_brtt_convergence():
    t0 = time.time()

    # part 1: self-consistent straight/bent-ray linear oracle
    grid = Grid2D.centered(64, 2.0)
    arr = make_ring_array(55.0, 32)
    X, Y = grid.meshgrid()
    bump = 0.02 * np.exp(-((X - 5) ** 2 + (Y + 8) ** 2) / (2 * 15 ** 2)) \
        - 0.012 * np.exp(-((X + 12) ** 2 + (Y - 6) ** 2) / (2 * 10 ** 2))
    fov_r = 45.0
    fov = np.hypot(X, Y) <= fov_r
    b_true = np.where(fov, np.clip(WATER_B + bump, 1 / 1.6, 1 / 1.4),
                      WATER_B)
    rays = build_ray_system(SlownessMap(grid, b_true), arr)
    tofs = TofTable(rays.predict_tof(b_true.ravel()), rays.valid.copy(),
                    WATER_SOS)
    box = BoxConstraint(1 / 1.6, 1 / 1.4, (0.0, 0.0), fov_r, WATER_B)
    b0 = SlownessMap.uniform(grid, WATER_B)
    b_rec, trace = gn_reconstruct(tofs, arr, b0, box,
                                  GnConfig(max_outer_iters=20))
    rel_err = np.linalg.norm(b_rec.b - b_true) / np.linalg.norm(b_true)
    objs = [it.objective for it in trace.iterations]
    monotone = all(objs[i + 1] <= objs[i] + 1e-12
                   for i in range(len(objs) - 1))
    mask = box.fov_mask(grid)
    box_exact = (b_rec.b[mask] >= 1 / 1.6 - 1e-15).all() and \
        (b_rec.b[mask] <= 1 / 1.4 + 1e-15).all() and \
        np.allclose(b_rec.b[~mask], WATER_B)
    linear_ok = rel_err < 0.02 and len(trace.iterations) <= 20 \
        and monotone and box_exact

    # part 2: end-to-end on a simulated smooth phantom with
    # water-calibrated differential picks
    sim_grid = Grid2D.centered(256, 0.8)
    layers = (TissueLayer("disk", sos_mean=1.46, sos_std=0.006,
                          rho_mean=1.0, alpha_mean=0.0, label=LABEL_FAT),)
    spec = PhantomSpec(seed=11, breast_radius=50.0, tissue_layers=layers,
                       texture_corr_mm=8.0)
    maps, _ = generate_phantom(spec, sim_grid)
    arr48 = make_ring_array(80.0, 48)
    dt = 0.2
    pulse = make_pulse(0.5, dt)
    sim = SimConfig(dt=dt, duration=125.0, lossless=True)
    data = simulate(maps, arr48, pulse, sim)
    data_w = simulate(AcousticMaps.homogeneous(sim_grid, WATER_SOS), arr48,
                      pulse, sim)

    lr = Grid2D.centered(64, 3.2)
    rays_ref = build_ray_system(SlownessMap.uniform(lr, WATER_B), arr48)
    t_ref = rays_ref.predict_tof(np.full(lr.nx * lr.ny, WATER_B))
    tofs_cal = differential_tof(data, data_w, t_ref, arr48, WATER_SOS,
                                filter_cutoff=0.75)
    tofs_cal = TofTable(tofs_cal.t_obs, tofs_cal.valid & rays_ref.valid,
                        WATER_SOS)
    box_e2e = BoxConstraint(1 / 1.6, 1 / 1.4, (0.0, 0.0), 56.0, WATER_B)
    b_rec2, trace2 = gn_reconstruct(tofs_cal, arr48,
                                    SlownessMap.uniform(lr, WATER_B),
                                    box_e2e, GnConfig())
    sos_rec = slowness_to_sos(b_rec2)
    target_lr = maps.sos.reshape(64, 4, 64, 4).mean(axis=(1, 3))
    e2e_nrmse = nrmse(target_lr, sos_rec, WATER_SOS)

    elapsed = time.time() - t0
    ok = linear_ok and e2e_nrmse < 0.5 and elapsed < 300.0
    _report("BRTT convergence", ok,
            f"linear-oracle rel err {rel_err:.4f} < 0.02 in "
            f"{len(trace.iterations)} iters (monotone={monotone}, "
            f"box_exact={box_exact}), end-to-end low-res NRMSE "
            f"{e2e_nrmse:.3f} < 0.5, {elapsed:.1f} s < 300 s")


# ---------------------------------------------------------------------------
# delay-and-sum reflectivity


def test_das_localization():
    t0 = time.time()
    grid = Grid2D.centered(256, 0.8)
    water_maps = AcousticMaps.homogeneous(grid, WATER_SOS)
    scat = (10.0, -4.4)
    jl = snap_to_grid_jl(np.array([scat]), grid)[0]
    sos = np.full(grid.shape, WATER_SOS)
    sos[jl[1], jl[0]] = WATER_SOS * 1.05
    rho = np.ones(grid.shape)
    rho[jl[1], jl[0]] = 1.05
    maps = AcousticMaps(grid, sos, rho, np.zeros(grid.shape),
                        water_sos=WATER_SOS)
    arr = make_ring_array(80.0, 16)
    dt = 0.2
    pulse = make_pulse(0.5, dt)
    cfg = SimConfig(dt=dt, duration=150.0, lossless=True)
    data_s = simulate(maps, arr, pulse, cfg)
    data_w = simulate(water_maps, arr, pulse, cfg)
    from dataclasses import replace
    scattered = replace(data_s, g=data_s.g.astype(np.float64) -
                        data_w.g.astype(np.float64))
    dec = deconvolve_source(scattered)
    out_grid = Grid2D.centered(128, 0.8)
    img = das_image(dec, SlownessMap.uniform(grid, WATER_B),
                    ApodizationRule(np.pi / 2, arr), out_grid)
    l, j = np.unravel_index(np.argmax(np.abs(img.f)), img.f.shape)
    Xo, Yo = out_grid.meshgrid()
    err_px = max(abs(Xo[l, j] - scat[0]), abs(Yo[l, j] - scat[1])) / 0.8
    elapsed = time.time() - t0

    # apodization admission count on the dense ring
    mask = compute_apodization(make_ring_array(110.0, 256),
                               15 * np.pi / 128)
    counts = mask.sum(axis=1)
    ok = err_px <= 1.0 and (counts == 15).all()
    _report("DAS localization", ok,
            f"point scatterer peak off by {err_px:.2f} px <= 1 px "
            f"({elapsed:.1f} s); sigma=15*pi/128 on 256 elements admits "
            f"{counts.min()}..{counts.max()} receivers (need exactly 15)")


# ---------------------------------------------------------------------------
# metrics


def test_metrics_exactness():
    # hand-case oracles to 1e-6
    target = np.array([[1.6, 1.5], [1.4, 1.5]])
    est = np.array([[1.55, 1.5], [1.45, 1.5]])
    nr_ok = abs(nrmse(target, est, 1.5) - 0.5) < 1e-6
    ps_ok = abs(psnr_scaled(np.full((8, 8), 1.5),
                            np.full((8, 8), 1.52)) - 20.0) < 1e-6
    rng = np.random.default_rng(0)
    x = 1.5 + 0.05 * rng.standard_normal((32, 32))
    ss_ok = abs(ssim(x, x) - 1.0) < 1e-6

    # exact Mann-Whitney p equals full enumeration for all n_a + n_b <= 8
    def oracle(a, b):
        pooled = np.concatenate([a, b])
        order = np.argsort(pooled, kind="mergesort")
        ranks = np.empty(len(pooled))
        sv = pooled[order]
        i = 0
        while i < len(pooled):
            j = i
            while j + 1 < len(pooled) and sv[j + 1] == sv[i]:
                j += 1
            ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        r_obs = ranks[:len(a)].sum()
        sums = np.array([sum(c) for c in
                         itertools.combinations(ranks, len(a))])
        lo = np.mean(sums <= r_obs + 1e-9)
        hi = np.mean(sums >= r_obs - 1e-9)
        return min(1.0, 2.0 * min(lo, hi))

    mw_ok = True
    u, p = mann_whitney_u([1.0, 2.0], [3.0, 4.0])
    mw_ok &= u == 0.0 and abs(p - 1.0 / 3.0) < 1e-12
    for n_a in range(1, 8):
        for n_b in range(1, 9 - n_a):
            for rep in range(3):
                a = rng.integers(0, 4, n_a).astype(float)
                b = rng.integers(0, 4, n_b).astype(float)
                _, p = mann_whitney_u(a, b)
                mw_ok &= abs(p - oracle(a, b)) < 1e-9

    # empirical AUC equals the pair-counting oracle exactly
    auc_ok = roc_auc([0.9, 0.8], [0.7, 0.85])[0] == 0.75
    pos = rng.integers(0, 5, 12).astype(float)
    neg = rng.integers(0, 5, 9).astype(float)
    wins = sum(1.0 if p_ > q else 0.5 if p_ == q else 0.0
               for p_ in pos for q in neg)
    auc_ok &= roc_auc(pos, neg)[0] == wins / (pos.size * neg.size)

    ok = nr_ok and ps_ok and ss_ok and mw_ok and auc_ok
    _report("metrics exactness", ok,
            f"nrmse/psnr/ssim oracles to 1e-6 "
            f"({nr_ok}/{ps_ok}/{ss_ok}), Mann-Whitney exact == "
            f"enumeration for n_a+n_b<=8 ({mw_ok}), AUC == pair "
            f"counting ({auc_ok})")


# ---------------------------------------------------------------------------
# pipeline determinism


def _dir_digest(root: Path):
    files = sorted(p.relative_to(root) for p in root.rglob("*.uctf"))
    return files


def test_pipeline_determinism(tmp_path):
    cfg = PipelineConfig(n_items=2, grid_n=128, grid_dx=1.6, n_elements=16,
                         ring_radius=80.0, dt=0.5, duration=125.0,
                         center_frequency=0.2, breast_radius=30.0,
                         brtt_factor=4, fov_radius=45.0, crop_n=64,
                         max_outer_iters=8)
    t0 = time.time()
    f1 = run_pipeline(cfg, tmp_path / "run1")
    f2 = run_pipeline(cfg, tmp_path / "run2")
    elapsed = time.time() - t0
    rel = _dir_digest(tmp_path / "run1")
    identical = rel == _dir_digest(tmp_path / "run2") and all(
        filecmp.cmp(tmp_path / "run1" / r, tmp_path / "run2" / r,
                    shallow=False) for r in rel)
    # a rerun over a complete dataset does no work and changes nothing
    t1 = time.time()
    f3 = run_pipeline(cfg, tmp_path / "run1")
    resume = time.time() - t1
    ok = f1 == 0 and f2 == 0 and f3 == 0 and identical and len(rel) == 8 \
        and resume < 2.0
    _report("pipeline determinism", ok,
            f"two runs byte-identical over {len(rel)} field files "
            f"(failures {f1}/{f2}), resume {resume:.2f} s "
            f"({elapsed:.1f} s total)")
