"""Dataset generation: phantom -> simulate -> pick -> BRTT -> DAS -> files.

Each item is an ImagePair written as UCTF field files in
``<root>/{train,val,test}/<id>/`` plus a JSON meta file; a manifest at the
root lists every file with content hashes so interrupted runs resume
without recomputation. The water-bath reference acquisition depends only
on the configuration, so it is computed once and shared by all items.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .brtt import BoxConstraint, GnConfig, gn_reconstruct, slowness_to_sos, \
    upsample_nn
from .core import (AcousticMaps, Grid2D, Lesion, PhantomSpec,
                   default_phantom_spec, generate_phantom, make_ring_array)
from .dasrt import ApodizationRule, das_image, deconvolve_source
from .eikonal import SlownessMap, build_ray_system
from .errors import ConfigError, InvalidArgumentError
from .fieldio import grid_meta, write_field, write_sidecar
from .picker import differential_tof
from .wavesim import SimConfig, add_noise, make_pulse, simulate

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to generate one dataset deterministically."""

    n_items: int = 4
    split_fractions: tuple = (0.5, 0.25, 0.25)   # train, val, test
    split_seed: int = 0
    phantom_seed_base: int = 1000

    # acquisition geometry and physics
    grid_n: int = 512
    grid_dx: float = 0.4            # mm
    n_elements: int = 64
    ring_radius: float = 80.0       # mm
    dt: float = 0.125               # us
    duration: float = 115.0         # us
    center_frequency: float = 0.5   # MHz
    lossless: bool = True
    snr_db: float | None = None

    # phantom randomization
    breast_radius: float = 24.0     # mm
    n_lesions_max: int = 2
    lesion_radius_range: tuple = (2.0, 5.0)     # mm
    lesion_contrast_range: tuple = (0.03, 0.05)  # mm/us

    # reconstruction
    brtt_factor: int = 4            # recon pixel = factor * grid_dx
    fov_radius: float = 40.0        # mm
    sos_min: float = 1.4            # box bounds as SOS, mm/us
    sos_max: float = 1.6
    max_outer_iters: int = 15
    das_sigma: float = np.pi / 2    # radians

    # output
    crop_n: int = 148
    water_sos: float = 1.5          # mm/us

    def __post_init__(self):
        if self.n_items < 1:
            raise ConfigError("n_items must be >= 1")
        if len(self.split_fractions) != 3 or \
                abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError("split fractions must be 3 values summing to 1")
        if self.crop_n > self.grid_n:
            raise ConfigError("crop larger than the simulation grid")
        if self.grid_n % self.brtt_factor != 0 or \
                self.crop_n % self.brtt_factor != 0:
            raise ConfigError("grid_n and crop_n must divide by brtt_factor")
        if not 0 < self.sos_min < self.sos_max:
            raise ConfigError("need 0 < sos_min < sos_max")

    @staticmethod
    def from_json(path) -> "PipelineConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = PipelineConfig.__dataclass_fields__
        bad = set(raw) - set(known)
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        for key in ("split_fractions", "lesion_radius_range",
                    "lesion_contrast_range"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return PipelineConfig(**raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass
class ImagePair:
    """Co-registered record of one dataset item."""

    brtt_sos: np.ndarray          # low-resolution SOS, upsampled to the crop
    das_reflectivity: np.ndarray  # signed reflectivity on the crop
    target_sos: np.ndarray        # ground-truth SOS on the crop
    labels: np.ndarray            # tissue class ids on the crop
    water_sos: float
    grid: Grid2D                  # crop grid
    seed: int | None = None


def water_subtract(pair: ImagePair) -> tuple[np.ndarray, np.ndarray]:
    """(brtt - water, target - water); inverse is water_add_back."""
    if pair.water_sos is None:
        raise InvalidArgumentError("pair carries no water SOS")
    return (pair.brtt_sos - pair.water_sos,
            pair.target_sos - pair.water_sos)


def water_add_back(image: np.ndarray, water_sos: float) -> np.ndarray:
    return image + water_sos


def assign_split(index: int, fractions, seed: int) -> str:
    """Deterministic split for one item; independent of all other items."""
    u = np.random.default_rng([seed, index]).random()
    if u < fractions[0]:
        return "train"
    if u < fractions[0] + fractions[1]:
        return "val"
    return "test"


def make_phantom_spec(cfg: PipelineConfig, index: int) -> PhantomSpec:
    """Randomized breast-like phantom spec for one item."""
    seed = cfg.phantom_seed_base + index
    rng = np.random.default_rng(seed)
    lesions = []
    for _ in range(int(rng.integers(0, cfg.n_lesions_max + 1))):
        ang = rng.uniform(0, 2 * np.pi)
        rad = rng.uniform(*cfg.lesion_radius_range)
        rmax = max(cfg.breast_radius * 0.75 - rad, 0.0)
        dist = rng.uniform(0, rmax)
        lesions.append(Lesion((dist * np.cos(ang), dist * np.sin(ang)), rad,
                              rng.uniform(*cfg.lesion_contrast_range)))
    return default_phantom_spec(seed=seed, breast_radius=cfg.breast_radius,
                                lesions=tuple(lesions),
                                water_sos=cfg.water_sos)


def _crop_slices(n: int, crop: int):
    start = (n - crop) // 2
    return slice(start, start + crop)


def _crop_grid(grid: Grid2D, crop: int) -> Grid2D:
    start = (grid.nx - crop) // 2
    return Grid2D(crop, crop, grid.dx,
                  (grid.origin[0] + start * grid.dx,
                   grid.origin[1] + start * grid.dx))


class _SharedReference:
    """Per-config state reused by every item: water shot, rays, ref TOFs."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.grid = Grid2D.centered(cfg.grid_n, cfg.grid_dx)
        self.array = make_ring_array(cfg.ring_radius, cfg.n_elements)
        self.sim = SimConfig(dt=cfg.dt, duration=cfg.duration,
                             lossless=cfg.lossless)
        self.pulse = make_pulse(cfg.center_frequency, cfg.dt)
        self.lr_grid = Grid2D.centered(cfg.grid_n // cfg.brtt_factor,
                                       cfg.grid_dx * cfg.brtt_factor)
        water_b = 1.0 / cfg.water_sos
        self.water_slowness = water_b
        self.rays_ref = build_ray_system(
            SlownessMap.uniform(self.lr_grid, water_b), self.array)
        nk = self.lr_grid.nx * self.lr_grid.ny
        self.t_ref = self.rays_ref.predict_tof(np.full(nk, water_b))
        water_maps = AcousticMaps.homogeneous(self.grid, cfg.water_sos)
        self.data_water = simulate(water_maps, self.array, self.pulse,
                                   self.sim)
        self.box = BoxConstraint(1.0 / cfg.sos_max, 1.0 / cfg.sos_min,
                                 (0.0, 0.0), cfg.fov_radius, water_b)


def generate_item(cfg: PipelineConfig, index: int,
                  shared: _SharedReference | None = None) -> ImagePair:
    """Run the full chain for one item and return the in-memory pair."""
    if shared is None:
        shared = _SharedReference(cfg)
    spec = make_phantom_spec(cfg, index)
    maps, labels = generate_phantom(spec, shared.grid)
    if cfg.lossless:
        maps.alpha[:] = 0.0
    data = simulate(maps, shared.array, shared.pulse, shared.sim)
    if cfg.snr_db is not None:
        data = add_noise(data, cfg.snr_db, seed=spec.seed)

    # low-pass at 1.5x the pulse center frequency, kept under Nyquist
    cutoff = min(1.5 * cfg.center_frequency, 0.45 / cfg.dt)
    tofs = differential_tof(data, shared.data_water, shared.t_ref,
                            shared.array, cfg.water_sos,
                            filter_cutoff=cutoff)
    b0 = SlownessMap.uniform(shared.lr_grid, shared.water_slowness)
    b_rec, _trace = gn_reconstruct(
        tofs, shared.array, b0, shared.box,
        GnConfig(max_outer_iters=cfg.max_outer_iters))
    sos_lr = slowness_to_sos(b_rec)

    crop_grid = _crop_grid(shared.grid, cfg.crop_n)
    sl = _crop_slices(cfg.grid_n, cfg.crop_n)
    brtt_full = upsample_nn(sos_lr, cfg.brtt_factor)
    brtt_crop = brtt_full[sl, sl].astype(np.float32)

    from dataclasses import replace
    scat = replace(data, g=data.g.astype(np.float64) -
                   shared.data_water.g.astype(np.float64))
    dec = deconvolve_source(scat)
    refl = das_image(dec, b_rec, ApodizationRule(cfg.das_sigma, shared.array),
                     crop_grid)

    return ImagePair(
        brtt_sos=brtt_crop,
        das_reflectivity=refl.f.astype(np.float32),
        target_sos=maps.sos[sl, sl].astype(np.float32),
        labels=labels.labels[sl, sl],
        water_sos=cfg.water_sos,
        grid=crop_grid,
        seed=spec.seed,
    )


ITEM_FILES = ("brtt.uctf", "das.uctf", "target.uctf", "labels.uctf")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_pair(pair: ImagePair, item_dir: Path, cfg: PipelineConfig,
               index: int) -> dict:
    """Write one pair's field files + meta; returns the manifest entry."""
    item_dir.mkdir(parents=True, exist_ok=True)
    arrays = {
        "brtt.uctf": pair.brtt_sos.astype(np.float32),
        "das.uctf": pair.das_reflectivity.astype(np.float32),
        "target.uctf": pair.target_sos.astype(np.float32),
        "labels.uctf": pair.labels.astype(np.int32),
    }
    for name, arr in arrays.items():
        write_field(item_dir / name, arr)
    norm = float(np.max(np.abs(pair.das_reflectivity)))
    meta = grid_meta(pair.grid, water_sos=pair.water_sos, seed=pair.seed,
                     index=index, das_norm_max_abs=norm)
    with open(item_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files = {name: _sha256(item_dir / name) for name in ITEM_FILES}
    files["meta.json"] = _sha256(item_dir / "meta.json")
    return {"index": index, "seed": pair.seed, "files": files,
            "status": "ok"}


def _entry_complete(entry: dict, item_dir: Path) -> bool:
    if entry.get("status") != "ok":
        return False
    for name, digest in entry.get("files", {}).items():
        p = item_dir / name
        if not p.exists() or _sha256(p) != digest:
            return False
    return True


def run_pipeline(cfg: PipelineConfig, out_root) -> int:
    """Generate the dataset; returns the number of failed items.

    Items already present with matching hashes are skipped, so a rerun on a
    completed dataset does no simulation work.
    """
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    manifest_path = root / "manifest.json"
    manifest = {"config": cfg.to_dict(), "items": {}}
    if manifest_path.exists():
        with open(manifest_path) as fh:
            old = json.load(fh)
        if old.get("config") == manifest["config"]:
            manifest["items"] = old.get("items", {})

    shared = None
    failures = 0
    for index in range(cfg.n_items):
        item_id = f"{index:04d}"
        split = assign_split(index, cfg.split_fractions, cfg.split_seed)
        item_dir = root / split / item_id
        entry = manifest["items"].get(item_id)
        if entry and entry.get("split") == split and \
                _entry_complete(entry, item_dir):
            continue
        if shared is None:
            shared = _SharedReference(cfg)
        try:
            pair = generate_item(cfg, index, shared)
            entry = write_pair(pair, item_dir, cfg, index)
        except Exception as exc:  # per-item failures must not kill the run
            failures += 1
            entry = {"index": index, "status": "error",
                     "error": f"{type(exc).__name__}: {exc}"}
        entry["split"] = split
        manifest["items"][item_id] = entry
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if not manifest_path.exists():
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return failures


def load_pair(item_dir) -> ImagePair:
    """Read one dataset item back from disk."""
    from .fieldio import read_field
    item_dir = Path(item_dir)
    with open(item_dir / "meta.json") as fh:
        meta = json.load(fh)
    grid = Grid2D(meta["nx"], meta["ny"], meta["dx_mm"],
                  tuple(meta["origin_mm"]))
    return ImagePair(
        brtt_sos=read_field(item_dir / "brtt.uctf"),
        das_reflectivity=read_field(item_dir / "das.uctf"),
        target_sos=read_field(item_dir / "target.uctf"),
        labels=read_field(item_dir / "labels.uctf"),
        water_sos=float(meta["water_sos"]),
        grid=grid,
        seed=meta.get("seed"),
    )
