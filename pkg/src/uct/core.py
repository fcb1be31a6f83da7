"""Grids, ring-array geometry, acoustic property maps and procedural phantoms.

Units used throughout the toolkit: lengths in mm, times in microseconds,
sound speed in mm/us, slowness in us/mm, density in g/cm^3, attenuation
coefficient in dB/(MHz^y cm).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

# Sanity band for any speed-of-sound map (mm/us); tissue values live in
# [1.4, 1.6] but reconstruction intermediates may wander a little wider.
SOS_MIN = 1.0
SOS_MAX = 2.0


@dataclass(frozen=True)
class Grid2D:
    """Uniform 2D pixel grid. Pixel ``k`` maps to (j, l) via k = nx*l + j."""

    nx: int
    ny: int
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise InvalidArgumentError("grid dimensions must be >= 1")
        if self.dx <= 0:
            raise InvalidArgumentError("pixel size must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (ny, nx): axis 0 is l (y), axis 1 is j (x)."""
        return (self.ny, self.nx)

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.dx, self.ny * self.dx)

    def x_coords(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.dx * np.arange(self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_coords(), self.y_coords())

    def flat_index(self, j, l):
        return self.nx * np.asarray(l) + np.asarray(j)

    def pixel_center(self, j: int, l: int) -> tuple[float, float]:
        return (self.origin[0] + j * self.dx, self.origin[1] + l * self.dx)

    def contains(self, x: float, y: float) -> bool:
        """True if (x, y) lies within half a pixel of some pixel center."""
        hx = (x - self.origin[0]) / self.dx
        hy = (y - self.origin[1]) / self.dx
        return (-0.5 <= hx <= self.nx - 0.5) and (-0.5 <= hy <= self.ny - 0.5)

    @staticmethod
    def centered(n: int, dx: float) -> "Grid2D":
        """Square grid whose physical center is at (0, 0)."""
        half = (n - 1) / 2.0 * dx
        return Grid2D(n, n, dx, (-half, -half))


@dataclass(frozen=True)
class RingArray:
    """Evenly spaced point transducers on a circle.

    Element i sits at angle 2*pi*i/n_elements from the +x axis,
    counter-clockwise.
    """

    radius: float
    n_elements: int
    center: tuple[float, float] = (0.0, 0.0)
    element_positions: tuple = field(default=None)

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidArgumentError("ring radius must be positive")
        if self.n_elements < 3:
            raise InvalidArgumentError("ring needs at least 3 elements")
        if self.element_positions is None:
            ang = 2.0 * np.pi * np.arange(self.n_elements) / self.n_elements
            pos = np.stack([self.center[0] + self.radius * np.cos(ang),
                            self.center[1] + self.radius * np.sin(ang)], axis=1)
            object.__setattr__(self, "element_positions",
                               tuple(map(tuple, pos)))

    def positions(self) -> np.ndarray:
        return np.asarray(self.element_positions, dtype=float)

    def antipode(self, i: int) -> int:
        return (i + self.n_elements // 2) % self.n_elements


def make_ring_array(radius: float, n_elements: int,
                    center: tuple[float, float] = (0.0, 0.0)) -> RingArray:
    return RingArray(radius=radius, n_elements=n_elements, center=center)


@dataclass
class AcousticMaps:
    """Per-pixel acoustic properties of a phantom in a water bath."""

    grid: Grid2D
    sos: np.ndarray          # mm/us
    rho0: np.ndarray         # g/cm^3
    alpha: np.ndarray        # dB/(MHz^y cm)
    y: float = 1.5           # power-law exponent; y=2 is singular (dispersion)
    water_sos: float = 1.5   # mm/us

    def __post_init__(self):
        for name in ("sos", "rho0", "alpha"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise InvalidArgumentError(
                    f"{name} shape {arr.shape} != grid shape {self.grid.shape}")
            setattr(self, name, arr)
        if np.any(self.sos < SOS_MIN) or np.any(self.sos > SOS_MAX):
            raise InvalidArgumentError(
                f"sos outside sanity band [{SOS_MIN}, {SOS_MAX}]")
        if np.any(self.rho0 <= 0):
            raise InvalidArgumentError("rho0 must be positive")
        if np.any(self.alpha < 0):
            raise InvalidArgumentError("alpha must be non-negative")
        if not (1.0 < self.y < 3.0) or self.y == 2.0:
            raise InvalidArgumentError("power-law exponent must be in (1,3), != 2")

    @staticmethod
    def homogeneous(grid: Grid2D, sos: float = 1.5, rho0: float = 1.0,
                    alpha: float = 0.0, y: float = 1.5) -> "AcousticMaps":
        shape = grid.shape
        return AcousticMaps(grid, np.full(shape, sos), np.full(shape, rho0),
                            np.full(shape, alpha), y=y, water_sos=sos)


# Tissue class ids for LabelMap.
LABEL_WATER = 0
LABEL_FAT = 1
LABEL_GLANDULAR = 2
LABEL_SKIN = 3
LABEL_TUMOR = 4


@dataclass
class LabelMap:
    grid: Grid2D
    labels: np.ndarray  # int32 tissue class per pixel

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.labels.shape != self.grid.shape:
            raise InvalidArgumentError("label shape != grid shape")


@dataclass(frozen=True)
class Lesion:
    center: tuple[float, float]  # mm
    radius: float                # mm
    sos_contrast: float          # mm/us added on top of host tissue


@dataclass(frozen=True)
class TissueLayer:
    """One concentric tissue layer of the procedural phantom.

    ``shape`` selects the geometry: "disk" fills the perturbed breast
    interior, "ring" is an outer band of given thickness (skin), "blobs"
    fills random glandular patches inside the interior.
    """

    shape: str
    sos_mean: float
    sos_std: float = 0.0
    rho_mean: float = 1.0
    alpha_mean: float = 0.0
    label: int = LABEL_FAT
    thickness: float = 2.0   # mm, ring layers only
    fill: float = 0.35       # area fraction, blob layers only


@dataclass(frozen=True)
class PhantomSpec:
    seed: int
    breast_radius: float
    tissue_layers: tuple[TissueLayer, ...]
    lesions: tuple[Lesion, ...] = ()
    water_sos: float = 1.5
    boundary_wobble: float = 0.04    # relative radius perturbation amplitude
    texture_corr_mm: float = 3.0     # GRF correlation length
    y: float = 1.5

    def __post_init__(self):
        for les in self.lesions:
            r = float(np.hypot(*les.center)) + les.radius
            if r > self.breast_radius:
                raise InvalidArgumentError(
                    f"lesion at {les.center} extends outside breast radius")


def default_phantom_spec(seed: int, breast_radius: float = 45.0,
                         lesions: tuple[Lesion, ...] = (),
                         water_sos: float = 1.5) -> PhantomSpec:
    """Breast-like three-layer spec with values inside the [1.4, 1.6] band."""
    layers = (
        TissueLayer("disk", sos_mean=1.44, sos_std=0.004, rho_mean=0.95,
                    alpha_mean=0.4, label=LABEL_FAT),
        TissueLayer("blobs", sos_mean=1.54, sos_std=0.005, rho_mean=1.02,
                    alpha_mean=0.6, label=LABEL_GLANDULAR, fill=0.35),
        TissueLayer("ring", sos_mean=1.58, sos_std=0.003, rho_mean=1.1,
                    alpha_mean=1.0, label=LABEL_SKIN, thickness=1.5),
    )
    return PhantomSpec(seed=seed, breast_radius=breast_radius,
                       tissue_layers=layers, lesions=lesions,
                       water_sos=water_sos)


def _gaussian_random_field(rng: np.random.Generator, shape, corr_px: float):
    """Zero-mean unit-variance field with Gaussian correlation length."""
    noise = rng.standard_normal(shape)
    if corr_px <= 0:
        return noise
    ky = np.fft.fftfreq(shape[0])[:, None]
    kx = np.fft.rfftfreq(shape[1])[None, :]
    k2 = kx ** 2 + ky ** 2
    filt = np.exp(-2.0 * (np.pi * corr_px) ** 2 * k2)
    out = np.fft.irfft2(np.fft.rfft2(noise) * filt, s=shape)
    std = out.std()
    if std > 0:
        out /= std
    return out


def generate_phantom(spec: PhantomSpec, grid: Grid2D) -> tuple[AcousticMaps, LabelMap]:
    """Build acoustic maps and a label map from a procedural phantom spec.

    Deterministic for a fixed (spec, grid). Texture is added inside tissue
    only; the water region carries exactly ``spec.water_sos``.
    """
    rng = np.random.default_rng(spec.seed)
    X, Y = grid.meshgrid()
    r = np.hypot(X, Y)
    theta = np.arctan2(Y, X)

    # Perturbed breast boundary: a few low-order harmonics on the radius.
    bnd = np.ones_like(theta)
    if spec.boundary_wobble > 0:
        for harm in (2, 3, 5):
            amp = spec.boundary_wobble * rng.uniform(0.2, 1.0) / harm
            phase = rng.uniform(0, 2 * np.pi)
            bnd += amp * np.cos(harm * theta + phase)
    boundary = spec.breast_radius * bnd
    inside = r <= boundary

    sos = np.full(grid.shape, spec.water_sos, dtype=float)
    rho0 = np.ones(grid.shape, dtype=float)
    alpha = np.zeros(grid.shape, dtype=float)
    labels = np.zeros(grid.shape, dtype=np.int32)
    texture_std = np.zeros(grid.shape, dtype=float)

    for layer in spec.tissue_layers:
        if layer.shape == "disk":
            mask = inside
        elif layer.shape == "ring":
            mask = inside & (r >= boundary - layer.thickness)
        elif layer.shape == "blobs":
            blob_field = _gaussian_random_field(
                rng, grid.shape, 3.0 * spec.texture_corr_mm / grid.dx)
            thresh = np.quantile(blob_field[inside], 1.0 - layer.fill) \
                if inside.any() else np.inf
            mask = inside & (blob_field >= thresh)
        else:
            raise InvalidArgumentError(f"unknown layer shape {layer.shape!r}")
        sos[mask] = layer.sos_mean
        rho0[mask] = layer.rho_mean
        alpha[mask] = layer.alpha_mean
        labels[mask] = layer.label
        texture_std[mask] = layer.sos_std

    for les in spec.lesions:
        mask = np.hypot(X - les.center[0], Y - les.center[1]) <= les.radius
        sos[mask] += les.sos_contrast
        texture_std[mask] = 0.0
        labels[mask] = LABEL_TUMOR

    if np.any(texture_std > 0):
        grf = _gaussian_random_field(rng, grid.shape,
                                     spec.texture_corr_mm / grid.dx)
        sos += texture_std * grf

    np.clip(sos, 1.4, 1.6, out=sos)
    sos[~inside] = spec.water_sos

    maps = AcousticMaps(grid, sos, rho0, alpha, y=spec.y,
                        water_sos=spec.water_sos)
    return maps, LabelMap(grid, labels)


def snap_to_grid(positions, grid: Grid2D) -> np.ndarray:
    """Map physical points to nearest pixel flat indices (k = nx*l + j).

    Midpoint ties break toward the lower index.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    hx = (pos[:, 0] - grid.origin[0]) / grid.dx
    hy = (pos[:, 1] - grid.origin[1]) / grid.dx
    if np.any(hx < -0.5) or np.any(hx > grid.nx - 0.5) \
            or np.any(hy < -0.5) or np.any(hy > grid.ny - 0.5):
        raise InvalidArgumentError("position outside grid bounds")
    # ceil(h - 0.5) rounds half-integers down, giving the lower index on ties
    j = np.ceil(hx - 0.5).astype(np.int64)
    l = np.ceil(hy - 0.5).astype(np.int64)
    j = np.clip(j, 0, grid.nx - 1)
    l = np.clip(l, 0, grid.ny - 1)
    return grid.nx * l + j


def snap_to_grid_jl(positions, grid: Grid2D) -> np.ndarray:
    """Like snap_to_grid but returns (n, 2) array of (j, l) pixel coords."""
    k = snap_to_grid(positions, grid)
    return np.stack([k % grid.nx, k // grid.nx], axis=1)
