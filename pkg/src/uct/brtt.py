"""Bent-ray traveltime tomography: proximal Gauss-Newton with a box constraint.

The outer loop rebuilds bent-ray matrices on the current slowness iterate,
forms the linearized least-squares sub-problem with the box indicator, and
solves it with an accelerated projected (proximal) gradient method. Step
acceptance uses a backtracking line search on the sufficient-descent
condition with the prox-linear slope lambda = g^T y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import Grid2D, RingArray
from .eikonal import RaySystem, SlownessMap, build_ray_system
from .errors import ConfigError, InvalidArgumentError
from .picker import TofTable


@dataclass(frozen=True)
class BoxConstraint:
    """Slowness bounds inside a circular FOV; water slowness outside it."""

    b_min: float              # us/mm
    b_max: float              # us/mm
    fov_center: tuple[float, float]  # mm
    fov_radius: float         # mm
    water_slowness: float     # us/mm

    def __post_init__(self):
        if not 0 < self.b_min < self.b_max:
            raise InvalidArgumentError("need 0 < b_min < b_max")
        if self.fov_radius <= 0:
            raise InvalidArgumentError("fov_radius must be positive")

    def fov_mask(self, grid: Grid2D) -> np.ndarray:
        X, Y = grid.meshgrid()
        return np.hypot(X - self.fov_center[0],
                        Y - self.fov_center[1]) <= self.fov_radius


@dataclass(frozen=True)
class GnConfig:
    max_outer_iters: int = 20
    tol: float | None = None       # default 1e-6 * sqrt(n_pairs)
    inner_iters: int = 100
    ls_shrink: float = 0.5
    ls_max_tries: int = 20

    def __post_init__(self):
        if self.tol is not None and self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not 0 < self.ls_shrink < 1:
            raise ConfigError("ls_shrink must lie in (0, 1)")


@dataclass
class GnIteration:
    objective: float
    grad_prox_norm: float
    step_size: float
    lam: float
    residual_norms: list
    accepted: bool


@dataclass
class GnTrace:
    iterations: list = field(default_factory=list)
    status: str = "running"
    dropped_rays: int = 0

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "dropped_rays": int(self.dropped_rays),
            "iterations": [
                {"objective": it.objective,
                 "grad_prox_norm": it.grad_prox_norm,
                 "step_size": it.step_size,
                 "lambda": it.lam,
                 "residual_norms": it.residual_norms,
                 "accepted": it.accepted}
                for it in self.iterations],
        }


def project_box(b: SlownessMap, box: BoxConstraint) -> SlownessMap:
    """Clamp to [b_min, b_max] inside the FOV, water slowness outside."""
    mask = box.fov_mask(b.grid)
    out = np.where(mask, np.clip(b.b, box.b_min, box.b_max),
                   box.water_slowness)
    return SlownessMap(b.grid, out)


def slowness_to_sos(b: SlownessMap) -> np.ndarray:
    if np.any(b.b <= 0):
        raise InvalidArgumentError("slowness must be positive")
    return 1.0 / b.b


def upsample_nn(arr: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor replication by an integer factor per axis."""
    if int(factor) != factor or factor < 1:
        raise ConfigError("upsample factor must be an integer >= 1")
    factor = int(factor)
    return np.repeat(np.repeat(arr, factor, axis=0), factor, axis=1)


def _stack_system(rays: RaySystem, t_obs: TofTable):
    """Flatten valid rows of all L_m into one sparse matrix + TOF vector."""
    mats, ts = [], []
    for mi, L in enumerate(rays.matrices):
        rows = rays.valid[mi] & t_obs.valid[mi]
        if rows.any():
            mats.append(L[rows])
            ts.append(t_obs.t_obs[mi][rows])
    if not mats:
        raise InvalidArgumentError("no valid emitter/receiver pairs")
    return sp.vstack(mats, format="csr"), np.concatenate(ts)


def _lipschitz(L, n_iter=30, seed=0):
    """Power-method estimate of ||L^T L||_2."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(L.shape[1])
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(n_iter):
        w = L.T @ (L @ v)
        lam = np.linalg.norm(w)
        if lam == 0:
            return 1.0
        v = w / lam
    return lam


def _solve_subproblem(L, d, b_flat, lower, upper, n_iters, lip):
    """min_y 0.5||L y - d||^2 s.t. b + y in box, by accelerated projected grad."""
    y = np.zeros(L.shape[1])
    z = y.copy()
    t_acc = 1.0
    step = 1.0 / lip
    for _ in range(n_iters):
        grad = L.T @ (L @ z - d)
        y_new = np.clip(b_flat + (z - step * grad), lower, upper) - b_flat
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc ** 2))
        z = y_new + (t_acc - 1.0) / t_new * (y_new - y)
        y, t_acc = y_new, t_new
    return y


def gn_reconstruct(t_obs: TofTable, array: RingArray, b0: SlownessMap,
                   box: BoxConstraint, cfg: GnConfig = GnConfig()
                   ) -> tuple[SlownessMap, GnTrace]:
    """Proximal Gauss-Newton reconstruction of the slowness map."""
    grid = b0.grid
    mask = box.fov_mask(grid).ravel()
    lower = np.where(mask, box.b_min, box.water_slowness)
    upper = np.where(mask, box.b_max, box.water_slowness)

    b = project_box(b0, box)
    trace = GnTrace()
    n_pairs = int(t_obs.valid.sum())
    tol = cfg.tol if cfg.tol is not None else 1e-6 * np.sqrt(max(n_pairs, 1))

    for _ in range(cfg.max_outer_iters):
        rays = build_ray_system(SlownessMap(grid, b.b), array)
        trace.dropped_rays += int((~rays.valid & t_obs.valid).sum())
        L, t_vec = _stack_system(rays, t_obs)
        b_flat = b.b.ravel()
        d = t_vec - L @ b_flat
        objective = float(d @ d)
        grad = -(L.T @ d)
        g_prox = b_flat - np.clip(b_flat - grad, lower, upper)
        gp_norm = float(np.linalg.norm(g_prox))

        res_norms = [float(np.linalg.norm(t_obs.t_obs[mi][rays.valid[mi] &
                                                          t_obs.valid[mi]] -
                                          (Lm @ b_flat)[rays.valid[mi] &
                                                        t_obs.valid[mi]]))
                     for mi, Lm in enumerate(rays.matrices)]
        if gp_norm < tol:
            trace.iterations.append(GnIteration(objective, gp_norm, 0.0, 0.0,
                                                res_norms, True))
            trace.status = "converged"
            return b, trace

        lip = _lipschitz(L)
        y = _solve_subproblem(L, d, b_flat, lower, upper, cfg.inner_iters, lip)
        lam = float(grad @ y)

        mu = 1.0
        accepted = False
        for _try in range(cfg.ls_max_tries):
            b_new_flat = np.clip(b_flat + mu * y, lower, upper)
            b_new = SlownessMap(grid, b_new_flat.reshape(grid.shape))
            rays_new = build_ray_system(b_new, array)
            L_new, t_vec_new = _stack_system(rays_new, t_obs)
            d_new = t_vec_new - L_new @ b_new_flat
            obj_new = float(d_new @ d_new)
            if obj_new <= objective + mu * lam:
                accepted = True
                break
            mu *= cfg.ls_shrink
        trace.iterations.append(GnIteration(objective, gp_norm, mu, lam,
                                            res_norms, accepted))
        if not accepted:
            trace.status = "stalled"
            return b, trace
        b = b_new
    trace.status = "max_iters"
    return b, trace
