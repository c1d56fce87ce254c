"""3D air-sea environment: workspace grid, Gaussian-mixture information maps,
layered Lamb-vortex velocity fields, and obstacles.

All environment objects are immutable after construction and safe to share
across concurrent planner runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

AIR = 0
SEA = 1

# Speed caps for randomly generated fields (m/s).
MAX_WIND_SPEED = 5.0
MAX_CURRENT_SPEED = 0.4


class OutOfWorkspaceError(ValueError):
    """A query point lies outside the workspace extent."""


@dataclass(frozen=True)
class Workspace:
    """Regular 3D grid over the mission volume.

    Grid point (i, j, k) sits at (i*cell, j*cell, z_origin + k*cell) meters.
    Grid points are cell centers; the continuous workspace extends half a
    cell beyond the outermost points on every axis.
    """

    nx: int = 100
    ny: int = 100
    nz: int = 13
    cell: float = 50.0
    z_origin: float = -300.0
    sea_level_index: int = 6

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.cell <= 0:
            raise ValueError("cell size must be positive")
        if self.z_origin + self.sea_level_index * self.cell != 0.0:
            raise ValueError("sea level must fall exactly on a grid layer")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_points(self) -> int:
        return self.nx * self.ny * self.nz

    @cached_property
    def bounds_min(self) -> np.ndarray:
        h = 0.5 * self.cell
        return np.array([-h, -h, self.z_origin - h])

    @cached_property
    def bounds_max(self) -> np.ndarray:
        h = 0.5 * self.cell
        return np.array([(self.nx - 1) * self.cell + h,
                         (self.ny - 1) * self.cell + h,
                         self.z_origin + (self.nz - 1) * self.cell + h])

    def grid_to_point(self, i, j, k) -> np.ndarray:
        """Meters coordinate of grid index (i, j, k)."""
        return np.array([i * self.cell, j * self.cell,
                         self.z_origin + k * self.cell], dtype=float)

    def point_to_grid(self, point) -> tuple[int, int, int]:
        """Nearest grid index of a point in meters."""
        p = np.asarray(point, dtype=float)
        i = int(round(p[0] / self.cell))
        j = int(round(p[1] / self.cell))
        k = int(round((p[2] - self.z_origin) / self.cell))
        return i, j, k

    def layer_of(self, z: float) -> int:
        """Nearest grid layer for a vertical coordinate, clipped to range."""
        k = int(round((z - self.z_origin) / self.cell))
        return min(max(k, 0), self.nz - 1)

    def contains(self, points) -> np.ndarray:
        """Boolean membership of (..., 3) points in the workspace extent."""
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.bounds_min) & (p <= self.bounds_max), axis=-1)

    def axis_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xs = np.arange(self.nx) * self.cell
        ys = np.arange(self.ny) * self.cell
        zs = self.z_origin + np.arange(self.nz) * self.cell
        return xs, ys, zs

    def grid_points(self) -> np.ndarray:
        """All grid point coordinates as an (nx, ny, nz, 3) array."""
        xs, ys, zs = self.axis_coords()
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def layer_medium(self) -> np.ndarray:
        """Medium tag per layer: AIR above sea level, SEA at or below."""
        zs = self.z_origin + np.arange(self.nz) * self.cell
        return np.where(zs > 0.0, AIR, SEA)


@dataclass(frozen=True)
class GaussianFeature:
    """One component of the information-map Gaussian mixture."""

    mu: np.ndarray
    sigma: np.ndarray
    g: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        if self.mu.shape != (3,) or self.sigma.shape != (3, 3):
            raise ValueError("feature requires a 3-vector mu and 3x3 sigma")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        eigvals = np.linalg.eigvalsh(self.sigma)
        if eigvals.min() < -1e-9:
            raise ValueError("covariance must be positive semidefinite")
        if np.linalg.det(self.sigma) <= 0.0:
            raise ValueError("covariance must have positive determinant")
        if self.g <= 0.0:
            raise ValueError("feature weight must be positive")


def random_covariance(rng: np.random.Generator,
                      diag_range: tuple[float, float] = (0.5, 3.0)) -> np.ndarray:
    """Random symmetric positive-semidefinite 3x3 matrix.

    Builds C = B^T A B from a random positive diagonal A and an orthonormal
    basis B of a random 3x3 matrix; resamples if the random matrix is
    rank-deficient.
    """
    lo, hi = diag_range
    if lo <= 0 or hi < lo:
        raise ValueError("diag_range must be positive and ordered")
    a = np.diag(rng.uniform(lo, hi, size=3))
    while True:
        m = rng.standard_normal((3, 3))
        if np.linalg.matrix_rank(m) == 3:
            break
    q, _ = np.linalg.qr(m)
    c = q.T @ a @ q
    return 0.5 * (c + c.T)


def gaussian_info_value(point, features) -> float:
    """Unnormalized mixture information value at a point in meters."""
    p = np.asarray(point, dtype=float)
    total = 0.0
    for f in features:
        d = p - f.mu
        chol = np.linalg.cholesky(f.sigma)
        y = np.linalg.solve(chol, d)
        det = np.prod(np.diag(chol)) ** 2
        norm = f.g / np.sqrt((2.0 * np.pi) ** 3 * det)
        total += norm * np.exp(-0.5 * float(y @ y))
    return total


def _gaussian_field(features, points: np.ndarray) -> np.ndarray:
    """Vectorized mixture evaluation over an (N, 3) point array."""
    values = np.zeros(points.shape[0])
    for f in features:
        chol = np.linalg.cholesky(f.sigma)
        det = np.prod(np.diag(chol)) ** 2
        norm = f.g / np.sqrt((2.0 * np.pi) ** 3 * det)
        y = np.linalg.solve(chol, (points - f.mu).T)
        values += norm * np.exp(-0.5 * np.sum(y * y, axis=0))
    return values


def normalize_per_side(values: np.ndarray, workspace: Workspace):
    """Min-max rescale air-side and sea-side layers independently to [0, 1].

    A side whose values are all equal is left as zeros and flagged.
    Returns (normalized values, metadata dict).
    """
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    out = np.zeros_like(values, dtype=float)
    media = workspace.layer_medium()
    meta = {}
    for side, name in ((AIR, "air"), (SEA, "sea")):
        mask = media == side
        if not mask.any():
            meta[f"{name}_degenerate"] = True
            continue
        block = values[:, :, mask]
        lo, hi = block.min(), block.max()
        if hi > lo:
            out[:, :, mask] = (block - lo) / (hi - lo)
            meta[f"{name}_degenerate"] = False
        else:
            meta[f"{name}_degenerate"] = True
    return out, meta


@dataclass(frozen=True)
class InfoMap:
    """Normalized per-grid-point information values with side weights."""

    values: np.ndarray
    kappa_air: float
    kappa_sea: float
    workspace: Workspace
    metadata: dict = field(default_factory=dict)

    def kappa_weights(self) -> np.ndarray:
        """Per-grid-point weight array (nx, ny, nz)."""
        media = self.workspace.layer_medium()
        per_layer = np.where(media == AIR, self.kappa_air, self.kappa_sea)
        return np.broadcast_to(per_layer, self.values.shape).astype(float)


def build_info_map(features, workspace: Workspace,
                   kappa_air: float = 1.0, kappa_sea: float = 1.0) -> InfoMap:
    """Evaluate the Gaussian mixture on the grid and normalize per side."""
    if not any(f.g > 0 for f in features):
        raise ValueError("at least one feature with positive weight required")
    points = workspace.grid_points().reshape(-1, 3)
    raw = _gaussian_field(features, points).reshape(workspace.shape)
    values, meta = normalize_per_side(raw, workspace)
    return InfoMap(values=values, kappa_air=kappa_air, kappa_sea=kappa_sea,
                   workspace=workspace, metadata=meta)


@dataclass(frozen=True)
class LambVortex:
    """Analytic 2D swirl applied on a contiguous band of grid layers.

    If end-of-band parameters are given, strength and radius vary linearly
    in layer index across the band.
    """

    center: np.ndarray
    eta: float
    zeta: float
    layers: tuple[int, int] = (0, 0)
    eta_end: float | None = None
    zeta_end: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (2,):
            raise ValueError("vortex center must be a 2-vector")
        if self.zeta <= 0 or (self.zeta_end is not None and self.zeta_end <= 0):
            raise ValueError("vortex radius must be positive")
        if self.layers[0] > self.layers[1]:
            raise ValueError("layer band must be ordered")

    def params_at_layer(self, k: int) -> tuple[float, float]:
        lo, hi = self.layers
        if hi == lo:
            t = 0.0
        else:
            t = (k - lo) / (hi - lo)
        eta = self.eta if self.eta_end is None else self.eta + t * (self.eta_end - self.eta)
        zeta = self.zeta if self.zeta_end is None else self.zeta + t * (self.zeta_end - self.zeta)
        return eta, zeta


def _lamb_uv(dx, dy, eta, zeta):
    """Tangential (u, v) of a Lamb swirl; arrays broadcast, r=0 gives 0."""
    r2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(r2 > 0.0,
                          eta / (2.0 * np.pi) * -np.expm1(-r2 / zeta ** 2) / np.where(r2 > 0, r2, 1.0),
                          0.0)
    return -factor * dy, factor * dx


def lamb_vortex_velocity(point, vortex: LambVortex) -> tuple[float, float]:
    """Horizontal (u, v) induced by a single vortex at a 2D point."""
    p = np.asarray(point, dtype=float)
    u, v = _lamb_uv(p[0] - vortex.center[0], p[1] - vortex.center[1],
                    vortex.eta, vortex.zeta)
    return float(u), float(v)


class VelocityField:
    """Horizontal wind/current field, analytic (vortices) or gridded.

    The vertical component is zero everywhere by construction.
    """

    def __init__(self, workspace: Workspace, vortices=None,
                 u_grid: np.ndarray | None = None, v_grid: np.ndarray | None = None):
        self.workspace = workspace
        self.vortices = tuple(vortices) if vortices is not None else None
        self.u_grid = None
        self.v_grid = None
        if u_grid is not None or v_grid is not None:
            if self.vortices is not None:
                raise ValueError("field is either analytic or gridded, not both")
            if u_grid.shape != workspace.shape or v_grid.shape != workspace.shape:
                raise ValueError("velocity grids must match the workspace shape")
            self.u_grid = np.asarray(u_grid, dtype=float)
            self.v_grid = np.asarray(v_grid, dtype=float)
            from scipy.interpolate import RegularGridInterpolator
            coords = workspace.axis_coords()
            self._interp_u = RegularGridInterpolator(coords, self.u_grid)
            self._interp_v = RegularGridInterpolator(coords, self.v_grid)
        elif self.vortices is None:
            self.vortices = ()

    @property
    def analytic(self) -> bool:
        return self.vortices is not None

    def at(self, points) -> np.ndarray:
        """(u, v, w) at (N, 3) points inside the workspace; w is 0."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.workspace.contains(p)
        if not np.all(inside):
            bad = p[~inside][0]
            raise OutOfWorkspaceError(f"velocity query outside workspace: {bad}")
        out = np.zeros_like(p)
        if self.analytic:
            layers = np.clip(np.round(
                (p[:, 2] - self.workspace.z_origin) / self.workspace.cell
            ).astype(int), 0, self.workspace.nz - 1)
            for vortex in self.vortices:
                lo, hi = vortex.layers
                mask = (layers >= lo) & (layers <= hi)
                if not mask.any():
                    continue
                ks = layers[mask]
                if vortex.eta_end is None and vortex.zeta_end is None:
                    eta, zeta = vortex.eta, vortex.zeta
                else:
                    t = np.zeros(ks.shape) if hi == lo else (ks - lo) / (hi - lo)
                    eta = (vortex.eta if vortex.eta_end is None
                           else vortex.eta + t * (vortex.eta_end - vortex.eta))
                    zeta = (vortex.zeta if vortex.zeta_end is None
                            else vortex.zeta + t * (vortex.zeta_end - vortex.zeta))
                u, v = _lamb_uv(p[mask, 0] - vortex.center[0],
                                p[mask, 1] - vortex.center[1], eta, zeta)
                out[mask, 0] += u
                out[mask, 1] += v
        else:
            q = np.clip(p, self._grid_min(), self._grid_max())
            out[:, 0] = self._interp_u(q)
            out[:, 1] = self._interp_v(q)
        return out

    def _grid_min(self):
        xs, ys, zs = self.workspace.axis_coords()
        return np.array([xs[0], ys[0], zs[0]])

    def _grid_max(self):
        xs, ys, zs = self.workspace.axis_coords()
        return np.array([xs[-1], ys[-1], zs[-1]])

    def grid_speeds(self) -> np.ndarray:
        """Speed magnitude at every grid point, (nx, ny, nz)."""
        pts = self.workspace.grid_points().reshape(-1, 3)
        vel = self.at(pts)
        return np.hypot(vel[:, 0], vel[:, 1]).reshape(self.workspace.shape)


def velocity_at(point, velocity_field: VelocityField) -> np.ndarray:
    """(u, v, w) in m/s at a single point; raises outside the workspace."""
    return velocity_field.at(np.asarray(point, dtype=float))[0]


class ObstacleSet:
    """Axis-aligned closed boxes plus an optional voxel mask."""

    def __init__(self, boxes=(), voxel_mask: np.ndarray | None = None,
                 workspace: Workspace | None = None):
        self.boxes = [(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
                      for lo, hi in boxes]
        for lo, hi in self.boxes:
            if np.any(lo > hi):
                raise ValueError("box min corner must not exceed max corner")
        self.voxel_mask = None
        self.workspace = workspace
        if voxel_mask is not None:
            if workspace is None:
                raise ValueError("a voxel mask requires a workspace")
            if voxel_mask.shape != workspace.shape:
                raise ValueError("voxel mask must match the workspace shape")
            self.voxel_mask = np.asarray(voxel_mask, dtype=bool)

    def __len__(self):
        n = len(self.boxes)
        if self.voxel_mask is not None:
            n += int(self.voxel_mask.sum())
        return n

    def contains(self, points) -> np.ndarray:
        """Boolean obstruction per point; boundary counts as obstructed."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        hit = np.zeros(p.shape[0], dtype=bool)
        for lo, hi in self.boxes:
            hit |= np.all((p >= lo) & (p <= hi), axis=1)
        if self.voxel_mask is not None:
            ws = self.workspace
            idx = np.round(np.column_stack([
                p[:, 0] / ws.cell,
                p[:, 1] / ws.cell,
                (p[:, 2] - ws.z_origin) / ws.cell,
            ])).astype(int)
            valid = np.all((idx >= 0) & (idx < np.array(ws.shape)), axis=1)
            sel = np.where(valid)[0]
            if sel.size:
                hit[sel] |= self.voxel_mask[idx[sel, 0], idx[sel, 1], idx[sel, 2]]
        return hit


def is_obstructed(point, obstacles: ObstacleSet) -> bool:
    """True iff the point lies inside any obstacle primitive."""
    return bool(obstacles.contains(np.asarray(point, dtype=float))[0])


@dataclass(frozen=True)
class Environment:
    """Immutable bundle of workspace, information map, velocities, obstacles."""

    workspace: Workspace
    info_map: InfoMap
    velocity_field: VelocityField
    obstacles: ObstacleSet
    features: tuple = ()
    vortices: tuple = ()
    seed: int | None = None


@dataclass(frozen=True)
class EnvGenConfig:
    """Ranges for random environment generation."""

    feature_count: tuple[int, int] = (3, 6)
    vortex_count: tuple[int, int] = (2, 5)
    kappa_air: float = 1.0
    kappa_sea: float = 1.0
    max_wind: float = MAX_WIND_SPEED
    max_current: float = MAX_CURRENT_SPEED
    workspace: Workspace = field(default_factory=Workspace)


def _rescale_vortices(vortices, workspace, layer_mask, cap):
    """Scale vortex strengths so grid speeds on the masked layers stay under cap."""
    if not vortices:
        return []
    trial = VelocityField(workspace, vortices=vortices)
    speeds = trial.grid_speeds()[:, :, layer_mask]
    peak = speeds.max() if speeds.size else 0.0
    if peak <= 0.0:
        return list(vortices)
    scale = 0.95 * cap / peak
    return [LambVortex(center=v.center, eta=v.eta * scale, zeta=v.zeta,
                       layers=v.layers,
                       eta_end=None if v.eta_end is None else v.eta_end * scale,
                       zeta_end=v.zeta_end)
            for v in vortices]


def generate_random_environment(seed: int, config: EnvGenConfig | None = None) -> Environment:
    """Deterministic random environment: Gaussian features plus layered vortices.

    Wind speeds stay below the air cap and current speeds below the sea cap
    at every grid point (vortex strengths are rescaled per side).
    """
    config = config or EnvGenConfig()
    ws = config.workspace
    rng = np.random.default_rng(seed)
    xs, ys, zs = ws.axis_coords()
    x_hi, y_hi = xs[-1], ys[-1]
    z_top = zs[-1]

    n_feat = int(rng.integers(config.feature_count[0], config.feature_count[1] + 1))
    features = []
    for b in range(n_feat):
        side = AIR if b % 2 == 0 else SEA  # guarantee both sides populated
        if side == AIR and z_top > 0:
            z = rng.uniform(0.25 * z_top, z_top)
        else:
            z = rng.uniform(ws.z_origin, min(0.0, 0.25 * ws.z_origin))
        mu = np.array([rng.uniform(0, x_hi), rng.uniform(0, y_hi), z])
        sigma = random_covariance(rng, diag_range=((2 * ws.cell) ** 2, (8 * ws.cell) ** 2))
        features.append(GaussianFeature(mu=mu, sigma=sigma, g=rng.uniform(0.5, 1.5)))

    media = ws.layer_medium()
    air_layers = np.where(media == AIR)[0]
    sea_layers = np.where(media == SEA)[0]
    vortices = []
    for layer_set, cap in ((air_layers, config.max_wind), (sea_layers, config.max_current)):
        if layer_set.size == 0:
            continue
        count = int(rng.integers(config.vortex_count[0], config.vortex_count[1] + 1))
        side_vortices = []
        for _ in range(count):
            lo = int(rng.integers(layer_set[0], layer_set[-1] + 1))
            hi = int(rng.integers(lo, layer_set[-1] + 1))
            strength = rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])
            side_vortices.append(LambVortex(
                center=np.array([rng.uniform(0, x_hi), rng.uniform(0, y_hi)]),
                eta=strength,
                zeta=rng.uniform(6 * ws.cell, 20 * ws.cell),
                layers=(lo, hi),
                eta_end=strength * rng.uniform(0.3, 1.0),
            ))
        vortices.extend(_rescale_vortices(side_vortices, ws, media == media[layer_set[0]], cap))

    info_map = build_info_map(features, ws, config.kappa_air, config.kappa_sea)
    return Environment(
        workspace=ws,
        info_map=info_map,
        velocity_field=VelocityField(ws, vortices=vortices),
        obstacles=ObstacleSet(),
        features=tuple(features),
        vortices=tuple(vortices),
        seed=seed,
    )


def environment_from_config(cfg: dict) -> Environment:
    """Build an environment from a parsed JSON config dict.

    See README for the schema: grid, kappa weights, explicit or random
    feature/vortex specs, and obstacle boxes.
    """
    grid = cfg.get("grid", {})
    ws = Workspace(
        nx=grid.get("nx", 100), ny=grid.get("ny", 100), nz=grid.get("nz", 13),
        cell=grid.get("cell", 50.0), z_origin=grid.get("z_origin", -300.0),
        sea_level_index=grid.get("sea_level_index", 6),
    )
    kappa_air = cfg.get("kappa_air", 1.0)
    kappa_sea = cfg.get("kappa_sea", 1.0)
    seed = cfg.get("seed", 0)

    if isinstance(cfg.get("features"), dict) or "features" not in cfg:
        rand = cfg.get("features", {})
        vrand = cfg.get("vortices", {}) if isinstance(cfg.get("vortices"), dict) else {}
        gen = EnvGenConfig(
            feature_count=tuple(rand.get("count_range", (3, 6))),
            vortex_count=tuple(vrand.get("count_range", (2, 5))),
            kappa_air=kappa_air, kappa_sea=kappa_sea, workspace=ws,
        )
        env = generate_random_environment(seed, gen)
    else:
        features = [GaussianFeature(mu=np.array(f["mu"]),
                                    sigma=np.array(f["sigma"]),
                                    g=f.get("g", 1.0))
                    for f in cfg["features"]]
        vortices = [LambVortex(center=np.array(v["center"]), eta=v["eta"],
                               zeta=v["zeta"], layers=tuple(v.get("layers", (0, ws.nz - 1))),
                               eta_end=v.get("eta_end"), zeta_end=v.get("zeta_end"))
                    for v in cfg.get("vortices", [])]
        env = Environment(
            workspace=ws,
            info_map=build_info_map(features, ws, kappa_air, kappa_sea),
            velocity_field=VelocityField(ws, vortices=vortices),
            obstacles=ObstacleSet(),
            features=tuple(features),
            vortices=tuple(vortices),
            seed=seed,
        )
    boxes = [(b["min"], b["max"]) for b in cfg.get("obstacles", [])]
    if boxes:
        env = Environment(
            workspace=env.workspace, info_map=env.info_map,
            velocity_field=env.velocity_field,
            obstacles=ObstacleSet(boxes=boxes),
            features=env.features, vortices=env.vortices, seed=env.seed,
        )
    return env


def load_environment_config(path) -> Environment:
    with open(path) as fh:
        return environment_from_config(json.load(fh))
