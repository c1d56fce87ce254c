"""Smoothed trajectories and full-path evaluation: collision freedom,
collected information, energy, and mission time for a candidate path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.spatial import cKDTree

from .environment import AIR, SEA, Environment, InfoMap, ObstacleSet
from .vehicle import SensorParams, VehicleParams, synthesize_speed_many

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

MEDIUM_NAMES = {AIR: "air", SEA: "sea"}


def bernstein_basis(n: int, degree: int, s: float) -> float:
    """Bernstein polynomial B_{n,degree}(s)."""
    if not 0 <= n <= degree:
        raise ValueError("basis index out of range")
    return math.comb(degree, n) * s ** n * (1.0 - s) ** (degree - n)


@dataclass(frozen=True)
class SmoothPath:
    """Discretized smooth trajectory with per-sample medium tags."""

    positions: np.ndarray      # (S, 3) meters
    media: np.ndarray          # (S,) AIR/SEA per sample
    cum_length: np.ndarray     # (S,) meters
    transitions: int

    @property
    def length(self) -> float:
        return float(self.cum_length[-1])

    def __len__(self):
        return self.positions.shape[0]


def _spline_through(nodes: np.ndarray) -> BSpline:
    """Clamped uniform B-spline with the nodes as control points.

    Cubic for four or more nodes; degree drops so two or three nodes give
    a straight segment or a quadratic arc. Endpoints are interpolated.
    """
    n = nodes.shape[0]
    k = min(3, n - 1)
    interior = np.linspace(0.0, 1.0, n - k + 1)[1:-1]
    knots = np.concatenate([np.zeros(k + 1), interior, np.ones(k + 1)])
    return BSpline(knots, nodes, k)


def _split_at_surface(positions: np.ndarray) -> np.ndarray:
    """Insert exact z=0 crossing points between consecutive samples."""
    z = positions[:, 2]
    above = z > 0.0
    cross = np.flatnonzero((above[:-1] != above[1:]) & (z[:-1] != 0.0) & (z[1:] != 0.0))
    if cross.size == 0:
        return positions
    pieces = []
    prev = 0
    for i in cross:
        t = z[i] / (z[i] - z[i + 1])
        surface = positions[i] + t * (positions[i + 1] - positions[i])
        surface[2] = 0.0
        pieces.append(positions[prev:i + 1])
        pieces.append(surface[None, :])
        prev = i + 1
    pieces.append(positions[prev:])
    return np.concatenate(pieces, axis=0)


def smooth_path(nodes, ds_max: float) -> SmoothPath:
    """Smooth a control polyline and discretize at spacing <= ds_max.

    Samples crossing the sea surface are split exactly at z = 0; each
    sample carries a medium tag (air above the surface, sea at or below).
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if nodes.shape[0] < 2:
        raise ValueError("a control polyline needs at least 2 nodes")
    poly_len = float(np.sum(np.linalg.norm(np.diff(nodes, axis=0), axis=1)))
    if poly_len == 0.0:
        positions = nodes[[0, -1]].copy()
    else:
        spline = _spline_through(nodes)
        n_samples = max(2, int(math.ceil(2.0 * poly_len / ds_max)) + 1)
        s = np.linspace(0.0, 1.0, n_samples)
        for _ in range(24):
            positions = spline(s)
            seg = np.linalg.norm(np.diff(positions, axis=0), axis=1)
            if seg.max() <= ds_max:
                break
            # Uniform parameter steps give uneven spacing when the control
            # points cluster; redistribute the parameters by arc length.
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            m = max(int(math.ceil(cum[-1] / (0.9 * ds_max))) + 1,
                    len(s) + len(s) // 2)
            s = np.interp(np.linspace(0.0, cum[-1], m), cum, s)
    positions = _split_at_surface(positions)
    media = np.where(positions[:, 2] > 0.0, AIR, SEA)
    seg = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    transitions = int(np.count_nonzero(media[:-1] != media[1:]))
    return SmoothPath(positions=positions, media=media, cum_length=cum,
                      transitions=transitions)


def collision_free(path: SmoothPath, obstacles: ObstacleSet) -> bool:
    """True iff no path sample is obstructed."""
    if len(obstacles) == 0:
        return True
    return not obstacles.contains(path.positions).any()


def new_measured_array(im: InfoMap) -> np.ndarray:
    """Fresh per-path accumulator, one entry per grid point."""
    return np.zeros(im.values.shape)


def _sensing_offsets(workspace, d_max: float) -> np.ndarray:
    r = int(math.ceil(d_max / workspace.cell))
    rng = np.arange(-r, r + 1)
    ox, oy, oz = np.meshgrid(rng, rng, rng, indexing="ij")
    offsets = np.column_stack([ox.ravel(), oy.ravel(), oz.ravel()])
    # A sample lies within half a cell of its nearest grid point, so offsets
    # farther than d_max plus that half-diagonal can never be in range.
    reach = d_max / workspace.cell + 0.5 * math.sqrt(3.0)
    return offsets[np.sum(offsets * offsets, axis=1) <= reach * reach]


def _base_cells(positions: np.ndarray, ws) -> np.ndarray:
    """Nearest grid index of every sample, one (ix, iy, iz) row each."""
    base = np.empty((positions.shape[0], 3), dtype=np.int64)
    base[:, 0] = np.round(positions[:, 0] / ws.cell)
    base[:, 1] = np.round(positions[:, 1] / ws.cell)
    base[:, 2] = np.round((positions[:, 2] - ws.z_origin) / ws.cell)
    return base


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _accumulate_pairs(base, positions, offsets, nx, ny, nz, cell, z_origin,
                          d_max, sigma, a_dmax, values_flat, measured_flat,
                          d2_scratch, seen, touched):
        """Compiled core of the measurement model.

        Enumerates every (sample, offset) pair, keeps the squared distance
        from each candidate grid point to its nearest sample in
        `d2_scratch`, then max-updates `measured_flat` for points within
        sensing range. The nearest sample of any in-range point lies within
        the offsets ball of that sample's cell, so the pair sweep finds the
        exact nearest-sample distance for every hit. `seen` and
        `d2_scratch` are persistent scratch; `seen` is restored to all
        False. Returns the hit count; hit indices fill `touched[:count]`.
        """
        d_max2 = d_max * d_max
        count = 0
        for i in range(base.shape[0]):
            for j in range(offsets.shape[0]):
                gx = base[i, 0] + offsets[j, 0]
                if gx < 0 or gx >= nx:
                    continue
                gy = base[i, 1] + offsets[j, 1]
                if gy < 0 or gy >= ny:
                    continue
                gz = base[i, 2] + offsets[j, 2]
                if gz < 0 or gz >= nz:
                    continue
                lin = (gx * ny + gy) * nz + gz
                dx = positions[i, 0] - gx * cell
                dy = positions[i, 1] - gy * cell
                dz = positions[i, 2] - (gz * cell + z_origin)
                d2 = dx * dx + dy * dy + dz * dz
                if not seen[lin]:
                    seen[lin] = True
                    d2_scratch[lin] = d2
                    touched[count] = lin
                    count += 1
                elif d2 < d2_scratch[lin]:
                    d2_scratch[lin] = d2
        n_hit = 0
        for k in range(count):
            lin = touched[k]
            seen[lin] = False
            d2 = d2_scratch[lin]
            if d2 <= d_max2:
                att = a_dmax * math.exp(-sigma * (d2 / d_max2))
                reading = values_flat[lin] * att
                if reading > measured_flat[lin]:
                    measured_flat[lin] = reading
                touched[n_hit] = lin
                n_hit += 1
        return n_hit


def _accumulate(positions: np.ndarray, im: InfoMap, sensor: SensorParams,
                measured_flat: np.ndarray, offsets: np.ndarray,
                seen: np.ndarray | None = None) -> np.ndarray:
    """Max-update the flattened measured array; returns touched flat indices.

    The attenuation is monotone in distance, so the best reading a grid
    point ever gets comes from its nearest path sample: one KD-tree query
    per candidate point replaces the full sample-by-point product. `seen`
    is an optional all-False boolean scratch of n_points used to dedupe
    candidate cells without sorting; it is restored before returning.
    """
    ws = im.workspace
    base = _base_cells(positions, ws)
    cells = np.unique(base[:, 0] * (ws.ny * ws.nz) + base[:, 1] * ws.nz + base[:, 2])
    cx, rem = np.divmod(cells, ws.ny * ws.nz)
    cy, cz = np.divmod(rem, ws.nz)
    ix = (cx[:, None] + offsets[None, :, 0]).ravel()
    iy = (cy[:, None] + offsets[None, :, 1]).ravel()
    iz = (cz[:, None] + offsets[None, :, 2]).ravel()
    valid = ((ix >= 0) & (ix < ws.nx) & (iy >= 0) & (iy < ws.ny)
             & (iz >= 0) & (iz < ws.nz))
    lin = (ix[valid] * ws.ny + iy[valid]) * ws.nz + iz[valid]
    if seen is None:
        lin = np.unique(lin)
    else:
        seen[lin] = True
        lin = np.flatnonzero(seen)
        seen[lin] = False
    gx, rem = np.divmod(lin, ws.ny * ws.nz)
    gy, gz = np.divmod(rem, ws.nz)
    grid_xyz = np.empty((lin.shape[0], 3))
    grid_xyz[:, 0] = gx * ws.cell
    grid_xyz[:, 1] = gy * ws.cell
    grid_xyz[:, 2] = gz * ws.cell + ws.z_origin
    tree = cKDTree(positions, balanced_tree=False, compact_nodes=False)
    dist, _ = tree.query(grid_xyz, workers=-1,
                         distance_upper_bound=sensor.d_max * (1.0 + 1e-12) + 1e-9)
    hit = dist <= sensor.d_max
    if not hit.any():
        return np.empty(0, dtype=np.int64)
    uniq = lin[hit]
    att = sensor.a_dmax * np.exp(-sensor.sigma * (dist[hit] / sensor.d_max) ** 2)
    readings = im.values.ravel()[uniq] * att
    measured_flat[uniq] = np.maximum(measured_flat[uniq], readings)
    return uniq


def accumulate_information(path: SmoothPath, im: InfoMap, sensor: SensorParams,
                           measured: np.ndarray) -> np.ndarray:
    """Max-update the measured array with readings along the path.

    For every path sample and every grid point within the sensing range,
    the stored value is replaced when the new reading exceeds it.
    """
    if measured.shape != im.values.shape:
        raise ValueError("measured array must match the information map shape")
    if len(path) == 0:
        return measured
    flat = measured.ravel()
    _accumulate(path.positions, im, sensor, flat, _sensing_offsets(im.workspace, sensor.d_max))
    return measured


def total_information(measured: np.ndarray, im: InfoMap) -> float:
    """Weighted sum of collected values over all grid points."""
    return float(np.dot(im.kappa_weights().ravel(), measured.ravel()))


@dataclass(frozen=True)
class Task:
    """Mission endpoints and time budget (energy lives in VehicleParams)."""

    q_init: np.ndarray
    q_final: np.ndarray
    t_max: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "q_init", np.asarray(self.q_init, dtype=float))
        object.__setattr__(self, "q_final", np.asarray(self.q_final, dtype=float))


@dataclass(frozen=True)
class FitnessResult:
    """Objective value and budget usage of one candidate path."""

    ig: float
    e: float
    t: float
    path: SmoothPath
    feasible: bool


class FitnessEvaluator:
    """Evaluates full candidate paths against one immutable environment.

    Holds a private measured buffer, so each concurrent planner run must
    own its evaluator.
    """

    def __init__(self, env: Environment, vehicle: VehicleParams, task: Task,
                 ds_max: float | None = None):
        self.env = env
        self.vehicle = vehicle
        self.task = task
        self.ds_max = ds_max if ds_max is not None else env.workspace.cell / 2.0
        self._offsets = np.ascontiguousarray(
            _sensing_offsets(env.workspace, vehicle.sensor.d_max))
        self._measured = np.zeros(env.workspace.n_points)
        self._kappa_flat = env.info_map.kappa_weights().ravel().copy()
        self._values_flat = np.ascontiguousarray(env.info_map.values.ravel(),
                                                 dtype=np.float64)
        self._seen = np.zeros(env.workspace.n_points, dtype=bool)
        self._d2 = np.empty(env.workspace.n_points)
        self._touched = np.empty(0, dtype=np.int64)

    def evaluate(self, polyline) -> FitnessResult:
        """Smooth and score the control polyline (endpoints included)."""
        polyline = np.atleast_2d(np.asarray(polyline, dtype=float))
        if not np.all(self.env.workspace.contains(polyline)):
            raise ValueError("control polyline leaves the workspace")
        path = smooth_path(polyline, self.ds_max)
        # The spline stays inside the polyline's bounding box, so any
        # excursion past the workspace faces is pure roundoff; clip it.
        ws = self.env.workspace
        np.clip(path.positions, ws.bounds_min, ws.bounds_max,
                out=path.positions)
        ok_collision = collision_free(path, self.env.obstacles)
        t_total, e_total, reachable = self._kinematics(path)
        self._measured[self._touched] = 0.0
        sensor = self.vehicle.sensor
        if _HAVE_NUMBA:
            pos = np.ascontiguousarray(path.positions)
            buf = np.empty(pos.shape[0] * self._offsets.shape[0],
                           dtype=np.int64)
            n_hit = _accumulate_pairs(
                _base_cells(pos, ws), pos, self._offsets,
                ws.nx, ws.ny, ws.nz, ws.cell, ws.z_origin,
                sensor.d_max, sensor.sigma, sensor.a_dmax,
                self._values_flat, self._measured, self._d2, self._seen, buf)
            touched = buf[:n_hit].copy()
        else:
            touched = _accumulate(path.positions, self.env.info_map,
                                  sensor, self._measured,
                                  self._offsets, seen=self._seen)
        self._touched = touched
        ig = float(self._kappa_flat[touched] @ self._measured[touched])
        feasible = (reachable and ok_collision
                    and e_total <= self.vehicle.e_max
                    and t_total <= self.task.t_max)
        return FitnessResult(ig=ig, e=e_total, t=t_total, path=path,
                             feasible=feasible)

    def _kinematics(self, path: SmoothPath):
        """Total time/energy along the path including transition costs.

        On an unreachable segment the totals cover the path up to the
        failure and reachable=False is returned.
        """
        pos = path.positions
        seg = np.diff(pos, axis=0)
        lengths = np.linalg.norm(seg, axis=1)
        moving = lengths > 0.0
        n_seg = lengths.size
        times = np.zeros(n_seg)
        energies = np.zeros(n_seg)
        feasible = np.ones(n_seg, dtype=bool)
        if moving.any():
            mids = 0.5 * (pos[:-1] + pos[1:])[moving]
            media = np.where(mids[:, 2] > 0.0, AIR, SEA)
            v_hauv = np.where(media == AIR, self.vehicle.v_air, self.vehicle.v_sea)
            v_c = self.env.velocity_field.at(mids)
            dirs = seg[moving] / lengths[moving, None]
            v_abs, ok = synthesize_speed_many(dirs, v_c, v_hauv)
            t = np.zeros(ok.shape)
            t[ok] = lengths[moving][ok] / v_abs[ok]
            p_med = np.where(media == AIR, self.vehicle.p_air, self.vehicle.p_sea)
            times[moving] = t
            energies[moving] = p_med * t
            feasible[moving] = ok
        reachable = bool(feasible.all())
        limit = n_seg if reachable else int(np.flatnonzero(~feasible)[0])
        boundaries = path.media[:-1] != path.media[1:]
        n_switch = int(np.count_nonzero(boundaries[:limit]))
        t_total = float(times[:limit].sum()) + n_switch * self.vehicle.t_switch
        e_total = float(energies[:limit].sum()) + n_switch * self.vehicle.e_switch
        return t_total, e_total, reachable


def ancestor_chain(tree, node_index: int) -> np.ndarray:
    """Positions from the root down to the given node, one row per node.

    Tree nodes must expose `.position` and `.parent` (None at the root).
    """
    chain = []
    i = node_index
    while i is not None:
        chain.append(tree[i].position)
        i = tree[i].parent
    return np.array(chain[::-1], dtype=float)


def evaluate_fitness(q_new, q_parent_candidate: int, tree, task: Task,
                     env: Environment, vehicle: VehicleParams,
                     ds_max: float | None = None) -> FitnessResult:
    """Score the path root -> ... -> candidate -> q_new -> q_final.

    Convenience wrapper; planners hold a FitnessEvaluator directly.
    """
    chain = ancestor_chain(tree, q_parent_candidate)
    polyline = np.vstack([chain, np.asarray(q_new, float), task.q_final])
    return FitnessEvaluator(env, vehicle, task, ds_max=ds_max).evaluate(polyline)
