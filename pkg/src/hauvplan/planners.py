"""The six path optimizers: the adaptive-sampling-tree family (RAST*-I/E,
RAST*-I, RAST, RRST*), the information-gathering tree (RIGT), and PSO.

A planner run is single-threaded over its mutable tree or swarm; multiple
runs can proceed concurrently against the same shared environment, each
with its own seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .environment import Environment, InfoMap
from .path import FitnessEvaluator, SmoothPath, Task
from .vehicle import VehicleParams

VARIANTS = ("rast-ie", "rast-i", "rast", "rrst")
ALGORITHMS = VARIANTS + ("rigt", "pso")


@dataclass
class TreeNode:
    """One tree vertex with full-path statistics of its best path."""

    position: np.ndarray
    parent: int | None
    ig: float = 0.0
    e: float = 0.0
    t: float = 0.0
    chain: np.ndarray | None = None  # root..self positions, cached


@dataclass(frozen=True)
class PlannerConfig:
    """Tree-planner parameters; delta and r are in meters."""

    m: int = 10
    delta: float = 250.0
    r: float = 500.0
    max_it: int = 5000
    it_stop: int = 200
    variant: str = "rast-ie"
    seed: int = 0
    collision_step: float = 25.0
    ds_max: float | None = None
    max_neighbors: int | None = 12

    def __post_init__(self):
        if self.m < 1 or self.delta <= 0 or self.r < self.delta:
            raise ValueError("require m >= 1 and r >= delta > 0")
        if self.max_neighbors is not None and self.max_neighbors < 1:
            raise ValueError("max_neighbors must be positive when set")
        if self.it_stop >= self.max_it:
            raise ValueError("it_stop must be below max_it")
        if self.variant not in VARIANTS + ("rigt",):
            raise ValueError(f"unknown variant {self.variant!r}")

    @classmethod
    def from_grid_units(cls, workspace, delta_cells: float = 5.0,
                        r_cells: float = 10.0, **kwargs) -> "PlannerConfig":
        return cls(delta=delta_cells * workspace.cell,
                   r=r_cells * workspace.cell, **kwargs)


@dataclass(frozen=True)
class PsoConfig:
    """Swarm parameters; v_max is per component in meters per step."""

    k: int = 50
    n_control: int = 5
    c1: float = 1.0
    c2: float = 1.0
    w0: float = 1.0
    w_damp: float = 0.99
    v_max: float = 250.0
    max_it: int = 5000
    it_stop: int = 200
    seed: int = 0
    init_attempts: int = 2000
    ds_max: float | None = None


@dataclass(frozen=True)
class PlannerResult:
    """Best path found plus the per-iteration convergence series."""

    best_path: SmoothPath | None
    best_ig: float
    bestsol: np.ndarray
    iterations: int
    wall_time: float


class PsoInitError(RuntimeError):
    """Swarm initialization failed to find feasible particles."""


class SpatialHash:
    """Uniform-grid index over inserted points for radius queries."""

    def __init__(self, cell: float):
        self.cell = cell
        self.buckets: dict[tuple[int, int, int], list[int]] = {}
        self.points: list[np.ndarray] = []

    def _key(self, p) -> tuple[int, int, int]:
        return (int(math.floor(p[0] / self.cell)),
                int(math.floor(p[1] / self.cell)),
                int(math.floor(p[2] / self.cell)))

    def insert(self, p: np.ndarray) -> int:
        idx = len(self.points)
        self.points.append(np.asarray(p, dtype=float))
        self.buckets.setdefault(self._key(p), []).append(idx)
        return idx

    def _candidates(self, p, radius: float):
        span = int(math.ceil(radius / self.cell))
        kx, ky, kz = self._key(p)
        out = []
        for dx in range(-span, span + 1):
            for dy in range(-span, span + 1):
                for dz in range(-span, span + 1):
                    out.extend(self.buckets.get((kx + dx, ky + dy, kz + dz), ()))
        return out

    def query_radius(self, p, radius: float) -> list[int]:
        """Indices of points with distance < radius, ascending by index."""
        p = np.asarray(p, dtype=float)
        cand = self._candidates(p, radius)
        hits = [i for i in cand if np.linalg.norm(self.points[i] - p) < radius]
        hits.sort()
        return hits

    def nearest(self, p) -> int:
        """Index of the closest point; lowest index breaks ties."""
        if not self.points:
            raise ValueError("hash is empty")
        p = np.asarray(p, dtype=float)
        span = 1
        max_span = 64
        while True:
            cand = self._candidates(p, span * self.cell)
            if cand:
                dists = [np.linalg.norm(self.points[i] - p) for i in cand]
                best = min(range(len(cand)), key=lambda j: (dists[j], cand[j]))
                # a closer point may hide in an unvisited shell
                if dists[best] <= span * self.cell or span >= max_span:
                    return cand[best]
            if span >= max_span:
                return self._nearest_scan(p)
            span *= 2

    def _nearest_scan(self, p) -> int:
        pts = np.asarray(self.points)
        return int(np.argmin(np.linalg.norm(pts - p, axis=1)))


def tournament_sample(im: InfoMap, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m uniform grid points and keep the most informative one.

    Ties keep the first-drawn point (strict improvement rule).
    """
    if m < 1:
        raise ValueError("tournament size must be >= 1")
    ws = im.workspace
    ii = rng.integers(0, ws.nx, size=m)
    jj = rng.integers(0, ws.ny, size=m)
    kk = rng.integers(0, ws.nz, size=m)
    values = im.values[ii, jj, kk]
    best = 0
    for a in range(1, m):
        if values[a] > values[best]:
            best = a
    return ws.grid_to_point(ii[best], jj[best], kk[best])


def nearest(q_ts, vertex) -> int:
    """Index of the Euclidean-closest node; lowest index breaks ties."""
    if len(vertex) == 0:
        raise ValueError("vertex set is empty")
    pts = np.asarray([v.position if isinstance(v, TreeNode) else v for v in vertex])
    d = np.linalg.norm(pts - np.asarray(q_ts, float), axis=1)
    return int(np.argmin(d))


def steer(q_nearest, q_ts, delta: float) -> np.ndarray:
    """Move from q_nearest toward q_ts, at most delta."""
    if delta <= 0:
        raise ValueError("step length must be positive")
    q_nearest = np.asarray(q_nearest, dtype=float)
    q_ts = np.asarray(q_ts, dtype=float)
    d = float(np.linalg.norm(q_ts - q_nearest))
    if d > delta:
        return q_nearest + (q_ts - q_nearest) * (delta / d)
    return q_ts.copy()


def near(vertex, q_new, r: float) -> list[int]:
    """Indices of all nodes with distance < r from q_new."""
    if r <= 0:
        raise ValueError("radius must be positive")
    q = np.asarray(q_new, dtype=float)
    out = []
    for i, v in enumerate(vertex):
        p = v.position if isinstance(v, TreeNode) else np.asarray(v, float)
        if np.linalg.norm(p - q) < r:
            out.append(i)
    return out


def prune_dominated(q_new: TreeNode, q_m: TreeNode) -> bool:
    """True iff q_new is strictly worse on information, energy, and time."""
    return q_new.ig < q_m.ig and q_new.e > q_m.e and q_new.t > q_m.t


def _segment_collision_free(p_a, p_b, env: Environment, step: float) -> bool:
    """Sampled straight-segment collision check."""
    if len(env.obstacles) == 0:
        return True
    p_a = np.asarray(p_a, float)
    p_b = np.asarray(p_b, float)
    length = float(np.linalg.norm(p_b - p_a))
    n = max(2, int(math.ceil(length / step)) + 1)
    pts = p_a + np.linspace(0.0, 1.0, n)[:, None] * (p_b - p_a)
    return not env.obstacles.contains(pts).any()


def _should_stop(bestsol: list[float], it: int, it_stop: int) -> bool:
    return it > it_stop and bestsol[-1] - bestsol[-1 - it_stop] == 0.0


def _result(best, bestsol, iterations, t0) -> PlannerResult:
    path, ig = (best.path, best.ig) if best is not None else (None, 0.0)
    return PlannerResult(best_path=path, best_ig=ig,
                         bestsol=np.asarray(bestsol, dtype=float),
                         iterations=iterations, wall_time=time.perf_counter() - t0)


def _cap_by_distance(indices, nodes, q, cap):
    """Keep the `cap` indices whose nodes lie closest to q (stable order)."""
    if cap is None or len(indices) <= cap:
        return indices
    d2 = np.array([np.sum((nodes[i].position - q) ** 2) for i in indices])
    order = np.argsort(d2, kind="stable")[:cap]
    return [indices[int(j)] for j in order]


def _capped_neighbors(hash_index, nodes, q, config):
    return _cap_by_distance(hash_index.query_radius(q, config.r), nodes, q,
                            config.max_neighbors)


def plan_rast_family(env: Environment, vehicle: VehicleParams, task: Task,
                     config: PlannerConfig) -> PlannerResult:
    """Adaptive-sampling-tree planners: rast-ie, rast-i, rast, rrst.

    rast-ie scores parent candidates by information per unit energy and
    rast-i by raw information; rrst forces uniform sampling (m = 1); rast
    skips the neighbor search and parents new nodes to the nearest node.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    evaluator = FitnessEvaluator(env, vehicle, task, ds_max=config.ds_max)
    m = 1 if config.variant == "rrst" else config.m

    root = TreeNode(position=task.q_init.copy(), parent=None,
                    chain=task.q_init[None, :].copy())
    nodes = [root]
    hash_index = SpatialHash(cell=config.r)
    hash_index.insert(root.position)

    best = None
    best_ig = 0.0
    bestsol: list[float] = []
    it = 0
    for it in range(1, config.max_it + 1):
        q_ts = tournament_sample(env.info_map, m, rng)
        i_nearest = hash_index.nearest(q_ts)
        q_new = steer(nodes[i_nearest].position, q_ts, config.delta)
        if (not env.obstacles.contains(q_new)[0]
                and _segment_collision_free(nodes[i_nearest].position, q_new,
                                            env, config.collision_step)):
            chosen = None
            if config.variant == "rast":
                res = evaluator.evaluate(
                    np.vstack([nodes[i_nearest].chain, q_new, task.q_final]))
                if res.feasible:
                    chosen = (i_nearest, res)
            else:
                c_max = 0.0
                for i_m in _capped_neighbors(hash_index, nodes, q_new, config):
                    res = evaluator.evaluate(
                        np.vstack([nodes[i_m].chain, q_new, task.q_final]))
                    if config.variant == "rast-i":
                        c1 = res.ig
                    else:
                        c1 = res.ig / res.e if res.e > 0 else (math.inf if res.ig > 0 else 0.0)
                    if res.feasible and c1 >= c_max:
                        c_max = c1
                        chosen = (i_m, res)
            if chosen is not None:
                i_parent, res = chosen
                node = TreeNode(position=q_new, parent=i_parent,
                                ig=res.ig, e=res.e, t=res.t,
                                chain=np.vstack([nodes[i_parent].chain, q_new]))
                nodes.append(node)
                hash_index.insert(q_new)
                if res.ig > best_ig:
                    best_ig = res.ig
                    best = res
        bestsol.append(best_ig)
        if _should_stop(bestsol, it, config.it_stop):
            break
    return _result(best, bestsol, it, t0)


def plan_rigt(env: Environment, vehicle: VehicleParams, task: Task,
              config: PlannerConfig) -> PlannerResult:
    """Information-gathering tree with dominance pruning and a closed set.

    Uniformly sampled growth; for every neighbor of the steered point a
    candidate child is inserted unless it is strictly dominated by that
    neighbor; nodes whose path exhausts a budget join the closed set and
    never grow branches.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    evaluator = FitnessEvaluator(env, vehicle, task, ds_max=config.ds_max)

    root_res = evaluator.evaluate(np.vstack([task.q_init, task.q_final]))
    root = TreeNode(position=task.q_init.copy(), parent=None,
                    ig=root_res.ig, e=root_res.e, t=root_res.t,
                    chain=task.q_init[None, :].copy())
    nodes = [root]
    open_hash = SpatialHash(cell=config.r)  # closed nodes never enter
    open_map: list[int] = []
    open_hash.insert(root.position)
    open_map.append(0)

    best = None
    best_ig = 0.0
    bestsol: list[float] = []
    it = 0
    for it in range(1, config.max_it + 1):
        q_rand = tournament_sample(env.info_map, 1, rng)
        i_nearest = open_map[open_hash.nearest(q_rand)]
        q_feasible = steer(nodes[i_nearest].position, q_rand, config.delta)
        neighbor_ids = [open_map[h] for h in
                        open_hash.query_radius(q_feasible, config.r)]
        for i_m in _cap_by_distance(neighbor_ids, nodes, q_feasible,
                                    config.max_neighbors):
            q_new = steer(nodes[i_m].position, q_feasible, config.delta)
            if env.obstacles.contains(q_new)[0] or not _segment_collision_free(
                    nodes[i_m].position, q_new, env, config.collision_step):
                continue
            res = evaluator.evaluate(np.vstack([nodes[i_m].chain, q_new, task.q_final]))
            cand = TreeNode(position=q_new, parent=i_m,
                            ig=res.ig, e=res.e, t=res.t,
                            chain=np.vstack([nodes[i_m].chain, q_new]))
            if prune_dominated(cand, nodes[i_m]):
                continue
            nodes.append(cand)
            idx = len(nodes) - 1
            closed = res.e > vehicle.e_max or res.t > task.t_max
            if not closed:
                open_hash.insert(q_new)
                open_map.append(idx)
                if res.feasible and res.ig > best_ig:
                    best_ig = res.ig
                    best = res
        bestsol.append(best_ig)
        if _should_stop(bestsol, it, config.it_stop):
            break
    return _result(best, bestsol, it, t0)


def _pso_energy_screen(polyline: np.ndarray, vehicle: VehicleParams) -> float:
    """Cheap still-medium lower-bound energy of a control polyline."""
    e = 0.0
    for a, b in zip(polyline[:-1], polyline[1:]):
        length = float(np.linalg.norm(b - a))
        if length == 0.0:
            continue
        mid_z = 0.5 * (a[2] + b[2])
        if mid_z > 0:
            e += vehicle.p_air * length / vehicle.v_air
        else:
            e += vehicle.p_sea * length / vehicle.v_sea
        if (a[2] > 0) != (b[2] > 0):
            e += vehicle.e_switch
    return e


def plan_pso(env: Environment, vehicle: VehicleParams, task: Task,
             config: PsoConfig) -> PlannerResult:
    """Particle swarm over blocks of path control points.

    Particles are initialized by rejection sampling until every particle's
    path is feasible; infeasible moves keep a particle moving but never
    update its personal or the global best.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    evaluator = FitnessEvaluator(env, vehicle, task, ds_max=config.ds_max)
    ws = env.workspace
    lo = ws.bounds_min
    hi = ws.bounds_max
    shape = (config.n_control, 3)

    def fitness(controls: np.ndarray):
        return evaluator.evaluate(np.vstack([task.q_init, controls, task.q_final]))

    positions = np.zeros((config.k,) + shape)
    pbest_pos = np.zeros_like(positions)
    pbest_val = np.zeros(config.k)
    pbest_res = [None] * config.k
    for k in range(config.k):
        for attempt in range(config.init_attempts):
            cand = rng.uniform(lo, hi, size=shape)
            poly = np.vstack([task.q_init, cand, task.q_final])
            if _pso_energy_screen(poly, vehicle) > 1.2 * vehicle.e_max:
                continue
            res = fitness(cand)
            if res.feasible:
                positions[k] = cand
                pbest_pos[k] = cand
                pbest_val[k] = res.ig
                pbest_res[k] = res
                break
        else:
            raise PsoInitError(
                f"no feasible initial particle after {config.init_attempts} attempts; "
                "increase the budget or move the endpoints closer")

    velocities = np.zeros_like(positions)
    g = int(np.argmax(pbest_val))
    gbest_pos = pbest_pos[g].copy()
    gbest_val = float(pbest_val[g])
    gbest_res = pbest_res[g]

    w = config.w0
    bestsol: list[float] = []
    it = 0
    for it in range(1, config.max_it + 1):
        for k in range(config.k):
            r1 = rng.uniform(size=shape)
            r2 = rng.uniform(size=shape)
            velocities[k] = (w * velocities[k]
                             + config.c1 * r1 * (pbest_pos[k] - positions[k])
                             + config.c2 * r2 * (gbest_pos - positions[k]))
            np.clip(velocities[k], -config.v_max, config.v_max, out=velocities[k])
            positions[k] = np.clip(positions[k] + velocities[k], lo, hi)
            res = fitness(positions[k])
            if res.feasible and res.ig > pbest_val[k]:
                pbest_val[k] = res.ig
                pbest_pos[k] = positions[k].copy()
                pbest_res[k] = res
                if res.ig > gbest_val:
                    gbest_val = res.ig
                    gbest_pos = positions[k].copy()
                    gbest_res = res
        w *= config.w_damp
        bestsol.append(gbest_val)
        if _should_stop(bestsol, it, config.it_stop):
            break
    return _result(gbest_res, bestsol, it, t0)


def plan(algorithm: str, env: Environment, vehicle: VehicleParams, task: Task,
         tree_config: PlannerConfig | None = None,
         pso_config: PsoConfig | None = None, seed: int | None = None,
         **overrides) -> PlannerResult:
    """Dispatch a planner by algorithm name."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if algorithm == "pso":
        cfg = pso_config or PsoConfig()
        if seed is not None or overrides:
            cfg = replace(cfg, **({"seed": seed} if seed is not None else {}), **overrides)
        return plan_pso(env, vehicle, task, cfg)
    cfg = tree_config or PlannerConfig()
    changes = dict(overrides)
    changes["variant"] = algorithm
    if seed is not None:
        changes["seed"] = seed
    cfg = replace(cfg, **changes)
    if algorithm == "rigt":
        return plan_rigt(env, vehicle, task, cfg)
    return plan_rast_family(env, vehicle, task, cfg)
