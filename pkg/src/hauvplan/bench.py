"""Benchmark harness: scenario definitions, repeated trials, metrics, the
robustness study, the independent constraint checker, and result emission.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import ingest
from .environment import (AIR, SEA, Environment, EnvGenConfig, GaussianFeature,
                          ObstacleSet, Workspace, build_info_map,
                          generate_random_environment)
from .path import SmoothPath, Task
from .planners import (ALGORITHMS, PlannerConfig, PlannerResult, PsoConfig,
                       PsoInitError, plan)
from .vehicle import VehicleParams


def derive_seed(base_seed: int, *labels) -> int:
    """Deterministic 63-bit child seed from a base seed and labels."""
    text = ":".join([str(base_seed)] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# ---------------------------------------------------------------------------
# Independent constraint checker


@dataclass(frozen=True)
class CheckReport:
    """Re-derived budget usage and constraint verdict for one path."""

    ok: bool
    energy: float
    mission_time: float
    violations: tuple[str, ...]
    cum_time: np.ndarray | None = None
    cum_energy: np.ndarray | None = None


def _bisect_speed(p: float, vc_norm: float, v_hauv: float) -> float | None:
    """Largest root of v^2 - 2pv + vc^2 - v_hauv^2 = 0 by bisection."""

    def f(v):
        return v * v - 2.0 * p * v + vc_norm * vc_norm - v_hauv * v_hauv

    lo, hi = p, p + v_hauv + vc_norm + 1.0
    if f(lo) > 0.0:
        return None  # no real root
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    v = 0.5 * (lo + hi)
    return v if v > 0.0 else None


def check_path(path: SmoothPath, env: Environment, vehicle: VehicleParams,
               task: Task, tol: float = 1e-6) -> CheckReport:
    """Re-verify a path with plain scalar arithmetic and a bisection solver.

    Independent of the planner-side vectorized evaluation: media, ambient
    velocities, feasible speeds, transition costs, and collision freedom
    are all re-derived from the sample sequence.
    """
    violations = []
    pos = path.positions
    if not np.all(env.workspace.contains(pos)):
        violations.append("path leaves the workspace")
    if len(env.obstacles) and env.obstacles.contains(pos).any():
        violations.append("path intersects an obstacle")

    n = pos.shape[0]
    cum_t = np.zeros(n)
    cum_e = np.zeros(n)
    t_total = 0.0
    e_total = 0.0
    reachable = True
    for i in range(n - 1):
        a, b = pos[i], pos[i + 1]
        length = float(np.linalg.norm(b - a))
        if length > 0.0:
            mid = 0.5 * (a + b)
            v_hauv = vehicle.v_air if mid[2] > 0.0 else vehicle.v_sea
            power = vehicle.p_air if mid[2] > 0.0 else vehicle.p_sea
            v_c = env.velocity_field.at(mid)[0]
            direction = (b - a) / length
            p = float(np.dot(v_c, direction))
            v_abs = _bisect_speed(p, float(np.linalg.norm(v_c)), v_hauv)
            if v_abs is None:
                reachable = False
                violations.append(f"segment {i} not reachable against the flow")
                break
            t_total += length / v_abs
            e_total += power * length / v_abs
        if (a[2] > 0.0) != (b[2] > 0.0):
            t_total += vehicle.t_switch
            e_total += vehicle.e_switch
        cum_t[i + 1] = t_total
        cum_e[i + 1] = e_total

    if e_total > vehicle.e_max + tol:
        violations.append(f"energy {e_total:.6g} exceeds budget {vehicle.e_max:.6g}")
    if t_total > task.t_max + tol:
        violations.append(f"time {t_total:.6g} exceeds budget {task.t_max:.6g}")
    ok = reachable and not violations
    return CheckReport(ok=ok, energy=e_total, mission_time=t_total,
                       violations=tuple(violations), cum_time=cum_t, cum_energy=cum_e)


# ---------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class ScenarioSpec:
    """One benchmark scenario: environment source, endpoints, budgets."""

    scenario_id: int
    q_init: tuple[float, float, float]
    q_final: tuple[float, float, float]
    t_max: float = math.inf
    kappa_air: float = 1.0
    kappa_sea: float = 1.0
    env_seed: int = 5
    env_file: str | None = None
    algorithms: tuple[str, ...] = ALGORITHMS
    repetitions: int = 10
    base_seed: int = 0
    slope_obstacle: bool = False
    banded_features: bool = False
    workspace: Workspace = field(default_factory=Workspace)


def _slope_boxes(ws: Workspace):
    """Submerged staircase of boxes approximating a continental slope."""
    y_lo, y_hi = float(ws.bounds_min[1]), float(ws.bounds_max[1])
    z_floor = float(ws.bounds_min[2])
    boxes = []
    tops = (-250.0, -200.0, -150.0, -100.0, -150.0, -200.0, -250.0)
    x0 = 2100.0
    width = 120.0
    for i, top in enumerate(tops):
        lo = (x0 + i * width, y_lo, z_floor)
        hi = (x0 + (i + 1) * width, y_hi, top)
        boxes.append((lo, hi))
    return boxes


def _banded_features(ws: Workspace):
    """Air features over x in [3km, 5km]; sea features over x in [1km, 3km]."""
    spread = np.diag([400.0 ** 2, 500.0 ** 2, 120.0 ** 2])
    return [
        GaussianFeature(mu=np.array([3600.0, 2000.0, 200.0]), sigma=spread, g=1.0),
        GaussianFeature(mu=np.array([4400.0, 3200.0, 150.0]), sigma=spread, g=1.0),
        GaussianFeature(mu=np.array([1500.0, 2300.0, -150.0]), sigma=spread, g=1.0),
        GaussianFeature(mu=np.array([2500.0, 2800.0, -200.0]), sigma=spread, g=1.0),
    ]


def builtin_scenario(scenario_id: int, base_seed: int = 0,
                     repetitions: int = 10,
                     env_file: str | None = None) -> ScenarioSpec:
    """The five built-in scenario specifications."""
    common = dict(base_seed=base_seed, repetitions=repetitions)
    if scenario_id == 1:
        return ScenarioSpec(1, (1000.0, 3750.0, 0.0), (4000.0, 3750.0, 0.0),
                            t_max=math.inf, slope_obstacle=True, **common)
    if scenario_id == 2:
        return ScenarioSpec(2, (500.0, 2500.0, 0.0), (4500.0, 2500.0, 0.0),
                            t_max=10800.0, env_file=env_file or default_scenario2_file(),
                            **common)
    if scenario_id == 3:
        return ScenarioSpec(3, (500.0, 2500.0, 0.0), (4500.0, 2500.0, 0.0),
                            t_max=3600.0, banded_features=True, **common)
    if scenario_id == 4:
        return ScenarioSpec(4, (1000.0, 3750.0, 0.0), (4000.0, 3750.0, 0.0),
                            t_max=math.inf, kappa_sea=3.0, kappa_air=1.0,
                            slope_obstacle=True, **common)
    if scenario_id == 5:
        return ScenarioSpec(5, (1000.0, 3750.0, 0.0), (4000.0, 3750.0, 0.0),
                            t_max=math.inf, kappa_air=3.0, kappa_sea=1.0,
                            slope_obstacle=True, **common)
    raise ValueError(f"unknown scenario {scenario_id}")


def default_scenario2_file() -> str:
    """Path of the shipped coarse forecast grid for scenario 2."""
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(here, "data", "scenario2.ipgrid")


def build_environment(spec: ScenarioSpec) -> Environment:
    """Realize the environment a scenario plans against."""
    ws = spec.workspace
    if spec.env_file is not None:
        raw = ingest.load_forecast_grid(spec.env_file)
        info, vel = ingest.interpolate_to_workspace(raw, ws)
        from .environment import InfoMap, normalize_per_side
        values, meta = normalize_per_side(info, ws)
        info_map = InfoMap(values=values, kappa_air=spec.kappa_air,
                           kappa_sea=spec.kappa_sea, workspace=ws, metadata=meta)
        env = Environment(workspace=ws, info_map=info_map, velocity_field=vel,
                          obstacles=ObstacleSet(), seed=spec.env_seed)
    else:
        gen = EnvGenConfig(kappa_air=spec.kappa_air, kappa_sea=spec.kappa_sea,
                           workspace=ws)
        env = generate_random_environment(spec.env_seed, gen)
        if spec.banded_features:
            features = _banded_features(ws)
            env = replace(env,
                          info_map=build_info_map(features, ws, spec.kappa_air,
                                                  spec.kappa_sea),
                          features=tuple(features))
    if spec.slope_obstacle:
        env = replace(env, obstacles=ObstacleSet(boxes=_slope_boxes(ws)))
    q = np.array([spec.q_init, spec.q_final])
    if not np.all(ws.contains(q)):
        raise ValueError("scenario endpoints must lie inside the workspace")
    if len(env.obstacles) and env.obstacles.contains(q).any():
        raise ValueError("scenario endpoints must be unobstructed")
    return env


def scenario_task(spec: ScenarioSpec) -> Task:
    return Task(q_init=np.array(spec.q_init), q_final=np.array(spec.q_final),
                t_max=spec.t_max)


# ---------------------------------------------------------------------------
# Trials and metrics


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one planner run on one scenario."""

    scenario_id: int
    algorithm: str
    seed: int
    best_ig: float
    iterations: int
    energy: float
    mission_time: float
    wall_time: float
    bestsol: np.ndarray
    path: SmoothPath | None
    failed: bool = False


def _record_from_result(spec: ScenarioSpec, algorithm: str, seed: int,
                        result: PlannerResult, env: Environment,
                        vehicle: VehicleParams, task: Task) -> RunRecord:
    energy = 0.0
    mission_time = 0.0
    if result.best_path is not None:
        report = check_path(result.best_path, env, vehicle, task)
        energy = report.energy
        mission_time = report.mission_time
    return RunRecord(scenario_id=spec.scenario_id, algorithm=algorithm,
                     seed=seed, best_ig=result.best_ig,
                     iterations=result.iterations, energy=energy,
                     mission_time=mission_time, wall_time=result.wall_time,
                     bestsol=result.bestsol, path=result.best_path)


def run_scenario(spec: ScenarioSpec, vehicle: VehicleParams | None = None,
                 tree_config: PlannerConfig | None = None,
                 pso_config: PsoConfig | None = None,
                 env: Environment | None = None) -> list[RunRecord]:
    """All algorithm x repetition trials of one scenario.

    Child seeds derive deterministically from (base seed, algorithm,
    repetition), so output ordering and contents are reproducible. A PSO
    initialization failure yields a failed record, not a harness abort.
    """
    vehicle = vehicle or VehicleParams()
    env = env if env is not None else build_environment(spec)
    task = scenario_task(spec)
    records = []
    for algorithm in spec.algorithms:
        for rep in range(spec.repetitions):
            seed = derive_seed(spec.base_seed, algorithm, rep)
            try:
                result = plan(algorithm, env, vehicle, task,
                              tree_config=tree_config, pso_config=pso_config,
                              seed=seed)
            except PsoInitError:
                records.append(RunRecord(
                    scenario_id=spec.scenario_id, algorithm=algorithm,
                    seed=seed, best_ig=0.0, iterations=0, energy=0.0,
                    mission_time=0.0, wall_time=0.0,
                    bestsol=np.zeros(0), path=None, failed=True))
                continue
            records.append(_record_from_result(spec, algorithm, seed, result,
                                               env, vehicle, task))
    return records


@dataclass(frozen=True)
class Metrics:
    """Per-algorithm aggregate over repeated trials."""

    algorithm: str
    i_mean: float
    i_std: float | None
    mean_iterations: float
    mean_wall_time: float
    n: int


def compute_metrics(records) -> dict[str, Metrics]:
    """Mean and sample standard deviation of collected information per algorithm."""
    by_algo: dict[str, list[RunRecord]] = {}
    for r in records:
        by_algo.setdefault(r.algorithm, []).append(r)
    out = {}
    for algo, rs in by_algo.items():
        igs = np.array([r.best_ig for r in rs])
        std = float(np.std(igs, ddof=1)) if len(rs) >= 2 else None
        out[algo] = Metrics(
            algorithm=algo,
            i_mean=float(np.mean(igs)),
            i_std=std,
            mean_iterations=float(np.mean([r.iterations for r in rs])),
            mean_wall_time=float(np.mean([r.wall_time for r in rs])),
            n=len(rs),
        )
    return out


# ---------------------------------------------------------------------------
# Robustness study


@dataclass(frozen=True)
class RobustnessConfig:
    """One scenario family of the randomized-map study."""

    family: int = 1  # 1: unbounded time, 2: random t_max, 3: random weights
    n_maps: int = 100
    base_seed: int = 0
    algorithms: tuple[str, ...] = ALGORITHMS
    workspace: Workspace = field(default_factory=Workspace)
    tree_config: PlannerConfig | None = None
    pso_config: PsoConfig | None = None
    min_separation: float = 3000.0
    obstacle_range: tuple[int, int] = (2, 5)


@dataclass(frozen=True)
class RobustnessResult:
    win_counts: dict[str, float]
    excluded_maps: int
    n_maps: int


def _random_boxes(rng, ws: Workspace, obstacle_range):
    """Random submerged terrain: a full-width staircase ridge at a random
    position plus scattered boxes. Tops stay below -50 m, so surface
    endpoints are never obstructed."""
    y_lo, y_hi = float(ws.bounds_min[1]), float(ws.bounds_max[1])
    z_floor = float(ws.bounds_min[2])
    boxes = []
    x0 = float(rng.uniform(1500.0, 3200.0))
    width = float(rng.uniform(80.0, 160.0))
    peak = float(rng.uniform(-150.0, -60.0))
    tops = (peak - 150.0, peak - 75.0, peak, peak - 75.0, peak - 150.0)
    for i, top in enumerate(tops):
        boxes.append(((x0 + i * width, y_lo, z_floor),
                      (x0 + (i + 1) * width, y_hi, max(top, z_floor + 25.0))))
    n = int(rng.integers(obstacle_range[0], obstacle_range[1] + 1))
    for _ in range(n):
        cx, cy = rng.uniform(500.0, 4500.0, 2)
        wx, wy = rng.uniform(200.0, 800.0, 2)
        top = float(rng.uniform(-250.0, -50.0))
        boxes.append(((cx - wx / 2.0, cy - wy / 2.0, z_floor),
                      (cx + wx / 2.0, cy + wy / 2.0, top)))
    return boxes


def _random_surface_points(rng, ws: Workspace, min_separation: float):
    for _ in range(1000):
        i0, i1 = rng.integers(0, ws.nx, 2)
        j0, j1 = rng.integers(0, ws.ny, 2)
        a = ws.grid_to_point(i0, j0, ws.sea_level_index)
        b = ws.grid_to_point(i1, j1, ws.sea_level_index)
        if np.linalg.norm(b - a) >= min_separation:
            return a, b
    raise RuntimeError("could not draw separated endpoints")


def robustness_experiment(config: RobustnessConfig,
                          vehicle: VehicleParams | None = None) -> RobustnessResult:
    """Per-map winner tally across randomized environments and endpoints.

    All algorithms see the identical map per round; the highest information
    collection wins the map, with ties split fractionally. Maps on which no
    algorithm finds a path are excluded and reported.
    """
    if config.family not in (1, 2, 3):
        raise ValueError("family must be 1, 2, or 3")
    vehicle = vehicle or VehicleParams()
    wins = {a: 0.0 for a in config.algorithms}
    excluded = 0
    for i_map in range(config.n_maps):
        map_seed = derive_seed(config.base_seed, "map", config.family, i_map)
        rng = np.random.default_rng(derive_seed(map_seed, "setup"))
        if config.family == 3:
            kappa_air = float(rng.integers(1, 4))
            kappa_sea = float(rng.integers(1, 4))
        else:
            kappa_air = kappa_sea = 1.0
        env = generate_random_environment(map_seed, EnvGenConfig(
            kappa_air=kappa_air, kappa_sea=kappa_sea, workspace=config.workspace))
        env = replace(env, obstacles=ObstacleSet(
            boxes=_random_boxes(rng, config.workspace, config.obstacle_range)))
        q_init, q_final = _random_surface_points(rng, config.workspace,
                                                 config.min_separation)
        if config.family == 2:
            t_max = float(rng.uniform(7200.0, 14400.0))
        elif config.family == 3:
            t_max = 7200.0
        else:
            t_max = math.inf
        task = Task(q_init=q_init, q_final=q_final, t_max=t_max)
        scores = {}
        for algorithm in config.algorithms:
            seed = derive_seed(map_seed, algorithm)
            try:
                result = plan(algorithm, env, vehicle, task,
                              tree_config=config.tree_config,
                              pso_config=config.pso_config, seed=seed)
                scores[algorithm] = result.best_ig
            except PsoInitError:
                scores[algorithm] = 0.0
        best = max(scores.values())
        if best <= 0.0:
            excluded += 1
            continue
        winners = [a for a, s in scores.items() if s == best]
        for a in winners:
            wins[a] += 1.0 / len(winners)
    return RobustnessResult(win_counts=wins, excluded_maps=excluded,
                            n_maps=config.n_maps)


# ---------------------------------------------------------------------------
# Emission


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.6g}"
    return str(value)


def emit_results(records, metrics, out_dir,
                 env: Environment | None = None,
                 vehicle: VehicleParams | None = None,
                 task: Task | None = None,
                 spec_summary: dict | None = None) -> list[str]:
    """Write records.csv, metrics.csv, convergence series, paths, summary.json.

    All numeric formatting is fixed at 6 significant digits. Returns the
    list of written file paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    records_path = os.path.join(out_dir, "records.csv")
    with open(records_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "algorithm", "seed", "best_ig", "iterations",
                    "energy", "mission_time_s", "wall_time_s", "failed"])
        for r in records:
            w.writerow([r.scenario_id, r.algorithm, r.seed, _fmt(r.best_ig),
                        r.iterations, _fmt(r.energy), _fmt(r.mission_time),
                        _fmt(r.wall_time), int(r.failed)])
    written.append(records_path)

    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "i_mean", "i_std", "mean_iterations",
                    "mean_wall_time_s", "n"])
        for m in metrics.values():
            w.writerow([m.algorithm, _fmt(m.i_mean), _fmt(m.i_std),
                        _fmt(m.mean_iterations), _fmt(m.mean_wall_time), m.n])
    written.append(metrics_path)

    for r in records:
        stem = f"{r.algorithm}_{r.seed}"
        bs_path = os.path.join(out_dir, f"bestsol_{stem}.csv")
        with open(bs_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "best_ig"])
            for i, v in enumerate(r.bestsol, start=1):
                w.writerow([i, _fmt(float(v))])
        written.append(bs_path)
        if r.path is not None and env is not None:
            report = check_path(r.path, env, vehicle or VehicleParams(),
                                task or Task(r.path.positions[0], r.path.positions[-1]))
            p_path = os.path.join(out_dir, f"path_{stem}.csv")
            with open(p_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["index", "x", "y", "z", "medium", "cum_time_s",
                            "cum_energy"])
                for i in range(len(r.path)):
                    x, y, z = r.path.positions[i]
                    medium = "air" if r.path.media[i] == AIR else "sea"
                    w.writerow([i, _fmt(float(x)), _fmt(float(y)), _fmt(float(z)),
                                medium, _fmt(float(report.cum_time[i])),
                                _fmt(float(report.cum_energy[i]))])
            written.append(p_path)

    summary_path = os.path.join(out_dir, "summary.json")
    summary = {
        "spec": spec_summary or {},
        "metrics": {
            a: {"i_mean": m.i_mean, "i_std": m.i_std,
                "mean_iterations": m.mean_iterations,
                "mean_wall_time_s": m.mean_wall_time, "n": m.n}
            for a, m in metrics.items()
        },
        "n_records": len(records),
    }
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(summary_path)
    return written


def smooth_path_from_samples(positions: np.ndarray) -> SmoothPath:
    """Rebuild a SmoothPath view from exported sample positions."""
    positions = np.asarray(positions, dtype=float)
    media = np.where(positions[:, 2] > 0.0, AIR, SEA)
    seg = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    transitions = int(np.count_nonzero(media[:-1] != media[1:]))
    return SmoothPath(positions=positions, media=media, cum_length=cum,
                      transitions=transitions)
