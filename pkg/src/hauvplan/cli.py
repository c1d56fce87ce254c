"""Command-line entry point.

Subcommands: gen-env, plan, bench, robustness, verify. Exit codes: 0 on
success, 2 when the task is infeasible (no path found), 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import bench, ingest
from .environment import (Environment, ObstacleSet, Workspace,
                          generate_random_environment, load_environment_config,
                          normalize_per_side, EnvGenConfig)
from .environment import InfoMap
from .path import Task
from .planners import ALGORITHMS, PlannerConfig, PsoConfig, PsoInitError, plan
from .vehicle import VehicleParams

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def _add_common(p):
    p.add_argument("--config", help="JSON run config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _vehicle_from_config(cfg: dict) -> VehicleParams:
    v = dict(cfg.get("vehicle", {}))
    sensor_cfg = v.pop("sensor", cfg.get("sensor", {}))
    from .vehicle import SensorParams
    return VehicleParams(**v, sensor=SensorParams(**sensor_cfg))


def _planner_configs(args, cfg: dict):
    tree_kw = dict(cfg.get("planner", {}))
    pso_kw = dict(cfg.get("pso", {}))
    if getattr(args, "max_it", None) is not None:
        tree_kw["max_it"] = args.max_it
        pso_kw["max_it"] = args.max_it
    if getattr(args, "it_stop", None) is not None:
        tree_kw["it_stop"] = args.it_stop
        pso_kw["it_stop"] = args.it_stop
    tree_kw.pop("variant", None)
    return PlannerConfig(**tree_kw), PsoConfig(**pso_kw)


def _environment_for(args, cfg: dict):
    if getattr(args, "env_file", None):
        ws = Workspace()
        raw = ingest.load_forecast_grid(args.env_file)
        info, vel = ingest.interpolate_to_workspace(raw, ws)
        values, meta = normalize_per_side(info, ws)
        info_map = InfoMap(values=values, kappa_air=cfg.get("kappa_air", 1.0),
                           kappa_sea=cfg.get("kappa_sea", 1.0), workspace=ws,
                           metadata=meta)
        return Environment(workspace=ws, info_map=info_map, velocity_field=vel,
                           obstacles=ObstacleSet())
    if "environment" in cfg:
        from .environment import environment_from_config
        return environment_from_config(cfg["environment"])
    return None


def cmd_gen_env(args) -> int:
    cfg = _load_config(args.config)
    env_cfg = cfg.get("environment", {})
    grid = env_cfg.get("grid", {})
    ws = Workspace(
        nx=grid.get("nx", 100), ny=grid.get("ny", 100), nz=grid.get("nz", 13),
        cell=grid.get("cell", 50.0), z_origin=grid.get("z_origin", -300.0),
        sea_level_index=grid.get("sea_level_index", 6))
    env = generate_random_environment(args.seed, EnvGenConfig(workspace=ws))
    pts = ws.grid_points().reshape(-1, 3)
    vel = env.velocity_field.at(pts)
    raw = ingest.RawGrid(
        dims=ws.shape,
        spacing=(ws.cell, ws.cell, ws.cell),
        origin=(0.0, 0.0, ws.z_origin),
        info=env.info_map.values,
        u=vel[:, 0].reshape(ws.shape),
        v=vel[:, 1].reshape(ws.shape))
    ingest.write_forecast_grid(raw, args.file)
    print(f"wrote {args.file}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load_config(args.config)
    vehicle = _vehicle_from_config(cfg)
    tree_cfg, pso_cfg = _planner_configs(args, cfg)
    env = _environment_for(args, cfg)
    if args.scenario is not None:
        spec = bench.builtin_scenario(args.scenario, base_seed=args.seed,
                                      env_file=getattr(args, "env_file", None)
                                      if args.scenario == 2 else None)
        if env is None:
            env = bench.build_environment(spec)
        task = bench.scenario_task(spec)
        scenario_id = spec.scenario_id
    else:
        if env is None:
            print("plan: need --scenario, --env-file, or an environment config",
                  file=sys.stderr)
            return EXIT_ERROR
        t = cfg.get("task", {})
        task = Task(q_init=np.array(t.get("q_init", [0.0, 0.0, 0.0])),
                    q_final=np.array(t.get("q_final", [0.0, 0.0, 0.0])),
                    t_max=t.get("t_max", math.inf))
        scenario_id = 0
    try:
        result = plan(args.algo, env, vehicle, task, tree_config=tree_cfg,
                      pso_config=pso_cfg, seed=args.seed)
    except PsoInitError as exc:
        print(f"plan: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    spec_like = bench.ScenarioSpec(scenario_id, tuple(task.q_init),
                                   tuple(task.q_final), t_max=task.t_max)
    record = bench._record_from_result(spec_like, args.algo, args.seed, result,
                                       env, vehicle, task)
    metrics = bench.compute_metrics([record])
    bench.emit_results([record], metrics, args.out, env=env, vehicle=vehicle,
                       task=task, spec_summary={"command": "plan",
                                                "algorithm": args.algo,
                                                "seed": args.seed})
    print(f"best_ig={result.best_ig:.6g} iterations={result.iterations} "
          f"wall_time={result.wall_time:.3f}s")
    return EXIT_OK if result.best_ig > 0 else EXIT_INFEASIBLE


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    vehicle = _vehicle_from_config(cfg)
    tree_cfg, pso_cfg = _planner_configs(args, cfg)
    algorithms = tuple(args.algo) if args.algo else ALGORITHMS
    spec = bench.builtin_scenario(args.scenario, base_seed=args.seed,
                                  repetitions=args.reps)
    from dataclasses import replace
    spec = replace(spec, algorithms=algorithms)
    env = bench.build_environment(spec)
    records = bench.run_scenario(spec, vehicle=vehicle, tree_config=tree_cfg,
                                 pso_config=pso_cfg, env=env)
    metrics = bench.compute_metrics(records)
    bench.emit_results(records, metrics, args.out, env=env, vehicle=vehicle,
                       task=bench.scenario_task(spec),
                       spec_summary={"command": "bench",
                                     "scenario": args.scenario,
                                     "repetitions": args.reps,
                                     "base_seed": args.seed,
                                     "algorithms": list(algorithms)})
    for m in metrics.values():
        print(f"{m.algorithm}: i_mean={m.i_mean:.6g} "
              f"i_std={'nan' if m.i_std is None else f'{m.i_std:.6g}'}")
    if all(r.best_ig == 0 for r in records):
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_robustness(args) -> int:
    cfg = _load_config(args.config)
    vehicle = _vehicle_from_config(cfg)
    tree_cfg, pso_cfg = _planner_configs(args, cfg)
    config = bench.RobustnessConfig(family=args.family, n_maps=args.maps,
                                    base_seed=args.seed, tree_config=tree_cfg,
                                    pso_config=pso_cfg)
    result = bench.robustness_experiment(config, vehicle=vehicle)
    import os
    os.makedirs(args.out, exist_ok=True)
    out_file = os.path.join(args.out, f"robustness_family{args.family}.json")
    with open(out_file, "w") as fh:
        json.dump({"family": args.family, "n_maps": result.n_maps,
                   "excluded_maps": result.excluded_maps,
                   "win_counts": result.win_counts}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for algo, wins in sorted(result.win_counts.items(), key=lambda x: -x[1]):
        print(f"{algo}: {wins:.2f} wins")
    print(f"excluded maps: {result.excluded_maps}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    vehicle = _vehicle_from_config(cfg)
    env = _environment_for(args, cfg)
    if args.scenario is not None:
        spec = bench.builtin_scenario(args.scenario)
        if env is None:
            env = bench.build_environment(spec)
        task = bench.scenario_task(spec)
    else:
        print("verify: need --scenario (or config)", file=sys.stderr)
        return EXIT_ERROR
    with open(args.path_file) as fh:
        rows = list(csv.DictReader(fh))
    positions = np.array([[float(r["x"]), float(r["y"]), float(r["z"])]
                          for r in rows])
    path = bench.smooth_path_from_samples(positions)
    report = bench.check_path(path, env, vehicle, task)
    print(f"energy={report.energy:.6g} time={report.mission_time:.6g}s "
          f"ok={report.ok}")
    for v in report.violations:
        print(f"violation: {v}")
    return EXIT_OK if report.ok else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hauvplan",
                                     description="HAUV informative path planning benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", help="write a random analytic environment to IPGRID")
    _add_common(p)
    p.add_argument("file", help="output IPGRID path")
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("plan", help="run one planner")
    _add_common(p)
    p.add_argument("--algo", choices=ALGORITHMS, required=True)
    p.add_argument("--scenario", type=int, choices=range(1, 6))
    p.add_argument("--env-file", help="IPGRID environment file")
    p.add_argument("--max-it", type=int)
    p.add_argument("--it-stop", type=int)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="scenario x repetitions")
    _add_common(p)
    p.add_argument("--scenario", type=int, choices=range(1, 6), required=True)
    p.add_argument("--algo", action="append", choices=ALGORITHMS,
                   help="repeatable; default all six")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--max-it", type=int)
    p.add_argument("--it-stop", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("robustness", help="randomized-map study")
    _add_common(p)
    p.add_argument("--family", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--maps", type=int, default=100)
    p.add_argument("--max-it", type=int)
    p.add_argument("--it-stop", type=int)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("verify", help="re-check an emitted path")
    _add_common(p)
    p.add_argument("path_file", help="path_<algo>_<seed>.csv to verify")
    p.add_argument("--scenario", type=int, choices=range(1, 6))
    p.add_argument("--env-file", help="IPGRID environment file")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, ingest.GridFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
