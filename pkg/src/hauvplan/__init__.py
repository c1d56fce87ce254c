"""Informative path planning for hybrid aerial-underwater vehicles."""

from .environment import (AIR, SEA, MAX_CURRENT_SPEED, MAX_WIND_SPEED,
                          Environment, EnvGenConfig, GaussianFeature, InfoMap,
                          LambVortex, ObstacleSet, OutOfWorkspaceError,
                          VelocityField, Workspace, build_info_map,
                          gaussian_info_value, generate_random_environment,
                          lamb_vortex_velocity, normalize_per_side,
                          random_covariance, velocity_at)
from .ingest import (GridFormatError, RawGrid, interpolate_to_workspace,
                     load_forecast_grid, normalize_field, write_forecast_grid)
from .path import (FitnessEvaluator, FitnessResult, SmoothPath, Task,
                   accumulate_information, bernstein_basis, collision_free,
                   evaluate_fitness, new_measured_array, smooth_path,
                   total_information)
from .planners import (ALGORITHMS, VARIANTS, PlannerConfig, PlannerResult,
                       PsoConfig, PsoInitError, SpatialHash, near, nearest,
                       plan, plan_pso, plan_rast_family, plan_rigt,
                       prune_dominated, steer, tournament_sample)
from .vehicle import (SegmentKinematics, SensorParams, VehicleParams,
                      segment_time_energy, sensor_attenuation, sensor_reading,
                      synthesize_speed, synthesize_speed_many)
from .bench import (CheckReport, Metrics, RobustnessConfig, RobustnessResult,
                    RunRecord, ScenarioSpec, builtin_scenario, build_environment,
                    check_path, compute_metrics, derive_seed, emit_results,
                    robustness_experiment, run_scenario, scenario_task)

__version__ = "0.1.0"
