"""HAUV model: sensor attenuation, feasible speed under wind/current, and
per-segment time/energy accounting.

All functions are pure over immutable parameter objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import AIR, SEA, Environment


@dataclass(frozen=True)
class SensorParams:
    """Distance-attenuated sensing model."""

    a_dmax: float = 1.0
    sigma: float = 1.0
    d_max: float = 100.0

    def __post_init__(self):
        if not 0.0 <= self.a_dmax <= 1.0:
            raise ValueError("peak perception factor must lie in [0, 1]")
        if self.d_max <= 0:
            raise ValueError("sensing range must be positive")


@dataclass(frozen=True)
class VehicleParams:
    """Speeds, powers, transition costs, and energy budget.

    Powers are expressed in units of e_max per second: a full budget lasts
    900 s airborne or 28800 s submerged with the defaults.
    """

    v_air: float = 10.0
    v_sea: float = 0.5
    e_max: float = 1.0
    p_air: float = 1.0 / 900.0
    p_sea: float = 1.0 / 28800.0
    e_switch: float = 1.0 / 30.0
    t_switch: float = 20.0
    sensor: SensorParams = field(default_factory=SensorParams)

    def __post_init__(self):
        for name in ("v_air", "v_sea", "e_max", "p_air", "p_sea", "e_switch", "t_switch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.p_air >= self.e_max:
            raise ValueError("air power per second must be below the budget")
        if self.e_switch >= self.e_max:
            raise ValueError("transition energy must be below the budget")

    def speed(self, medium: int) -> float:
        return self.v_air if medium == AIR else self.v_sea

    def power(self, medium: int) -> float:
        return self.p_air if medium == AIR else self.p_sea


def sensor_attenuation(d, sensor: SensorParams):
    """Perception factor at distance d; zero beyond the sensing range."""
    d = np.asarray(d, dtype=float)
    att = sensor.a_dmax * np.exp(-sensor.sigma * (d / sensor.d_max) ** 2)
    out = np.where(d <= sensor.d_max, att, 0.0)
    return float(out) if out.ndim == 0 else out


def sensor_reading(path_point, grid_point, im_value, sensor: SensorParams) -> float:
    """Information collected at a grid point from one path sample."""
    d = float(np.linalg.norm(np.asarray(path_point, float) - np.asarray(grid_point, float)))
    return im_value * sensor_attenuation(d, sensor)


def synthesize_speed(direction, v_c, v_hauv: float) -> float | None:
    """Achievable inertial speed along a unit direction given ambient flow.

    Solves v^2 - 2(v_c . a) v + |v_c|^2 - v_hauv^2 = 0 and takes the larger
    root. Returns None when no positive real root exists (segment not
    reachable against the flow).
    """
    a = np.asarray(direction, dtype=float)
    vc = np.asarray(v_c, dtype=float)
    if v_hauv <= 0:
        raise ValueError("through-medium speed must be positive")
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    p = float(vc @ a)
    quarter_disc = p * p + v_hauv * v_hauv - float(vc @ vc)
    if quarter_disc < 0:
        return None
    v_abs = p + math.sqrt(quarter_disc)
    return v_abs if v_abs > 0 else None


def synthesize_speed_many(directions: np.ndarray, v_c: np.ndarray,
                          v_hauv: np.ndarray):
    """Vectorized speed synthesis over (N, 3) inputs.

    Returns (v_abs (N,), feasible mask (N,)); v_abs is NaN where infeasible.
    """
    p = np.einsum("ij,ij->i", v_c, directions)
    quarter_disc = p * p + v_hauv * v_hauv - np.einsum("ij,ij->i", v_c, v_c)
    feasible = quarter_disc >= 0
    v_abs = np.full(p.shape, np.nan)
    v_abs[feasible] = p[feasible] + np.sqrt(quarter_disc[feasible])
    feasible &= np.nan_to_num(v_abs, nan=-1.0) > 0
    v_abs[~feasible] = np.nan
    return v_abs, feasible


@dataclass(frozen=True)
class SegmentKinematics:
    """Time/energy cost of traversing one single-medium segment."""

    time: float
    energy: float
    medium: int
    v_abs: float


def segment_time_energy(p_a, p_b, env: Environment,
                        params: VehicleParams) -> SegmentKinematics | None:
    """Cost of one straight segment lying entirely in one medium.

    Ambient velocity is sampled at the segment midpoint; medium comes from
    the midpoint depth. Returns None when the segment is not reachable.
    """
    p_a = np.asarray(p_a, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    delta = p_b - p_a
    length = float(np.linalg.norm(delta))
    mid = 0.5 * (p_a + p_b)
    medium = AIR if mid[2] > 0.0 else SEA
    if length == 0.0:
        return SegmentKinematics(time=0.0, energy=0.0, medium=medium,
                                 v_abs=params.speed(medium))
    v_c = env.velocity_field.at(mid)[0]
    v_abs = synthesize_speed(delta / length, v_c, params.speed(medium))
    if v_abs is None:
        return None
    time = length / v_abs
    return SegmentKinematics(time=time, energy=params.power(medium) * time,
                             medium=medium, v_abs=v_abs)
