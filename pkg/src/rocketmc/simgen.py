"""Synthetic telemetry ensembles from a point-mass ballistic flight model.

Stands in for a high-fidelity simulator at desk scale: vertical thrust
until burnout, quadratic drag, gravity, and per-axis Gaussian wind gusts
held constant over one-second blocks. Attitude is derived from the
velocity direction (pitch = elevation, yaw = azimuth, roll = 0), so every
telemetry field is populated. Integration is fixed-step explicit Euler at
the native sample rate.

The reference trajectory is the zero-wind run. Everything is
deterministic given the seed; trajectory i uses ``seed ^ i`` so parallel
and serial generation agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .trajectory import DeviationWeights, Trajectory, enu_to_geodetic, wrap_angle

GRAVITY = 9.81  # m/s^2


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_trajectories: int = 20
    seed: int = 42
    burn_time: float = 2.0
    thrust_accel: float = 40.0  # m/s^2 along the vertical axis while burning
    drag_coeff: float = 1e-3  # 1/m
    wind_gust_sigma: float = 1.0  # per-axis Gaussian, resampled each second
    launch_lat: float = 54.6
    launch_lon: float = 17.0
    mission_duration: float = 8.0
    step: float = 0.001
    disengage_policy: str = "none"  # "none" | "on-deviation"
    disengage_threshold: float = 1000.0  # position-equivalent meters

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise SimError(f"need at least one trajectory, got {self.n_trajectories}")
        if self.seed < 0:
            raise SimError("seed must be non-negative")
        if self.step <= 0:
            raise SimError(f"step must be positive, got {self.step}")
        if not 0 <= self.burn_time < self.mission_duration:
            raise SimError("burn time must lie within the mission duration")
        if self.disengage_policy not in ("none", "on-deviation"):
            raise SimError(f"unknown disengage policy {self.disengage_policy!r}")
        if self.disengage_policy == "on-deviation" and self.disengage_threshold <= 0:
            raise SimError("disengage threshold must be positive")

    def to_dict(self) -> dict:
        return {
            "n_trajectories": self.n_trajectories,
            "seed": self.seed,
            "burn_time": self.burn_time,
            "thrust_accel": self.thrust_accel,
            "drag_coeff": self.drag_coeff,
            "wind_gust_sigma": self.wind_gust_sigma,
            "launch_lat": self.launch_lat,
            "launch_lon": self.launch_lon,
            "mission_duration": self.mission_duration,
            "step": self.step,
            "disengage_policy": self.disengage_policy,
            "disengage_threshold": self.disengage_threshold,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        fields = {k: doc[k] for k in cls.__dataclass_fields__ if k in doc}
        return cls(**fields)


def _attitude(ve: float, vn: float, vu: float) -> tuple[float, float]:
    horizontal = math.hypot(ve, vn)
    if horizontal < 1e-12 and abs(vu) < 1e-12:
        return math.pi / 2, 0.0  # at rest on the pad: pointing straight up
    pitch = math.atan2(vu, horizontal)
    yaw = 0.0 if horizontal < 1e-12 else wrap_angle(math.atan2(ve, vn))
    return pitch, yaw


def _integrate(cfg: SimConfig, wind: np.ndarray | None, reference: dict | None) -> Trajectory:
    """Run one flight; ``reference`` enables the on-deviation engine cut."""
    n_steps = round(cfg.mission_duration / cfg.step)
    dt = cfg.step
    weights = DeviationWeights()

    east = np.empty(n_steps + 1)
    north = np.empty(n_steps + 1)
    up = np.empty(n_steps + 1)
    v_east = np.empty(n_steps + 1)
    v_north = np.empty(n_steps + 1)
    v_up = np.empty(n_steps + 1)

    e = n = u = 0.0
    ve = vn = vu = 0.0
    disengaged = False
    disengage_time = None
    policy = cfg.disengage_policy == "on-deviation" and reference is not None

    for i in range(n_steps + 1):
        if not (math.isfinite(u) and math.isfinite(vu) and math.isfinite(ve)):
            raise SimError(f"non-finite state at step {i}")
        if policy and not disengaged:
            de = e - reference["east"][i]
            dn = n - reference["north"][i]
            du = u - reference["up"][i]
            dve = ve - reference["v_east"][i]
            dvn = vn - reference["v_north"][i]
            dvu = vu - reference["v_up"][i]
            pitch, yaw = _attitude(ve, vn, vu)
            datt = math.sqrt(
                wrap_angle(pitch - reference["pitch"][i]) ** 2
                + wrap_angle(yaw - reference["yaw"][i]) ** 2
            )
            score = (
                weights.pos * math.sqrt(de * de + dn * dn + du * du)
                + weights.vel * math.sqrt(dve * dve + dvn * dvn + dvu * dvu)
                + weights.att * datt
            )
            if score > cfg.disengage_threshold:
                disengaged = True
                disengage_time = i * dt

        east[i] = e
        north[i] = n
        up[i] = u
        v_east[i] = ve
        v_north[i] = vn
        v_up[i] = vu
        if i == n_steps:
            break

        t = i * dt
        speed = math.sqrt(ve * ve + vn * vn + vu * vu)
        thrust = cfg.thrust_accel if (t < cfg.burn_time and not disengaged) else 0.0
        ae = -cfg.drag_coeff * speed * ve
        an = -cfg.drag_coeff * speed * vn
        au = thrust - GRAVITY - cfg.drag_coeff * speed * vu
        if wind is not None:
            block = min(int(t), len(wind) - 1)
            ae += wind[block, 0]
            an += wind[block, 1]
            au += wind[block, 2]
        e += ve * dt
        n += vn * dt
        u += vu * dt
        ve += ae * dt
        vn += an * dt
        vu += au * dt

    horizontal = np.hypot(v_east, v_north)
    pitch = np.arctan2(v_up, horizontal)
    yaw = np.arctan2(v_east, v_north)
    at_rest = (horizontal < 1e-12) & (np.abs(v_up) < 1e-12)
    pitch[at_rest] = math.pi / 2
    yaw[horizontal < 1e-12] = 0.0
    yaw[yaw == -math.pi] = math.pi  # angles live in (-pi, pi]

    lat = cfg.launch_lat + np.degrees(north / 6_371_000.0)
    lon_scale = 6_371_000.0 * math.cos(math.radians(cfg.launch_lat))
    lon = cfg.launch_lon + np.degrees(east / lon_scale)

    columns = {
        "t": np.arange(n_steps + 1) * dt,
        "vx": v_east,
        "vy": v_north,
        "vz": v_up,
        "lat": lat,
        "lon": lon,
        "alt": up,
        "pitch": pitch,
        "roll": np.zeros(n_steps + 1),
        "yaw": yaw,
    }
    return Trajectory(columns, source="synthetic", disengage_time=disengage_time)


def generate(cfg: SimConfig) -> tuple[list[Trajectory], Trajectory]:
    """Generate the ensemble and its zero-wind reference."""
    reference = _integrate(cfg, wind=None, reference=None)
    ref_arrays = None
    if cfg.disengage_policy == "on-deviation":
        ref_pitch = reference.columns["pitch"]
        ref_yaw = reference.columns["yaw"]
        # local frame repr of the reference, aligned index by index
        ref_arrays = {
            "east": np.zeros(len(reference)),
            "north": np.zeros(len(reference)),
            "up": reference.columns["alt"],
            "v_east": reference.columns["vx"],
            "v_north": reference.columns["vy"],
            "v_up": reference.columns["vz"],
            "pitch": ref_pitch,
            "yaw": ref_yaw,
        }
        # east/north of the reference are identically zero only with zero wind,
        # which is exactly how the reference is produced
    n_blocks = max(1, math.ceil(cfg.mission_duration))
    ensemble = []
    for index in range(cfg.n_trajectories):
        rng = np.random.default_rng(cfg.seed ^ index)
        wind = rng.normal(0.0, cfg.wind_gust_sigma, size=(n_blocks, 3))
        ensemble.append(_integrate(cfg, wind=wind, reference=ref_arrays))
    return ensemble, reference
