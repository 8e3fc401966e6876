"""Telemetry trajectories: ingestion, resampling, deviation scoring.

A trajectory is a strictly time-ordered sequence of telemetry samples
(velocity vector, geodetic position, attitude angles). Samples are scored
against a reference trajectory at the same timestamp with a single
position-equivalent deviation in meters, then bucketed into Good, Neutral
or Bad against two design thresholds. Sensor coarseness is modeled by
quantizing samples to integer signatures.

CSV format: header ``t,vx,vy,vz,lat,lon,alt,pitch,roll,yaw,disengaged``,
one row per sample, decimal point, UTF-8. ``disengaged`` is 0 or 1 and is
sticky once raised.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
CSV_HEADER = ["t", "vx", "vy", "vz", "lat", "lon", "alt", "pitch", "roll", "yaw", "disengaged"]

_FIELD_NAMES = ("t", "vx", "vy", "vz", "lat", "lon", "alt", "pitch", "roll", "yaw")


class TrajectoryError(ValueError):
    pass


def wrap_angle(x: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    if y <= -math.pi:
        y = math.pi
    return y


def wrap_degrees(x: float) -> float:
    """Wrap a longitude-like quantity in degrees to (-180, 180]."""
    y = math.remainder(x, 360.0)
    if y <= -180.0:
        y = 180.0
    return y


@dataclass(frozen=True)
class TelemetrySample:
    t: float
    vx: float
    vy: float
    vz: float
    lat: float
    lon: float
    alt: float
    pitch: float
    roll: float
    yaw: float


@dataclass(frozen=True)
class DeviationWeights:
    """Converts velocity and attitude differences to position-equivalent meters."""

    pos: float = 1.0
    vel: float = 20.0  # seconds
    att: float = 500.0  # meters per radian

    def __post_init__(self):
        if self.pos < 0 or self.vel < 0 or self.att < 0:
            raise TrajectoryError("deviation weights must be non-negative")
        if self.pos == self.vel == self.att == 0:
            raise TrajectoryError("deviation weights cannot all be zero")


@dataclass(frozen=True)
class Thresholds:
    good: float = 500.0
    bad: float = 2000.0

    def __post_init__(self):
        if not 0 < self.good <= self.bad:
            raise TrajectoryError(f"need 0 < good <= bad, got {self.good}, {self.bad}")


@dataclass(frozen=True)
class QuantizationSpec:
    """Per-field quanta for integer sensor readouts."""

    vel: float = 1.0  # m/s per velocity axis
    angle_deg: float = 1.0  # degrees per attitude angle
    alt: float = 1.0  # meters
    latlon: float = 1e-5  # degrees

    def __post_init__(self):
        if min(self.vel, self.angle_deg, self.alt, self.latlon) <= 0:
            raise TrajectoryError("quantization resolutions must be positive")


class Classification(enum.Enum):
    GOOD = "Good"
    NEUTRAL = "Neutral"
    BAD = "Bad"


class Trajectory:
    """Time-ordered telemetry, stored column-wise for bulk processing.

    ``disengage_time`` is the timestamp of the first sample whose
    disengaged flag was set; the flag is sticky from there on.
    """

    __slots__ = ("columns", "source", "disengage_time")

    def __init__(self, columns: dict[str, np.ndarray], source: str = "synthetic",
                 disengage_time: float | None = None):
        self.columns = {name: np.asarray(columns[name], dtype=float) for name in _FIELD_NAMES}
        n = len(self.columns["t"])
        if n == 0:
            raise TrajectoryError("trajectory is empty")
        for name, col in self.columns.items():
            if len(col) != n:
                raise TrajectoryError(f"column {name!r} has length {len(col)}, expected {n}")
        t = self.columns["t"]
        if np.any(np.diff(t) <= 0):
            raise TrajectoryError("timestamps must be strictly increasing")
        if t[0] < 0:
            raise TrajectoryError("timestamps must be non-negative")
        self.source = source
        self.disengage_time = disengage_time

    # construction ------------------------------------------------------------

    @classmethod
    def from_samples(cls, samples: Iterable[TelemetrySample], source: str = "synthetic",
                     disengage_time: float | None = None) -> "Trajectory":
        rows = list(samples)
        columns = {name: np.array([getattr(s, name) for s in rows]) for name in _FIELD_NAMES}
        return cls(columns, source=source, disengage_time=disengage_time)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        path = Path(path)
        columns = {name: [] for name in _FIELD_NAMES}
        disengage_time = None
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise TrajectoryError(
                    f"{path}: unexpected header {header!r}, want {','.join(CSV_HEADER)}"
                )
            for row in reader:
                if not row:
                    continue
                values = [float(v) for v in row[:10]]
                for name, v in zip(_FIELD_NAMES, values):
                    columns[name].append(v)
                if int(row[10]) and disengage_time is None:
                    disengage_time = values[0]
        if not columns["t"]:
            raise TrajectoryError(f"{path}: no samples")
        return cls({k: np.array(v) for k, v in columns.items()},
                   source="flight", disengage_time=disengage_time)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for i in range(len(self)):
                row = [repr(float(self.columns[name][i])) for name in _FIELD_NAMES]
                row.append("1" if self.disengaged_at(self.columns["t"][i]) else "0")
                writer.writerow(row)

    # access --------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.columns["t"])

    def sample(self, i: int) -> TelemetrySample:
        return TelemetrySample(*(float(self.columns[name][i]) for name in _FIELD_NAMES))

    def __iter__(self) -> Iterator[TelemetrySample]:
        return (self.sample(i) for i in range(len(self)))

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def duration(self) -> float:
        return float(self.t[-1])

    def disengaged_at(self, t: float) -> bool:
        return self.disengage_time is not None and t >= self.disengage_time - 1e-12


# -- resampling ---------------------------------------------------------------------


def resample(traj: Trajectory, k: float) -> Trajectory:
    """Linear resampling onto the grid t = 0, k, 2k, ... up to the last sample.

    Angles are interpolated on the shortest arc; the output is truncated at
    the last raw timestamp, never extrapolated.
    """
    if k <= 0:
        raise TrajectoryError(f"step must be positive, got {k}")
    t = traj.t
    native = float(np.min(np.diff(t))) if len(t) > 1 else 0.0
    if len(t) > 1 and k < native - 1e-12:
        raise TrajectoryError(f"step {k} finer than native spacing {native}")
    last = traj.duration()
    n_steps = int(math.floor(last / k + 1e-9))
    if n_steps == 0:
        raise TrajectoryError("trajectory shorter than one step")
    grid = np.arange(n_steps + 1) * k

    columns: dict[str, np.ndarray] = {"t": grid}
    for name in ("vx", "vy", "vz", "lat", "lon", "alt"):
        columns[name] = np.interp(grid, t, traj.columns[name])
    for name in ("pitch", "roll", "yaw"):
        unwrapped = np.unwrap(traj.columns[name])
        on_grid = np.interp(grid, t, unwrapped)
        columns[name] = np.array([wrap_angle(v) for v in on_grid])
    return Trajectory(columns, source=traj.source, disengage_time=traj.disengage_time)


# -- deviation scoring -----------------------------------------------------------------


def enu_offset(ref_lat: float, ref_lon: float, ref_alt: float,
               lat: float, lon: float, alt: float) -> tuple[float, float, float]:
    """East-north-up displacement in meters on a spherical earth."""
    east = math.radians(wrap_degrees(lon - ref_lon)) * EARTH_RADIUS_M * math.cos(math.radians(ref_lat))
    north = math.radians(lat - ref_lat) * EARTH_RADIUS_M
    up = alt - ref_alt
    return east, north, up


def enu_to_geodetic(ref_lat: float, ref_lon: float, east: float, north: float,
                    up: float) -> tuple[float, float, float]:
    """Inverse of :func:`enu_offset` for a reference point at altitude zero."""
    lat = ref_lat + math.degrees(north / EARTH_RADIUS_M)
    lon = wrap_degrees(ref_lon + math.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(ref_lat)))))
    return lat, lon, up


def deviation(sample: TelemetrySample, ref: TelemetrySample, w: DeviationWeights) -> float:
    """Position-equivalent deviation score in meters, zero iff fields agree."""
    if abs(sample.t - ref.t) > 1e-6:
        raise TrajectoryError(
            f"timestamp mismatch: sample at {sample.t}, reference at {ref.t}"
        )
    de, dn, du = enu_offset(ref.lat, ref.lon, ref.alt, sample.lat, sample.lon, sample.alt)
    dpos = math.sqrt(de * de + dn * dn + du * du)
    dvel = math.sqrt(
        (sample.vx - ref.vx) ** 2 + (sample.vy - ref.vy) ** 2 + (sample.vz - ref.vz) ** 2
    )
    datt = math.sqrt(
        wrap_angle(sample.pitch - ref.pitch) ** 2
        + wrap_angle(sample.roll - ref.roll) ** 2
        + wrap_angle(sample.yaw - ref.yaw) ** 2
    )
    return w.pos * dpos + w.vel * dvel + w.att * datt


def classify(score: float, th: Thresholds) -> Classification:
    """Good strictly below the good threshold, Bad strictly above the bad one.

    Scores between the thresholds (inclusive) fall in the Neutral band.
    """
    if score < th.good:
        return Classification.GOOD
    if score > th.bad:
        return Classification.BAD
    return Classification.NEUTRAL


# -- quantization ----------------------------------------------------------------------


def round_half_away(x: float, quantum: float) -> int:
    """Round x/quantum to the nearest integer, ties away from zero."""
    scaled = x / quantum
    return int(math.copysign(math.floor(abs(scaled) + 0.5), scaled))


def quantize(sample: TelemetrySample, spec: QuantizationSpec | None = None) -> tuple[int, ...]:
    """Integer observation signature: what coarse sensors report for a sample."""
    spec = spec or QuantizationSpec()
    return (
        round_half_away(sample.vx, spec.vel),
        round_half_away(sample.vy, spec.vel),
        round_half_away(sample.vz, spec.vel),
        round_half_away(sample.lat, spec.latlon),
        round_half_away(sample.lon, spec.latlon),
        round_half_away(sample.alt, spec.alt),
        round_half_away(math.degrees(sample.pitch), spec.angle_deg),
        round_half_away(math.degrees(sample.roll), spec.angle_deg),
        round_half_away(math.degrees(sample.yaw), spec.angle_deg),
    )
