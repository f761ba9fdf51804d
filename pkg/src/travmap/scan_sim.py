"""Lidar frame simulation from a dense cloud by closest-point projection.

Each ground-truth point is moved into the sensor frame, converted to
(azimuth, elevation, range) and binned into the beam grid; every cell keeps
its nearest hit. Depth images store row ``e`` = elevation bin ``e`` counted
upward from ``elevation_min`` and column ``a`` = azimuth bin ``a`` centred on
``a * 2*pi / n_azimuth``. NO_RETURN is NaN.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, ParseError
from .geom import Pose, transform_cloud
from .grid import read_binary_header
from .validation import check_cloud

DEPTH_MAGIC = b"UNDI"
NO_RETURN = np.float32(np.nan)


@dataclass(frozen=True)
class SensorModel:
    """Beam layout and range limits. Defaults mimic a 128-beam spinning lidar."""

    n_azimuth: int = 1024
    n_elevation: int = 128
    elevation_min: float = -0.393
    elevation_max: float = 0.393
    max_range: float = 10.0
    min_range: float = 0.0

    def __post_init__(self):
        if int(self.n_azimuth) < 1 or int(self.n_elevation) < 1:
            raise ContractError("sensor needs at least one azimuth and one elevation bin")
        if not self.elevation_min < self.elevation_max:
            raise ContractError("sensor elevation_min must be below elevation_max")
        if not 0.0 <= self.min_range < self.max_range:
            raise ContractError("sensor ranges must satisfy 0 <= min_range < max_range")
        object.__setattr__(self, "n_azimuth", int(self.n_azimuth))
        object.__setattr__(self, "n_elevation", int(self.n_elevation))

    @property
    def shape(self):
        return (self.n_elevation, self.n_azimuth)

    @property
    def azimuth_step(self):
        return 2.0 * math.pi / self.n_azimuth

    @property
    def elevation_step(self):
        return (self.elevation_max - self.elevation_min) / self.n_elevation

    def azimuth_centers(self):
        return np.arange(self.n_azimuth) * self.azimuth_step

    def elevation_centers(self):
        return self.elevation_min + (np.arange(self.n_elevation) + 0.5) * self.elevation_step

    def azimuth_bin(self, azimuth):
        # boundary values go to the lower bin
        u = np.asarray(azimuth) / self.azimuth_step + 0.5
        return (np.ceil(u).astype(np.int64) - 1) % self.n_azimuth

    def elevation_bin(self, elevation):
        v = (np.asarray(elevation) - self.elevation_min) / self.elevation_step
        return np.clip(np.ceil(v).astype(np.int64) - 1, 0, self.n_elevation - 1)

    def directions(self):
        """Unit bin-centre directions, shape ``(n_elevation, n_azimuth, 3)``."""
        el = self.elevation_centers()[:, None]
        az = self.azimuth_centers()[None, :]
        ce = np.cos(el)
        return np.stack(np.broadcast_arrays(ce * np.cos(az), ce * np.sin(az), np.sin(el)), axis=-1)

    def to_dict(self):
        return {
            "n_azimuth": self.n_azimuth,
            "n_elevation": self.n_elevation,
            "elevation_min": self.elevation_min,
            "elevation_max": self.elevation_max,
            "min_range": self.min_range,
            "max_range": self.max_range,
        }

    @classmethod
    def from_dict(cls, d):
        keys = ("n_azimuth", "n_elevation", "elevation_min", "elevation_max", "min_range", "max_range")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass
class DepthImage:
    ranges: np.ndarray
    sensor: SensorModel = field(default_factory=SensorModel)
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=np.float32)
        if self.ranges.shape != self.sensor.shape:
            raise ContractError(f"depth image has shape {self.ranges.shape}, sensor expects {self.sensor.shape}")

    @property
    def returns(self):
        return np.isfinite(self.ranges)

    @property
    def n_returns(self):
        return int(self.returns.sum())

    def with_ranges(self, ranges):
        return replace(self, ranges=np.asarray(ranges, dtype=np.float32))

    def to_bytes(self):
        header = self.sensor.to_dict()
        header["pose"] = self.pose.to_dict()
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return DEPTH_MAGIC + struct.pack("<I", len(blob)) + blob + np.ascontiguousarray(self.ranges, dtype="<f4").tobytes()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        header, at = read_binary_header(data, DEPTH_MAGIC, path)
        try:
            sensor = SensorModel.from_dict(header)
            pose = Pose.from_dict(header["pose"]) if header.get("pose") else Pose()
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad depth image header: {exc}", offset=8, path=path) from None
        count = sensor.n_elevation * sensor.n_azimuth
        if len(data) - at != 4 * count:
            raise ParseError(
                f"depth payload has {len(data) - at} bytes, expected {4 * count}",
                offset=min(len(data), at + 4 * count),
                path=path,
            )
        ranges = np.frombuffer(data, dtype="<f4", count=count, offset=at).reshape(sensor.shape).copy()
        return cls(ranges, sensor, pose)


def project_points(points, sensor):
    """Bin sensor-frame points; returns ``(flat_cell_index, range32)`` of kept points."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    rho = np.hypot(x, y)
    r = np.hypot(rho, z)
    r32 = r.astype(np.float32)
    el = np.arctan2(z, rho)
    keep = (r > 0) & (r32 >= sensor.min_range) & (r32 <= sensor.max_range)
    keep &= (el >= sensor.elevation_min) & (el <= sensor.elevation_max)
    az_idx = sensor.azimuth_bin(np.arctan2(y[keep], x[keep]))
    el_idx = sensor.elevation_bin(el[keep])
    return el_idx * sensor.n_azimuth + az_idx, r32[keep]


def simulate_scan(gt_cloud, pose, sensor=None):
    """Render the depth image seen from ``pose`` with per-beam nearest-return occlusion."""
    sensor = sensor or SensorModel()
    pts = check_cloud(gt_cloud)
    if len(pts) == 0:
        raise ContractError("simulate_scan needs a non-empty ground-truth cloud")
    local = transform_cloud(pts, pose, "world_to_sensor")
    flat, r32 = project_points(local, sensor)
    out = np.full(sensor.n_elevation * sensor.n_azimuth, np.inf, dtype=np.float32)
    np.minimum.at(out, flat, r32)
    out[np.isinf(out)] = np.nan
    return DepthImage(out.reshape(sensor.shape), sensor, pose)


def depth_to_cloud(img, frame="sensor"):
    """Back-project every return along its bin-centre direction."""
    hit = img.returns
    dirs = img.sensor.directions()[hit]
    pts = dirs * img.ranges[hit].astype(np.float64)[:, None]
    if frame == "sensor":
        return pts
    if frame == "world":
        return transform_cloud(pts, img.pose, "sensor_to_world")
    raise ContractError(f"unknown frame {frame!r}")


def sensor_frame_z(img):
    """Sensor-frame height of every cell's return (NaN where no return)."""
    return img.ranges.astype(np.float64) * np.sin(img.sensor.elevation_centers())[:, None]
