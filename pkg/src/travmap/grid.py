"""Grid geometry, the feature map container and the UNRG grid file format.

Grid arrays are indexed ``[i, j]`` with ``i`` along +x (``width`` cells) and
``j`` along +y (``height`` cells). Cell ``(i, j)`` covers
``[ox + i*res, ox + (i+1)*res) x [oy + j*res, oy + (j+1)*res)``.

UNRG layout: ``b"UNRG"``, little-endian u32 header length, UTF-8 JSON header
``{width, height, channels, resolution, origin, pose, ...}``, then float32
little-endian values, channel-major then row-major, NaN marking unobserved.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParseError
from .geom import Pose

FEATURE_CHANNELS = ("terrain", "elevation", "step", "local_slope", "local_rough", "slope", "rough")
FEATURE_UNITS = {
    "terrain": "m",
    "elevation": "m",
    "step": "m",
    "local_slope": "rad",
    "local_rough": "m^2",
    "slope": "rad",
    "rough": "m^2",
}

GRID_MAGIC = b"UNRG"


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    resolution: float
    origin: tuple = (0.0, 0.0)
    ego_centered: bool = False

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ContractError(f"grid needs width, height >= 1, got {self.width}x{self.height}")
        if not float(self.resolution) > 0:
            raise ContractError(f"grid resolution must be > 0, got {self.resolution}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "ego_centered", bool(self.ego_centered))

    @classmethod
    def ego(cls, width=140, height=140, resolution=0.05):
        """A grid centered on the sensor, e.g. the default 7 m x 7 m at 5 cm."""
        return cls(width, height, resolution, (-width * resolution / 2.0, -height * resolution / 2.0), True)

    @classmethod
    def covering(cls, points, resolution, margin=0.0):
        """Smallest grid with corner on a resolution multiple that covers ``points``."""
        pts = np.asarray(points, dtype=np.float64)
        lo = np.floor((pts[:, :2].min(axis=0) - margin) / resolution) * resolution
        hi = pts[:, :2].max(axis=0) + margin
        w, h = (np.floor((hi - lo) / resolution).astype(int) + 1).tolist()
        return cls(w, h, resolution, (float(lo[0]), float(lo[1])))

    @property
    def shape(self):
        return (self.width, self.height)

    def cell_index(self, x, y):
        """Integer cell indices of world coordinates (lower-inclusive edges)."""
        i = np.floor((np.asarray(x) - self.origin[0]) / self.resolution).astype(np.int64)
        j = np.floor((np.asarray(y) - self.origin[1]) / self.resolution).astype(np.int64)
        return i, j

    def in_bounds(self, i, j):
        return (i >= 0) & (i < self.width) & (j >= 0) & (j < self.height)

    def cell_centers(self):
        """Return ``(X, Y)`` arrays of shape ``(width, height)``."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys, indexing="ij")

    def to_dict(self):
        return {
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "origin": list(self.origin),
            "ego_centered": self.ego_centered,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("ego_centered") and "origin" not in d:
            return cls.ego(d["width"], d["height"], d["resolution"])
        return cls(d["width"], d["height"], d["resolution"], tuple(d.get("origin", (0.0, 0.0))), d.get("ego_centered", False))


def disk_offsets(radius, resolution):
    """Integer cell offsets whose centers lie within ``radius`` of the origin cell."""
    r = int(math.floor(radius / resolution + 1e-9))
    di, dj = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    keep = (di * di + dj * dj) * resolution * resolution <= radius * radius * (1 + 1e-12)
    return di[keep], dj[keep]


@dataclass
class FeatureMap:
    """``C x W x H`` feature grid with an observed mask.

    Unobserved cells hold NaN in every channel. An observed cell may still
    hold NaN in a slope channel when its plane fit was degenerate.
    """

    spec: GridSpec
    values: np.ndarray
    observed: np.ndarray
    channels: tuple = FEATURE_CHANNELS
    pose: Pose | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.observed = np.asarray(self.observed, dtype=bool)
        shape = (len(self.channels),) + self.spec.shape
        if self.values.shape != shape:
            raise ContractError(f"feature values have shape {self.values.shape}, expected {shape}")
        if self.observed.shape != self.spec.shape:
            raise ContractError(f"observed mask has shape {self.observed.shape}, expected {self.spec.shape}")

    def __getitem__(self, name):
        return self.values[self.index(name)]

    def index(self, name):
        try:
            return self.channels.index(name)
        except ValueError:
            raise ContractError(f"map has no channel {name!r}; channels are {list(self.channels)}") from None

    def copy(self):
        return FeatureMap(self.spec, self.values.copy(), self.observed.copy(), self.channels, self.pose, dict(self.meta))

    def valid(self):
        """Per-channel mask of observed cells with a finite value."""
        return self.observed[None] & np.isfinite(self.values)

    def save(self, path):
        write_grid(path, self.spec, self.channels, self.values, pose=self.pose)

    @classmethod
    def load(cls, path):
        spec, channels, values, pose, _ = read_grid(path)
        observed = np.isfinite(values).any(axis=0)
        return cls(spec, values, observed, channels, pose)


def grid_bytes(spec, channels, values, pose=None, extra=None):
    values = np.asarray(values)
    if values.shape != (len(channels),) + spec.shape:
        raise ContractError(f"values shape {values.shape} does not match {len(channels)} channels on {spec.shape}")
    header = spec.to_dict()
    header["channels"] = list(channels)
    header["pose"] = pose.to_dict() if pose is not None else None
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return GRID_MAGIC + struct.pack("<I", len(blob)) + blob + np.ascontiguousarray(values, dtype="<f4").tobytes()


def write_grid(path, spec, channels, values, pose=None, extra=None):
    with open(path, "wb") as fh:
        fh.write(grid_bytes(spec, channels, values, pose, extra))


def read_grid(path):
    """Return ``(spec, channels, values, pose, header)`` from a UNRG file."""
    with open(path, "rb") as fh:
        data = fh.read()
    header, payload_at = read_binary_header(data, GRID_MAGIC, path)
    try:
        spec = GridSpec.from_dict(header)
        channels = tuple(header["channels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad grid header: {exc}", offset=8, path=path) from None
    count = len(channels) * spec.width * spec.height
    if len(data) - payload_at != 4 * count:
        raise ParseError(
            f"grid payload has {len(data) - payload_at} bytes, expected {4 * count}",
            offset=min(len(data), payload_at + 4 * count),
            path=path,
        )
    values = np.frombuffer(data, dtype="<f4", count=count, offset=payload_at).astype(np.float64)
    values = values.reshape((len(channels),) + spec.shape)
    pose = Pose.from_dict(header["pose"]) if header.get("pose") else None
    return spec, channels, values, pose, header


def read_binary_header(data, magic, path):
    if data[:4] != magic:
        raise ParseError(f"bad magic {data[:4]!r}, expected {magic!r}", offset=0, path=path)
    if len(data) < 8:
        raise ParseError("truncated header length", offset=len(data), path=path)
    (n,) = struct.unpack_from("<I", data, 4)
    if 8 + n > len(data):
        raise ParseError("truncated JSON header", offset=len(data), path=path)
    try:
        header = json.loads(data[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad JSON header: {exc}", offset=8, path=path) from None
    if not isinstance(header, dict):
        raise ParseError("JSON header is not an object", offset=8, path=path)
    return header, 8 + n
