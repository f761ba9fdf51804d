"""Rigid poses, point cloud transforms and point cloud file I/O.

Point clouds are plain ``(P, 3)`` float64 arrays in meters, z up. Extra
per-point fields found in files (intensity, ring, ...) are discarded.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError
from .validation import check_cloud

__all__ = [
    "Pose",
    "transform_cloud",
    "load_cloud",
    "save_cloud",
    "infer_cloud_format",
]

_ORTHO_TOL = 1e-9


def _rotation_from_ypr(yaw, pitch, roll):
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class Pose:
    """Sensor pose in the world frame: ``p_world = R @ p_sensor + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ContractError("pose needs a 3x3 rotation and a 3-vector translation")
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise ContractError("pose contains non-finite values")
        if np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ContractError("pose rotation is not a proper orthonormal matrix")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_ypr(cls, yaw=0.0, pitch=0.0, roll=0.0, translation=(0.0, 0.0, 0.0)):
        """Build a pose from yaw (about +z), pitch (+y), roll (+x), applied z-y-x."""
        return cls(_rotation_from_ypr(yaw, pitch, roll), translation)

    @property
    def yaw(self):
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    @property
    def x(self):
        return float(self.translation[0])

    @property
    def y(self):
        return float(self.translation[1])

    @property
    def z(self):
        return float(self.translation[2])

    def inverse(self):
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def to_dict(self):
        return {
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d):
        """Accept either ``{rotation, translation}`` or ``{x, y, z, yaw, pitch, roll}``."""
        if "rotation" in d:
            return cls(d["rotation"], d.get("translation", (0.0, 0.0, 0.0)))
        return cls.from_ypr(
            d.get("yaw", 0.0),
            d.get("pitch", 0.0),
            d.get("roll", 0.0),
            (d.get("x", 0.0), d.get("y", 0.0), d.get("z", 0.0)),
        )

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def transform_cloud(cloud, pose, direction="sensor_to_world"):
    """Apply ``pose`` to every point.

    ``sensor_to_world`` computes ``R p + t``; ``world_to_sensor`` computes
    ``R^T (p - t)``. The whole cloud is rejected if any point is non-finite.
    """
    pts = check_cloud(cloud)
    if direction == "sensor_to_world":
        return pts @ pose.rotation.T + pose.translation
    if direction == "world_to_sensor":
        return (pts - pose.translation) @ pose.rotation
    raise ContractError(f"unknown transform direction {direction!r}")


# --------------------------------------------------------------------------
# file I/O

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_EXTENSIONS = {".ply": "ply_binary", ".xyz": "xyz_ascii", ".txt": "xyz_ascii"}


def infer_cloud_format(path):
    fmt = _EXTENSIONS.get(Path(path).suffix.lower())
    if fmt is None:
        raise ContractError(f"cannot infer point cloud format from {path!r}")
    return fmt


def load_cloud(path, format=None):
    """Read a point cloud file, keeping points in file order."""
    fmt = format or infer_cloud_format(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if fmt == "ply_binary":
        return _parse_ply(data, path)
    if fmt == "xyz_ascii":
        return _parse_xyz(data, path)
    raise ContractError(f"unknown point cloud format {fmt!r}")


def save_cloud(cloud, path, format=None):
    fmt = format or infer_cloud_format(path)
    pts = check_cloud(cloud)
    if fmt == "ply_binary":
        payload = ply_bytes(pts)
    elif fmt == "xyz_ascii":
        payload = "".join(f"{x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in pts.tolist()).encode("ascii")
    else:
        raise ContractError(f"unknown point cloud format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(payload)


def ply_bytes(points):
    """Encode points as a little-endian binary PLY with float32 x, y, z."""
    pts = np.ascontiguousarray(points, dtype="<f4")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    ).encode("ascii")
    return header + pts.tobytes()


def _parse_ply(data, path):
    if not data.startswith(b"ply\n") and not data.startswith(b"ply\r\n"):
        raise ParseError("missing 'ply' magic", offset=0, path=path)
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError("unterminated PLY header", offset=len(data), path=path)
    nl = data.find(b"\n", end)
    if nl < 0:
        raise ParseError("unterminated PLY header", offset=len(data), path=path)
    body_start = nl + 1

    elements = []  # (name, count, [(prop, dtype-or-None-for-list)])
    fmt_seen = False
    offset = 0
    for raw in data[:end].split(b"\n"):
        line = raw.decode("ascii", errors="replace").strip()
        tokens = line.split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            pass
        elif tokens[0] == "format":
            if tokens[1:2] != ["binary_little_endian"]:
                raise ParseError(f"unsupported PLY format {' '.join(tokens[1:])!r}", offset=offset, path=path)
            fmt_seen = True
        elif tokens[0] == "element" and len(tokens) == 3 and tokens[2].isdigit():
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property" and elements:
            if tokens[1] == "list":
                elements[-1][2].append((tokens[-1], None))
            elif len(tokens) == 3 and tokens[1] in _PLY_TYPES:
                elements[-1][2].append((tokens[2], _PLY_TYPES[tokens[1]]))
            else:
                raise ParseError(f"bad PLY property line {line!r}", offset=offset, path=path)
        else:
            raise ParseError(f"bad PLY header line {line!r}", offset=offset, path=path)
        offset += len(raw) + 1
    if not fmt_seen:
        raise ParseError("PLY header lacks a format line", offset=0, path=path)

    cursor = body_start
    for name, count, props in elements:
        if any(dt is None for _, dt in props):
            if name == "vertex":
                raise ParseError("list properties on vertex are not supported", offset=cursor, path=path)
            raise ParseError(f"element {name!r} with list properties precedes vertex", offset=cursor, path=path)
        dtype = np.dtype([(p, "<" + dt) for p, dt in props])
        nbytes = dtype.itemsize * count
        if name != "vertex":
            cursor += nbytes
            continue
        names = [p for p, _ in props]
        for axis in "xyz":
            if axis not in names:
                raise ParseError(f"vertex element lacks property {axis!r}", offset=cursor, path=path)
            if dtype[axis].kind != "f":
                raise ParseError(f"vertex property {axis!r} must be floating point", offset=cursor, path=path)
        if cursor + nbytes > len(data):
            raise ParseError(
                f"truncated vertex payload: need {nbytes} bytes, have {len(data) - cursor}",
                offset=len(data),
                path=path,
            )
        rec = np.frombuffer(data, dtype=dtype, count=count, offset=cursor)
        pts = np.empty((count, 3), dtype=np.float64)
        for k, axis in enumerate("xyz"):
            pts[:, k] = rec[axis]
        return check_cloud(pts)
    raise ParseError("PLY file has no vertex element", offset=body_start, path=path)


_COMMENT = re.compile(rb"^\s*#")


def _parse_xyz(data, path):
    values = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        line = raw.strip()
        if line and not _COMMENT.match(raw):
            tokens = line.split()
            if len(tokens) != 3:
                raise ParseError(f"expected 3 values per line, got {len(tokens)}", offset=offset, path=path)
            try:
                values.append([float(t) for t in tokens])
            except ValueError:
                col = next(i for i, t in enumerate(tokens) if not _is_float(t))
                tok_off = offset + raw.index(tokens[col])
                raise ParseError(f"non-numeric token {tokens[col].decode(errors='replace')!r}", offset=tok_off, path=path) from None
        offset += len(raw)
    if not values:
        return np.zeros((0, 3), dtype=np.float64)
    return check_cloud(np.array(values, dtype=np.float64))


def _is_float(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True

