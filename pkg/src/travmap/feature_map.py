"""BEV rasterization and the seven terrain features.

terrain    1st percentile of cell heights
elevation  99th percentile after dropping points above terrain + clearance
step       elevation - terrain
local_slope / slope   inclination of the least-squares plane through the
                      elevations of observed cells within the foothold /
                      footprint radius
local_rough / rough   variance of those elevations about the fitted plane
                      (about their mean when the plane fit is degenerate)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError
from .grid import FEATURE_CHANNELS, FeatureMap, disk_offsets
from .validation import check_cloud, check_count, check_positive

_HEIGHT_CHANNELS = ("terrain", "elevation")


@dataclass(frozen=True)
class FeatureParams:
    foothold_radius: float = 0.10
    footprint_radius: float = 0.50
    overhang_clearance: float = 0.8
    min_points_per_cell: int = 1

    def __post_init__(self):
        check_positive(self.foothold_radius, "foothold_radius")
        check_positive(self.overhang_clearance, "overhang_clearance")
        check_count(self.min_points_per_cell, "min_points_per_cell")
        if self.footprint_radius < self.foothold_radius:
            raise ContractError("footprint_radius must be >= foothold_radius")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**{k: v for k, v in d.items() if not k.startswith("$")})
        except TypeError as exc:
            raise ContractError(f"bad feature params: {exc}") from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class CellHeights:
    """Per-cell height lists in CSR form.

    ``z[offsets[k]:offsets[k+1]]`` are the heights of flat cell ``k = i*H + j``
    in input order.
    """

    def __init__(self, spec, z, offsets):
        self.spec = spec
        self.z = z
        self.offsets = offsets

    @property
    def counts(self):
        return np.diff(self.offsets).reshape(self.spec.shape)

    def heights(self, i, j):
        k = i * self.spec.height + j
        return self.z[self.offsets[k] : self.offsets[k + 1]]

    def cell_ids(self):
        return np.repeat(np.arange(self.spec.width * self.spec.height), np.diff(self.offsets))


def rasterize(cloud, spec):
    """Assign each point to the cell containing its (x, y); drop points off the grid."""
    pts = check_cloud(cloud)
    i, j = spec.cell_index(pts[:, 0], pts[:, 1])
    inside = spec.in_bounds(i, j)
    flat = i[inside] * spec.height + j[inside]
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=spec.width * spec.height)
    offsets = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return CellHeights(spec, pts[inside, 2][order], offsets)


def sorted_percentile(zs, start, n, q):
    """Linear-interpolation percentile of ascending segments ``zs[start:start+n]``.

    Uses ``pos = (q / 100) * (n - 1)`` and ``lo + (hi - lo) * frac``.
    """
    pos = (q / 100.0) * (n - 1)
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    hi = np.minimum(lo + 1, n - 1)
    zl = zs[start + lo]
    return zl + (zs[start + hi] - zl) * frac


def _cell_features(cells, params):
    spec = cells.spec
    n_cells = spec.width * spec.height
    counts = np.diff(cells.offsets)
    observed = counts >= params.min_points_per_cell
    ids = cells.cell_ids()
    order = np.lexsort((cells.z, ids))
    zs = cells.z[order]
    start = cells.offsets[:-1]

    terrain = np.full(n_cells, np.nan)
    elevation = np.full(n_cells, np.nan)
    occ = np.flatnonzero(observed)
    terrain[occ] = sorted_percentile(zs, start[occ], counts[occ], 1.0)

    kept = zs <= (terrain + params.overhang_clearance)[ids]
    n_kept = np.bincount(ids, weights=kept, minlength=n_cells).astype(np.int64)
    elevation[occ] = sorted_percentile(zs, start[occ], n_kept[occ], 99.0)
    # a huge gap right above the 1st percentile can leave the trimmed 99th below it
    elevation[occ] = np.maximum(elevation[occ], terrain[occ])
    shape = spec.shape
    return terrain.reshape(shape), elevation.reshape(shape), observed.reshape(shape)


def neighborhood_features(elevation, observed, resolution, radius):
    """Plane-fit slope and residual variance over a circular window.

    Returns ``(slope, rough)``; both NaN on unobserved cells, slope NaN where
    fewer than three observed neighbours exist or they are collinear.
    """
    W, H = observed.shape
    di, dj = disk_offsets(radius, resolution)
    r = int(max(np.abs(di).max(), np.abs(dj).max()))
    zc = np.where(observed, elevation, 0.0)
    zpad = np.zeros((W + 2 * r, H + 2 * r))
    zpad[r : r + W, r : r + H] = zc
    opad = np.zeros((W + 2 * r, H + 2 * r))
    opad[r : r + W, r : r + H] = observed

    acc = {k: np.zeros((W, H)) for k in ("n", "x", "y", "xx", "xy", "yy", "d", "xd", "yd", "dd")}
    for a, b in zip(di.tolist(), dj.tolist()):
        w = opad[r + a : r + a + W, r + b : r + b + H]
        d = (zpad[r + a : r + a + W, r + b : r + b + H] - zc) * w
        x = a * resolution
        y = b * resolution
        acc["n"] += w
        acc["x"] += w * x
        acc["y"] += w * y
        acc["xx"] += w * (x * x)
        acc["xy"] += w * (x * y)
        acc["yy"] += w * (y * y)
        acc["d"] += d
        acc["xd"] += d * x
        acc["yd"] += d * y
        acc["dd"] += d * d

    with np.errstate(invalid="ignore", divide="ignore"):
        n = acc["n"]
        mx, my, md = acc["x"] / n, acc["y"] / n, acc["d"] / n
        cxx = acc["xx"] / n - mx * mx
        cxy = acc["xy"] / n - mx * my
        cyy = acc["yy"] / n - my * my
        cxd = acc["xd"] / n - mx * md
        cyd = acc["yd"] / n - my * md
        cdd = acc["dd"] / n - md * md
        det = cxx * cyy - cxy * cxy
        ok = observed & (n >= 3) & (det > 1e-10 * (cxx + cyy) ** 2)
        gx = (cyy * cxd - cxy * cyd) / det
        gy = (cxx * cyd - cxy * cxd) / det
        slope = np.where(ok, np.arctan(np.hypot(gx, gy)), np.nan)
        resid = cdd - gx * cxd - gy * cyd
        rough = np.where(ok, resid, cdd)
    rough = np.where(observed, np.maximum(rough, 0.0), np.nan)
    slope[~observed] = np.nan
    return slope, rough


def compute_features(cells, params=None):
    """Turn rasterized heights into the canonical seven-channel feature map."""
    params = params or FeatureParams()
    spec = cells.spec
    terrain, elevation, observed = _cell_features(cells, params)
    step = elevation - terrain
    local_slope, local_rough = neighborhood_features(elevation, observed, spec.resolution, params.foothold_radius)
    slope, rough = neighborhood_features(elevation, observed, spec.resolution, params.footprint_radius)
    values = np.stack([terrain, elevation, step, local_slope, local_rough, slope, rough])
    return FeatureMap(spec, values, observed, FEATURE_CHANNELS)


def map_cloud(cloud, spec, params=None):
    """Rasterize and featurize a cloud in one call."""
    return compute_features(rasterize(cloud, spec), params)


def crop_and_align(global_map, pose, spec):
    """Ego-centred crop of ``global_map`` at ``pose`` by nearest-cell lookup.

    Target cell centres are rotated by the pose yaw and translated into the
    global grid; cells landing outside it are unobserved. Height channels are
    re-referenced to the pose height.
    """
    X, Y = spec.cell_centers()
    c, s = np.cos(pose.yaw), np.sin(pose.yaw)
    xw = c * X - s * Y + pose.x
    yw = s * X + c * Y + pose.y
    gi, gj = global_map.spec.cell_index(xw, yw)
    inside = global_map.spec.in_bounds(gi, gj)
    values = np.full((len(global_map.channels),) + spec.shape, np.nan)
    values[:, inside] = global_map.values[:, gi[inside], gj[inside]]
    observed = np.zeros(spec.shape, dtype=bool)
    observed[inside] = global_map.observed[gi[inside], gj[inside]]
    values[:, ~observed] = np.nan
    for name in _HEIGHT_CHANNELS:
        if name in global_map.channels:
            values[global_map.channels.index(name)] -= pose.z
    return FeatureMap(spec, values, observed, global_map.channels, pose)


def neighborhood_observed(observed, resolution, radius):
    """True where every cell within ``radius`` lies on the grid and is observed."""
    W, H = observed.shape
    di, dj = disk_offsets(radius, resolution)
    r = int(max(np.abs(di).max(), np.abs(dj).max()))
    opad = np.zeros((W + 2 * r, H + 2 * r), dtype=bool)
    opad[r : r + W, r : r + H] = observed
    full = observed.copy()
    for a, b in zip(di.tolist(), dj.tolist()):
        full &= opad[r + a : r + a + W, r + b : r + b + H]
    return full


def freespace_cells(fmap, step_max=0.2, slope_max=0.35, footprint_radius=0.5):
    """Cells where a robot pose may be placed.

    Observed, step below ``step_max``, footprint slope below ``slope_max``, and
    the whole footprint neighbourhood observed.
    """
    with np.errstate(invalid="ignore"):
        ok = fmap.observed & (fmap["step"] < step_max) & (fmap["slope"] < slope_max)
    return ok & neighborhood_observed(fmap.observed, fmap.spec.resolution, footprint_radius)
