"""Training/evaluation pair generation from a dense cloud and its global map.

A pair is a noised single-frame scan (sensor frame) plus the ego-centred
crop of the global feature map at the same pose. Pair ``i`` depends only on
the inputs, the master seed and ``i``, so pairs can be generated in any order
or in parallel and regenerated individually.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .feature_map import crop_and_align, freespace_cells
from .geom import Pose, ply_bytes
from .grid import GridSpec, grid_bytes
from .noising import NoisingConfig, apply_pipeline
from .scan_sim import SensorModel, depth_to_cloud, simulate_scan
from .validation import as_generator, check_count, check_positive

PAIR_DIR = "pair_{:06d}"
FILES = {"scan": "scan.ply", "label": "label.unrg", "meta": "meta.json"}


@dataclass
class DatasetSpec:
    n_samples: int = 1
    grid: GridSpec = field(default_factory=GridSpec.ego)
    sensor: SensorModel = field(default_factory=SensorModel)
    noising: NoisingConfig = field(default_factory=NoisingConfig)
    step_max: float = 0.2
    slope_max: float = 0.35
    footprint_radius: float = 0.5
    sensor_height: float = 0.7
    regions: list = field(default_factory=list)
    rng_seed: int = 0

    def __post_init__(self):
        check_count(self.n_samples, "n_samples")
        check_positive(self.sensor_height, "sensor_height")
        for r in self.regions:
            if len(r) != 4 or not (r[0] < r[2] and r[1] < r[3]):
                raise ContractError(f"region must be [xmin, ymin, xmax, ymax], got {r}")

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "grid": self.grid.to_dict(),
            "sensor": self.sensor.to_dict(),
            "noising": self.noising.to_dict(),
            "step_max": self.step_max,
            "slope_max": self.slope_max,
            "footprint_radius": self.footprint_radius,
            "sensor_height": self.sensor_height,
            "regions": [list(r) for r in self.regions],
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if not k.startswith("$")}
        if "grid" in d:
            d["grid"] = GridSpec.from_dict(d["grid"])
        if "sensor" in d:
            d["sensor"] = SensorModel.from_dict(d["sensor"])
        if "noising" in d:
            d["noising"] = NoisingConfig.from_dict(d["noising"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ContractError(f"bad dataset spec: {exc}") from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def free_cells(global_map, dspec):
    """Flat indices of cells poses may be drawn from."""
    free = freespace_cells(global_map, dspec.step_max, dspec.slope_max, dspec.footprint_radius)
    if dspec.regions:
        X, Y = global_map.spec.cell_centers()
        inside = np.zeros_like(free)
        for x0, y0, x1, y1 in dspec.regions:
            inside |= (X >= x0) & (X < x1) & (Y >= y0) & (Y < y1)
        free &= inside
    return np.flatnonzero(free)


def sample_pose(global_map, dspec, rng=None, candidates=None):
    """Uniform free cell centre, ``sensor_height`` above its terrain, uniform yaw."""
    rng = as_generator(rng)
    cand = free_cells(global_map, dspec) if candidates is None else candidates
    if len(cand) == 0:
        raise ContractError("no free cells to sample a pose from")
    k = int(cand[rng.integers(len(cand))])
    i, j = divmod(k, global_map.spec.height)
    X, Y = global_map.spec.cell_centers()
    z = global_map["terrain"][i, j] + dspec.sensor_height
    yaw = float(rng.uniform(0.0, 2.0 * np.pi))
    return Pose.from_ypr(yaw, 0.0, 0.0, (X[i, j], Y[i, j], z))


def make_pair(gt_cloud, global_map, pose, dspec, seed=0):
    """Simulate, noise and back-project a scan; crop the matching label.

    Returns ``(scan_points, label_map, meta)``; the label path never touches
    the scan.
    """
    img = simulate_scan(gt_cloud, pose, dspec.sensor)
    noised, info = apply_pipeline(img, dspec.noising, np.random.default_rng(seed), return_info=True)
    scan = depth_to_cloud(noised, "sensor")
    label = crop_and_align(global_map, pose, dspec.grid)
    meta = {
        "pose": pose.to_dict(),
        "seed": int(seed),
        "noise_stages": info,
        "n_points": int(len(scan)),
        "n_returns_clean": img.n_returns,
        "sensor": dspec.sensor.to_dict(),
        "grid": dspec.grid.to_dict(),
    }
    return scan, label, meta


def pair_seed(master_seed, index):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _write(path, payload):
    with open(path, "wb") as fh:
        fh.write(payload)


def _pair_entry(index, seed, pose):
    d = PAIR_DIR.format(index)
    return {
        "id": index,
        "seed": seed,
        "pose": pose.to_dict(),
        "paths": {k: f"{d}/{v}" for k, v in FILES.items()},
    }


def generate(gt_cloud, global_map, dspec, out_dir, n_jobs=1, overwrite=True):
    """Write ``n_samples`` pairs plus ``manifest.json`` under ``out_dir``.

    With ``overwrite=False`` pairs whose three files exist are left alone,
    which regenerates only missing pairs.
    """
    os.makedirs(out_dir, exist_ok=True)
    candidates = free_cells(global_map, dspec)
    if len(candidates) == 0:
        raise ContractError("no free cells to sample a pose from")

    def one(index):
        seed = pair_seed(dspec.rng_seed, index)
        rng = np.random.default_rng(seed)
        pose = sample_pose(global_map, dspec, rng, candidates)
        entry = _pair_entry(index, seed, pose)
        pdir = os.path.join(out_dir, PAIR_DIR.format(index))
        paths = {k: os.path.join(out_dir, v) for k, v in entry["paths"].items()}
        if not overwrite and all(os.path.exists(p) for p in paths.values()):
            return entry
        noise_seed = int(rng.integers(2**63))
        scan, label, meta = make_pair(gt_cloud, global_map, pose, dspec, noise_seed)
        meta["id"] = index
        os.makedirs(pdir, exist_ok=True)
        _write(paths["scan"], ply_bytes(scan))
        _write(paths["label"], grid_bytes(label.spec, label.channels, label.values, pose))
        _write(paths["meta"], (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
        return entry

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            entries = list(pool.map(one, range(dspec.n_samples)))
    else:
        entries = [one(i) for i in range(dspec.n_samples)]
    manifest = {"dataset_spec": dspec.to_dict(), "pairs": entries}
    _write(os.path.join(out_dir, "manifest.json"), (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return manifest


def load_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)
