"""Noising stages that make simulated depth images look like robot lidar.

Stages run in a fixed order (ceiling crop, robot mask, salt-and-pepper,
range noise); each fires with its own probability and draws its parameters
uniformly from configured ranges. All randomness comes from one
``numpy.random.Generator`` consumed in a fixed order, so the output is a pure
function of (image, config, seed).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError
from .scan_sim import SensorModel, sensor_frame_z
from .validation import as_generator, check_mask, check_nonnegative, check_probability, check_range

STAGES = ("ceiling_crop", "robot_mask", "salt_pepper", "range_noise")


@dataclass
class NoisingConfig:
    """Stage probabilities and parameter ranges; defaults follow the published table.

    ``robot_masks`` holds boolean grids matching the sensor; when empty the
    pipeline uses :func:`default_robot_masks` for the image's sensor.
    """

    p_ceiling: float = 0.5
    dz_max: tuple = (0.5, 1.0)
    p_mask: float = 0.8
    n_masks: int = 4
    robot_masks: list = field(default_factory=list)
    p_salt_pepper: float = 1.0
    keep_prob: float = 0.999
    salt_pepper_max_range: float = 10.0
    p_range_noise: float = 1.0
    slope: tuple = (0.001, 0.01)
    intercept: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("p_ceiling", "p_mask", "p_salt_pepper", "keep_prob", "p_range_noise"):
            setattr(self, name, check_probability(getattr(self, name), name))
        self.dz_max = check_range(self.dz_max, "dz_max")
        self.slope = check_range(self.slope, "slope")
        self.intercept = check_nonnegative(self.intercept, "intercept")
        self.salt_pepper_max_range = check_nonnegative(self.salt_pepper_max_range, "salt_pepper_max_range")
        self.rng_seed = int(self.rng_seed)
        if not 0 <= self.rng_seed < 2**64:
            raise ContractError("rng_seed must be an unsigned 64-bit integer")

    @classmethod
    def disabled(cls, **overrides):
        """A config whose stages never fire."""
        base = dict(p_ceiling=0.0, p_mask=0.0, p_salt_pepper=0.0, p_range_noise=0.0)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["dz_max"] = list(self.dz_max)
        d["slope"] = list(self.slope)
        d["robot_masks"] = [np.asarray(m, dtype=np.uint8).tolist() for m in self.robot_masks]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("$comment", None)
        d["robot_masks"] = [np.asarray(m, dtype=bool) for m in d.get("robot_masks", [])]
        try:
            return cls(**d)
        except TypeError as exc:
            raise ContractError(f"bad noising config: {exc}") from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def masks_for(self, sensor):
        if self.robot_masks:
            return [check_mask(m, sensor.shape, "robot mask") for m in self.robot_masks]
        return default_robot_masks(sensor, self.n_masks)


def default_robot_masks(sensor=None, n=4):
    """Procedural body-occlusion masks: blobs in the lowest beams.

    Each mask covers a few azimuth sectors of the bottom rows, standing in
    for legs, a payload or a body panel seen by a top-mounted lidar.
    """
    sensor = sensor or SensorModel()
    az = sensor.azimuth_centers()
    el_frac = (np.arange(sensor.n_elevation) + 0.5) / sensor.n_elevation
    layouts = [
        # (sector centres in rad, half-width in rad, height as fraction of rows)
        ((np.pi * 0.75, np.pi * 1.25), 0.25, 0.20),
        ((np.pi * 0.25, np.pi * 0.75, np.pi * 1.25, np.pi * 1.75), 0.15, 0.25),
        ((np.pi,), 0.6, 0.30),
        ((0.0, np.pi), 0.35, 0.15),
    ]
    masks = []
    for k in range(n):
        centres, half, frac = layouts[k % len(layouts)]
        frac = frac * (1.0 + 0.1 * (k // len(layouts)))
        mask = np.zeros(sensor.shape, dtype=bool)
        for c in centres:
            d = np.abs((az - c + np.pi) % (2 * np.pi) - np.pi)
            # sector height tapers off toward the sector edge
            reach = frac * np.clip(1.0 - (d / half) ** 2, 0.0, None)
            mask |= el_frac[:, None] < reach[None, :]
        masks.append(mask)
    return masks


def ceiling_crop(img, dz_max):
    """Drop returns more than ``dz_max`` above the sensor origin."""
    dz_max = check_nonnegative(dz_max, "dz_max")
    z = sensor_frame_z(img)
    with np.errstate(invalid="ignore"):
        cut = z > dz_max
    out = img.ranges.copy()
    out[cut] = np.nan
    return img.with_ranges(out)


def robot_mask(img, mask):
    mask = check_mask(mask, img.sensor.shape)
    out = img.ranges.copy()
    out[mask] = np.nan
    return img.with_ranges(out)


def _clip_to_sensor(values, sensor):
    lo = max(sensor.min_range, float(np.finfo(np.float32).tiny))
    return np.clip(values, lo, sensor.max_range).astype(np.float32)


def salt_pepper(img, keep_prob, max_range, rng=None):
    """Keep each return with probability ``keep_prob``, else redraw it on (0, max_range)."""
    keep_prob = check_probability(keep_prob, "keep_prob")
    rng = as_generator(rng)
    hit = img.returns
    n = int(hit.sum())
    u = rng.random(n)
    draws = rng.uniform(np.nextafter(0.0, 1.0), max_range, n)
    replace = u >= keep_prob
    vals = img.ranges[hit].copy()
    vals[replace] = _clip_to_sensor(draws[replace], img.sensor)
    out = img.ranges.copy()
    out[hit] = vals
    return img.with_ranges(out)


def range_noise(img, slope, intercept, rng=None):
    """Add zero-mean Gaussian noise with standard deviation ``slope * r + intercept``."""
    check_nonnegative(slope, "slope")
    check_nonnegative(intercept, "intercept")
    rng = as_generator(rng)
    hit = img.returns
    r = img.ranges[hit].astype(np.float64)
    eps = rng.standard_normal(r.size) * (slope * r + intercept)
    out = img.ranges.copy()
    if slope == 0.0 and intercept == 0.0:
        return img.with_ranges(out)
    out[hit] = _clip_to_sensor(r + eps, img.sensor)
    return img.with_ranges(out)


def apply_pipeline(img, cfg, rng=None, return_info=False):
    """Run the four stages in order. ``rng`` defaults to ``cfg.rng_seed``.

    With ``return_info`` the drawn stage decisions and parameters are
    returned alongside the image.
    """
    rng = as_generator(cfg.rng_seed if rng is None else rng)
    info = {}
    # decisions and parameters are always drawn so the stream layout is fixed
    fire = rng.random(4) < np.array([cfg.p_ceiling, cfg.p_mask, cfg.p_salt_pepper, cfg.p_range_noise])
    dz = float(rng.uniform(*cfg.dz_max))
    masks = cfg.masks_for(img.sensor)
    mask_idx = int(rng.integers(len(masks))) if masks else -1
    m = float(rng.uniform(*cfg.slope))
    stage_rngs = rng.spawn(2)

    out = img
    if fire[0]:
        out = ceiling_crop(out, dz)
        info["ceiling_crop"] = {"dz_max": dz}
    if fire[1] and masks:
        out = robot_mask(out, masks[mask_idx])
        info["robot_mask"] = {"mask": mask_idx}
    if fire[2]:
        out = salt_pepper(out, cfg.keep_prob, cfg.salt_pepper_max_range, stage_rngs[0])
        info["salt_pepper"] = {"keep_prob": cfg.keep_prob, "max_range": cfg.salt_pepper_max_range}
    if fire[3]:
        out = range_noise(out, m, cfg.intercept, stage_rngs[1])
        info["range_noise"] = {"slope": m, "intercept": cfg.intercept}
    if return_info:
        return out, info
    return out
