"""Procedural indoor scenes used as bundled ground-truth clouds.

A scene is a walled room with a floor, axis-aligned boxes and a ramp onto a
raised platform. Surfaces are sampled with a scrambled Halton sequence so
point coverage is even, and horizontal surfaces get a higher density than
walls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.stats import qmc

from .geom import load_cloud


@dataclass(frozen=True)
class Box:
    x0: float
    y0: float
    x1: float
    y1: float
    height: float


@dataclass(frozen=True)
class Ramp:
    """Incline along +x from ``x0`` (floor) to ``x1`` (``height``), then a flat
    platform up to ``x2``."""

    x0: float
    x1: float
    x2: float
    y0: float
    y1: float
    height: float


@dataclass(frozen=True)
class RoomScene:
    size: float = 8.0
    wall_height: float = 1.5
    boxes: tuple = field(default_factory=tuple)
    ramp: Ramp | None = None
    n_points: int = 50_000
    seed: int = 0
    wall_weight: float = 0.3


ROOM_50K = RoomScene(
    size=8.0,
    wall_height=1.5,
    boxes=(Box(1.0, 1.0, 2.0, 1.8, 0.5), Box(5.5, 1.2, 6.3, 2.4, 0.3), Box(2.2, 5.6, 3.4, 6.4, 0.9)),
    ramp=Ramp(4.0, 6.0, 7.0, 4.6, 6.2, 0.3),
    n_points=50_000,
    seed=7,
)

TOY_10K = RoomScene(
    size=4.0,
    wall_height=1.0,
    boxes=(Box(0.6, 0.6, 1.2, 1.2, 0.4),),
    ramp=Ramp(2.2, 3.2, 3.7, 2.4, 3.4, 0.2),
    n_points=10_000,
    seed=3,
)

SCENES = {"room_50k": ROOM_50K, "toy_10k": TOY_10K}


def _floor_height(scene, x, y):
    z = np.zeros_like(x)
    r = scene.ramp
    if r is not None:
        on = (y >= r.y0) & (y < r.y1) & (x >= r.x0) & (x < r.x2)
        frac = np.clip((x - r.x0) / (r.x1 - r.x0), 0.0, 1.0)
        z = np.where(on, frac * r.height, z)
    return z


def _under_box(scene, x, y):
    hit = np.zeros(x.shape, dtype=bool)
    for b in scene.boxes:
        hit |= (x >= b.x0) & (x < b.x1) & (y >= b.y0) & (y < b.y1)
    return hit


def _surfaces(scene):
    """Yield ``(kind, params, area, weight)`` for every sampled surface."""
    L, Hw = scene.size, scene.wall_height
    out = [("floor", None, L * L, 1.0)]
    for b in scene.boxes:
        out.append(("top", b, (b.x1 - b.x0) * (b.y1 - b.y0), 1.0))
        for side in range(4):
            length = (b.x1 - b.x0) if side < 2 else (b.y1 - b.y0)
            out.append(("side", (b, side), length * b.height, scene.wall_weight))
    r = scene.ramp
    if r is not None:
        for side in range(2):
            out.append(("ramp_side", (r, side), (r.x2 - r.x0) * r.height, scene.wall_weight))
        out.append(("ramp_end", r, (r.y1 - r.y0) * r.height, scene.wall_weight))
    for side in range(4):
        out.append(("wall", side, L * Hw, scene.wall_weight))
    return out


def _sample_surface(scene, kind, params, u):
    L, Hw = scene.size, scene.wall_height
    a, b = u[:, 0], u[:, 1]
    if kind == "floor":
        x, y = a * L, b * L
        return np.c_[x, y, _floor_height(scene, x, y)]
    if kind == "top":
        x, y = params.x0 + a * (params.x1 - params.x0), params.y0 + b * (params.y1 - params.y0)
        return np.c_[x, y, np.full_like(x, params.height)]
    if kind == "side":
        box, side = params
        z = b * box.height
        if side < 2:
            x = box.x0 + a * (box.x1 - box.x0)
            y = np.full_like(x, box.y0 if side == 0 else box.y1)
        else:
            y = box.y0 + a * (box.y1 - box.y0)
            x = np.full_like(y, box.x0 if side == 2 else box.x1)
        return np.c_[x, y, z]
    if kind == "ramp_side":
        r, side = params
        x = r.x0 + a * (r.x2 - r.x0)
        top = _floor_height(scene, x, np.full_like(x, r.y0))
        return np.c_[x, np.full_like(x, r.y0 if side == 0 else r.y1), b * top]
    if kind == "ramp_end":
        r = params
        y = r.y0 + a * (r.y1 - r.y0)
        return np.c_[np.full_like(y, r.x2), y, b * r.height]
    if kind == "wall":
        t = a * L
        z = b * Hw
        if params == 0:
            return np.c_[t, np.zeros_like(t), z]
        if params == 1:
            return np.c_[t, np.full_like(t, L), z]
        if params == 2:
            return np.c_[np.zeros_like(t), t, z]
        return np.c_[np.full_like(t, L), t, z]
    raise ValueError(kind)


def build_scene(scene):
    """Deterministically sample exactly ``scene.n_points`` points."""
    surfaces = _surfaces(scene)
    weights = np.array([area * w for _, _, area, w in surfaces])
    counts = np.floor(weights / weights.sum() * scene.n_points).astype(int)
    counts[0] += scene.n_points - counts.sum()
    parts = []
    for k, ((kind, params, _, _), n) in enumerate(zip(surfaces, counts)):
        if n == 0:
            continue
        halton = qmc.Halton(d=2, scramble=True, seed=scene.seed * 1000 + k)
        if kind == "floor":
            # oversample, then drop points hidden under boxes
            pts = np.zeros((0, 3))
            m = n
            while len(pts) < n:
                u = halton.random(m)
                cand = _sample_surface(scene, kind, params, u)
                cand = cand[~_under_box(scene, cand[:, 0], cand[:, 1])]
                pts = np.vstack([pts, cand])
                m = max(n - len(pts), 16)
            parts.append(pts[:n])
        else:
            parts.append(_sample_surface(scene, kind, params, halton.random(n)))
    return np.vstack(parts)


def load_scene(name):
    """Load a bundled scene cloud (``room_50k`` or ``toy_10k``)."""
    ref = resources.files("travmap") / "data" / f"{name}.ply"
    with resources.as_file(ref) as path:
        return load_cloud(path, "ply_binary")
