"""Non-learned fills for unobserved feature-map cells."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import ContractError
from .grid import FeatureMap


def _filled(fmap, values):
    return FeatureMap(fmap.spec, values, np.ones(fmap.spec.shape, dtype=bool), fmap.channels, fmap.pose, dict(fmap.meta))


def fill_constant(fmap, value=0.0):
    """Set every missing entry of channel ``c`` to ``value[c]`` (scalar broadcasts)."""
    fill = np.broadcast_to(np.asarray(value, dtype=np.float64), (len(fmap.channels),))
    valid = fmap.valid()
    values = np.where(valid, fmap.values, fill[:, None, None])
    return _filled(fmap, values)


def oracle_constant(pred_observed, gt):
    """Per-channel mean of ground truth over the region the prediction misses.

    Returns ``(values, empty)`` where ``empty[c]`` flags channels whose fill
    region is empty (their value is 0).
    """
    pred_observed = np.asarray(pred_observed, dtype=bool)
    if pred_observed.shape != gt.spec.shape:
        raise ContractError("prediction mask does not match the ground-truth grid")
    region = gt.valid() & ~pred_observed[None]
    n = region.sum(axis=(1, 2))
    sums = np.where(region, gt.values, 0.0).sum(axis=(1, 2))
    empty = n == 0
    values = np.where(empty, 0.0, sums / np.maximum(n, 1))
    return values, empty


def _neighbour_mean(u, inv_deg):
    s = np.zeros_like(u)
    s[1:] += u[:-1]
    s[:-1] += u[1:]
    s[:, 1:] += u[:, :-1]
    s[:, :-1] += u[:, 1:]
    return s * inv_deg


def harmonic_fill(values, known, iters=2000, tol=1e-5, method="gauss_seidel", omega=None):
    """Solve the discrete Laplace equation on ``~known`` with ``known`` as Dirichlet data.

    Grid edges are reflecting (only in-grid neighbours count). Unknown cells
    start from their nearest known value. ``gauss_seidel`` uses red-black
    over-relaxed sweeps; ``jacobi`` plain simultaneous updates. Stops when
    the largest per-cell change drops below ``tol``.
    """
    known = np.asarray(known, dtype=bool)
    if not known.any():
        raise ContractError("diffusion fill needs at least one observed cell")
    W, H = known.shape
    _, (ni, nj) = ndimage.distance_transform_edt(~known, return_indices=True)
    u = np.where(known, values, values[ni, nj]).astype(np.float64)
    unknown = ~known
    if not unknown.any():
        return u
    deg = np.full((W, H), 4.0)
    deg[0] -= 1
    deg[-1] -= 1
    deg[:, 0] -= 1
    deg[:, -1] -= 1
    inv_deg = 1.0 / np.maximum(deg, 1.0)

    if method == "jacobi":
        for _ in range(iters):
            new = _neighbour_mean(u, inv_deg)
            delta = np.abs(new - u)[unknown].max()
            u[unknown] = new[unknown]
            if delta < tol:
                break
        return u
    if method != "gauss_seidel":
        raise ContractError(f"unknown diffusion method {method!r}")

    if omega is None:
        omega = 2.0 / (1.0 + math.sin(math.pi / (max(W, H) + 1)))
    ii, jj = np.indices((W, H))
    colours = [unknown & ((ii + jj) % 2 == k) for k in (0, 1)]
    for _ in range(iters):
        delta = 0.0
        for sel in colours:
            target = _neighbour_mean(u, inv_deg)
            step = omega * (target[sel] - u[sel])
            u[sel] += step
            if step.size:
                delta = max(delta, float(np.abs(step).max()))
        if delta < tol:
            break
    return u


def fill_diffusion(fmap, iters=2000, tol=1e-5, method="gauss_seidel"):
    """Harmonic interpolation of every channel; observed values stay bit-identical."""
    valid = fmap.valid()
    if not fmap.observed.any():
        raise ContractError("diffusion fill needs at least one observed cell")
    values = fmap.values.copy()
    for c in range(len(fmap.channels)):
        if not valid[c].any():
            values[c] = 0.0
            continue
        out = harmonic_fill(np.where(valid[c], fmap.values[c], 0.0), valid[c], iters, tol, method)
        values[c] = np.where(valid[c], fmap.values[c], out)
    return _filled(fmap, values)
