"""Scoring: RMSE over observed/inpaint/both partitions, masked Gaussian NLL,
and the traversability MAE experiment over random thresholds.

RMSE and NLL pool all (channel, cell) pairs jointly before averaging.
Ground-truth entries that are NaN on observed cells (degenerate slope fits)
are left out of every metric.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .traversability import TRAV_FEATURES, TravThresholds, det_cost, gt_trav, prob_trav

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
PARTITIONS = ("observed", "inpaint", "both")


@dataclass
class Rmse:
    observed: float | None
    inpaint: float | None
    both: float | None
    counts: dict

    def as_dict(self):
        return {p: getattr(self, p) for p in PARTITIONS}


def _check_pair(pred, gt):
    if pred.spec != gt.spec or tuple(pred.channels) != tuple(gt.channels):
        raise ContractError("prediction and ground truth must share grid and channels")


def rmse_triptych(pred, gt, input_observed):
    """RMSE on gt-observed cells split by whether the input observed them.

    Empty partitions are ``None``. Predictions must be filled (finite)
    wherever ground truth is evaluated.
    """
    _check_pair(pred, gt)
    input_observed = np.asarray(input_observed, dtype=bool)
    if input_observed.shape != gt.spec.shape:
        raise ContractError("input mask does not match the grid")
    valid = gt.valid()
    if not np.isfinite(pred.values[valid]).all():
        raise ContractError("prediction has missing values where ground truth is observed; fill it first")
    sq = np.where(valid, (pred.values - np.where(valid, gt.values, 0.0)) ** 2, 0.0)
    parts = {
        "observed": valid & input_observed[None],
        "inpaint": valid & ~input_observed[None],
        "both": valid,
    }
    result = {}
    counts = {}
    for name, sel in parts.items():
        n = int(sel.sum())
        counts[name] = n
        result[name] = math.sqrt(float(sq[sel].sum()) / n) if n else None
    return Rmse(counts=counts, **result)


def gaussian_nll(x, mu, sigma):
    z = (x - mu) / sigma
    return _HALF_LOG_2PI + np.log(sigma) + 0.5 * z * z


def masked_nll(gt, dist):
    """Mean negative log-density of ground truth over its observed entries."""
    if gt.spec != dist.spec or tuple(gt.channels) != tuple(dist.channels):
        raise ContractError("ground truth and distribution map must share grid and channels")
    valid = gt.valid()
    if not valid.any():
        raise ContractError("ground truth has no observed entries")
    mu, sigma = dist.mu[valid], dist.sigma[valid]
    if not (np.isfinite(mu).all() and np.all(sigma > 0)):
        raise ContractError("distribution must be finite with sigma > 0 wherever ground truth is observed")
    return float(np.mean(gaussian_nll(gt.values[valid], mu, sigma)))


def trav_mae(pred, gt):
    """MAE between two TravMaps over cells observed in both."""
    sel = gt.observed & pred.observed
    if not sel.any():
        return None
    return float(np.abs(pred.values[sel] - gt.values[sel]).mean())


def threshold_ranges(gt, features=TRAV_FEATURES, floor=1e-3):
    """Default critical-value sampling ranges ``[0.5 m, 2 m]`` with ``m`` the
    gt median of each feature (at least ``floor``)."""
    ranges = {}
    for f in features:
        v = gt.values[gt.index(f)][gt.valid()[gt.index(f)]]
        med = float(np.median(v)) if v.size else floor
        med = max(med, floor)
        ranges[f] = (0.5 * med, 2.0 * med)
    return ranges


def sample_thresholds(ranges, rng):
    return TravThresholds({f: float(rng.uniform(lo, hi)) for f, (lo, hi) in ranges.items()})


def trav_mae_experiment(dist, det_features, gt, n_threshold_draws=10, rng=None, ranges=None):
    """Compare probabilistic and deterministic traversability against gt.

    Each draw samples one critical value per feature; the probabilistic map
    is ``prob_trav(dist)``, the deterministic one ``1 - clip(det_cost)``.
    Returns mean/std MAE over draws and the per-draw values.
    """
    rng = np.random.default_rng(rng)
    ranges = ranges or threshold_ranges(gt)
    maes = {"prob": [], "det": []}
    for _ in range(n_threshold_draws):
        th = sample_thresholds(ranges, rng)
        truth = gt_trav(gt, th)
        p = prob_trav(dist, th)
        d = det_cost(det_features, th)
        d.values = 1.0 - d.values
        for key, m in (("prob", p), ("det", d)):
            v = trav_mae(m, truth)
            if v is not None:
                maes[key].append(v)
    out = {}
    for key, vals in maes.items():
        arr = np.array(vals)
        out[f"mae_{key}"] = float(arr.mean()) if arr.size else None
        out[f"mae_{key}_std"] = float(arr.std()) if arr.size else None
        out[f"mae_{key}_draws"] = [float(v) for v in vals]
    return out


def records_to_json(records):
    return json.dumps(records, indent=2, sort_keys=True)


def aggregate_csv(records):
    """Mean of each (method, metric, partition) over pairs, one row per method."""
    table = {}
    for rec in records:
        if rec["value"] is None:
            continue
        key = (rec.get("method", "pred"), rec["metric"], rec.get("partition") or "")
        table.setdefault(key, []).append(rec["value"])
    columns = sorted({(m, p) for (_, m, p) in table})
    methods = sorted({k[0] for k in table})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method"] + [f"{m}:{p}" if p else m for m, p in columns])
    for meth in methods:
        row = [meth]
        for m, p in columns:
            vals = table.get((meth, m, p))
            row.append(f"{np.mean(vals):.6g}" if vals else "")
        writer.writerow(row)
    return buf.getvalue()
