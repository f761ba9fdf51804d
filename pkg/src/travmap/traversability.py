"""Deterministic cost and probabilistic traversability from feature maps.

``det_cost`` is the weighted sum of features over their critical values.
``prob_trav`` is the probability that every included feature lies below its
critical value under independent per-cell Gaussians, i.e. a product of normal
CDFs. Higher ``prob_trav`` means *more* traversable; ``det_cost`` is a cost,
so comparisons against binary ground truth use ``1 - clip(det_cost, 0, 1)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import erfc

from .errors import ContractError
from .grid import FEATURE_CHANNELS, FeatureMap, GridSpec, read_grid, write_grid
from .validation import check_positive

TRAV_FEATURES = ("step", "local_slope", "local_rough", "slope", "rough")

_SQRT1_2 = 0.7071067811865476


@dataclass
class FeatureDistMap:
    """Per-cell, per-channel Gaussian ``N(mu, sigma)`` over the feature channels."""

    spec: GridSpec
    mu: np.ndarray
    sigma: np.ndarray
    observed: np.ndarray
    channels: tuple = FEATURE_CHANNELS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        self.observed = np.asarray(self.observed, dtype=bool)
        shape = (len(self.channels),) + self.spec.shape
        if self.mu.shape != shape or self.sigma.shape != shape:
            raise ContractError(f"mu/sigma must have shape {shape}, got {self.mu.shape} and {self.sigma.shape}")
        if self.observed.shape != self.spec.shape:
            raise ContractError("observed mask does not match the grid")
        valid = self.observed[None] & np.isfinite(self.mu)
        if np.any(self.sigma[valid] <= 0) or np.isnan(self.sigma[valid]).any():
            raise ContractError("sigma must be strictly positive on observed cells")

    def index(self, name):
        try:
            return self.channels.index(name)
        except ValueError:
            raise ContractError(f"distribution map has no channel {name!r}") from None

    @classmethod
    def from_features(cls, fmap, sigma):
        """Wrap a deterministic map with a per-channel (or scalar) sigma."""
        sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64).reshape(-1, 1, 1), fmap.values.shape).copy()
        sig[~np.isfinite(fmap.values)] = np.nan
        return cls(fmap.spec, fmap.values.copy(), sig, fmap.observed.copy(), fmap.channels)

    def mean_map(self):
        return FeatureMap(self.spec, self.mu.copy(), self.observed.copy(), self.channels)

    def grid_channels(self):
        return tuple(f"mu/{c}" for c in self.channels) + tuple(f"sigma/{c}" for c in self.channels)

    def save(self, path):
        write_grid(path, self.spec, self.grid_channels(), np.concatenate([self.mu, self.sigma]))

    @classmethod
    def load(cls, path):
        spec, channels, values, _, _ = read_grid(path)
        return cls.from_grid(spec, channels, values)

    @classmethod
    def from_grid(cls, spec, channels, values):
        c = len(channels) // 2
        names = [ch.split("/", 1)[-1] for ch in channels[:c]]
        if (
            len(channels) % 2
            or not all(ch.startswith("mu/") for ch in channels[:c])
            or list(channels[c:]) != [f"sigma/{n}" for n in names]
        ):
            raise ContractError("grid is not a distribution map (expected mu/* then sigma/* channels)")
        mu, sigma = values[:c], values[c:]
        observed = np.isfinite(mu).any(axis=0)
        return cls(spec, mu, sigma, observed, tuple(names))


@dataclass
class TravThresholds:
    """Critical values per feature and (deterministic-mode) weights.

    Weights are normalized to sum to one at construction. The normalization
    is computed in exact rational arithmetic, so scaling every weight by the
    same factor yields bit-identical normalized weights whenever the scaled
    inputs are exact.
    """

    f_crit: dict
    alpha: dict | None = None
    features: tuple | None = None
    name: str = ""

    def __post_init__(self):
        self.features = tuple(self.features) if self.features is not None else tuple(self.f_crit)
        if not self.features:
            raise ContractError("thresholds need at least one included feature")
        for f in self.features:
            if f not in self.f_crit:
                raise ContractError(f"no critical value for included feature {f!r}")
            self.f_crit[f] = check_positive(self.f_crit[f], f"f_crit[{f}]")
        alpha = self.alpha if self.alpha is not None else {f: 1.0 for f in self.features}
        raw = []
        for f in self.features:
            a = float(alpha.get(f, 0.0))
            if not a >= 0 or not np.isfinite(a):
                raise ContractError(f"alpha[{f}] must be a finite non-negative number")
            raw.append(Fraction(a))
        total = sum(raw)
        if total == 0:
            raise ContractError("at least one alpha must be positive")
        self.alpha = {f: float(a / total) for f, a in zip(self.features, raw)}

    def to_dict(self):
        return {"name": self.name, "features": list(self.features), "f_crit": dict(self.f_crit), "alpha": dict(self.alpha)}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["f_crit"]), d.get("alpha"), d.get("features"), d.get("name", ""))

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TravMap:
    spec: GridSpec
    values: np.ndarray
    observed: np.ndarray

    def save(self, path):
        vals = np.where(self.observed, self.values, np.nan)[None]
        write_grid(path, self.spec, ("traversability",), vals)

    @classmethod
    def load(cls, path):
        spec, channels, values, _, _ = read_grid(path)
        if channels != ("traversability",):
            raise ContractError(f"expected a single 'traversability' channel, got {list(channels)}")
        return cls(spec, values[0], np.isfinite(values[0]))

    def to_image(self):
        """RGB uint8 image: [0, 1] to grey [0, 255], unobserved in magenta.

        Rows run along +y (top row = largest y), columns along +x.
        """
        v = np.clip(np.nan_to_num(self.values), 0.0, 1.0)
        grey = np.round(v * 255.0).astype(np.uint8)
        rgb = np.repeat(grey[..., None], 3, axis=-1)
        rgb[~self.observed] = (255, 0, 255)
        return np.ascontiguousarray(rgb.transpose(1, 0, 2)[::-1])

    def save_png(self, path):
        from PIL import Image

        Image.fromarray(self.to_image(), mode="RGB").save(path)


def gaussian_cdf(x, mu=0.0, sigma=1.0):
    """Normal CDF via the complementary error function (accurate in both tails)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ContractError("gaussian_cdf needs sigma > 0")
    z = (np.asarray(x, dtype=np.float64) - mu) / sigma
    return 0.5 * erfc(-z * _SQRT1_2)


def _channel(fmap, name):
    return fmap.values[fmap.index(name)]


def det_cost(fmap, th, clamp=True):
    """Weighted sum of ``feature / f_crit``; clipped to [0, 1] unless ``clamp=False``."""
    cost = np.zeros(fmap.spec.shape)
    for f in th.features:
        cost = cost + th.alpha[f] * (_channel(fmap, f) / th.f_crit[f])
    observed = fmap.observed & np.isfinite(cost)
    if clamp:
        cost = np.clip(cost, 0.0, 1.0)
    return TravMap(fmap.spec, np.where(observed, cost, np.nan), observed)


def prob_trav(dist, th):
    """Probability that every included feature is below its critical value."""
    p = np.ones(dist.spec.shape)
    for f in th.features:
        k = dist.index(f)
        mu, sigma = dist.mu[k], dist.sigma[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            p = p * (0.5 * erfc((mu - th.f_crit[f]) / sigma * _SQRT1_2))
    observed = dist.observed & np.isfinite(p)
    return TravMap(dist.spec, np.where(observed, p, np.nan), observed)


def gt_trav(fmap, th):
    """Binary ground truth: 1 where every included feature is below ``f_crit``."""
    ok = np.ones(fmap.spec.shape, dtype=bool)
    finite = fmap.observed.copy()
    for f in th.features:
        v = _channel(fmap, f)
        finite &= np.isfinite(v)
        with np.errstate(invalid="ignore"):
            ok &= v < th.f_crit[f]
    return TravMap(fmap.spec, np.where(finite, ok.astype(np.float64), np.nan), finite)
