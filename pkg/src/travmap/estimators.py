"""scikit-learn style wrappers so the pipeline stages compose with sklearn
tooling (``get_params``/``set_params``, ``clone``, ``Pipeline``).

Inputs are the package's own containers rather than 2-D arrays, so these
estimators validate with the helpers in :mod:`travmap.validation` instead of
``check_array``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .errors import ContractError
from .feature_map import FeatureParams, compute_features, rasterize
from .fusion import FusedState, kalman_update
from .geom import Pose
from .grid import FeatureMap, GridSpec
from .inpaint import fill_constant, fill_diffusion, oracle_constant
from .noising import NoisingConfig, apply_pipeline
from .scan_sim import DepthImage, SensorModel, simulate_scan
from .traversability import FeatureDistMap, TravThresholds, det_cost, gt_trav, prob_trav
from .validation import as_generator, check_cloud


def _as_list(X, kind):
    if isinstance(X, kind):
        return [X], True
    return list(X), False


class ScanSimulator(BaseEstimator, TransformerMixin):
    """Fit on a dense cloud, transform poses into simulated depth images."""

    def __init__(self, n_azimuth=1024, n_elevation=128, elevation_min=-0.393, elevation_max=0.393,
                 max_range=10.0, min_range=0.0):
        self.n_azimuth = n_azimuth
        self.n_elevation = n_elevation
        self.elevation_min = elevation_min
        self.elevation_max = elevation_max
        self.max_range = max_range
        self.min_range = min_range

    def fit(self, X, y=None):
        self.sensor_ = SensorModel(self.n_azimuth, self.n_elevation, self.elevation_min,
                                   self.elevation_max, self.max_range, self.min_range)
        self.cloud_ = check_cloud(X)
        if len(self.cloud_) == 0:
            raise ContractError("ScanSimulator needs a non-empty cloud")
        return self

    def transform(self, X):
        check_is_fitted(self, "cloud_")
        poses, single = _as_list(X, Pose)
        out = [simulate_scan(self.cloud_, p, self.sensor_) for p in poses]
        return out[0] if single else out


class LidarNoiser(BaseEstimator, TransformerMixin):
    """Apply the noising pipeline; ``random_state`` seeds the whole stream."""

    def __init__(self, config=None, random_state=0):
        self.config = config
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.config_ = self.config if isinstance(self.config, NoisingConfig) else NoisingConfig.from_dict(self.config or {})
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        imgs, single = _as_list(X, DepthImage)
        rng = as_generator(self.random_state)
        out = [apply_pipeline(img, self.config_, rng) for img in imgs]
        return out[0] if single else out


class FeatureMapper(BaseEstimator, TransformerMixin):
    """Point cloud to seven-channel feature map on a fixed grid.

    ``origin=None`` centres the grid on the sensor.
    """

    def __init__(self, width=140, height=140, resolution=0.05, origin=None,
                 foothold_radius=0.10, footprint_radius=0.50, overhang_clearance=0.8, min_points_per_cell=1):
        self.width = width
        self.height = height
        self.resolution = resolution
        self.origin = origin
        self.foothold_radius = foothold_radius
        self.footprint_radius = footprint_radius
        self.overhang_clearance = overhang_clearance
        self.min_points_per_cell = min_points_per_cell

    def fit(self, X=None, y=None):
        if self.origin is None:
            self.spec_ = GridSpec.ego(self.width, self.height, self.resolution)
        else:
            self.spec_ = GridSpec(self.width, self.height, self.resolution, tuple(self.origin))
        self.params_ = FeatureParams(self.foothold_radius, self.footprint_radius,
                                     self.overhang_clearance, self.min_points_per_cell)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return compute_features(rasterize(X, self.spec_), self.params_)
        return [compute_features(rasterize(c, self.spec_), self.params_) for c in X]


class MapInpainter(BaseEstimator, TransformerMixin):
    """Fill unobserved cells: ``zero``, ``constant``, ``oracle`` or ``diffusion``.

    ``oracle`` must be fitted with the prediction as ``X`` and ground truth
    as ``y``; it learns the per-channel RMSE-minimising constant.
    """

    def __init__(self, method="diffusion", value=0.0, iters=2000, tol=1e-5):
        self.method = method
        self.value = value
        self.iters = iters
        self.tol = tol

    def fit(self, X=None, y=None):
        if self.method not in ("zero", "constant", "oracle", "diffusion"):
            raise ContractError(f"unknown inpaint method {self.method!r}")
        if self.method == "oracle":
            if X is None or y is None:
                raise ContractError("oracle fill must be fitted on (prediction, ground truth)")
            self.fill_values_, self.empty_channels_ = oracle_constant(X.observed, y)
        elif self.method == "constant":
            self.fill_values_ = self.value
        else:
            self.fill_values_ = 0.0
        return self

    def transform(self, X):
        if not hasattr(self, "fill_values_"):
            raise NotFittedError("MapInpainter is not fitted")
        if self.method == "diffusion":
            return fill_diffusion(X, self.iters, self.tol)
        return fill_constant(X, self.fill_values_)


class TraversabilityEstimator(BaseEstimator):
    """Feature maps to traversability maps.

    ``mode='prob'`` expects :class:`FeatureDistMap` inputs and returns the
    probability of being traversable; ``mode='det'`` expects
    :class:`FeatureMap` and returns the clipped cost. ``score`` is
    ``1 - MAE`` against the binary ground truth derived from a feature map.
    """

    def __init__(self, f_crit=None, alpha=None, features=None, mode="prob"):
        self.f_crit = f_crit
        self.alpha = alpha
        self.features = features
        self.mode = mode

    def fit(self, X=None, y=None):
        if self.mode not in ("prob", "det"):
            raise ContractError(f"mode must be 'prob' or 'det', got {self.mode!r}")
        if not self.f_crit:
            raise ContractError("f_crit is required")
        self.thresholds_ = TravThresholds(dict(self.f_crit), self.alpha, self.features)
        return self

    def predict(self, X):
        check_is_fitted(self, "thresholds_")
        if self.mode == "prob":
            if not isinstance(X, FeatureDistMap):
                raise ContractError("probabilistic traversability needs a FeatureDistMap")
            return prob_trav(X, self.thresholds_)
        if isinstance(X, FeatureDistMap):
            X = X.mean_map()
        return det_cost(X, self.thresholds_)

    transform = predict

    def traversability(self, X):
        """Prediction on the 'higher is better' scale for either mode."""
        out = self.predict(X)
        if self.mode == "det":
            out.values = 1.0 - out.values
        return out

    def score(self, X, y):
        truth = gt_trav(y, self.thresholds_)
        pred = self.traversability(X)
        sel = truth.observed & pred.observed
        return 1.0 - float(np.abs(pred.values[sel] - truth.values[sel]).mean())


class KalmanMapFuser(BaseEstimator):
    """Accumulates Gaussian feature maps with per-cell 1-D Kalman updates."""

    def __init__(self, process_var=0.0):
        self.process_var = process_var

    def partial_fit(self, X, y=None):
        if not hasattr(self, "state_"):
            self.state_ = FusedState.empty(X.spec, X.channels)
        self.state_ = kalman_update(self.state_, X, self.process_var)
        return self

    def fit(self, X, y=None):
        if hasattr(self, "state_"):
            del self.state_
        maps = [X] if isinstance(X, FeatureDistMap) else list(X)
        for m in maps:
            self.partial_fit(m)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "state_")
        return self.state_.as_dist()

    def mean_map(self):
        check_is_fitted(self, "state_")
        return FeatureMap(self.state_.spec, self.state_.mu.copy(), self.state_.observed.copy(), self.state_.channels)
