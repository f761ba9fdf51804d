"""Synthetic lidar scans, terrain feature maps and probabilistic traversability."""

__version__ = "0.1.0"

from .errors import ContractError, DataError, ParseError, TravMapError
from .geom import Pose, load_cloud, save_cloud, transform_cloud
from .grid import FEATURE_CHANNELS, FeatureMap, GridSpec
from .scan_sim import DepthImage, SensorModel, depth_to_cloud, simulate_scan
from .noising import NoisingConfig, apply_pipeline
from .feature_map import FeatureParams, compute_features, crop_and_align, freespace_cells, map_cloud, rasterize
from .traversability import FeatureDistMap, TravMap, TravThresholds, det_cost, gaussian_cdf, gt_trav, prob_trav
from .fusion import FusedState, kalman_update
from .inpaint import fill_constant, fill_diffusion, oracle_constant
from .dataset import DatasetSpec, generate, make_pair, sample_pose
from .eval import masked_nll, rmse_triptych, trav_mae_experiment
from .estimators import (
    FeatureMapper,
    KalmanMapFuser,
    LidarNoiser,
    MapInpainter,
    ScanSimulator,
    TraversabilityEstimator,
)

__all__ = [
    "ContractError",
    "DataError",
    "ParseError",
    "TravMapError",
    "Pose",
    "load_cloud",
    "save_cloud",
    "transform_cloud",
    "FEATURE_CHANNELS",
    "FeatureMap",
    "GridSpec",
    "DepthImage",
    "SensorModel",
    "depth_to_cloud",
    "simulate_scan",
    "NoisingConfig",
    "apply_pipeline",
    "FeatureParams",
    "compute_features",
    "crop_and_align",
    "freespace_cells",
    "map_cloud",
    "rasterize",
    "FeatureDistMap",
    "TravMap",
    "TravThresholds",
    "det_cost",
    "gaussian_cdf",
    "gt_trav",
    "prob_trav",
    "FusedState",
    "kalman_update",
    "fill_constant",
    "fill_diffusion",
    "oracle_constant",
    "DatasetSpec",
    "generate",
    "make_pair",
    "sample_pose",
    "masked_nll",
    "rmse_triptych",
    "trav_mae_experiment",
    "FeatureMapper",
    "KalmanMapFuser",
    "LidarNoiser",
    "MapInpainter",
    "ScanSimulator",
    "TraversabilityEstimator",
]
