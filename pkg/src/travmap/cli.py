"""Command-line front end.

Exit codes: 0 ok, 2 usage, 3 parse/format, 4 contract violation, 5 I/O.
Failures print one JSON line ``{"error": kind, "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .dataset import DatasetSpec, generate, load_manifest, make_pair
from .errors import ContractError, ParseError, TravMapError
from .eval import aggregate_csv, masked_nll, records_to_json, rmse_triptych, trav_mae_experiment
from .feature_map import FeatureParams, compute_features, map_cloud, rasterize
from .fusion import FusedState, kalman_update
from .geom import Pose, load_cloud, save_cloud
from .grid import FeatureMap, GridSpec, grid_bytes, read_grid
from .inpaint import fill_constant, fill_diffusion, oracle_constant
from .noising import NoisingConfig, apply_pipeline
from .scan_sim import DepthImage, SensorModel, depth_to_cloud, simulate_scan
from .scenes import SCENES, build_scene
from .traversability import FeatureDistMap, TravThresholds, det_cost, prob_trav

EXIT_USAGE, EXIT_PARSE, EXIT_CONTRACT, EXIT_IO = 2, 3, 4, 5


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos, path=path) from None


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid_from_json(d, points=None):
    if d.get("cover"):
        if points is None:
            raise ContractError("a covering grid needs a point cloud")
        return GridSpec.covering(points, d["resolution"], d.get("margin", 0.0))
    return GridSpec.from_dict(d)


def _load_any_cloud(path, frame):
    if str(path).endswith(".undi"):
        return depth_to_cloud(DepthImage.load(path), frame)
    return load_cloud(path)


def _load_feature_grid(path):
    """Return a FeatureMap or FeatureDistMap depending on the channel layout."""
    spec, channels, values, pose, _ = read_grid(path)
    if channels and channels[0].startswith("mu/"):
        return FeatureDistMap.from_grid(spec, channels, values)
    return FeatureMap(spec, values, np.isfinite(values).any(axis=0), channels, pose)


# --------------------------------------------------------------------------
# commands


def cmd_simulate_scan(a):
    cloud = load_cloud(a.cloud)
    pose = Pose.from_dict(_read_json(a.pose))
    sensor = SensorModel.from_dict(_read_json(a.sensor)) if a.sensor else SensorModel()
    simulate_scan(cloud, pose, sensor).save(a.out)


def cmd_noise(a):
    img = DepthImage.load(a.inp)
    cfg = NoisingConfig.from_json(a.config) if a.config else NoisingConfig()
    out, info = apply_pipeline(img, cfg, np.random.default_rng(a.seed), return_info=True)
    out.save(a.out)
    if a.verbose:
        print(json.dumps(info, sort_keys=True))


def cmd_map_features(a):
    cloud = _load_any_cloud(a.cloud, a.frame)
    spec = _grid_from_json(_read_json(a.grid), cloud)
    params = FeatureParams.from_json(a.params) if a.params else FeatureParams()
    compute_features(rasterize(cloud, spec), params).save(a.out)


def cmd_trav(a):
    fmap = _load_feature_grid(a.features)
    th = TravThresholds.from_json(a.thresholds)
    if a.mode == "prob":
        if not isinstance(fmap, FeatureDistMap):
            raise ContractError("prob mode needs a distribution map (mu/* and sigma/* channels)")
        tm = prob_trav(fmap, th)
    else:
        if isinstance(fmap, FeatureDistMap):
            fmap = fmap.mean_map()
        tm = det_cost(fmap, th)
    tm.save(a.out)
    if a.png:
        tm.save_png(a.png)


def cmd_fuse(a):
    meas = FeatureDistMap.load(a.meas)
    if os.path.exists(a.state):
        state = FusedState.from_dist(FeatureDistMap.load(a.state))
    else:
        state = FusedState.empty(meas.spec, meas.channels)
    kalman_update(state, meas, a.process_var).as_dist().save(a.out)


def cmd_inpaint(a):
    fmap = _load_feature_grid(a.inp)
    if isinstance(fmap, FeatureDistMap):
        raise ContractError("inpaint works on deterministic feature maps")
    if a.method == "zero":
        out = fill_constant(fmap, 0.0)
    elif a.method == "constant":
        if a.value is None:
            raise ContractError("--method constant needs --value")
        out = fill_constant(fmap, a.value if len(a.value) > 1 else a.value[0])
    elif a.method == "oracle":
        if not a.gt:
            raise ContractError("--method oracle needs --gt")
        values, _ = oracle_constant(fmap.observed, FeatureMap.load(a.gt))
        out = fill_constant(fmap, values)
    else:
        out = fill_diffusion(fmap, a.iters, a.tol)
    out.save(a.out)


def cmd_gen_dataset(a):
    cloud = load_cloud(a.cloud)
    gmap = FeatureMap.load(a.map)
    dspec = DatasetSpec.from_json(a.spec)
    if a.seed is not None:
        dspec.rng_seed = a.seed
    if a.n is not None:
        dspec.n_samples = a.n
    generate(cloud, gmap, dspec, a.out, n_jobs=a.jobs, overwrite=not a.missing_only)


def _pair_inputs(gt_dir, entry):
    label = FeatureMap.load(os.path.join(gt_dir, entry["paths"]["label"]))
    scan = load_cloud(os.path.join(gt_dir, entry["paths"]["scan"]))
    return label, scan


def cmd_baseline(a):
    manifest = load_manifest(a.dataset)
    params = FeatureParams.from_json(a.params) if a.params else FeatureParams()
    os.makedirs(a.out, exist_ok=True)
    for entry in manifest["pairs"]:
        label, scan = _pair_inputs(a.dataset, entry)
        pred = map_cloud(scan, label.spec, params)
        if a.method == "zero":
            pred = fill_constant(pred, 0.0)
        elif a.method == "oracle":
            pred = fill_constant(pred, oracle_constant(pred.observed, label)[0])
        elif a.method == "diffusion":
            pred = fill_diffusion(pred)
        pdir = os.path.join(a.out, os.path.dirname(entry["paths"]["label"]))
        os.makedirs(pdir, exist_ok=True)
        path = os.path.join(pdir, "pred.unrg")
        if a.sigma is not None:
            FeatureDistMap.from_features(pred, a.sigma).save(path)
        else:
            pred.save(path)


def cmd_eval(a):
    manifest = load_manifest(a.gt_dir)
    rng = np.random.default_rng(a.seed)
    records = []
    for entry in manifest["pairs"]:
        pid = entry["id"]
        label, scan = _pair_inputs(a.gt_dir, entry)
        pred_path = os.path.join(a.pred_dir, os.path.dirname(entry["paths"]["label"]), "pred.unrg")
        pred = _load_feature_grid(pred_path)
        input_observed = rasterize(scan, label.spec).counts > 0
        mean = pred.mean_map() if isinstance(pred, FeatureDistMap) else pred
        rm = rmse_triptych(mean, label, input_observed)
        for part, v in rm.as_dict().items():
            records.append({"pair_id": pid, "method": a.method, "metric": "rmse", "partition": part, "value": v})
        if isinstance(pred, FeatureDistMap):
            records.append({"pair_id": pid, "method": a.method, "metric": "nll", "partition": None,
                            "value": masked_nll(label, pred)})
            res = trav_mae_experiment(pred, mean, label, a.draws, rng)
            for key in ("prob", "det"):
                records.append({"pair_id": pid, "method": a.method, "metric": f"trav_mae_{key}",
                                "partition": None, "value": res[f"mae_{key}"]})
    with open(a.report, "w") as fh:
        fh.write(records_to_json(records) + "\n")
    if a.csv:
        with open(a.csv, "w") as fh:
            fh.write(aggregate_csv(records))


def _timed(fn, iters):
    times = []
    out = None
    for _ in range(iters):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return out, {"mean_ms": float(np.mean(times)), "std_ms": float(np.std(times)), "iters": iters}


def cmd_bench(a):
    manifest_dir = os.path.dirname(os.path.abspath(a.pair.rstrip("/")))
    label = FeatureMap.load(os.path.join(a.pair, "label.unrg"))
    report = {}
    scan, report["load_scan"] = _timed(lambda: load_cloud(os.path.join(a.pair, "scan.ply")), a.iters)
    cells, report["preprocess"] = _timed(lambda: rasterize(scan, label.spec), a.iters)
    fmap, report["features"] = _timed(lambda: compute_features(cells), a.iters)
    filled = fill_constant(fmap, 0.0)
    dist = FeatureDistMap.from_features(filled, 0.05)
    th = TravThresholds({"step": 0.2, "local_slope": 0.5, "local_rough": 0.01, "slope": 0.35, "rough": 0.01})
    _, report["trav_prob"] = _timed(lambda: prob_trav(dist, th), a.iters)
    _, report["trav_det"] = _timed(lambda: det_cost(filled, th), a.iters)
    state = FusedState.from_dist(dist)
    _, report["fuse"] = _timed(lambda: kalman_update(state, dist), a.iters)
    _, report["serialize"] = _timed(lambda: grid_bytes(dist.spec, dist.grid_channels(), np.concatenate([dist.mu, dist.sigma])), a.iters)
    if a.cloud and a.map:
        cloud = load_cloud(a.cloud)
        gmap = FeatureMap.load(a.map)
        dspec = DatasetSpec.from_dict(load_manifest(manifest_dir)["dataset_spec"])
        with open(os.path.join(a.pair, "meta.json")) as fh:
            pose = Pose.from_dict(json.load(fh)["pose"])
        _, report["make_pair"] = _timed(lambda: make_pair(cloud, gmap, pose, dspec, 0), a.iters)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text + "\n")


def cmd_make_scene(a):
    save_cloud(build_scene(SCENES[a.name]), a.out)


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="travmap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"travmap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate-scan", help="render a depth image from a dense cloud at a pose")
    s.add_argument("--cloud", required=True, help="ground-truth cloud (.ply or .xyz)")
    s.add_argument("--pose", required=True, help="pose JSON: {x,y,z,yaw,pitch,roll} or {rotation,translation}")
    s.add_argument("--sensor", help="sensor JSON (defaults to the 128x1024 model)")
    s.add_argument("--out", required=True, help="output depth image (.undi)")
    s.set_defaults(func=cmd_simulate_scan)

    s = sub.add_parser("noise", help="apply the lidar noising pipeline to a depth image")
    s.add_argument("--in", dest="inp", required=True, help="input depth image (.undi)")
    s.add_argument("--config", help="noising config JSON (defaults to the published table)")
    s.add_argument("--seed", type=int, required=True, help="random seed (u64)")
    s.add_argument("--out", required=True, help="output depth image (.undi)")
    s.add_argument("--verbose", action="store_true", help="print which stages fired")
    s.set_defaults(func=cmd_noise)

    s = sub.add_parser("map-features", help="compute the seven terrain features of a cloud")
    s.add_argument("--cloud", required=True, help="cloud (.ply/.xyz) or depth image (.undi)")
    s.add_argument("--grid", required=True, help="grid JSON: {width,height,resolution,origin|ego_centered} or {cover,resolution}")
    s.add_argument("--params", help="feature params JSON")
    s.add_argument("--frame", choices=("sensor", "world"), default="sensor", help="frame for .undi inputs")
    s.add_argument("--out", required=True, help="output grid map (.unrg)")
    s.set_defaults(func=cmd_map_features)

    s = sub.add_parser("trav", help="traversability from a feature or distribution map")
    s.add_argument("--features", required=True, help="feature map or distribution map (.unrg)")
    s.add_argument("--thresholds", required=True, help="thresholds JSON (f_crit, alpha, features)")
    s.add_argument("--mode", choices=("det", "prob"), required=True, help="det: clipped cost; prob: probability traversable")
    s.add_argument("--out", required=True, help="output traversability map (.unrg)")
    s.add_argument("--png", help="optional grayscale PNG export")
    s.set_defaults(func=cmd_trav)

    s = sub.add_parser("fuse", help="Kalman-fuse a distribution map into a running state")
    s.add_argument("--state", required=True, help="state distribution map (.unrg); created if missing")
    s.add_argument("--meas", required=True, help="measurement distribution map (.unrg)")
    s.add_argument("--process-var", type=float, default=0.0, help="prior variance inflation per update")
    s.add_argument("--out", required=True, help="updated state (.unrg)")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("inpaint", help="fill unobserved cells of a feature map")
    s.add_argument("--in", dest="inp", required=True, help="feature map (.unrg)")
    s.add_argument("--method", choices=("zero", "constant", "oracle", "diffusion"), required=True, help="fill method")
    s.add_argument("--value", type=float, nargs="+", help="fill value(s) for --method constant")
    s.add_argument("--gt", help="ground-truth map for --method oracle")
    s.add_argument("--iters", type=int, default=2000, help="diffusion iteration cap")
    s.add_argument("--tol", type=float, default=1e-5, help="diffusion convergence tolerance")
    s.add_argument("--out", required=True, help="output feature map (.unrg)")
    s.set_defaults(func=cmd_inpaint)

    s = sub.add_parser("gen-dataset", help="generate (scan, label) pairs")
    s.add_argument("--cloud", required=True, help="ground-truth cloud (.ply)")
    s.add_argument("--map", required=True, help="global feature map (.unrg)")
    s.add_argument("--spec", required=True, help="dataset spec JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the dataset spec's rng_seed")
    s.add_argument("-n", type=int, help="override the dataset spec's n_samples")
    s.add_argument("--jobs", type=int, default=1, help="worker threads (output does not depend on it)")
    s.add_argument("--missing-only", action="store_true", help="only write pairs whose files are missing")
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("baseline", help="non-learned predictions for every pair of a dataset")
    s.add_argument("--dataset", required=True, help="dataset directory from gen-dataset")
    s.add_argument("--method", choices=("zero", "oracle", "diffusion"), required=True, help="fill method")
    s.add_argument("--params", help="feature params JSON")
    s.add_argument("--sigma", type=float, nargs="+", help="write a distribution map with this sigma (scalar or per channel)")
    s.add_argument("--out", required=True, help="prediction directory")
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("eval", help="score predictions against dataset labels")
    s.add_argument("--pred-dir", required=True, help="directory with pair_*/pred.unrg")
    s.add_argument("--gt-dir", required=True, help="dataset directory")
    s.add_argument("--report", required=True, help="JSON records output")
    s.add_argument("--csv", help="aggregate CSV output")
    s.add_argument("--method", default="pred", help="method label for the records")
    s.add_argument("--draws", type=int, default=10, help="threshold draws for the traversability MAE")
    s.add_argument("--seed", type=int, default=0, help="seed for threshold draws")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="per-stage wall times on one pair")
    s.add_argument("--pair", required=True, help="pair directory")
    s.add_argument("--iters", type=int, default=20, help="repetitions per stage")
    s.add_argument("--cloud", help="ground-truth cloud, to time make_pair")
    s.add_argument("--map", help="global map, to time make_pair")
    s.add_argument("--out", help="also write the report here")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("make-scene", help="write a bundled synthetic scene cloud")
    s.add_argument("--name", choices=sorted(SCENES), required=True, help="scene name")
    s.add_argument("--out", required=True, help="output cloud (.ply or .xyz)")
    s.set_defaults(func=cmd_make_scene)
    return p


def _fail(kind, exc, code):
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ParseError as exc:
        return _fail("parse", exc, EXIT_PARSE)
    except (ContractError, TravMapError) as exc:
        return _fail("contract", exc, EXIT_CONTRACT)
    except (KeyError, TypeError) as exc:
        return _fail("contract", f"bad input: {exc}", EXIT_CONTRACT)
    except OSError as exc:
        return _fail("io", exc, EXIT_IO)
    return 0


if __name__ == "__main__":
    sys.exit(main())
