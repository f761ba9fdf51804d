"""One check per acceptance criterion, at the stated tolerances.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion is reported rather than hidden.
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np

from conftest import ACCEPTANCE_RESULTS
from travmap.cli import main
from travmap.dataset import DatasetSpec, make_pair, sample_pose
from travmap.eval import masked_nll, rmse_triptych
from travmap.feature_map import FeatureParams, compute_features, map_cloud, rasterize
from travmap.fusion import FusedState, fuse_gaussians, kalman_update
from travmap.geom import Pose, transform_cloud
from travmap.grid import FEATURE_CHANNELS, FeatureMap, GridSpec
from travmap.inpaint import fill_constant, fill_diffusion, oracle_constant
from travmap.noising import NoisingConfig, apply_pipeline, range_noise, salt_pepper
from travmap.scan_sim import DepthImage, SensorModel, depth_to_cloud, project_points, simulate_scan
from travmap.traversability import FeatureDistMap, TravThresholds, det_cost, gt_trav, prob_trav

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def record(key, checks):
    """``checks`` maps a short label to ``(ok, detail)``."""
    ok = all(v[0] for v in checks.values())
    ACCEPTANCE_RESULTS[key] = (ok, "; ".join(f"{k}: {d}" for k, (_, d) in checks.items()))
    failed = [k for k, v in checks.items() if not v[0]]
    assert not failed, f"criterion {key} failed: {failed} -> {ACCEPTANCE_RESULTS[key][1]}"


# 1 -------------------------------------------------------------------------


def test_criterion_1_fusion():
    spec = GridSpec(1, 1, 0.1)
    checks = {}
    m, s = fuse_gaussians(0.0, 1.0, 2.0, 1.0)
    err = max(abs(m - 1.0), abs(s - 1 / math.sqrt(2)))
    checks["symmetric pair"] = (err <= 1e-12, f"err {err:.1e}")

    rng = np.random.default_rng(101)
    worst_seq = worst_perm = 0.0
    monotone = True
    for _ in range(50):
        mus = rng.normal(0, 2, 5)
        sig = rng.uniform(0.01, 3.0, 5)
        w = 1 / sig**2
        batch_m, batch_s = (w * mus).sum() / w.sum(), 1 / math.sqrt(w.sum())
        finals = []
        for perm in itertools.permutations(range(5)):
            st = FusedState.empty(spec, ("step",))
            prev = math.inf
            for k in perm:
                meas = FeatureDistMap(spec, np.full((1, 1, 1), mus[k]), np.full((1, 1, 1), sig[k]),
                                      np.ones((1, 1), bool), ("step",))
                st = kalman_update(st, meas)
                cur = st.sigma[0, 0, 0]
                monotone &= bool(cur < prev)
                prev = cur
            finals.append((st.mu[0, 0, 0], st.sigma[0, 0, 0]))
        f = np.array(finals)
        worst_seq = max(worst_seq, abs(f[0, 0] - batch_m), abs(f[0, 1] - batch_s))
        worst_perm = max(worst_perm, np.ptp(f[:, 0]), np.ptp(f[:, 1]))
    checks["sequential vs batch"] = (worst_seq <= 1e-9, f"max err {worst_seq:.1e}")
    checks["permutation"] = (worst_perm <= 1e-9, f"max spread {worst_perm:.1e}")
    checks["sigma decreases"] = (monotone, "every update" if monotone else "violated")
    record("1 fusion suite", checks)


# 2 -------------------------------------------------------------------------


def test_criterion_2_probability():
    checks = {}
    spec = GridSpec(1, 1, 0.1)
    names = ("step", "local_slope", "local_rough", "slope", "rough")
    crit = {"step": 0.2, "local_slope": 0.5, "local_rough": 0.01, "slope": 0.35, "rough": 0.02}
    worst = 0.0
    for k in range(1, 6):
        ch = names[:k]
        mu = np.array([crit[c] for c in ch]).reshape(k, 1, 1)
        d = FeatureDistMap(spec, mu, np.full(mu.shape, 0.07), np.ones((1, 1), bool), ch)
        p = prob_trav(d, TravThresholds({c: crit[c] for c in ch})).values[0, 0]
        worst = max(worst, abs(p - 0.5**k))
    checks["0.5^k at critical means"] = (worst <= 1e-9, f"max err {worst:.1e}")

    rng = np.random.default_rng(202)
    shape = (2, 100, 100)
    ch = ("step", "slope")
    spec = GridSpec(100, 100, 0.1)
    obs = np.ones((100, 100), bool)
    mu = rng.uniform(0, 1, shape)
    sig = rng.uniform(0.01, 0.5, shape)
    th = TravThresholds({"step": 0.5, "slope": 0.4})
    base = prob_trav(FeatureDistMap(spec, mu, sig, obs, ch), th).values
    up = prob_trav(FeatureDistMap(spec, mu + rng.uniform(0, 0.3, shape), sig, obs, ch), th).values
    loose = prob_trav(FeatureDistMap(spec, mu, sig, obs, ch), TravThresholds({"step": 0.6, "slope": 0.5})).values
    mono = bool((up <= base).all() and (loose >= base).all())
    checks["monotone on 1e4 cells"] = (mono, "holds" if mono else "violated")

    d = FeatureDistMap(spec, mu, np.full(shape, 1e-6), obs, ch)
    gt = gt_trav(FeatureMap(spec, mu, obs, ch), th).values
    off = (np.abs(mu - np.array([0.5, 0.4])[:, None, None]) > 1e-3).all(axis=0)
    lim = float(np.abs(prob_trav(d, th).values - gt)[off].max())
    checks["sigma 1e-6 limit"] = (lim <= 1e-3, f"max err {lim:.1e} on {int(off.sum())} cells")
    record("2 probability suite", checks)


# 3 -------------------------------------------------------------------------


def test_criterion_3_cost():
    checks = {}
    spec = GridSpec(1, 1, 0.1)
    fm = FeatureMap(spec, np.array([[[0.3]], [[0.5]]]), np.ones((1, 1), bool), ("step", "slope"))
    v = det_cost(fm, TravThresholds({"step": 0.3, "slope": 0.5}), clamp=False).values[0, 0]
    checks["1.0 at critical"] = (v == 1.0, f"value {float(v)!r}")

    rng = np.random.default_rng(303)
    names = ("step", "local_slope", "local_rough", "slope", "rough")
    spec = GridSpec(50, 50, 0.1)
    fm = FeatureMap(spec, rng.uniform(0, 0.5, (5, 50, 50)), np.ones((50, 50), bool), names)
    crit = {n: 0.25 for n in names}
    alpha = dict(zip(names, (1.0, 2.0, 0.5, 3.0, 1.5)))
    ref = det_cost(fm, TravThresholds(dict(crit), alpha), clamp=False).values.tobytes()
    same = all(
        det_cost(fm, TravThresholds(dict(crit), {n: a * s for n, a in alpha.items()}), clamp=False).values.tobytes() == ref
        for s in (2.0, 0.5, 3.0, 10.0, 1e-3)
    )
    checks["alpha scaling"] = (same, "bit-exact" if same else "differs")
    record("3 cost suite", checks)


# 4 -------------------------------------------------------------------------


def _centre_cloud(spec, fn, k=3):
    X, Y = spec.cell_centers()
    return np.vstack([np.c_[X.ravel(), Y.ravel(), fn(X.ravel(), Y.ravel())]] * k)


def _pct(vals, q):
    s = sorted(vals)
    pos = (q / 100.0) * (len(s) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def test_criterion_4_features():
    checks = {}
    spec = GridSpec(30, 30, 0.05)
    fm = map_cloud(_centre_cloud(spec, lambda x, y: np.full_like(x, 0.3)), spec)
    flat = max(float(np.abs(fm[n]).max()) for n in ("step", "local_slope", "local_rough", "slope", "rough"))
    checks["flat floor"] = (flat < 1e-9, f"max {flat:.1e}")

    spec = GridSpec(40, 40, 0.05)
    fm = map_cloud(_centre_cloud(spec, lambda x, y: 0.1 * x), spec)
    inner = (slice(10, -10), slice(10, -10))
    err = float(np.abs(fm["slope"][inner] - math.atan(0.1)).max())
    checks["plane slope"] = (err <= 1e-6, f"max err {err:.1e}")

    rng = np.random.default_rng(404)
    spec = GridSpec(40, 25, 0.1)
    pts = np.c_[rng.uniform(0, 4, 30_000), rng.uniform(0, 2.5, 30_000), rng.gamma(2.0, 0.3, 30_000)]
    params = FeatureParams(overhang_clearance=0.5)
    cells = rasterize(pts, spec)
    fm = compute_features(cells, params)
    mism = 0
    for i, j in itertools.product(range(spec.width), range(spec.height)):
        h = cells.heights(i, j).tolist()
        t = _pct(h, 1.0)
        e = max(_pct([v for v in h if v <= t + 0.5], 99.0), t)
        mism += (fm["terrain"][i, j] != t) + (fm["elevation"][i, j] != e)
    checks["percentile oracle"] = (mism == 0, f"{mism} mismatches on {spec.width * spec.height} cells")
    record("4 feature suite", checks)


# 5 -------------------------------------------------------------------------


def test_criterion_5_noising():
    checks = {}
    sensor = SensorModel(n_azimuth=1000, n_elevation=1000)
    img = DepthImage(np.full(sensor.shape, 5.0, np.float32), sensor)
    out = salt_pepper(img, 0.999, 10.0, np.random.default_rng(505))
    n = img.ranges.size
    k = int((out.ranges != img.ranges).sum())
    p = 0.001
    half = 3 * math.sqrt(n * p * (1 - p))
    checks["salt-and-pepper rate"] = (abs(k - n * p) <= half, f"{k} replaced, expected {n * p:.0f} +- {half:.0f}")

    noisy = range_noise(img, 0.01, 0.0, np.random.default_rng(506))
    sd = float(np.std(noisy.ranges.astype(np.float64) - 5.0))
    rel = abs(sd - 0.05) / 0.05
    checks["range-noise std"] = (rel <= 0.01, f"std {sd:.5f} vs 0.05 ({rel:.2%})")

    small = SensorModel(n_azimuth=512, n_elevation=64)
    rng = np.random.default_rng(507)
    base = DepthImage(rng.uniform(0.5, 9.5, small.shape).astype(np.float32), small)
    cfg = NoisingConfig()
    a = apply_pipeline(base, cfg, np.random.default_rng(9)).to_bytes()
    b = apply_pipeline(base, cfg, np.random.default_rng(9)).to_bytes()
    checks["determinism"] = (a == b, "byte-identical" if a == b else "differs")
    record("5 noising statistics", checks)


# 6 -------------------------------------------------------------------------


def test_criterion_6_projection():
    checks = {}
    sensor = SensorModel()
    rng = np.random.default_rng(606)
    n = 100_000
    az = rng.uniform(-math.pi, math.pi, n)
    el = rng.uniform(sensor.elevation_min, sensor.elevation_max, n)
    r = rng.uniform(0.5, 9.5, n)
    pts = np.c_[r * np.cos(el) * np.cos(az), r * np.cos(el) * np.sin(az), r * np.sin(el)]
    first = simulate_scan(pts, Pose(), sensor)
    again = simulate_scan(depth_to_cloud(first), Pose(), sensor)
    third = simulate_scan(depth_to_cloud(again), Pose(), sensor)
    exact = again.to_bytes() == third.to_bytes() and again.ranges.tobytes() == first.ranges.tobytes()
    checks["round trip"] = (exact, "bit-exact" if exact else "differs")

    flat, r32 = project_points(pts, sensor)
    order = np.lexsort((r32, flat))
    fs = flat[order]
    lead = np.r_[True, fs[1:] != fs[:-1]]
    winners = order[lead]
    wbins = flat[winners]
    el_idx, az_idx = np.divmod(wbins, sensor.n_azimuth)
    d_az = np.angle(np.exp(1j * (az[winners] - sensor.azimuth_centers()[az_idx])))
    d_el = el[winners] - sensor.elevation_centers()[el_idx]
    slack = 1e-12
    ang_ok = bool((np.abs(d_az) <= sensor.azimuth_step / 2 + slack).all()
                  and (np.abs(d_el) <= sensor.elevation_step / 2 + slack).all())
    checks["angular error"] = (ang_ok, f"max az {np.abs(d_az).max():.2e}, el {np.abs(d_el).max():.2e}")
    rec = first.ranges.ravel()[wbins].astype(np.float64)
    rerr = float(np.abs(rec - r[winners]).max())
    checks["range error"] = (rerr <= 1e-6, f"max {rerr:.1e} m")
    record("6 projection round trip", checks)


# 7 -------------------------------------------------------------------------


def test_criterion_7_metrics():
    checks = {}
    rng = np.random.default_rng(707)
    spec = GridSpec(20, 15, 0.1)
    worst = 0.0
    for _ in range(50):
        gobs = rng.random(spec.shape) < 0.8
        gt = FeatureMap(spec, np.where(gobs, rng.normal(size=(7,) + spec.shape), np.nan), gobs)
        pred = FeatureMap(spec, rng.normal(size=(7,) + spec.shape), np.ones(spec.shape, bool))
        r = rmse_triptych(pred, gt, rng.random(spec.shape) < 0.5)
        c = r.counts
        worst = max(worst, abs(r.both**2 * c["both"] - r.observed**2 * c["observed"] - r.inpaint**2 * c["inpaint"]))
    checks["partition identity"] = (worst <= 1e-9, f"max err {worst:.1e}")

    mu = rng.normal(size=(7,) + spec.shape)
    gt = FeatureMap(spec, mu, np.ones(spec.shape, bool))
    nll = masked_nll(gt, FeatureDistMap(spec, mu, np.ones_like(mu), gt.observed, FEATURE_CHANNELS))
    err = abs(nll - 0.5 * math.log(2 * math.pi))
    checks["nll at mode"] = (err <= 1e-9, f"err {err:.1e}")

    losses = 0
    for _ in range(100):
        gt = FeatureMap(spec, rng.normal(rng.uniform(-1, 2), 0.5, (7,) + spec.shape), np.ones(spec.shape, bool))
        pobs = rng.random(spec.shape) < rng.uniform(0.1, 0.9)
        pred = FeatureMap(spec, np.where(pobs, gt.values, np.nan), pobs)
        vals, _ = oracle_constant(pobs, gt)
        o = rmse_triptych(fill_constant(pred, vals), gt, pobs).inpaint
        z = rmse_triptych(fill_constant(pred, 0.0), gt, pobs).inpaint
        losses += o > z
    checks["oracle vs zero fill"] = (losses == 0, f"oracle lost {losses}/100")
    record("7 metric identities", checks)


# 8 -------------------------------------------------------------------------


def test_criterion_8_baseline_ordering(room_cloud, room_map):
    grid = GridSpec.ego(70, 70, 0.1)
    dspec = DatasetSpec(grid=grid, noising=NoisingConfig.disabled())
    rng = np.random.default_rng(808)
    scores = {"clean": [], "diffusion": [], "zero": []}
    for _ in range(8):
        pose = sample_pose(room_map, dspec, rng)
        scan, label, _ = make_pair(room_cloud, room_map, pose, dspec)
        pred = map_cloud(scan, grid)
        inp = pred.observed
        clean = fill_constant(map_cloud(transform_cloud(room_cloud, pose, "world_to_sensor"), grid), 0.0)
        scores["clean"].append(rmse_triptych(clean, label, inp).both)
        scores["diffusion"].append(rmse_triptych(fill_diffusion(pred), label, inp).both)
        scores["zero"].append(rmse_triptych(fill_constant(pred, 0.0), label, inp).both)
    m = {k: float(np.mean(v)) for k, v in scores.items()}
    gap1 = (m["diffusion"] - m["clean"]) / m["diffusion"]
    gap2 = (m["zero"] - m["diffusion"]) / m["zero"]
    record("8 baseline ordering", {
        "clean < diffusion": (gap1 > 0.05, f"{m['clean']:.4f} vs {m['diffusion']:.4f} (gap {gap1:.1%})"),
        "diffusion < zero": (gap2 > 0.05, f"{m['diffusion']:.4f} vs {m['zero']:.4f} (gap {gap2:.1%})"),
    })


# 9 -------------------------------------------------------------------------


def test_criterion_9_performance(room_cloud, room_map):
    rng = np.random.default_rng(909)
    spec = GridSpec.ego()
    names = FEATURE_CHANNELS
    d = FeatureDistMap(spec, rng.uniform(0, 1, (7, 140, 140)), rng.uniform(0.01, 0.3, (7, 140, 140)),
                       np.ones((140, 140), bool), names)
    th = TravThresholds.from_json(CONFIGS / "spot.json")
    prob_trav(d, th)
    times = []
    for _ in range(10):
        t0 = time.perf_counter()
        prob_trav(d, th)
        times.append(time.perf_counter() - t0)
    t_prob = float(np.median(times))

    dspec = DatasetSpec()
    pose = sample_pose(room_map, dspec, np.random.default_rng(1))
    make_pair(room_cloud, room_map, pose, dspec, 0)
    t0 = time.perf_counter()
    make_pair(room_cloud, room_map, pose, dspec, 1)
    t_pair = time.perf_counter() - t0
    record("9 performance", {
        "prob_trav 7x140x140": (t_prob < 0.050, f"median {t_prob * 1e3:.2f} ms"),
        "make_pair": (t_pair < 2.0, f"{t_pair:.3f} s"),
    })


# 10 ------------------------------------------------------------------------


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path, room_cloud, room_map):
    from travmap.geom import save_cloud

    save_cloud(room_cloud, tmp_path / "room.ply")
    room_map.save(tmp_path / "room.unrg")
    base = ["gen-dataset", "--cloud", str(tmp_path / "room.ply"), "--map", str(tmp_path / "room.unrg"),
            "--spec", str(CONFIGS / "dataset_room.json"), "--seed", "77"]
    codes = [main(base + ["--out", str(tmp_path / name)] + extra)
             for name, extra in (("a", []), ("b", []), ("c", ["--jobs", "4"]))]
    a, b, c = (_tree(tmp_path / n) for n in "abc")
    record("10 dataset determinism", {
        "exit codes": (codes == [0, 0, 0], str(codes)),
        "two runs": (a == b and len(a) == 31, f"{len(a)} files identical" if a == b else "differs"),
        "jobs 1 vs 4": (a == c, "identical" if a == c else "differs"),
    })
