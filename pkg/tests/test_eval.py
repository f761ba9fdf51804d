import csv
import io
import math

import numpy as np
import pytest

from travmap.errors import ContractError
from travmap.eval import (
    aggregate_csv,
    gaussian_nll,
    masked_nll,
    rmse_triptych,
    threshold_ranges,
    trav_mae,
    trav_mae_experiment,
)
from travmap.grid import FEATURE_CHANNELS, FeatureMap, GridSpec
from travmap.traversability import FeatureDistMap, TravMap


def fmap(values, observed=None, channels=None):
    values = np.asarray(values, float)
    spec = GridSpec(values.shape[1], values.shape[2], 0.1)
    obs = np.ones(spec.shape, bool) if observed is None else np.asarray(observed, bool)
    channels = channels or tuple(f"c{k}" for k in range(values.shape[0]))
    return FeatureMap(spec, np.where(obs[None], values, np.nan), obs, channels)


def loop_rmse(pred, gt, inp):
    out = {}
    for name in ("observed", "inpaint", "both"):
        total, n = 0.0, 0
        for c in range(gt.values.shape[0]):
            for i in range(gt.values.shape[1]):
                for j in range(gt.values.shape[2]):
                    if not gt.observed[i, j]:
                        continue
                    if name == "observed" and not inp[i, j]:
                        continue
                    if name == "inpaint" and inp[i, j]:
                        continue
                    total += (pred.values[c, i, j] - gt.values[c, i, j]) ** 2
                    n += 1
        out[name] = math.sqrt(total / n) if n else None
    return out


def test_rmse_hand_example():
    gt = fmap([[[0.0, 0.0]]])
    pred = fmap([[[3.0, 4.0]]])
    r = rmse_triptych(pred, gt, np.array([[True, False]]))
    assert r.observed == 3.0 and r.inpaint == 4.0
    assert r.both == pytest.approx(math.sqrt(12.5))


def test_rmse_matches_loop_oracle(rng):
    gt_obs = rng.random((5, 5)) < 0.8
    gt = fmap(rng.normal(size=(3, 5, 5)), gt_obs)
    pred = fmap(rng.normal(size=(3, 5, 5)))
    inp = rng.random((5, 5)) < 0.5
    r = rmse_triptych(pred, gt, inp)
    ref = loop_rmse(pred, gt, inp)
    for k, v in ref.items():
        assert getattr(r, k) == pytest.approx(v, rel=1e-12)


def test_partitions_combine_into_both(rng):
    gt = fmap(rng.normal(size=(2, 8, 8)))
    pred = fmap(rng.normal(size=(2, 8, 8)))
    inp = rng.random((8, 8)) < 0.5
    r = rmse_triptych(pred, gt, inp)
    n_o, n_i = r.counts["observed"], r.counts["inpaint"]
    pooled = (n_o * r.observed**2 + n_i * r.inpaint**2) / (n_o + n_i)
    assert r.both**2 == pytest.approx(pooled, rel=1e-12)


def test_channel_permutation_invariance(rng):
    v, p = rng.normal(size=(3, 6, 6)), rng.normal(size=(3, 6, 6))
    inp = rng.random((6, 6)) < 0.5
    a = rmse_triptych(fmap(p), fmap(v), inp)
    perm = [2, 0, 1]
    b = rmse_triptych(fmap(p[perm]), fmap(v[perm]), inp)
    assert a.both == pytest.approx(b.both, rel=1e-14)


def test_empty_partition_is_none():
    r = rmse_triptych(fmap(np.ones((1, 2, 2))), fmap(np.zeros((1, 2, 2))), np.ones((2, 2), bool))
    assert r.inpaint is None and r.observed == 1.0


def test_unfilled_prediction_rejected():
    pred = fmap(np.ones((1, 2, 2)), [[True, False], [True, True]])
    with pytest.raises(ContractError):
        rmse_triptych(pred, fmap(np.zeros((1, 2, 2))), np.ones((2, 2), bool))


def test_nll_standard_normal_at_mean():
    assert gaussian_nll(0.0, 0.0, 1.0) == pytest.approx(0.5 * math.log(2 * math.pi))
    assert gaussian_nll(1.0, 0.0, 1.0) == pytest.approx(0.5 * math.log(2 * math.pi) + 0.5)


def test_nll_minimised_at_residual_scale():
    # with residual |x-mu| = 0.3 the best sigma is 0.3
    sigmas = np.linspace(0.05, 1.0, 2000)
    vals = gaussian_nll(0.3, 0.0, sigmas)
    assert sigmas[np.argmin(vals)] == pytest.approx(0.3, abs=1e-3)


def test_masked_nll_ignores_unobserved():
    gt = fmap([[[0.0, 5.0]]], [[True, False]])
    spec = gt.spec
    d = FeatureDistMap(spec, np.zeros((1, 1, 2)), np.ones((1, 1, 2)), np.ones((1, 2), bool), gt.channels)
    assert masked_nll(gt, d) == pytest.approx(0.5 * math.log(2 * math.pi))


def test_trav_mae_examples():
    spec = GridSpec(3, 3, 0.1)
    obs = np.ones((3, 3), bool)
    gt = TravMap(spec, np.ones((3, 3)), obs)
    assert trav_mae(TravMap(spec, np.full((3, 3), 0.5), obs), gt) == 0.5
    pred = TravMap(spec, np.array([[1, 0, 1], [1, 1, 1], [0.5, 1, 1.0]]), obs)
    gt2 = TravMap(spec, np.array([[1, 1, 1], [1, 1, 0], [1, 1, 1.0]]), obs)
    assert trav_mae(pred, gt2) == pytest.approx(2.5 / 9)
    assert trav_mae(pred, TravMap(spec, np.zeros((3, 3)), np.zeros((3, 3), bool))) is None


def test_threshold_ranges_use_median_and_floor():
    v = np.zeros((len(FEATURE_CHANNELS), 3, 1))
    v[FEATURE_CHANNELS.index("step"), :, 0] = [0.1, 0.2, 0.3]
    gt = fmap(v, channels=FEATURE_CHANNELS)
    r = threshold_ranges(gt)
    assert r["step"] == pytest.approx((0.1, 0.4))
    assert r["slope"] == pytest.approx((5e-4, 2e-3))


def test_mae_experiment_perfect_knowledge(rng):
    v = rng.uniform(0, 1, size=(len(FEATURE_CHANNELS), 20, 20))
    gt = fmap(v, channels=FEATURE_CHANNELS)
    d = FeatureDistMap(gt.spec, v.copy(), np.full(v.shape, 1e-9), gt.observed.copy(), FEATURE_CHANNELS)
    out = trav_mae_experiment(d, gt, gt, n_threshold_draws=5, rng=0)
    assert out["mae_prob"] < 1e-3
    assert len(out["mae_det_draws"]) == 5 and 0 < out["mae_det"] <= 1


def test_aggregate_csv_means():
    recs = [
        {"method": "zero", "metric": "rmse", "partition": "both", "value": 1.0},
        {"method": "zero", "metric": "rmse", "partition": "both", "value": 3.0},
        {"method": "zero", "metric": "rmse", "partition": "inpaint", "value": None},
        {"method": "diff", "metric": "mae_prob", "partition": None, "value": 0.5},
    ]
    rows = list(csv.reader(io.StringIO(aggregate_csv(recs))))
    assert rows[0] == ["method", "mae_prob", "rmse:both"]
    assert rows[1] == ["diff", "0.5", ""]
    assert rows[2] == ["zero", "", "2"]


def test_rmse_identity_and_offset(rng):
    v = rng.normal(size=(2, 4, 4))
    inp = rng.random((4, 4)) < 0.5
    r0 = rmse_triptych(fmap(v), fmap(v), inp)
    assert (r0.observed, r0.inpaint, r0.both) == (0.0, 0.0, 0.0)
    r1 = rmse_triptych(fmap(v + 1.0), fmap(v), inp)
    for x in (r1.observed, r1.inpaint, r1.both):
        assert x == pytest.approx(1.0, abs=1e-12)


def test_nll_one_sigma_off():
    gt = fmap([[[1.0]]])
    d = FeatureDistMap(gt.spec, np.zeros((1, 1, 1)), np.ones((1, 1, 1)), np.ones((1, 1), bool), gt.channels)
    assert masked_nll(gt, d) == pytest.approx(0.5 * math.log(2 * math.pi) + 0.5, abs=1e-12)


def test_nll_grows_as_sigma_shrinks_below_residual(rng):
    x, mu = rng.normal(size=50), rng.normal(size=50)
    r = np.abs(x - mu)
    prev = gaussian_nll(x, mu, r)
    for f in (0.8, 0.5, 0.2, 0.05):
        cur = gaussian_nll(x, mu, f * r)
        assert (cur > prev).all()
        prev = cur


def test_mae_experiment_hand_case():
    # one feature, one draw with f_crit fixed to 0.5
    channels = ("step",)
    gtv = np.array([[[0.1, 0.6, 0.4], [0.9, 0.2, 0.7], [0.5, 0.3, 0.0]]])
    gt = fmap(gtv, channels=channels)
    dist = FeatureDistMap(gt.spec, gtv.copy(), np.full(gtv.shape, 0.1), gt.observed.copy(), channels)
    det = fmap(np.zeros((1, 3, 3)), channels=channels)
    out = trav_mae_experiment(dist, det, gt, n_threshold_draws=1, rng=0, ranges={"step": (0.5, 0.5)})
    truth = (gtv[0] < 0.5).astype(float)
    probs = np.array([[0.5 * math.erfc((m - 0.5) / 0.1 / math.sqrt(2)) for m in row] for row in gtv[0]])
    assert out["mae_prob"] == pytest.approx(np.abs(probs - truth).mean(), abs=1e-12)
    # zero features cost nothing, so det says everything is traversable
    assert out["mae_det"] == pytest.approx(1 - truth.mean(), abs=1e-12)
