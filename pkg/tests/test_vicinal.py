import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mixlab import data, rng as mrng, vicinal as vic


def _onehot(labels, c):
    return data.one_hot(labels, c)


@pytest.mark.parametrize("alpha", [0.1, 0.2, 1.0, 8.0, 32.0])
def test_beta_moments(alpha):
    x = vic.sample_lambda(alpha, np.random.default_rng(0), size=100_000)
    assert abs(x.mean() - 0.5) < 0.005
    assert abs(x.var() - 1.0 / (4 * (2 * alpha + 1))) < 0.005
    assert np.all((x >= 0) & (x <= 1))


def test_beta_one_is_uniform():
    x = vic.sample_lambda(1.0, np.random.default_rng(1), size=100_000)
    assert stats.kstest(x, "uniform").statistic < 0.01


@pytest.mark.parametrize("a, b", [(0.3, 2.0), (2.5, 0.7), (5.0, 5.0)])
def test_asymmetric_beta_ks(a, b):
    x = mrng.beta(a, b, size=50_000, rng=np.random.default_rng(2))
    assert stats.kstest(x, "beta", args=(a, b)).statistic < 0.01


@pytest.mark.parametrize("shape", [0.05, 0.5, 1.0, 3.0])
def test_gamma_matches_scipy(shape):
    x = mrng.standard_gamma(shape, 50_000, np.random.default_rng(3))
    assert stats.kstest(x, "gamma", args=(shape,)).statistic < 0.01


def test_small_alpha_beta_has_no_nans():
    x = vic.sample_lambda(0.01, np.random.default_rng(0), size=100_000)
    assert np.all(np.isfinite(x)) and np.all((x >= 0) & (x <= 1))


def test_sample_lambda_rejects_bad_alpha():
    with pytest.raises(ValueError):
        vic.sample_lambda(0.0, np.random.default_rng(0))


def test_streams_are_independent_and_stable():
    a = mrng.Streams(5)["shuffle"].random(3)
    b = mrng.Streams(5)["shuffle"].random(3)
    c = mrng.Streams(5)["vicinal"].random(3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_midpoint_mix():
    pol = vic.Mixup(fixed_lambda=0.5)
    x = np.array([[0.0, 2.0], [2.0, 0.0]])
    y = _onehot([0, 1], 2)
    mb = vic.mix_batch(x, y, pol, np.random.default_rng(0))
    j = mb.partner[0]
    if j == 1:
        np.testing.assert_array_equal(mb.mixed_inputs[0], [1.0, 1.0])
        np.testing.assert_array_equal(mb.targets[0], [0.5, 0.5])
    # whichever permutation was drawn, rows follow the convex formula
    np.testing.assert_array_equal(mb.mixed_inputs, 0.5 * x + 0.5 * x[mb.partner])


def test_convex_target():
    y = _onehot([0, 2], 3)
    got = vic.mix_batch(np.zeros((2, 1)), y, vic.Mixup(fixed_lambda=0.3), np.random.default_rng(0))
    for r in range(2):
        np.testing.assert_allclose(got.targets[r], 0.3 * y[r] + 0.7 * y[got.partner[r]], atol=1e-15)
    # e0 mixed with e2 at 0.3 -> [0.3, 0, 0.7]
    np.testing.assert_allclose(0.3 * y[0] + 0.7 * y[1], [0.3, 0.0, 0.7])


def test_lambda_one_recovers_batch(rng):
    x = rng.normal(size=(8, 3))
    y = _onehot(rng.integers(0, 4, 8), 4)
    mb = vic.mix_batch(x, y, vic.Mixup(fixed_lambda=1.0), rng)
    np.testing.assert_array_equal(mb.mixed_inputs, x)
    np.testing.assert_array_equal(mb.targets, y)


def test_hard_nearest_picks_closer_sample(rng):
    x = rng.normal(size=(6, 2))
    y = _onehot([0, 1, 2, 0, 1, 2], 3)
    mb = vic.mix_batch(x, y, vic.Mixup(target="hard_nearest", fixed_lambda=0.7), rng)
    np.testing.assert_array_equal(mb.targets, y)
    mb = vic.mix_batch(x, y, vic.Mixup(target="hard_nearest", fixed_lambda=0.2), rng)
    np.testing.assert_array_equal(mb.targets, y[mb.partner])


def test_per_batch_lambda_is_shared_and_per_example_is_not(rng):
    x = rng.normal(size=(16, 2))
    y = _onehot(rng.integers(0, 2, 16), 2)
    mb = vic.mix_batch(x, y, vic.Mixup(alpha=1.0), rng)
    assert np.ndim(mb.lam) == 0
    mb = vic.mix_batch(x, y, vic.Mixup(alpha=1.0, lambda_granularity="per_example"), rng)
    assert mb.lam.shape == (16,) and len(np.unique(mb.lam)) == 16
    np.testing.assert_allclose(mb.targets, y * mb.lam[:, None] + y[mb.partner] * (1 - mb.lam[:, None]))


@given(st.integers(0, 10_000))
def test_same_class_pairs_stay_in_class(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, 10)
    mb = vic.mix_batch(rng.normal(size=(10, 2)), _onehot(labels, 3), vic.Mixup(pairing="same_class"), rng)
    np.testing.assert_array_equal(labels[mb.partner], labels)
    np.testing.assert_allclose(mb.targets.sum(axis=1), 1.0)


def test_singleton_class_passes_through(rng):
    labels = np.array([0, 0, 0, 1])
    x = rng.normal(size=(4, 2))
    mb = vic.mix_batch(x, _onehot(labels, 2), vic.Mixup(pairing="same_class", fixed_lambda=0.4), rng)
    assert mb.partner[3] == 3
    np.testing.assert_allclose(mb.mixed_inputs[3], x[3], atol=1e-15)


def test_knn_partner_is_a_neighbour(rng):
    ds = data.make_synthetic("gauss_blobs", 60, 1.0, rng, num_classes=3)
    knn = data.build_knn(ds, 5)
    ctx = vic.PolicyContext(knn, ds.features, _onehot(ds.labels, 3))
    idx = np.arange(10, 20)
    vb = vic.apply_policy(ds.features[idx], ctx.targets[idx], vic.Mixup(partner="knn", knn_k=5, fixed_lambda=0.5), rng, ctx, idx)
    partners = 2 * vb.inputs - ds.features[idx]
    for r, i in enumerate(idx):
        dist = np.abs(ds.features[knn.neighbors[i]] - partners[r]).sum(axis=1)
        assert dist.min() < 1e-12


def test_knn_policy_without_index_errors(rng):
    with pytest.raises(ValueError):
        vic.apply_policy(np.zeros((2, 2)), _onehot([0, 1], 2), vic.Mixup(partner="knn"), rng)


def test_smoothing_values():
    y = _onehot([3], 10)
    s = vic.smooth_labels(y, 0.1, 10)
    assert s[0, 3] == 0.91 and np.all(np.delete(s[0], 3) == 0.01)
    s = vic.smooth_labels(y, 0.2, 10)
    np.testing.assert_allclose(s[0, 3], 0.82, rtol=1e-15)
    np.testing.assert_allclose(np.delete(s[0], 3), 0.02, rtol=1e-15)
    np.testing.assert_array_equal(vic.smooth_labels(y, 0.0, 10), y)


@pytest.mark.parametrize("eps", [-0.1, 1.0])
def test_smoothing_range(eps):
    with pytest.raises(ValueError):
        vic.smooth_labels(_onehot([0], 2), eps)


@given(st.floats(0, 0.99), st.integers(2, 20))
def test_smoothing_is_row_stochastic(eps, c):
    s = vic.smooth_labels(_onehot(np.arange(c) % c, c), eps, c)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, rtol=1e-12)
    assert np.all(s >= 0)


def test_gaussian_perturb(rng):
    x = rng.normal(size=(3, 2))
    np.testing.assert_array_equal(vic.gaussian_perturb(x, 0.0, rng), x)
    z = vic.gaussian_perturb(np.zeros((20_000, 1)), 0.2, np.random.default_rng(0))
    assert abs(z.std() - 0.2) < 0.005


def test_erm_policy_is_identity(rng):
    x, y = rng.normal(size=(4, 2)), _onehot([0, 1, 1, 0], 2)
    vb = vic.apply_policy(x, y, vic.ERM(), rng)
    np.testing.assert_array_equal(vb.inputs, x)
    np.testing.assert_array_equal(vb.targets, y)


def test_two_example_trace():
    # hand trace: draw a permutation of 2, then one Beta(1, 1) value, from the same stream
    x = np.array([[1.0, 0.0], [0.0, 3.0]])
    y = _onehot([0, 1], 2)
    trace = np.random.default_rng(42)
    perm = trace.permutation(2)
    lam = mrng.beta(1.0, 1.0, rng=trace)
    vb = vic.apply_policy(x, y, vic.Mixup(alpha=1.0), np.random.default_rng(42))
    np.testing.assert_array_equal(vb.inputs, lam * x + (1 - lam) * x[perm])
    np.testing.assert_array_equal(vb.targets, lam * y + (1 - lam) * y[perm])


def test_mixup_smoothing_smooths_then_mixes(rng):
    y = _onehot([0, 1], 2)
    vb = vic.apply_policy(np.zeros((2, 1)), y, vic.MixupPlusSmoothing(epsilon=0.2, fixed_lambda=0.25), np.random.default_rng(0))
    s = vic.smooth_labels(y, 0.2)
    mb = vic.mix_batch(np.zeros((2, 1)), s, vic.Mixup(fixed_lambda=0.25), np.random.default_rng(0))
    np.testing.assert_array_equal(vb.targets, mb.targets)


def test_latent_policy_keeps_both_branches(rng):
    x = rng.normal(size=(4, 2))
    vb = vic.apply_policy(x, _onehot([0, 1, 0, 1], 2), vic.Mixup(mix_layer=2), rng)
    assert vb.mix_layer == 2 and vb.partner_inputs.shape == x.shape
    np.testing.assert_array_equal(vb.inputs, x)


@pytest.mark.parametrize(
    "policy",
    [vic.ERM(), vic.Mixup(0.4, "same_class", "knn", "hard_nearest", 1, "per_example", 7), vic.GaussianNoise(0.1),
     vic.LabelSmoothing(0.05), vic.MixupPlusSmoothing(1.0, 0.4)],
)
def test_policy_dict_round_trip(policy):
    assert vic.policy_from_dict(vic.policy_to_dict(policy)) == policy


def test_policy_validation():
    for kwargs in (dict(alpha=0), dict(pairing="nearby"), dict(partner="kmeans"), dict(fixed_lambda=1.5)):
        with pytest.raises(ValueError):
            vic.Mixup(**kwargs)
