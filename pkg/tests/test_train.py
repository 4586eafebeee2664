import numpy as np
import pytest

from mixlab import autodiff as ad
from mixlab import data, nn, train, vicinal as vic
from mixlab.train import TrainConfig


def _toy(seed=0, n=120):
    ds = data.make_synthetic("two_moons", n, 0.1, np.random.default_rng(seed))
    return data.stratified_split(ds, 0.25, np.random.default_rng(seed + 1))


def _model(ds, seed=0, hidden=(16, 16), dropout=0.0):
    return nn.init_mlp(nn.MlpSpec(ds.input_dim, hidden, ds.num_classes, dropout), np.random.default_rng(seed))


def _logs_equal(a, b):
    fields = train.EpochLog.FIELDS
    x = np.array([[getattr(r, f) for f in fields] for r in a], dtype=float)
    y = np.array([[getattr(r, f) for f in fields] for r in b], dtype=float)
    return x.shape == y.shape and bool(np.array_equal(x, y, equal_nan=True))


def test_step_schedule():
    cfg = TrainConfig(epochs=200, lr=0.1, optimizer="sgd", lr_milestones=(100, 150))
    assert train.lr_at_epoch(cfg, 0) == 0.1
    assert train.lr_at_epoch(cfg, 99) == 0.1
    assert train.lr_at_epoch(cfg, 100) == pytest.approx(0.01, rel=1e-15)
    assert train.lr_at_epoch(cfg, 150) == pytest.approx(0.001, rel=1e-15)
    assert train.lr_at_epoch(TrainConfig(epochs=5, lr=0.3), 4) == 0.3


def test_sgd_plain_step():
    p = {"w": ad.parameter(np.array([1.0]))}
    train.SGD().step(p, {"w": np.array([0.25])}, 1.0)
    assert p["w"].data[0] == 0.75


def test_sgd_momentum_accumulates():
    p = {"w": ad.parameter(np.array([0.0]))}
    opt = train.SGD(momentum=0.9)
    opt.step(p, {"w": np.array([1.0])}, 0.1)
    opt.step(p, {"w": np.array([1.0])}, 0.1)
    assert p["w"].data[0] == pytest.approx(-0.1 - 0.19)


@pytest.mark.parametrize("g", [0.3, -2.0, 1e-3])
def test_adam_first_step_is_lr_times_sign(g):
    lr, eps = 1e-3, 1e-8
    p = {"w": ad.parameter(np.array([1.0]))}
    train.Adam(eps=eps).step(p, {"w": np.array([g])}, lr)
    np.testing.assert_allclose(p["w"].data[0] - 1.0, -lr * g / (abs(g) + eps), rtol=1e-12)


def test_adam_matches_textbook_updates(rng):
    # reference: the update rule written out with plain numpy
    b1, b2, eps, lr, wd = 0.9, 0.999, 1e-8, 1e-2, 1e-3
    theta = rng.normal(size=(4, 3))
    p = {"w": ad.parameter(theta.copy())}
    opt = train.Adam(b1, b2, eps, wd)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t in range(1, 6):
        g = rng.normal(size=theta.shape)
        opt.step(p, {"w": g}, lr)
        gg = g + wd * theta
        m = b1 * m + (1 - b1) * gg
        v = b2 * v + (1 - b2) * gg * gg
        theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    np.testing.assert_allclose(p["w"].data, theta, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("opt", ["sgd", "adam"])
def test_decay_only_shrinks(opt):
    cfg = TrainConfig(optimizer=opt, lr=0.1, weight_decay=0.5)
    p = {"w": ad.parameter(np.array([2.0, -3.0]))}
    state = None
    for _ in range(3):
        _, state = train.optimizer_step(state, p, {"w": np.zeros(2)}, cfg)
    assert np.all(np.abs(p["w"].data) < [2.0, 3.0])
    assert np.all(np.sign(p["w"].data) == [1, -1])


@pytest.mark.parametrize("kwargs", [dict(optimizer="rmsprop"), dict(lr=0.0), dict(epochs=10, lr_milestones=(5, 3)), dict(epochs=3, warmup_epochs=3)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_config_round_trip():
    cfg = TrainConfig(epochs=7, lr_milestones=(2, 5), optimizer="sgd", momentum=0.9)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_epochs_leaves_model_alone():
    tr, te = _toy()
    model = _model(tr)
    before = model.state()
    _, logs = train.fit(model, tr, te, vic.ERM(), TrainConfig(epochs=0))
    assert logs == []
    for k, v in before.items():
        np.testing.assert_array_equal(model.params[k].data, v)


def test_lambda_one_mixup_reproduces_erm():
    tr, te = _toy()
    cfg = TrainConfig(epochs=3, batch_size=16, seed=4)
    m1, l1 = train.fit(_model(tr, dropout=0.2), tr, te, vic.ERM(), cfg)
    m2, l2 = train.fit(_model(tr, dropout=0.2), tr, te, vic.Mixup(alpha=1.0, fixed_lambda=1.0), cfg)
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k].data, m2.params[k].data)
    assert _logs_equal(l1, l2)


def test_fit_is_deterministic():
    tr, te = _toy()
    cfg = TrainConfig(epochs=2, seed=9)
    pol = vic.Mixup(alpha=0.5, mix_layer=1)
    _, a = train.fit(_model(tr, dropout=0.3), tr, te, pol, cfg)
    _, b = train.fit(_model(tr, dropout=0.3), tr, te, pol, cfg)
    assert _logs_equal(a, b)


def test_fit_learns_two_moons():
    tr, te = _toy(n=400)
    _, logs = train.fit(_model(tr), tr, te, vic.ERM(), TrainConfig(epochs=30, lr=1e-2))
    assert logs[-1].test_error < 10.0
    assert logs[-1].mean_train_loss < logs[0].mean_train_loss


def test_corrupted_column_empty_without_flags():
    tr, te = _toy()
    _, logs = train.fit(_model(tr), tr, te, vic.ERM(), TrainConfig(epochs=1))
    assert np.isnan(logs[0].train_error_corrupted) and not np.isnan(logs[0].train_error_real)


def test_warmup_uses_plain_batches():
    tr, te = _toy()
    _, warm = train.fit(_model(tr), tr, te, vic.GaussianNoise(0.5), TrainConfig(epochs=3, warmup_epochs=2, seed=1))
    _, erm = train.fit(_model(tr), tr, te, vic.ERM(), TrainConfig(epochs=3, seed=1))
    assert _logs_equal(warm[:2], erm[:2])
    assert not _logs_equal(warm[2:], erm[2:])


def test_knn_policy_trains():
    tr, te = _toy()
    _, logs = train.fit(_model(tr), tr, te, vic.Mixup(partner="knn", pairing="same_class", knn_k=200), TrainConfig(epochs=1))
    assert len(logs) == 1


def test_mismatched_model_rejected():
    tr, te = _toy()
    model = nn.init_mlp(nn.MlpSpec(3, (4,), 2), np.random.default_rng(0))
    with pytest.raises(ValueError):
        train.fit(model, tr, te, vic.ERM(), TrainConfig(epochs=1))
