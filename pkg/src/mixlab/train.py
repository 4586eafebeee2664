"""Seeded training loop with SGD/Adam, step LR schedule, weight decay and warm-up."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numba
import numpy as np

from . import autodiff as ad
from . import data as _data
from . import nn as _nn
from . import vicinal as _vic
from .evaluate import error_percent
from .rng import Streams

__all__ = [
    "TrainConfig",
    "EpochLog",
    "SGD",
    "Adam",
    "make_optimizer",
    "optimizer_step",
    "lr_at_epoch",
    "train_step",
    "fit",
    "policy_context",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_milestones: tuple = ()
    weight_decay: float = 0.0
    warmup_epochs: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lr_milestones", tuple(int(m) for m in self.lr_milestones))
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        ms = self.lr_milestones
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"lr_milestones must be strictly increasing, got {list(ms)}")
        if ms and (ms[0] < 0 or ms[-1] >= max(self.epochs, 1)):
            raise ValueError("lr_milestones must lie in [0, epochs)")
        if self.warmup_epochs < 0 or (self.epochs and self.warmup_epochs >= self.epochs):
            raise ValueError("warmup_epochs must be in [0, epochs)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_error_real: float
    train_error_corrupted: float
    test_error: float
    mean_train_loss: float

    FIELDS = ("epoch", "lr", "train_error_real", "train_error_corrupted", "test_error", "mean_train_loss")


def lr_at_epoch(config, epoch):
    """Base LR divided by 10 for every milestone already reached."""
    passed = sum(1 for m in config.lr_milestones if epoch >= m)
    return config.lr / (10.0**passed)


class SGD:
    """``v <- m v + (g + wd theta)``, ``theta <- theta - lr v``."""

    def __init__(self, momentum=0.0, weight_decay=0.0):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {}

    def step(self, params, grads, lr):
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.momentum:
                v = self.velocity.get(name)
                v = g if v is None else self.momentum * v + g
                self.velocity[name] = v
            else:
                v = g
            p.data = p.data - lr * v


@numba.njit(cache=True, error_model="numpy")
def _adam_kernel(p, g, m, v, beta1, beta2, c1, c2, lr, eps, wd):
    # one fused pass; m and v are updated in place, the new parameters are returned
    pf, gf, mf, vf = p.ravel(), g.ravel(), m.ravel(), v.ravel()
    out = np.empty_like(pf)
    for i in range(pf.size):
        gi = gf[i]
        if wd != 0.0:
            gi = gi + wd * pf[i]
        mi = beta1 * mf[i] + (1.0 - beta1) * gi
        vi = beta2 * vf[i] + (1.0 - beta2) * (gi * gi)
        mf[i] = mi
        vf[i] = vi
        out[i] = pf[i] - lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
    return out.reshape(p.shape)


class Adam:
    """Adam with bias correction; weight decay is added to the gradient."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m, self.v = {}, {}

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            p.data = _adam_kernel(
                np.ascontiguousarray(p.data), np.ascontiguousarray(g, dtype=np.float64), self.m[name], self.v[name],
                self.beta1, self.beta2, c1, c2, float(lr), self.eps, float(self.weight_decay),
            )


def make_optimizer(config):
    if config.optimizer == "sgd":
        return SGD(config.momentum, config.weight_decay)
    return Adam(config.beta1, config.beta2, config.eps, config.weight_decay)


def optimizer_step(state, params, grads, config, lr=None):
    """Functional wrapper: ``state`` is an optimizer from :func:`make_optimizer` (or None)."""
    if state is None:
        state = make_optimizer(config)
    state.step(params, grads, config.lr if lr is None else lr)
    return params, state


def named_grads(model, leaf_grads):
    return {name: leaf_grads[p] for name, p in model.params.items() if p in leaf_grads}


def _forward_batch(model, vb, dropout_rng):
    if vb.mix_layer == 0:
        return _nn.forward(model, vb.inputs, mode="train", rng=dropout_rng)
    return _nn.forward_mixed_at_layer(
        model, vb.inputs, vb.partner_inputs, vb.lam, vb.mix_layer, mode="train", rng=dropout_rng
    )


def train_step(model, optimizer, vb, lr, dropout_rng):
    """One forward/backward/update on a prepared batch; returns the batch loss."""
    logits = _forward_batch(model, vb, dropout_rng)
    loss = ad.softmax_cross_entropy(logits, vb.targets)
    model.zero_grad()
    grads = ad.backward(loss)
    optimizer.step(model.params, named_grads(model, grads), lr)
    return loss.scalar


def policy_context(policy, train_ds):
    """Build the neighbour index a KNN policy needs (None otherwise)."""
    if not _vic.needs_knn(policy):
        return None
    scope = "same_class" if policy.pairing == "same_class" else "all_class"
    knn = _data.build_knn(train_ds, policy.knn_k, scope=scope)
    return _vic.PolicyContext(knn=knn, features=train_ds.features, targets=_data.one_hot(train_ds.labels, train_ds.num_classes))


def _error(model, ds, mask=None):
    if mask is not None:
        if not mask.any():
            return float("nan")
        ds = ds.subset(np.flatnonzero(mask))
    return error_percent(model, ds)


def fit(model, train_ds, test_ds, policy, config, context=None, evaluate=True):
    """Train ``model`` in place and return ``(model, logs)``.

    Randomness comes from named streams of ``config.seed``: ``shuffle`` for
    batch order, ``lambda`` for mixing partners and coefficients, ``noise``
    for Gaussian perturbations and ``dropout`` for masks.
    During the first ``warmup_epochs`` epochs batches are used as they are.
    ``train_error_corrupted`` (or ``_real``) is NaN when that subset is empty.
    """
    if test_ds is not None and (test_ds.input_dim != train_ds.input_dim or test_ds.num_classes != train_ds.num_classes):
        raise ValueError("train and test datasets disagree on input_dim or num_classes")
    if model.spec.input_dim != train_ds.input_dim or model.spec.output_dim != train_ds.num_classes:
        raise ValueError("model spec does not match the dataset")
    if context is None:
        context = policy_context(policy, train_ds)

    streams = Streams(config.seed)
    optimizer = make_optimizer(config)
    targets = _data.one_hot(train_ds.labels, train_ds.num_classes)
    erm = _vic.ERM()
    logs = []
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        active = erm if epoch < config.warmup_epochs else policy
        total, count = 0.0, 0
        for idx in _data.minibatches(len(train_ds), config.batch_size, streams["shuffle"]):
            draws = streams["noise"] if active.kind == "gaussian_noise" else streams["lambda"]
            vb = _vic.apply_policy(train_ds.features[idx], targets[idx], active, draws, context, indices=idx)
            total += train_step(model, optimizer, vb, lr, streams["dropout"]) * len(idx)
            count += len(idx)
        if evaluate:
            real = _error(model, train_ds, ~train_ds.corrupted)
            corrupted = _error(model, train_ds, train_ds.corrupted)
            test = _error(model, test_ds) if test_ds is not None and len(test_ds) else float("nan")
        else:
            real = corrupted = test = float("nan")
        logs.append(EpochLog(epoch, lr, real, corrupted, test, total / max(count, 1)))
    return model, logs
