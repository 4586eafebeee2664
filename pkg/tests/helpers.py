"""Shared oracles for the test-suite."""

import numpy as np

from mixlab import autodiff as ad
from mixlab import nn


def random_mlp(rng, max_hidden=3, max_width=32, dropout_p=0.0):
    """He-initialised MLP of random shape, with random (non-zero) biases."""
    d_in = int(rng.integers(1, 6))
    hidden = tuple(int(rng.integers(1, max_width + 1)) for _ in range(int(rng.integers(0, max_hidden + 1))))
    c = int(rng.integers(2, 6))
    model = nn.init_mlp(nn.MlpSpec(d_in, hidden, c, dropout_p), rng)
    for name, p in model.params.items():
        if name.startswith("b"):
            p.data = rng.normal(0.0, 0.5, size=p.shape)
    return model


def min_preactivation(model, x):
    """Smallest |pre-activation| over all hidden units; finite differences need it away from 0."""
    h = np.asarray(x, dtype=np.float64)
    smallest = np.inf
    for i in range(len(model.spec.hidden)):
        z = h @ model.params[f"W{i}"].data + model.params[f"b{i}"].data
        smallest = min(smallest, float(np.min(np.abs(z))))
        h = np.maximum(z, 0.0)
    return smallest


def finite_difference(f, x, h=1e-6):
    """Central differences of scalar ``f`` at every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def mlp_loss_grads(model, x, target):
    """Reverse-mode gradients by parameter name plus a closure evaluating the loss."""
    loss = ad.softmax_cross_entropy(nn.forward(model, x), target)
    leaf = ad.backward(loss)
    grads = {k: leaf[p] for k, p in model.params.items()}

    def loss_at(name):
        def f(value):
            saved = model.params[name].data
            model.params[name].data = value
            try:
                return ad.softmax_cross_entropy(nn.forward(model, x), target).scalar
            finally:
                model.params[name].data = saved

        return f

    return grads, loss_at


def rel_error(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / scale)


def _loss_longdouble(params, n_layers, x, target):
    # plain numpy forward pass in extended precision: an oracle independent of mixlab.autodiff
    h = x.astype(np.longdouble)
    for i in range(n_layers):
        h = h @ params[f"W{i}"] + params[f"b{i}"]
        if i < n_layers - 1:
            h = np.maximum(h, 0)
    m = h.max(axis=1, keepdims=True)
    logz = m[:, 0] + np.log(np.exp(h - m).sum(axis=1))
    return np.mean(logz - (target.astype(np.longdouble) * h).sum(axis=1))


def extended_fd_grads(model, x, target, h=1e-5):
    """Central differences of the mean cross-entropy, evaluated in long double."""
    params = {k: p.data.astype(np.longdouble) for k, p in model.params.items()}
    n_layers = len(model.spec.hidden) + 1
    out = {}
    for name, p in params.items():
        g = np.zeros(p.shape, dtype=np.float64)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = _loss_longdouble(params, n_layers, x, target)
            p[idx] = old - h
            down = _loss_longdouble(params, n_layers, x, target)
            p[idx] = old
            g[idx] = float((up - down) / (2 * np.longdouble(h)))
        out[name] = g
    return out


def coordinate_rel_error(auto, fd):
    """max |auto - fd| / (|fd| + 1e-8) over coordinates."""
    return float(np.max(np.abs(auto - fd) / (np.abs(fd) + 1e-8)))
