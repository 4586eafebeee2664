"""Seeded random streams plus Gamma and Beta samplers.

The Gamma sampler is Marsaglia and Tsang's squeeze/rejection method.  For
shape ``a < 1`` it samples shape ``a + 1`` and multiplies by ``U**(1/a)``.
The multiplication is done in log space so tiny shapes do not underflow.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "Streams", "log_standard_gamma", "standard_gamma", "beta"]


def stream(seed, name):
    """Independent generator for ``(seed, name)``; stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))]))


class Streams:
    """Lazily created named generators derived from one master seed.

    Separate streams mean that turning one mechanism on (e.g. dropout) does
    not shift the draws of another (e.g. minibatch order).
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._cache = {}

    def __getitem__(self, name):
        if name not in self._cache:
            self._cache[name] = stream(self.seed, name)
        return self._cache[name]


def _mt_log_gamma_ge1(a, size, rng):
    # Marsaglia-Tsang for a >= 1, returns log of the draws
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    filled = 0
    while filled < size:
        m = max(16, int(1.1 * (size - filled)) + 8)
        x = rng.standard_normal(m)
        v = 1.0 + c * x
        ok = v > 0
        x, v = x[ok], v[ok] ** 3
        u = rng.random(len(x))
        x2 = x * x
        squeeze = u < 1.0 - 0.0331 * x2 * x2
        with np.errstate(divide="ignore"):
            full = np.log(u) < 0.5 * x2 + d * (1.0 - v + np.log(v))
        acc = squeeze | full
        got = np.log(d * v[acc])
        take = min(len(got), size - filled)
        out[filled : filled + take] = got[:take]
        filled += take
    return out


def log_standard_gamma(a, size, rng):
    """Logarithm of ``size`` Gamma(a, 1) draws."""
    a = float(a)
    if not a > 0:
        raise ValueError(f"gamma shape must be positive, got {a}")
    if a >= 1.0:
        return _mt_log_gamma_ge1(a, size, rng)
    base = _mt_log_gamma_ge1(a + 1.0, size, rng)
    u = rng.random(size)
    # rng.random() can return exactly 0
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return base + np.log(u) / a


def standard_gamma(a, size, rng):
    return np.exp(log_standard_gamma(a, size, rng))


def beta(a, b, size=None, rng=None):
    """Beta(a, b) via ``X / (X + Y)`` with ``X ~ Gamma(a)``, ``Y ~ Gamma(b)``.

    Returns a float when ``size`` is None.
    """
    if rng is None:
        raise ValueError("beta sampling needs an explicit rng")
    if not (a > 0 and b > 0):
        raise ValueError(f"beta parameters must be positive, got ({a}, {b})")
    n = 1 if size is None else int(size)
    lx = log_standard_gamma(a, n, rng)
    ly = log_standard_gamma(b, n, rng)
    # x / (x + y) = 1 / (1 + exp(ly - lx)), stable when both are tiny
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(ly - lx))
    return float(out[0]) if size is None else out
