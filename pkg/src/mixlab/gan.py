"""Toy 2D GANs: standard vs. mixup discriminator objective on Gaussian mixtures.

The mixup discriminator sees ``lam * x + (1 - lam) * g(z)`` and is trained
towards the soft label ``lam``.  The generator always uses the
non-saturating loss ``BCE(d(g(z)), 1)`` on pure fakes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as _data
from . import nn as _nn
from .rng import Streams
from .train import Adam
from .vicinal import sample_lambda

__all__ = [
    "GanConfig",
    "ModeCoverage",
    "Snapshot",
    "GanResult",
    "disc_loss",
    "gen_loss",
    "mode_coverage",
    "train_gan",
    "write_snapshot",
]


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 2
    hidden: tuple = (512, 512, 512)
    batch_size: int = 128
    total_disc_batches: int = 20000
    disc_steps_per_gen: int = 5
    alpha: float = 0.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    snapshot_iters: tuple = (10, 100, 1000, 10000, 20000)
    snapshot_size: int = 2048
    coverage_radius: float = None
    coverage_min_fraction: float = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "snapshot_iters", tuple(int(s) for s in self.snapshot_iters))
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0 (0 means the standard GAN)")
        if list(self.snapshot_iters) != sorted(self.snapshot_iters):
            raise ValueError("snapshot_iters must be sorted")
        if self.disc_steps_per_gen < 1 or self.batch_size < 1 or self.total_disc_batches < 0:
            raise ValueError("invalid schedule")

    def gen_spec(self, data_dim=2):
        return _nn.MlpSpec(self.noise_dim, self.hidden, data_dim)

    def disc_spec(self, data_dim=2):
        return _nn.MlpSpec(data_dim, self.hidden, 1)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["snapshot_iters"] = list(self.snapshot_iters)
        return d


@dataclass
class ModeCoverage:
    modes_total: int
    modes_covered: int
    high_quality_fraction: float
    counts: np.ndarray = None


@dataclass
class Snapshot:
    iteration: int
    samples: np.ndarray
    coverage: ModeCoverage


@dataclass
class GanResult:
    generator: _nn.Model
    discriminator: _nn.Model
    snapshots: list = field(default_factory=list)


def _sum_losses(a, b):
    # one LossValue whose per-example entries are a_i + b_i, so the scalar is mean(a) + mean(b)
    return ad.LossValue(a.per_example + b.per_example, parents=(a, b), vjp=lambda g: (g, g), op="add")


def disc_loss(disc, real_x, fake_x, alpha, rng=None, lam=None):
    """Discriminator objective on one real and one fake batch.

    ``alpha == 0``: ``BCE(d(x), 1) + BCE(d(g(z)), 0)``.  Otherwise one
    ``lam ~ Beta(alpha, alpha)`` per batch (or the given ``lam``) and
    ``BCE(d(lam x + (1 - lam) g(z)), lam)``.
    """
    real = np.asarray(real_x.data if isinstance(real_x, ad.Tensor) else real_x, dtype=np.float64)
    fake = fake_x if isinstance(fake_x, ad.Tensor) else ad.as_tensor(fake_x)
    if real.shape != fake.shape:
        raise ad.ShapeError("disc_loss", real.shape, fake.shape)
    if alpha == 0 and lam is None:
        l_real = ad.sigmoid_bce(_nn.forward(disc, real), 1.0)
        l_fake = ad.sigmoid_bce(_nn.forward(disc, fake), 0.0)
        return _sum_losses(l_real, l_fake)
    if lam is None:
        lam = sample_lambda(alpha, rng)
    mixed = ad.add(ad.scale(real, lam), ad.scale(fake, 1.0 - lam))
    return ad.sigmoid_bce(_nn.forward(disc, mixed), lam)


def gen_loss(disc, fake_x):
    """Non-saturating generator loss ``BCE(d(g(z)), 1)``."""
    return ad.sigmoid_bce(_nn.forward(disc, fake_x), 1.0)


def mode_coverage(samples, mode_means, radius, min_fraction):
    """Count modes holding at least ``min_fraction`` of the samples within ``radius``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    samples = np.asarray(samples, dtype=np.float64)
    means = np.asarray(mode_means, dtype=np.float64)
    d2 = ((samples[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    close = d2[np.arange(len(samples)), nearest] <= radius * radius
    counts = np.bincount(nearest[close], minlength=len(means))
    covered = int(np.sum(counts >= min_fraction * len(samples))) if len(samples) else 0
    quality = float(close.mean()) if len(samples) else 0.0
    return ModeCoverage(len(means), covered, quality, counts)


def _named(model, grads):
    return {name: grads[p] for name, p in model.params.items() if p in grads}


def train_gan(config, dataset, mode_means=None, component_std=0.02):
    """Alternate ``disc_steps_per_gen`` discriminator batches with one generator batch.

    Iterations count discriminator batches.  At every snapshot iteration
    ``snapshot_size`` samples are drawn from a fixed noise batch and scored
    against ``mode_means`` (when given).
    """
    x_all = np.asarray(dataset.features if isinstance(dataset, _data.Dataset) else dataset, dtype=np.float64)
    dim = x_all.shape[1]
    streams = Streams(config.seed)
    gen = _nn.init_mlp(config.gen_spec(dim), streams["gan_init_g"])
    disc = _nn.init_mlp(config.disc_spec(dim), streams["gan_init_d"])
    opt_g = Adam(config.beta1, config.beta2)
    opt_d = Adam(config.beta1, config.beta2)
    snap_noise = streams["gan_snapshot"].standard_normal((config.snapshot_size, config.noise_dim))
    radius = config.coverage_radius or 3.0 * component_std
    result = GanResult(gen, disc)
    if mode_means is not None:
        min_frac = config.coverage_min_fraction or 1.0 / (4 * len(mode_means))

    snap_at = {s for s in config.snapshot_iters if s <= config.total_disc_batches}
    b = config.batch_size
    for it in range(1, config.total_disc_batches + 1):
        real = x_all[streams["gan_real"].integers(0, len(x_all), size=b)]
        z = streams["gan_noise"].standard_normal((b, config.noise_dim))
        with _nn.frozen(gen):
            fake = _nn.forward(gen, z).data
        loss = disc_loss(disc, real, fake, config.alpha, streams["gan_lambda"])
        disc.zero_grad()
        opt_d.step(disc.params, _named(disc, ad.backward(loss)), config.lr)

        if it % config.disc_steps_per_gen == 0:
            z = streams["gan_noise"].standard_normal((b, config.noise_dim))
            fake = _nn.forward(gen, z)
            with _nn.frozen(disc):
                loss = gen_loss(disc, fake)
            gen.zero_grad()
            opt_g.step(gen.params, _named(gen, ad.backward(loss)), config.lr)

        if it in snap_at:
            with _nn.frozen(gen):
                samples = _nn.forward(gen, snap_noise).data
            cov = mode_coverage(samples, mode_means, radius, min_frac) if mode_means is not None else None
            result.snapshots.append(Snapshot(it, samples, cov))
    return result


def write_snapshot(path, samples):
    """Two comma-separated columns with a header, floats in round-trip form."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y\n")
        for px, py in samples:
            fh.write(f"{float(px)!r},{float(py)!r}\n")
