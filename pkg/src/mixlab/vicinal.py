"""Vicinal batch transformations: mixup and its ablation variants, Gaussian
input noise, label smoothing, and the Beta(alpha, alpha) interpolation sampler.

A policy is a small frozen dataclass.  :func:`apply_policy` turns a clean
minibatch into exactly what the training step must feed forward.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import rng as _rng

__all__ = [
    "ERM",
    "Mixup",
    "GaussianNoise",
    "LabelSmoothing",
    "MixupPlusSmoothing",
    "MixedBatch",
    "VicinalBatch",
    "PolicyContext",
    "sample_lambda",
    "mix_batch",
    "smooth_labels",
    "gaussian_perturb",
    "apply_policy",
    "policy_to_dict",
    "policy_from_dict",
    "policy_label",
    "needs_knn",
    "mix_depth",
]

PAIRINGS = ("all_class", "same_class")
PARTNERS = ("random_perm", "knn")
TARGETS = ("soft", "hard_nearest")
GRANULARITIES = ("per_batch", "per_example")


def _check_choice(name, value, allowed):
    if value not in allowed:
        raise ValueError(f"{name} must be one of {allowed}, got {value!r}")


def _check_fixed(fixed_lambda):
    if fixed_lambda is not None and not 0.0 <= fixed_lambda <= 1.0:
        raise ValueError(f"fixed_lambda must be in [0, 1], got {fixed_lambda}")


@dataclass(frozen=True)
class ERM:
    kind = "erm"


@dataclass(frozen=True)
class Mixup:
    """Mixup in all its ablation variants.

    ``pairing``/``partner`` select AC/SC and RP/KNN, ``target="hard_nearest"``
    gives the mix-inputs-only row, ``mix_layer > 0`` interpolates hidden
    activations.  ``fixed_lambda`` bypasses the Beta draw (testing hook).
    """

    alpha: float = 1.0
    pairing: str = "all_class"
    partner: str = "random_perm"
    target: str = "soft"
    mix_layer: int = 0
    lambda_granularity: str = "per_batch"
    knn_k: int = 200
    fixed_lambda: float = None
    kind = "mixup"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        _check_choice("pairing", self.pairing, PAIRINGS)
        _check_choice("partner", self.partner, PARTNERS)
        _check_choice("target", self.target, TARGETS)
        _check_choice("lambda_granularity", self.lambda_granularity, GRANULARITIES)
        if self.mix_layer < 0:
            raise ValueError("mix_layer must be >= 0")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        _check_fixed(self.fixed_lambda)


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float = 0.1
    kind = "gaussian_noise"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class LabelSmoothing:
    epsilon: float = 0.1
    kind = "label_smoothing"

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class MixupPlusSmoothing:
    """Random-pair mixup over all classes where both one-hot targets are smoothed first."""

    alpha: float = 1.0
    epsilon: float = 0.1
    target: str = "soft"
    lambda_granularity: str = "per_batch"
    fixed_lambda: float = None
    kind = "mixup_smoothing"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        _check_choice("target", self.target, TARGETS)
        _check_choice("lambda_granularity", self.lambda_granularity, GRANULARITIES)
        _check_fixed(self.fixed_lambda)

    def as_mixup(self):
        return Mixup(
            alpha=self.alpha,
            target=self.target,
            lambda_granularity=self.lambda_granularity,
            fixed_lambda=self.fixed_lambda,
        )


_POLICY_TYPES = {cls.kind: cls for cls in (ERM, Mixup, GaussianNoise, LabelSmoothing, MixupPlusSmoothing)}


def policy_to_dict(policy):
    d = {"kind": policy.kind}
    d.update(asdict(policy))
    return d


def policy_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _POLICY_TYPES:
        raise ValueError(f"unknown policy kind {kind!r}; choose from {sorted(_POLICY_TYPES)}")
    cls = _POLICY_TYPES[kind]
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"policy {kind!r} has no field(s) {sorted(unknown)}")
    return cls(**d)


def policy_label(policy):
    """Short human-readable name, e.g. ``mixup(a=1,AC+RP)``."""
    if isinstance(policy, ERM):
        return "ERM"
    if isinstance(policy, GaussianNoise):
        return f"gaussian(sigma={policy.sigma:g})"
    if isinstance(policy, LabelSmoothing):
        return f"smoothing(eps={policy.epsilon:g})"
    if isinstance(policy, MixupPlusSmoothing):
        return f"mixup+smoothing(a={policy.alpha:g},eps={policy.epsilon:g})"
    tag = ("AC" if policy.pairing == "all_class" else "SC") + "+" + ("RP" if policy.partner == "random_perm" else "KNN")
    parts = [f"a={policy.alpha:g}", tag]
    if policy.mix_layer:
        parts.append(f"layer={policy.mix_layer}")
    if policy.target == "hard_nearest":
        parts.append("inputs-only")
    if policy.lambda_granularity == "per_example":
        parts.append("per-example")
    return "mixup(" + ",".join(parts) + ")"


def needs_knn(policy):
    return isinstance(policy, Mixup) and policy.partner == "knn"


def mix_depth(policy):
    return policy.mix_layer if isinstance(policy, Mixup) else 0


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def sample_lambda(alpha, rng, size=None):
    """Draw from Beta(alpha, alpha)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return _rng.beta(alpha, alpha, size=size, rng=rng)


def smooth_labels(y_onehot, epsilon, num_classes=None):
    """``1 - (C-1) eps / C`` on the true class and ``eps / C`` elsewhere."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
    y = np.asarray(y_onehot, dtype=np.float64)
    c = y.shape[1] if num_classes is None else int(num_classes)
    if y.ndim != 2 or y.shape[1] != c:
        raise ValueError(f"expected a batch x {c} one-hot matrix, got shape {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)) or not np.all(y.sum(axis=1) == 1.0):
        raise ValueError("smooth_labels expects one-hot rows")
    if epsilon == 0.0:
        return y.copy()
    off = epsilon / c
    on = 1.0 - (c - 1) * off
    return np.where(y == 1.0, on, off)


def gaussian_perturb(batch_x, sigma, rng):
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    x = np.asarray(batch_x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + sigma * rng.standard_normal(x.shape)


@dataclass
class MixedBatch:
    inputs_a: np.ndarray
    inputs_b: np.ndarray
    lam: object
    targets: np.ndarray
    mix_layer: int = 0
    partner: np.ndarray = None

    @property
    def lam_column(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        return lam[:, None] if lam.ndim == 1 else lam

    @property
    def mixed_inputs(self):
        """``lam * a + (1 - lam) * b``; only defined for input-level mixing."""
        if self.mix_layer != 0:
            return None
        lam = self.lam_column
        return self.inputs_a * lam + self.inputs_b * (1.0 - lam)


@dataclass
class VicinalBatch:
    """What a training step feeds forward.

    With ``mix_layer == 0`` (or no mixing) ``inputs`` is the final input.
    Otherwise ``inputs`` and ``partner_inputs`` are interpolated with ``lam``
    at hidden depth ``mix_layer``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    partner_inputs: np.ndarray = None
    lam: object = None
    mix_layer: int = 0


@dataclass
class PolicyContext:
    """Dataset-level state some policies need: the neighbour index and the pool it indexes."""

    knn: object = None
    features: np.ndarray = None
    targets: np.ndarray = None


def _same_class_partners(labels, rng):
    partner = np.arange(len(labels))
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if len(members) > 1:
            partner[members] = members[rng.permutation(len(members))]
    return partner


def mix_batch(batch_x, batch_y, policy, rng, knn=None, indices=None, pool_x=None, pool_y=None):
    """Pair every example with a partner and draw the interpolation weight.

    Random-permutation partners come from the batch itself (within each class
    for ``same_class``; a singleton class is paired with itself and so passes
    through).  KNN partners are drawn uniformly among the anchor's neighbours
    in the dataset, so ``indices`` (dataset rows of the batch) and the
    ``pool_x``/``pool_y`` arrays the index refers to are required.
    """
    if not isinstance(policy, Mixup):
        raise TypeError(f"mix_batch needs a Mixup policy, got {type(policy).__name__}")
    x = np.asarray(batch_x, dtype=np.float64)
    y = np.asarray(batch_y, dtype=np.float64)
    b = x.shape[0]
    if b == 0:
        raise ValueError("empty batch")

    if policy.partner == "random_perm":
        if policy.pairing == "all_class":
            partner = rng.permutation(b)
        else:
            partner = _same_class_partners(np.argmax(y, axis=1), rng)
        xb, yb = x[partner], y[partner]
    else:
        if knn is None or indices is None or pool_x is None or pool_y is None:
            raise ValueError("KNN partners need the neighbour index, batch indices and the indexed pool")
        expected_scope = "same_class" if policy.pairing == "same_class" else "all_class"
        if knn.scope != expected_scope:
            raise ValueError(f"policy pairing {policy.pairing!r} needs a {expected_scope} index, got {knn.scope!r}")
        partner = np.empty(b, dtype=np.int64)
        for r, i in enumerate(np.asarray(indices)):
            nbrs = knn.neighbors[i]
            partner[r] = i if len(nbrs) == 0 else nbrs[rng.integers(len(nbrs))]
        xb, yb = pool_x[partner], pool_y[partner]

    if policy.fixed_lambda is not None:
        lam = float(policy.fixed_lambda) if policy.lambda_granularity == "per_batch" else np.full(b, policy.fixed_lambda)
    elif policy.lambda_granularity == "per_batch":
        lam = sample_lambda(policy.alpha, rng)
    else:
        lam = sample_lambda(policy.alpha, rng, size=b)

    lam_col = np.asarray(lam)[:, None] if np.ndim(lam) == 1 else lam
    if policy.target == "soft":
        targets = y * lam_col + yb * (1.0 - lam_col)
    else:
        targets = np.where(np.broadcast_to(lam_col, (b, 1)) >= 0.5, y, yb)
    return MixedBatch(x, xb, lam, targets, mix_layer=policy.mix_layer, partner=partner)


def apply_policy(batch_x, batch_y, policy, rng, context=None, indices=None):
    """Transform a clean batch (features, one-hot targets) under ``policy``."""
    x = np.asarray(batch_x, dtype=np.float64)
    y = np.asarray(batch_y, dtype=np.float64)
    if isinstance(policy, ERM):
        return VicinalBatch(x, y)
    if isinstance(policy, GaussianNoise):
        return VicinalBatch(gaussian_perturb(x, policy.sigma, rng), y)
    if isinstance(policy, LabelSmoothing):
        return VicinalBatch(x, smooth_labels(y, policy.epsilon))

    if isinstance(policy, MixupPlusSmoothing):
        mixup = policy.as_mixup()
        y = smooth_labels(y, policy.epsilon)
    elif isinstance(policy, Mixup):
        mixup = policy
    else:
        raise TypeError(f"unknown policy {policy!r}")

    if mixup.partner == "knn":
        if context is None or context.knn is None:
            raise ValueError("this policy mixes nearest neighbours but no neighbour index was supplied")
        mb = mix_batch(x, y, mixup, rng, knn=context.knn, indices=indices, pool_x=context.features, pool_y=context.targets)
    else:
        mb = mix_batch(x, y, mixup, rng)
    if mb.mix_layer == 0:
        return VicinalBatch(mb.mixed_inputs, mb.targets, lam=mb.lam)
    return VicinalBatch(mb.inputs_a, mb.targets, partner_inputs=mb.inputs_b, lam=mb.lam, mix_layer=mb.mix_layer)
