"""Error metrics, FGSM / I-FGSM attacks, in-between analysis and reporting statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as _data
from . import nn as _nn

__all__ = [
    "AttackSpec",
    "InBetweenReport",
    "error_percent",
    "test_error",
    "train_error_split",
    "input_gradient",
    "fgsm",
    "ifgsm",
    "attack",
    "attack_eval",
    "inbetween_analysis",
    "median_last_k",
    "best_and_last",
]


def error_percent(model, ds):
    if len(ds) == 0:
        raise ValueError("cannot compute an error rate on an empty dataset")
    pred = _nn.predict(model, ds.features)
    return 100.0 * float(np.mean(pred != ds.labels))


def test_error(model, ds):
    """Top-1 error in percent."""
    return error_percent(model, ds)


test_error.__test__ = False  # not a pytest test when imported into test modules


def train_error_split(model, ds):
    """Errors on the clean and on the label-corrupted training examples.

    Both are measured against the stored (possibly corrupted) labels.  An
    empty subset yields NaN.
    """
    out = []
    for mask in (~ds.corrupted, ds.corrupted):
        out.append(error_percent(model, ds.subset(np.flatnonzero(mask))) if mask.any() else float("nan"))
    return tuple(out)


# --------------------------------------------------------------------------
# adversarial examples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackSpec:
    method: str = "fgsm"
    epsilon: float = 0.1
    iterations: int = 10

    def __post_init__(self):
        if self.method not in ("fgsm", "ifgsm"):
            raise ValueError(f"method must be 'fgsm' or 'ifgsm', got {self.method!r}")
        if not np.all(np.asarray(self.epsilon) >= 0):
            raise ValueError("epsilon must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def input_gradient(model, x, targets):
    """Per-example ``d loss_i / d x_i`` for soft ``targets`` (summed, not averaged, loss)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    return ad.grad_wrt_input(
        lambda t: _nn.forward(model, t, mode="eval"),
        x,
        targets,
        loss_fn=lambda logits, tgt: ad.scale(ad.softmax_cross_entropy(logits, tgt), float(n)),
    )


def _clamp(x_adv, x0, bounds):
    if bounds is None:
        return x_adv
    lo, hi = bounds
    # never clamp closer than the clean point itself, so the l_inf budget still holds
    lo = np.minimum(lo, x0)
    hi = np.maximum(hi, x0)
    return np.clip(x_adv, lo, hi)


def _targets(model, y):
    y = np.asarray(y)
    if y.ndim == 2:
        return y.astype(np.float64)
    return _data.one_hot(y, model.spec.output_dim)


def fgsm(model, x, y, epsilon, bounds=None):
    """``x + eps * sign(grad_x loss)``, clamped to the feature bounds; ``sign(0) = 0``.

    ``epsilon`` is a scalar or one budget per feature.
    """
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if not np.all(epsilon >= 0):
        raise ValueError("epsilon must be >= 0")
    x0 = np.asarray(x, dtype=np.float64)
    if np.all(epsilon == 0):
        return x0.copy()
    g = input_gradient(model, x0, _targets(model, y))
    return _clamp(x0 + epsilon * np.sign(g), x0, bounds)


def ifgsm(model, x, y, epsilon, iterations=10, bounds=None):
    """``iterations`` signed steps of ``epsilon / iterations``, projected on the l_inf ball every step."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if iterations == 1:
        return fgsm(model, x, y, epsilon, bounds)
    x0 = np.asarray(x, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if np.all(epsilon == 0):
        return x0.copy()
    tgt = _targets(model, y)
    step = epsilon / iterations
    xa = x0.copy()
    for _ in range(iterations):
        g = input_gradient(model, xa, tgt)
        xa = np.clip(xa + step * np.sign(g), x0 - epsilon, x0 + epsilon)
        xa = _clamp(xa, x0, bounds)
    return xa


def attack(model, x, y, spec, bounds=None):
    if spec.method == "fgsm":
        return fgsm(model, x, y, spec.epsilon, bounds)
    return ifgsm(model, x, y, spec.epsilon, spec.iterations, bounds)


def attack_eval(source_model, target_model, ds, spec, bounds=None):
    """Top-1 error (percent) of ``target_model`` on examples crafted against ``source_model``.

    White-box when both are the same object.  Attacks use the true labels.
    """
    if source_model.spec.input_dim != target_model.spec.input_dim:
        raise ValueError("source and target models take different input dimensions")
    if source_model.spec.input_dim != ds.input_dim:
        raise ValueError("dataset dimension does not match the models")
    x_adv = attack(source_model, ds.features, ds.labels, spec, bounds)
    pred = _nn.predict(target_model, x_adv)
    return 100.0 * float(np.mean(pred != ds.labels))


# --------------------------------------------------------------------------
# behaviour in-between training points
# --------------------------------------------------------------------------


@dataclass
class InBetweenReport:
    lambda_grid: np.ndarray
    miss_rate: float
    miss_rate_per_lambda: np.ndarray
    gradient_norm_median: float
    gradient_norm_quartiles: tuple
    gradient_norm_median_per_lambda: np.ndarray = field(default=None)


def inbetween_analysis(model, ds, num_pairs=1000, lambda_grid=None, rng=None):
    """Predictions and input-gradient norms at ``lam * x_i + (1 - lam) * x_j``.

    A prediction is a miss when it is neither ``y_i`` nor ``y_j``.  Gradient
    norms are l2 norms of the loss gradient against the mixed soft target.
    """
    n = len(ds)
    if n < 2:
        raise ValueError("need at least 2 examples")
    if lambda_grid is None:
        lambda_grid = np.round(np.arange(1, 10) / 10.0, 10)
    lambda_grid = np.asarray(lambda_grid, dtype=np.float64)
    if np.any(lambda_grid < 0) or np.any(lambda_grid > 1):
        raise ValueError("lambda grid must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng(0)
    i = rng.integers(0, n, size=num_pairs)
    j = (i + rng.integers(1, n, size=num_pairs)) % n  # j != i, uniform over the rest
    xi, xj = ds.features[i], ds.features[j]
    yi, yj = ds.labels[i], ds.labels[j]
    oi = _data.one_hot(yi, ds.num_classes)
    oj = _data.one_hot(yj, ds.num_classes)

    misses, norms = [], []
    for lam in lambda_grid:
        xm = lam * xi + (1.0 - lam) * xj
        pred = _nn.predict(model, xm)
        misses.append((pred != yi) & (pred != yj))
        g = input_gradient(model, xm, lam * oi + (1.0 - lam) * oj)
        norms.append(np.sqrt((g * g).sum(axis=1)))
    misses = np.array(misses)
    norms = np.array(norms)
    q25, q50, q75 = np.percentile(norms, [25, 50, 75])
    return InBetweenReport(
        lambda_grid=lambda_grid,
        miss_rate=100.0 * float(misses.mean()),
        miss_rate_per_lambda=100.0 * misses.mean(axis=1),
        gradient_norm_median=float(q50),
        gradient_norm_quartiles=(float(q25), float(q75)),
        gradient_norm_median_per_lambda=np.median(norms, axis=1),
    )


# --------------------------------------------------------------------------
# reporting
# --------------------------------------------------------------------------


def _series(logs, field):
    # accepts EpochLog rows, dict rows or bare numbers
    out = []
    for r in logs:
        if isinstance(r, dict):
            out.append(r[field])
        elif isinstance(r, (int, float, np.floating)):
            out.append(r)
        else:
            out.append(getattr(r, field))
    return np.array(out, dtype=np.float64)


def median_last_k(logs, k=10, field="test_error"):
    """Median of ``field`` over the final ``k`` epochs (mean of the middle pair for even k)."""
    values = _series(logs, field)
    if k < 1:
        raise ValueError("k must be positive")
    if len(values) < k:
        raise ValueError(f"need at least {k} logged epochs, have {len(values)}")
    return float(np.median(values[-k:]))


def best_and_last(logs, field="test_error"):
    values = _series(logs, field)
    if len(values) == 0:
        raise ValueError("no epochs logged")
    return float(np.nanmin(values)), float(values[-1])
