"""Multilayer perceptrons on top of :mod:`mixlab.autodiff`.

Layer depths are numbered the way latent mixing needs them: depth 0 is the
raw input and depth ``k`` is the output of the ``k``-th hidden ReLU.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "MlpSpec",
    "Model",
    "init_mlp",
    "forward",
    "frozen",
    "forward_mixed_at_layer",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_to_text",
    "checkpoint_from_text",
]


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple = ()
    output_dim: int = 2
    dropout_p: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"input_dim and output_dim must be positive, got {self.input_dim}, {self.output_dim}")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be positive, got {list(self.hidden)}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def num_mix_depths(self):
        return len(self.hidden) + 1

    @property
    def layer_dims(self):
        return [self.input_dim, *self.hidden, self.output_dim]

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "dropout_p": self.dropout_p,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=int(d["input_dim"]),
            hidden=tuple(d.get("hidden", ())),
            output_dim=int(d["output_dim"]),
            dropout_p=float(d.get("dropout_p", 0.0)),
            activation=d.get("activation", "relu"),
        )


@dataclass
class Model:
    """An MLP: ``W0, b0, W1, b1, ...`` stored as parameter tensors."""

    spec: MlpSpec
    params: dict = field(default_factory=dict)

    def parameters(self):
        return list(self.params.values())

    def num_parameters(self):
        return int(np.sum([p.size for p in self.params.values()]))

    def state(self):
        """Plain-array copy of the parameters, keyed by name."""
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state):
        for k, v in state.items():
            if self.params[k].shape != np.shape(v):
                raise ValueError(f"parameter {k}: shape {np.shape(v)} does not match {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def copy(self):
        return Model(self.spec, {k: ad.parameter(v.data.copy()) for k, v in self.params.items()})

    def __call__(self, x, mode="eval", rng=None):
        return forward(self, x, mode=mode, rng=rng)


@contextmanager
def frozen(model):
    """Graphs built inside the block treat ``model``'s parameters as constants."""
    params = model.parameters()
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield model
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


def init_mlp(spec, rng):
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases."""
    params = {}
    dims = spec.layer_dims
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"W{i}"] = ad.parameter(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        params[f"b{i}"] = ad.parameter(np.zeros(fan_out))
    return Model(spec, params)


def _check_input(model, x):
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ad.ShapeError("forward", x.shape, (None, model.spec.input_dim), detail="expected batch x input_dim")
    return x


def _dense(model, h, i):
    return ad.add(ad.matmul(h, model.params[f"W{i}"]), model.params[f"b{i}"])


def _dropout_mask(model, shape, mode, rng):
    p = model.spec.dropout_p
    if mode != "train" or p == 0.0:
        return None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


def forward(model, x, mode="eval", rng=None):
    """Logits for a batch.  In train mode, inverted dropout follows every hidden ReLU."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    h = _check_input(model, x)
    n_hidden = len(model.spec.hidden)
    for i in range(n_hidden):
        h = ad.relu(_dense(model, h, i))
        mask = _dropout_mask(model, h.shape, mode, rng)
        if mask is not None:
            h = ad.scale(h, mask)
    return _dense(model, h, n_hidden)


def _mix(a, b, lam):
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 1:
        lam = lam[:, None]
    return ad.add(ad.scale(a, lam), ad.scale(b, 1.0 - lam))


def forward_mixed_at_layer(model, x_a, x_b, lam, k, mode="eval", rng=None):
    """Run both batches to depth ``k``, interpolate there, finish once.

    ``lam`` is a scalar or one value per row.  Dropout masks are drawn per
    layer exactly as in :func:`forward`; a layer below the mixing depth
    shares its mask between the two branches, so the mask ends up applied
    after the interpolation.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    n_hidden = len(model.spec.hidden)
    if not 0 <= k <= n_hidden:
        raise ValueError(f"mix depth k={k} out of range [0, {n_hidden}]")
    lam_arr = np.asarray(lam, dtype=np.float64)
    if np.any(lam_arr < 0.0) or np.any(lam_arr > 1.0):
        raise ValueError("lambda must lie in [0, 1]")
    ha, hb = _check_input(model, x_a), _check_input(model, x_b)
    if ha.shape != hb.shape:
        raise ad.ShapeError("forward_mixed_at_layer", ha.shape, hb.shape)

    if k == 0:
        h = _mix(ha, hb, lam_arr)
    for i in range(n_hidden):
        if i < k:
            ha = ad.relu(_dense(model, ha, i))
            hb = ad.relu(_dense(model, hb, i))
            mask = _dropout_mask(model, ha.shape, mode, rng)
            if i + 1 == k:
                h = _mix(ha, hb, lam_arr)
                if mask is not None:
                    h = ad.scale(h, mask)
            elif mask is not None:
                ha, hb = ad.scale(ha, mask), ad.scale(hb, mask)
        else:
            h = ad.relu(_dense(model, h, i))
            mask = _dropout_mask(model, h.shape, mode, rng)
            if mask is not None:
                h = ad.scale(h, mask)
    return _dense(model, h, n_hidden)


def predict(model, x):
    """Argmax class per row; ``np.argmax`` already breaks ties toward the lowest index."""
    logits = forward(model, x, mode="eval").data
    return np.argmax(logits, axis=1)


# --------------------------------------------------------------------------
# checkpoints: a JSON document, floats written with repr() so they round-trip
# --------------------------------------------------------------------------


def checkpoint_to_text(model):
    doc = {
        "format": "mixlab-mlp-checkpoint",
        "version": 1,
        "spec": model.spec.to_dict(),
        "parameters": {
            name: {"shape": list(p.shape), "values": [float(v) for v in p.data.ravel()]}
            for name, p in model.params.items()
        },
    }
    return json.dumps(doc, indent=1) + "\n"


def checkpoint_from_text(text):
    doc = json.loads(text)
    if doc.get("format") != "mixlab-mlp-checkpoint":
        raise ValueError("not a mixlab checkpoint document")
    spec = MlpSpec.from_dict(doc["spec"])
    params = {}
    for name, entry in doc["parameters"].items():
        arr = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        params[name] = ad.parameter(arr)
    dims = spec.layer_dims
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        for name, shape in ((f"W{i}", (fan_in, fan_out)), (f"b{i}", (fan_out,))):
            if name not in params or params[name].shape != shape:
                raise ValueError(f"checkpoint parameter {name} missing or not shaped {shape}")
    return Model(spec, params)


def save_checkpoint(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(checkpoint_to_text(model))


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        return checkpoint_from_text(fh.read())
