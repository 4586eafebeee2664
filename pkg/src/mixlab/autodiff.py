"""Dense float64 tensors with a small reverse-mode autodiff tape.

Every primitive returns a new :class:`Tensor` that remembers its parents and a
closure computing the vector-Jacobian product.  :func:`backward` walks the
graph once in reverse topological order.

Only the operations an MLP classifier or a toy GAN needs are provided:
``matmul``, ``add`` (same shape, or a bias row broadcast over the batch),
``relu``, ``scale`` (by a constant), ``concat``, ``sum`` and the fused losses
``softmax_cross_entropy``, ``sigmoid_bce`` and ``squared_error``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "LossValue",
    "GraphError",
    "ShapeError",
    "as_tensor",
    "parameter",
    "matmul",
    "add",
    "relu",
    "scale",
    "concat",
    "sum",
    "softmax",
    "softmax_cross_entropy",
    "sigmoid_bce",
    "squared_error",
    "apply_primitive",
    "backward",
    "grad_wrt_input",
]

_STOCHASTIC_TOL = 1e-9


class GraphError(RuntimeError):
    """Raised when backward is requested on something that is not a recorded graph."""


class ShapeError(ValueError):
    """Operand shapes do not fit the primitive's signature."""

    def __init__(self, op, *shapes, detail=""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        shown = " and ".join(str(s) for s in self.shapes)
        msg = f"{op}: incompatible shapes {shown}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Tensor:
    """A node in the autodiff graph holding a float64 array.

    ``op`` is one of ``input``, ``parameter``, ``matmul``, ``add``, ``relu``,
    ``scale``, ``concat``, ``sum``, ``softmax-xent``, ``sigmoid-bce`` or
    ``squared-error``.  Leaves (``input``/``parameter``) have no parents.
    """

    __slots__ = ("data", "grad", "op", "parents", "requires_grad", "_vjp", "_needs")

    def __init__(self, data, requires_grad=False, op="input", parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        # which parents wanted gradients when this node was built; later flag changes do not matter
        self._needs = tuple(p.requires_grad for p in self.parents)
        self.requires_grad = bool(requires_grad) or any(self._needs)
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def detach(self):
        """Copy of the value cut off from the graph (a plain input leaf)."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


class LossValue(Tensor):
    """Scalar loss node that also carries the per-example losses it averages."""

    __slots__ = ("per_example",)

    def __init__(self, per_example, parents, vjp, op):
        per_example = np.asarray(per_example, dtype=np.float64)
        super().__init__(per_example.mean(), op=op, parents=parents, vjp=vjp)
        self.per_example = per_example

    @property
    def scalar(self):
        return float(self.data)


def as_tensor(x, requires_grad=False):
    """Wrap ``x`` as an input leaf; tensors pass through untouched."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=requires_grad, op="input")


def parameter(data):
    return Tensor(data, requires_grad=True, op="parameter")


def _check_finite_target(op, target):
    if not np.all(np.isfinite(target)):
        raise ValueError(f"{op}: target contains non-finite values")


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape, detail="expected (n,k) @ (k,m)")
    av, bv = a.data, b.data
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        # skip products nobody needs (frozen weights, constant inputs)
        return (g @ bv.T if need_a else None, av.T @ g if need_b else None)

    return Tensor(av @ bv, op="matmul", parents=(a, b), vjp=vjp)


def add(a, b):
    """Elementwise sum; ``b`` may be a bias vector broadcast over the batch rows of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        def vjp(g):
            return g, g
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def vjp(g):
            return g, g.sum(axis=0)
    else:
        raise ShapeError("add", a.shape, b.shape, detail="only bias broadcast over the batch dim is allowed")
    return Tensor(a.data + b.data, op="add", parents=(a, b), vjp=vjp)


def relu(a):
    a = as_tensor(a)
    # subgradient at exactly 0 is 0: same mask forward and backward
    out = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (out > 0),)

    return Tensor(out, op="relu", parents=(a,), vjp=vjp)


def scale(a, c):
    """Multiply by a constant: a scalar, an array of ``a``'s shape, or a column of per-row factors."""
    a = as_tensor(a)
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 0 or c.shape == a.shape:
        pass
    elif a.data.ndim == 2 and c.shape == (a.shape[0], 1):
        pass
    else:
        raise ShapeError("scale", a.shape, c.shape, detail="constant must be scalar, same shape, or (batch, 1)")

    def vjp(g):
        return (g * c,)

    return Tensor(a.data * c, op="scale", parents=(a,), vjp=vjp)


def concat(tensors, axis=0):
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: nothing to concatenate")
    ref = ts[0].shape
    for t in ts[1:]:
        if len(t.shape) != len(ref) or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(ref, t.shape)) if i != axis % len(ref)
        ):
            raise ShapeError("concat", ref, t.shape)
    splits = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.data for t in ts], axis=axis), op="concat", parents=tuple(ts), vjp=vjp)


def sum(a):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(a.data.sum(), op="sum", parents=(a,), vjp=vjp)


def softmax(logits):
    """Row-wise softmax of a plain array (no graph)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, target):
    """Mean over the batch of ``-sum_c target_c * log softmax(logits)_c``.

    ``target`` must be row-stochastic (soft labels are fine).  The gradient
    with respect to the logits is ``(softmax - target) / batch``.
    """
    logits = as_tensor(logits)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if logits.data.ndim != 2:
        raise ShapeError("softmax-xent", logits.shape, t.shape, detail="logits must be batch x C")
    if logits.shape[1] < 2:
        raise ValueError(f"softmax-xent: need at least 2 classes, got C={logits.shape[1]}")
    if t.shape != logits.shape:
        raise ShapeError("softmax-xent", logits.shape, t.shape)
    _check_finite_target("softmax-xent", t)
    rows = t.sum(axis=1)
    if np.any(t < -_STOCHASTIC_TOL) or np.any(np.abs(rows - 1.0) > _STOCHASTIC_TOL):
        bad = int(np.argmax(np.abs(rows - 1.0)))
        raise ValueError(f"softmax-xent: target row {bad} is not stochastic (sums to {rows[bad]!r})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    per_example = -(t * log_p).sum(axis=1)
    n = logits.shape[0]

    def vjp(g):
        return ((np.exp(log_p) - t) * (g / n),)

    return LossValue(per_example, parents=(logits,), vjp=vjp, op="softmax-xent")


def sigmoid_bce(logit, target):
    """Binary cross-entropy on logits, stable for any magnitude.

    Uses ``softplus(u) - t*u``, which equals
    ``-[t log sigmoid(u) + (1-t) log(1 - sigmoid(u))]``.
    ``target`` is a scalar or an array broadcastable to the logits.
    """
    logit = as_tensor(logit)
    t = np.asarray(target, dtype=np.float64)
    _check_finite_target("sigmoid-bce", t)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("sigmoid-bce: target must lie in [0, 1]")
    try:
        t = np.broadcast_to(t, logit.shape)
    except ValueError:
        raise ShapeError("sigmoid-bce", logit.shape, t.shape) from None
    u = logit.data
    elementwise = np.logaddexp(0.0, u) - t * u
    per_example = elementwise.reshape(u.shape[0], -1).sum(axis=1) if u.ndim > 1 else elementwise
    n = per_example.shape[0] if per_example.ndim else 1
    sig = np.where(u >= 0, 1.0 / (1.0 + np.exp(-np.abs(u))), np.exp(-np.abs(u)) / (1.0 + np.exp(-np.abs(u))))

    def vjp(g):
        return ((sig - t) * (g / n),)

    return LossValue(per_example, parents=(logit,), vjp=vjp, op="sigmoid-bce")


def squared_error(pred, target):
    """Mean over the batch of ``0.5 * ||pred - target||^2``."""
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError("squared-error", pred.shape, t.shape)
    diff = pred.data - t
    per_example = 0.5 * (diff.reshape(diff.shape[0], -1) ** 2).sum(axis=1) if diff.ndim > 1 else 0.5 * diff**2
    n = per_example.shape[0] if per_example.ndim else 1

    def vjp(g):
        return (diff * (g / n),)

    return LossValue(per_example, parents=(pred,), vjp=vjp, op="squared-error")


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "relu": relu,
    "scale": scale,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "sum": sum,
    "softmax-xent": softmax_cross_entropy,
    "sigmoid-bce": sigmoid_bce,
    "squared-error": squared_error,
}


def apply_primitive(op, *inputs, **kwargs):
    """Dispatch a primitive by its tag, e.g. ``apply_primitive("relu", x)``."""
    try:
        fn = _PRIMITIVES[op]
    except KeyError:
        raise ValueError(f"unknown primitive {op!r}") from None
    return fn(*inputs, **kwargs)


# --------------------------------------------------------------------------
# reverse pass
# --------------------------------------------------------------------------


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, need in zip(node.parents, node._needs):
            if need and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, seed=None):
    """Back-propagate from ``loss`` and return ``{leaf: gradient}``.

    Gradients are also accumulated into ``.grad`` of every node that
    requires them, so a leaf used in several backward calls sums them.
    """
    if not isinstance(loss, Tensor) or not loss.requires_grad or loss._vjp is None:
        raise GraphError("backward called on a tensor with no recorded graph (detached or constant)")
    if seed is None:
        if loss.data.size != 1:
            raise GraphError("backward without an explicit seed needs a scalar output")
        seed = np.ones_like(loss.data)

    order = _topological_order(loss)
    pending = {id(loss): np.asarray(seed, dtype=np.float64)}
    leaves = {}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            leaves[node] = leaves[node] + g if node in leaves else g
            continue
        for parent, need, pg in zip(node.parents, node._needs, node._vjp(g)):
            if pg is None or not need:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg
    return leaves


def grad_wrt_input(model_fn, x, target, loss_fn=softmax_cross_entropy):
    """Gradient of ``loss_fn(model_fn(x), target)`` with respect to ``x``.

    ``model_fn`` maps a Tensor to an output Tensor.  Returns an array shaped
    like ``x``.
    """
    xt = Tensor(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64), requires_grad=True)
    loss = loss_fn(model_fn(xt), target)
    grads = backward(loss)
    return grads.get(xt, np.zeros_like(xt.data))
