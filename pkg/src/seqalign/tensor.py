"""Dense tensors with taped reverse-mode gradients.

Forward operations run on numpy arrays and record just enough on a tape to
accumulate d(scalar)/d(leaf) for every leaf created with ``requires_grad``.
The dtype of a graph follows its inputs: float32 is the training default,
float64 is used by the finite-difference validation path.

Only the operations the alignment network needs are provided, several of
them fused (softmax, layer norm, row normalization) so that one tape node
covers a numerically delicate region.
"""

from __future__ import annotations

import contextlib
import warnings
from typing import Iterable, Sequence

import numpy as np

# Zero-norm guard added to the denominator when normalizing rows for cosine
# similarities; keeps zero-padded or degenerate frames from producing NaN.
COSINE_NORM_GUARD = 1e-12

# Variance guard inside layer normalization.
LAYER_NORM_EPS = 1e-5

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable taping inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    """One recorded operation: parents plus a closure producing their grads."""

    __slots__ = ("parents", "backward_fn", "op_name")

    def __init__(self, parents, backward_fn, op_name):
        self.parents = parents
        self.backward_fn = backward_fn
        self.op_name = op_name


class Tensor:
    """A dense array plus optional gradient bookkeeping.

    ``data`` is a numpy array (any rank, scalars included). Leaves created
    with ``requires_grad=True`` receive accumulated gradients in ``.grad``
    after ``backward``; repeated backward calls accumulate additively until
    ``zero_grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # Operator sugar used by tests and small expressions.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(other))


def constant(data, dtype=None, name=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=False, name=name)


def _result(data, parents, backward_fn, op_name) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(tuple(parents), backward_fn, op_name)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and shape operations
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _result(out, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _result(out, (a, b), backward, "mul")


def neg(x: Tensor) -> Tensor:
    return _result(-x.data, (x,), lambda g: (-g,), "neg")


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    return _result(x.data * s, (x,), lambda g: (g * s,), "scale")


def shift(x: Tensor, c: float) -> Tensor:
    """Add a python scalar constant."""
    return _result(x.data + float(c), (x,), lambda g: (g,), "shift")


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0

    def backward(g):
        return (g * keep,)

    return _result(x.data * keep, (x,), backward, "relu")


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)

    def backward(g):
        return (g * sign,)

    return _result(np.abs(x.data), (x,), backward, "abs")


def square(x: Tensor) -> Tensor:
    def backward(g):
        return (2.0 * g * x.data,)

    return _result(x.data * x.data, (x,), backward, "square")


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape

    def backward(g):
        return (g.reshape(old),)

    return _result(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _result(x.data.transpose(axes), (x,), backward, "transpose")


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat of an empty list")
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return _result(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward, "concat")


def take_rows(x: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D tensor; gradient scatters back additively."""
    idx = np.asarray(indices, dtype=np.int64)
    if x.data.ndim != 2:
        raise ValueError(f"take_rows expects a 2-D tensor, got shape {x.data.shape}")

    def backward(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, idx, g)
        return (dx,)

    return _result(x.data[idx], (x,), backward, "take_rows")


def sum_(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=True),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).astype(x.data.dtype, copy=True),)

    return _result(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward, "sum")


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    return scale(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, optionally stacked over identical leading axes."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.ndim != b.data.ndim:
        raise ValueError(f"matmul rank mismatch: {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2] or a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")

    def backward(g):
        return (g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# Fused nonlinear operations
# ---------------------------------------------------------------------------


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by per-row max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return _result(y, (x,), backward, "softmax_rows")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last axis, then apply a learnable affine map."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    y = gamma.data * xhat + beta.data
    d = x.data.shape[-1]

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        gh = g * gamma.data
        dx = inv * (
            gh
            - gh.mean(axis=-1, keepdims=True)
            - xhat * (gh * xhat).sum(axis=-1, keepdims=True) / d
        )
        return (dx, dgamma, dbeta)

    return _result(y, (x, gamma, beta), backward, "layer_norm")


def unit_rows(x: Tensor, guard: float = COSINE_NORM_GUARD) -> Tensor:
    """Scale each row (last axis) to unit Euclidean norm.

    A zero row maps to zero thanks to the guard in the denominator; its
    gradient is defined as the plain scaled pass-through (the radial term is
    dropped below ``guard`` to avoid the 1/norm blow-up).
    """
    norms = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    denom = norms + guard
    y = x.data / denom

    def backward(g):
        radial = (g * x.data).sum(axis=-1, keepdims=True)
        safe = np.where(norms > guard, norms, 1.0)
        correction = np.where(norms > guard, radial / (safe * denom * denom), 0.0)
        return (g / denom - x.data * correction,)

    return _result(y, (x,), backward, "unit_rows")


def reciprocal_clamped(x: Tensor, floor: float) -> Tensor:
    """1 / max(x, floor); gradient is zero in the clamped region."""
    clamped = np.maximum(x.data, floor)
    y = 1.0 / clamped
    active = x.data > floor

    def backward(g):
        return (np.where(active, -g / (clamped * clamped), 0.0),)

    return _result(y, (x,), backward, "reciprocal_clamped")


def stop_gradient(x: Tensor) -> Tensor:
    """Forward identity through which no gradient flows."""
    return Tensor(x.data, requires_grad=False, name=x.name)


# ---------------------------------------------------------------------------
# Batch normalization (feature-wise over rows, mask-aware)
# ---------------------------------------------------------------------------


class BatchNormState:
    """Running statistics for one batch-norm layer (not trainable)."""

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(dim, dtype=np.float32)
        self.running_var = np.ones(dim, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    training: bool,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Per-feature standardization over the row axis of an (m, d) tensor.

    In training mode the statistics come from the rows selected by ``mask``
    (all rows when mask is None) and the running statistics are updated with
    the state's momentum. A single selected row cannot be standardized, so
    that case falls back to the running statistics. Inference always uses
    the running statistics. Variances are population (biased) throughout.
    """
    if x.data.ndim != 2:
        raise ValueError(f"batch_norm expects an (m, d) tensor, got {x.data.shape}")
    rows = np.arange(x.data.shape[0]) if mask is None else np.flatnonzero(mask)
    eps = state.eps

    if training and rows.size >= 2:
        sel = x.data[rows]
        mu = sel.mean(axis=0)
        var = sel.var(axis=0)
        m = state.momentum
        # In-place so arrays registered as checkpoint buffers stay aliased.
        state.running_mean[...] = (1 - m) * state.running_mean + m * mu
        state.running_var[...] = (1 - m) * state.running_var + m * var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        y = gamma.data * xhat + beta.data
        n = rows.size

        def backward(g):
            dgamma = (g * xhat).sum(axis=0)
            dbeta = g.sum(axis=0)
            gh = g * gamma.data
            dx = gh * inv
            s1 = gh.sum(axis=0)
            s2 = (gh * xhat).sum(axis=0)
            dx[rows] -= inv * (s1 / n + xhat[rows] * s2 / n)
            return (dx, dgamma, dbeta)

        return _result(y, (x, gamma, beta), backward, "batch_norm")

    inv = 1.0 / np.sqrt(state.running_var.astype(x.data.dtype) + eps)
    xhat = (x.data - state.running_mean.astype(x.data.dtype)) * inv
    y = gamma.data * xhat + beta.data

    def backward(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        return (g * gamma.data * inv, dgamma, dbeta)

    return _result(y, (x, gamma, beta), backward, "batch_norm_eval")


# ---------------------------------------------------------------------------
# Scalar cosine similarity (diagnostic / oracle companion to unit_rows+matmul)
# ---------------------------------------------------------------------------


def cosine_similarity(u, v, guard: float = COSINE_NORM_GUARD) -> float:
    """Guarded cosine of two vectors; 0.0 (with a warning) when both vanish."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"cosine_similarity shape mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= guard and nv <= guard:
        warnings.warn("cosine_similarity: both vectors are (near) zero", RuntimeWarning)
    return float(u @ v / (nu * nv + guard))


# ---------------------------------------------------------------------------
# Reverse pass
# ---------------------------------------------------------------------------


class GradTape:
    """Topologically ordered record of the operations below one output.

    ``run`` walks the record exactly once in reverse order, accumulating
    gradients into the ``.grad`` of every requires_grad leaf.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                self.order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t.node is not None:
                for p in t.node.parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

    def run(self, seed: np.ndarray) -> None:
        grads: dict[int, np.ndarray] = {id(self.root): seed}
        for t in reversed(self.order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t.node is None:
                if t.requires_grad:
                    t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            parent_grads = t.node.backward_fn(g)
            for p, pg in zip(t.node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) for every requires_grad leaf below loss."""
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    seed = np.ones_like(loss.data)
    GradTape(loss).run(seed)
