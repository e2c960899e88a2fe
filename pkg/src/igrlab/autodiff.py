"""Dense-tensor reverse-mode autodiff on numpy arrays.

Every op records a backward closure on the output tensor; ``backward``
walks the implicit tape in reverse topological order and accumulates
gradients into ``.grad`` of every tensor with ``requires_grad``.
No broadcasting beyond bias-add over the batch axis.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError, UsageError

_CHECKED = False


def set_checked(flag: bool) -> None:
    """Enable/disable finiteness checking after every op."""
    global _CHECKED
    _CHECKED = bool(flag)


def _check_finite(data: np.ndarray, op: str) -> None:
    if _CHECKED and not np.all(np.isfinite(data)):
        raise NumericError(f"{op} produced a non-finite value")


class Tensor:
    """A dense array plus the tape node that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # light operator sugar over the kernel functions
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, other)

    __rmul__ = __mul__


def _make(data: np.ndarray, parents, backward, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data)
    out._parents = tuple(parents)
    out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad = t.grad + g


def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(node) into .grad for every reachable tensor."""
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    _accum(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


def grad_of(param: Tensor) -> np.ndarray:
    """Parameter gradient after backward; zero when off the loss path."""
    if param.grad is None:
        return np.zeros_like(param.data)
    return param.grad


# ---------------------------------------------------------------------------
# kernels


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def back():
        out_g = out.grad
        _accum(a, out_g @ b.data.T)
        _accum(b, a.data.T @ out_g)

    out = _make(data, (a, b), back, "matmul")
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: needs a 2-d tensor, got shape {a.shape}")

    def back():
        _accum(a, out.grad.T)

    out = _make(a.data.T.copy(), (a,), back, "transpose")
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    bias_broadcast = a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]
    if a.shape != b.shape and not bias_broadcast:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    data = a.data + b.data

    def back():
        out_g = out.grad
        _accum(a, out_g)
        _accum(b, out_g.sum(axis=0) if bias_broadcast else out_g)

    out = _make(data, (a, b), back, "add")
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")

    def back():
        out_g = out.grad
        _accum(a, out_g)
        _accum(b, -out_g)

    out = _make(a.data - b.data, (a, b), back, "sub")
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def back():
        out_g = out.grad
        _accum(a, out_g * b.data)
        _accum(b, out_g * a.data)

    out = _make(a.data * b.data, (a, b), back, "mul")
    return out


def scalar_mul(x: Tensor, s) -> Tensor:
    """x scaled by a python float or a single-element (learned) tensor."""
    if isinstance(s, Tensor):
        if s.data.size != 1:
            raise ShapeError(f"scalar_mul: scalar operand has shape {s.shape}")
        data = x.data * s.data.reshape(())

        def back():
            out_g = out.grad
            _accum(x, out_g * s.data.reshape(()))
            _accum(s, np.sum(out_g * x.data).reshape(s.shape))

        out = _make(data, (x, s), back, "scalar_mul")
        return out

    c = float(s)

    def back_const():
        _accum(x, out.grad * c)

    out = _make(x.data * c, (x,), back_const, "scalar_mul")
    return out


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    if not parts:
        raise UsageError("concat: empty input list")
    lead = parts[0].shape[:-1]
    for p in parts:
        if p.shape[:-1] != lead:
            raise ShapeError(
                f"concat: leading dims differ, {parts[0].shape} vs {p.shape}"
            )
    widths = [p.shape[-1] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=-1)

    def back():
        out_g = out.grad
        start = 0
        for p, w in zip(parts, widths):
            _accum(p, out_g[..., start : start + w])
            start += w

    out = _make(data, parts, back, "concat")
    return out


def stack_rows(rows: list[Tensor]) -> Tensor:
    """Stack 1-d tensors of equal length into a 2-d batch."""
    if not rows:
        raise UsageError("stack_rows: empty input list")
    d = rows[0].shape
    for r in rows:
        if r.data.ndim != 1 or r.shape != d:
            raise ShapeError(f"stack_rows: expected 1-d tensors of shape {d}, got {r.shape}")
    data = np.stack([r.data for r in rows], axis=0)

    def back():
        out_g = out.grad
        for i, r in enumerate(rows):
            _accum(r, out_g[i])

    out = _make(data, rows, back, "stack_rows")
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back():
        _accum(x, out.grad * mask)

    out = _make(np.where(mask, x.data, 0.0), (x,), back, "relu")
    return out


def sigmoid(x: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp
    data = np.where(
        x.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(x.data))),
        np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
    )

    def back():
        _accum(x, out.grad * data * (1.0 - data))

    out = _make(data, (x,), back, "sigmoid")
    return out


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)

    def back():
        _accum(x, out.grad * (1.0 - data * data))

    out = _make(data, (x,), back, "tanh")
    return out


def softmax(x: Tensor) -> Tensor:
    """Row-stabilized softmax over the last axis."""
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=-1, keepdims=True)

    def back():
        out_g = out.grad
        inner = np.sum(out_g * data, axis=-1, keepdims=True)
        _accum(x, data * (out_g - inner))

    out = _make(data, (x,), back, "softmax")
    return out


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(x.data)

    def back():
        _accum(x, out.grad / x.data)

    out = _make(data, (x,), back, "log")
    return out


def mean(x: Tensor, axis=None) -> Tensor:
    data = np.mean(x.data, axis=axis)
    count = x.data.size if axis is None else x.shape[axis]

    def back():
        out_g = out.grad
        if axis is None:
            g = np.full_like(x.data, out_g.reshape(()) / count)
        else:
            g = np.broadcast_to(np.expand_dims(out_g, axis), x.shape) / count
        _accum(x, g)

    out = _make(data, (x,), back, "mean")
    return out


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Unit-normalize each row (last axis), guarded against zero norm."""
    sq = np.sum(x.data * x.data, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(sq + eps)
    data = x.data * inv

    def back():
        out_g = out.grad
        dot = np.sum(out_g * x.data, axis=-1, keepdims=True)
        _accum(x, inv * out_g - (inv**3) * dot * x.data)

    out = _make(data, (x,), back, "l2_normalize")
    return out


def embedding_gather(table: Tensor, indices) -> Tensor:
    """Rows of an embedding table selected by integer index."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_gather: table must be 2-d, got shape {table.shape}")
    if idx.ndim != 1 or idx.size == 0:
        raise UsageError("embedding_gather: indices must be a non-empty 1-d sequence")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise UsageError(
            f"embedding_gather: index out of range for table with {table.shape[0]} rows"
        )
    data = table.data[idx]

    def back():
        g = np.zeros_like(table.data)
        np.add.at(g, idx, out.grad)
        _accum(table, g)

    out = _make(data, (table,), back, "embedding_gather")
    return out


def cosine_similarity_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosine similarities: rows of a against rows of b."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"cosine_similarity_matrix: incompatible shapes {a.shape} and {b.shape}"
        )
    # normalize-then-matmul so the gradient falls out of existing rules
    return matmul(l2_normalize(a), transpose(l2_normalize(b)))
