"""Reverse-mode automatic differentiation over dense numpy arrays.

Tensors wrap 0-, 1- or 2-dimensional float arrays and record a define-by-run
tape: each operation stores its inputs and a backward closure, and
``backward()`` replays the tape once in reverse topological order.  Gradients
accumulate across backward calls and must be zeroed explicitly by the caller.

A tape and its tensors belong to one thread; there is no internal locking.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ShapeError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_default = np.dtype(np.float32)


def set_default_dtype(dtype) -> None:
    """Switch the global float width (``float32`` or ``float64``).

    Only tensors created afterwards are affected; 64-bit mode exists for
    gradient checking, 32-bit is the training default.
    """
    global _default
    dt = np.dtype(dtype)
    if dt not in _FLOAT_DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _default = dt


def default_dtype() -> np.dtype:
    return _default


@contextmanager
def use_dtype(dtype):
    """Temporarily switch the default dtype (used by gradient-check tests)."""
    previous = _default
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


class Tensor:
    """A dense array plus optional gradient and tape linkage.

    ``grad`` is lazily allocated and always matches ``data``'s shape.
    Operations on tensors with ``requires_grad`` anywhere upstream extend
    the tape; pure-constant subgraphs are not recorded.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        want = _default if dtype is None else np.dtype(dtype)
        if want not in _FLOAT_DTYPES:
            raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
        arr = np.asarray(data)
        if arr.dtype != want:
            arr = arr.astype(want)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are at most 2-dimensional, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    def sum(self) -> "Tensor":
        out = _node(np.asarray(self.data.sum(), dtype=self.dtype), (self,))
        if out.requires_grad:
            def back(g):
                _accum(self, np.broadcast_to(g, self.data.shape))
            out._backward = back
        return out

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self) -> "Tensor":
        return transpose(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic operators; scalars are plain Python numbers, everything
    # else must be a Tensor of a compatible shape
    def __add__(self, other):
        return _scalar_op(self, other, add, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return _scalar_op(self, other, sub, "sub")

    def __rsub__(self, other):
        if isinstance(other, Tensor):
            return sub(other, self)
        out = _node(np.asarray(other - self.data), (self,))
        if out.requires_grad:
            def back(g):
                _accum(self, -g)
            out._backward = back
        return out

    def __mul__(self, other):
        return _scalar_op(self, other, mul, "mul")

    __rmul__ = __mul__

    def __neg__(self):
        return 0.0 - self

    def __matmul__(self, other):
        return matmul(self, other)


def _scalar_op(a: Tensor, other, tensor_fn, kind: str) -> Tensor:
    if isinstance(other, Tensor):
        return tensor_fn(a, other)
    c = float(other)
    if kind == "add":
        data, back_scale = a.data + c, 1.0
    elif kind == "sub":
        data, back_scale = a.data - c, 1.0
    else:
        data, back_scale = a.data * c, c
    out = _node(data, (a,))
    if out.requires_grad:
        def back(g):
            _accum(a, g if back_scale == 1.0 else g * back_scale)
        out._backward = back
    return out


def _node(data, parents) -> Tensor:
    """Wrap an op result; record tape linkage only if a parent needs grad."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = tuple(parents) if out.requires_grad else ()
    out._backward = None
    return out


def _accum(t: Tensor, g) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == tuple(shape):
        return g
    if len(shape) < g.ndim:
        g = g.sum(axis=tuple(range(g.ndim - len(shape))))
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    """Binary ops allow equal shapes or a vector spread along one matrix axis.

    Accepted mismatches: (m,n) with (n,) or (1,n) (one value per column) and
    (m,n) with (m,1) (one value per row).  Anything else is an error so shape
    bugs fail loudly.
    """
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        return
    for big, small in ((sa, sb), (sb, sa)):
        if len(big) == 2:
            m, n = big
            if small in ((n,), (1, n), (m, 1)):
                return
    raise ShapeError(f"{op}: shapes {sa} and {sb} are not compatible")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = _node(a.data + b.data, (a, b))
    if out.requires_grad:
        def back(g):
            if a.requires_grad:
                _accum(a, _reduce_to(g, a.data.shape))
            if b.requires_grad:
                _accum(b, _reduce_to(g, b.data.shape))
        out._backward = back
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out = _node(a.data - b.data, (a, b))
    if out.requires_grad:
        def back(g):
            if a.requires_grad:
                _accum(a, _reduce_to(g, a.data.shape))
            if b.requires_grad:
                _accum(b, _reduce_to(-g, b.data.shape))
        out._backward = back
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out = _node(a.data * b.data, (a, b))
    if out.requires_grad:
        def back(g):
            if a.requires_grad:
                _accum(a, _reduce_to(g * b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _reduce_to(g * a.data, b.data.shape))
        out._backward = back
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = _node(y, (x,))
    if out.requires_grad:
        def back(g):
            _accum(x, g * (1.0 - y * y))
        out._backward = back
    return out


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # exp overflow saturates to the correct limit
        y = 1.0 / (1.0 + np.exp(-x.data))
    out = _node(y, (x,))
    if out.requires_grad:
        def back(g):
            _accum(x, g * y * (1.0 - y))
        out._backward = back
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: shapes {a.data.shape} and {b.data.shape} do not align"
        )
    out = _node(a.data @ b.data, (a, b))
    if out.requires_grad:
        def back(g):
            if a.requires_grad:
                _accum(a, g @ b.data.T)
            if b.requires_grad:
                _accum(b, a.data.T @ g)
        out._backward = back
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a matrix, max-subtracted for stability."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got shape {x.data.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = _node(y, (x,))
    if out.requires_grad:
        def back(g):
            _accum(x, (g - (g * y).sum(axis=1, keepdims=True)) * y)
        out._backward = back
    return out


def lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of an embedding table; backward scatter-adds into it."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"lookup ids must be a flat sequence, got shape {idx.shape}")
    if table.data.ndim != 2:
        raise ShapeError(f"lookup table must be a matrix, got shape {table.data.shape}")
    n_rows = table.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        bad = idx[(idx < 0) | (idx >= n_rows)][0]
        raise ShapeError(f"lookup id {bad} out of range for table with {n_rows} rows")
    out = _node(table.data[idx], (table,))
    if out.requires_grad:
        def back(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)
        out._backward = back
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    ndim = tensors[0].data.ndim
    if axis not in range(ndim):
        raise ShapeError(f"concat axis {axis} invalid for {ndim}-d tensors")
    for t in tensors[1:]:
        sa, sb = tensors[0].data.shape, t.data.shape
        if len(sa) != len(sb) or any(
            i != axis and sa[i] != sb[i] for i in range(len(sa))
        ):
            raise ShapeError(f"concat: shapes {sa} and {sb} differ off axis {axis}")
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        def back(g):
            offset = 0
            for t, size in zip(tensors, sizes):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(offset, offset + size)
                    _accum(t, g[tuple(sl)])
                offset += size
        out._backward = back
    return out


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis; the inverse of concat on the same cuts."""
    ndim = x.data.ndim
    if axis not in range(ndim):
        raise ShapeError(f"slice axis {axis} invalid for {ndim}-d tensor")
    n = x.data.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis of size {n}")
    sl = [slice(None)] * ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = _node(x.data[sl].copy(), (x,))
    if out.requires_grad:
        def back(g):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[sl] += g
        out._backward = back
    return out


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise ShapeError(f"cannot reshape {x.data.shape} to {shape}")
    old = x.data.shape
    out = _node(x.data.reshape(shape), (x,))
    if out.requires_grad:
        def back(g):
            _accum(x, g.reshape(old))
        out._backward = back
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got shape {x.data.shape}")
    out = _node(x.data.T.copy(), (x,))
    if out.requires_grad:
        def back(g):
            _accum(x, g.T)
        out._backward = back
    return out


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean negative log softmax probability of ``targets`` over unmasked rows.

    ``targets`` holds one class id per row of ``logits``; ``mask`` entries of
    0 drop padding rows from the mean.  Raises if every row is masked.
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy needs [rows, classes], got {logits.data.shape}")
    n, v = logits.data.shape
    tgt = np.asarray(targets, dtype=np.int64)
    if tgt.shape != (n,):
        raise ShapeError(f"targets shape {tgt.shape} does not match {n} logit rows")
    if tgt.size and (tgt.min() < 0 or tgt.max() >= v):
        raise ShapeError(f"target id out of range for {v} classes")
    if mask is None:
        m = np.ones(n, dtype=logits.dtype)
    else:
        m = np.asarray(mask, dtype=logits.dtype).reshape(n)
    total = m.sum()
    if total <= 0:
        raise ShapeError("cross_entropy: all positions are masked")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    nll = logsumexp - z[np.arange(n), tgt]
    loss = np.asarray((nll * m).sum() / total, dtype=logits.dtype)
    out = _node(loss, (logits,))
    if out.requires_grad:
        def back(g):
            p = np.exp(z - np.log(np.exp(z).sum(axis=1, keepdims=True)))
            p[np.arange(n), tgt] -= 1.0
            p *= (m / total)[:, None]
            _accum(logits, p * g)
        out._backward = back
    return out


def backward(loss: Tensor) -> None:
    """Propagate gradients from a scalar loss through the recorded tape.

    Every reachable ``requires_grad`` tensor receives (accumulates) its
    gradient; tensors not on the tape are untouched.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    # iterative post-order walk: recursion depth would scale with sequence length
    topo = []
    visited = set()
    stack = [(loss, False)]
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
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    # op outputs carry per-traversal state only; leaves (no closure) accumulate
    for node in topo:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
