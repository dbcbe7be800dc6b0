"""Reverse-mode autodiff over numpy arrays.

Every operation records its parents and a vjp closure written in terms of
the same operations, so gradients are themselves graph nodes.  Calling
``grad(..., create_graph=True)`` therefore yields differentiable gradients,
which is what the gradient-penalty objective needs (a parameter gradient of
an input-gradient norm).
"""

from __future__ import annotations

import numpy as np

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """A numpy array plus optional autodiff bookkeeping.

    ``parents`` and ``vjp`` are set only on recorded op outputs; leaves
    (parameters, constants) have neither.
    """

    __slots__ = ("data", "requires_grad", "parents", "vjp")

    def __init__(self, data, requires_grad=False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.requires_grad = requires_grad
        self.parents = ()
        self.vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"

    # arithmetic sugar; scalars and arrays are promoted to constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tslice(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _node(data, parents, vjp) -> Tensor:
    """Build an op output, recording the tape only when grad mode is on."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out.parents = parents
        out.vjp = vjp
        return out
    return Tensor(data)


def _unbroadcast(t: Tensor, shape: tuple) -> Tensor:
    """Reduce a cotangent back to the shape of a broadcast operand."""
    if t.shape == shape:
        return t
    extra = t.ndim - len(shape)
    if extra > 0:
        t = tsum(t, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and t.shape[i] != 1)
    if axes:
        t = tsum(t, axis=axes, keepdims=True)
    return reshape(t, shape)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def vjp(cot):
        return (_unbroadcast(cot, a.shape) if a.requires_grad else None,
                _unbroadcast(cot, b.shape) if b.requires_grad else None)

    return _node(a.data + b.data, (a, b), vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def vjp(cot):
        return (_unbroadcast(cot, a.shape) if a.requires_grad else None,
                _unbroadcast(neg(cot), b.shape) if b.requires_grad else None)

    return _node(a.data - b.data, (a, b), vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def vjp(cot):
        return (_unbroadcast(mul(cot, b), a.shape) if a.requires_grad else None,
                _unbroadcast(mul(cot, a), b.shape) if b.requires_grad else None)

    return _node(a.data * b.data, (a, b), vjp)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def vjp(cot):
        ga = _unbroadcast(div(cot, b), a.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = _unbroadcast(neg(div(mul(cot, a), mul(b, b))), b.shape)
        return (ga, gb)

    return _node(a.data / b.data, (a, b), vjp)


def neg(a):
    a = as_tensor(a)

    def vjp(cot):
        return (neg(cot),)

    return _node(-a.data, (a,), vjp)


def power(a, exponent: float):
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    e = float(exponent)

    def vjp(cot):
        if e == 0.0:
            return (Tensor(np.zeros_like(a.data)),)
        if e == 1.0:
            return (cot,)
        return (mul(cot, mul(power(a, e - 1.0), e)),)

    return _node(a.data ** e, (a,), vjp)


def exp(a):
    a = as_tensor(a)
    out = _node(np.exp(a.data), (a,), None)

    def vjp(cot):
        return (mul(cot, out),)

    if out.requires_grad:
        out.vjp = vjp
    return out


def log(a):
    a = as_tensor(a)

    def vjp(cot):
        return (div(cot, a),)

    return _node(np.log(a.data), (a,), vjp)


def sqrt(a):
    a = as_tensor(a)
    out = _node(np.sqrt(a.data), (a,), None)

    def vjp(cot):
        return (div(mul(cot, 0.5), out),)

    if out.requires_grad:
        out.vjp = vjp
    return out


def tanh(a):
    a = as_tensor(a)
    out = _node(np.tanh(a.data), (a,), None)

    def vjp(cot):
        return (mul(cot, sub(1.0, mul(out, out))),)

    if out.requires_grad:
        out.vjp = vjp
    return out


def sigmoid(a):
    a = as_tensor(a)
    data = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                    np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    out = _node(data, (a,), None)

    def vjp(cot):
        return (mul(cot, mul(out, sub(1.0, out))),)

    if out.requires_grad:
        out.vjp = vjp
    return out


def softplus(a):
    """log(1 + exp(a)), computed stably."""
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))

    def vjp(cot):
        return (mul(cot, sigmoid(a)),)

    return _node(data, (a,), vjp)


def maximum_const(a, c: float):
    """Elementwise max against a constant; subgradient 0 at the tie."""
    a = as_tensor(a)
    mask = (a.data > c).astype(a.data.dtype)

    def vjp(cot):
        return (mul(cot, Tensor(mask)),)

    return _node(np.maximum(a.data, c), (a,), vjp)


def relu(a):
    return maximum_const(a, 0.0)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        ax = tuple(range(a.ndim))
    elif isinstance(axis, int):
        ax = (axis,)
    else:
        ax = tuple(axis)
    kept = list(a.shape)
    for i in ax:
        kept[i] = 1

    def vjp(cot):
        g = reshape(cot, tuple(kept))
        return (mul(g, Tensor(np.ones(a.shape, dtype=a.data.dtype))),)

    return _node(a.data.sum(axis=ax, keepdims=keepdims), (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, int):
        n = a.shape[axis]
    else:
        n = int(np.prod([a.shape[i] for i in axis]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(shape)

    def vjp(cot):
        return (reshape(cot, a.shape),)

    return _node(a.data.reshape(shape), (a,), vjp)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def vjp(cot):
        return (transpose(cot, inv),)

    return _node(a.data.transpose(axes), (a,), vjp)


def concat(parts, axis=0):
    parts = tuple(as_tensor(p) for p in parts)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(cot):
        outs = []
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if not p.requires_grad:
                outs.append(None)
                continue
            key = [slice(None)] * cot.ndim
            key[axis] = slice(int(start), int(stop))
            outs.append(tslice(cot, tuple(key)))
        return tuple(outs)

    return _node(np.concatenate([p.data for p in parts], axis=axis), parts, vjp)


def tslice(a, key):
    """Basic numpy indexing; adjoint scatters into zeros."""
    a = as_tensor(a)

    def vjp(cot):
        return (tscatter(cot, a.shape, key),)

    return _node(a.data[key], (a,), vjp)


def tscatter(t, shape, key):
    """Place ``t`` into a zero array of ``shape`` at ``key`` (adjoint of tslice)."""
    t = as_tensor(t)
    data = np.zeros(shape, dtype=t.data.dtype)
    data[key] = t.data

    def vjp(cot):
        return (tslice(cot, key),)

    return _node(data, (t,), vjp)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Matrix product for operands of rank >= 2, with leading-dim broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have rank >= 2")

    def vjp(cot):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(matmul(cot, _swap_last(b)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(matmul(_swap_last(a), cot), b.shape)
        return (ga, gb)

    return _node(np.matmul(a.data, b.data), (a, b), vjp)


def _swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


# ---------------------------------------------------------------------------
# conv plumbing: im2col / col2im are mutually adjoint linear maps


def _im2col_data(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    b, c, length = x.shape
    l_out = (length + 2 * padding - kernel) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    cols = np.empty((b, c, kernel, l_out), dtype=x.dtype)
    for k in range(kernel):
        cols[:, :, k, :] = x[:, :, k:k + stride * l_out:stride]
    return cols.reshape(b, c * kernel, l_out)


def _col2im_data(cols: np.ndarray, length: int, kernel: int, stride: int,
                 padding: int) -> np.ndarray:
    b = cols.shape[0]
    c = cols.shape[1] // kernel
    l_out = cols.shape[2]
    cols = cols.reshape(b, c, kernel, l_out)
    x = np.zeros((b, c, length + 2 * padding), dtype=cols.dtype)
    for k in range(kernel):
        x[:, :, k:k + stride * l_out:stride] += cols[:, :, k, :]
    if padding:
        x = x[:, :, padding:-padding]
    return x


def im2col(x, kernel: int, stride: int = 1, padding: int = 0):
    x = as_tensor(x)
    length = x.shape[2]

    def vjp(cot):
        return (col2im(cot, length, kernel, stride, padding),)

    return _node(_im2col_data(x.data, kernel, stride, padding), (x,), vjp)


def col2im(cols, length: int, kernel: int, stride: int = 1, padding: int = 0):
    cols = as_tensor(cols)

    def vjp(cot):
        return (im2col(cot, kernel, stride, padding),)

    return _node(_col2im_data(cols.data, length, kernel, stride, padding),
                 (cols,), vjp)


# ---------------------------------------------------------------------------
# reverse pass


def _toposort(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def grad(output: Tensor, inputs, grad_output=None, create_graph=False):
    """Gradients of ``output`` w.r.t. each tensor in ``inputs``.

    With ``create_graph=True`` the returned tensors are themselves recorded,
    so they can be differentiated again.  Tensors that do not influence
    ``output`` get a zero gradient.
    """
    single = isinstance(inputs, Tensor)
    inputs = [inputs] if single else list(inputs)
    if not output.requires_grad:
        raise ValueError("output is not part of a recorded computation")
    if grad_output is None:
        grad_output = Tensor(np.ones_like(output.data))

    order = _toposort(output)
    cot = {id(output): grad_output}
    keep = {id(t) for t in inputs}

    for node in reversed(order):
        c = cot.get(id(node))
        if c is None:
            continue
        if node.vjp is None:
            continue
        ctx = _GraphCtx() if create_graph else no_grad()
        with ctx:
            contribs = node.vjp(c)
            for parent, contrib in zip(node.parents, contribs):
                if contrib is None or not parent.requires_grad:
                    continue
                prev = cot.get(id(parent))
                cot[id(parent)] = contrib if prev is None else add(prev, contrib)
        if id(node) not in keep:
            del cot[id(node)]

    results = []
    for t in inputs:
        g = cot.get(id(t))
        if g is None:
            g = Tensor(np.zeros_like(t.data))
        results.append(g)
    return results[0] if single else results


class _GraphCtx:
    """Context manager that forces graph recording on."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = True
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False
