"""Reverse-mode differentiation over dense numpy buffers, plus Adam.

Minimal tape: every ``Tensor`` remembers its parents and a vector-Jacobian
closure; ``backward()`` on a scalar root walks the graph once in reverse
topological order.  The op set is exactly what the mesh layers need
(matmul, gather/scatter, segment sums, elementwise math, reductions,
concatenation); no higher-order derivatives.
"""

from __future__ import annotations

import numpy as np

from .errors import AutodiffError

__all__ = [
    "Tensor",
    "parameter",
    "concat",
    "take_rows",
    "take_cols",
    "take_pairs",
    "segment_sum",
    "segment_softmax",
    "sparse_matmul",
    "nll_loss",
    "Adam",
]


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp", "_spent")

    def __init__(self, value, requires_grad=False, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad and vjp is None else None
        self._parents = parents
        self._vjp = vjp
        self._spent = False

    # -- bookkeeping --------------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self):
        return Tensor(self.value)

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, grad={self.requires_grad})"

    def backward(self):
        """Populate ``grad`` on every reachable parameter.

        The root must be scalar; a second backward through the same root is
        rejected (no double backward).
        """
        if self.value.size != 1:
            raise AutodiffError(f"backward needs a scalar root, got shape {self.shape}")
        if self._spent:
            raise AutodiffError("backward already ran through this root; "
                                "higher-order gradients are not supported")
        self._spent = True
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                topo.append(node)
            else:
                stack.append((node, True))
                for p in node._parents:
                    if id(p) not in seen and p.requires_grad:
                        stack.append((p, False))
        grads = {id(self): np.ones_like(self.value)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.value)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if not parent.requires_grad or pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] += pg
                else:
                    grads[id(parent)] = pg

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        a, b = self.value, _val(other)
        out_parents = [p for p in (self, other) if isinstance(p, Tensor)]
        req = any(p.requires_grad for p in out_parents)
        if not req:
            return Tensor(a + b)

        def vjp(g):
            return tuple(
                _unbroadcast(g, p.value.shape) for p in out_parents
            )

        return Tensor(a + b, True, tuple(out_parents), vjp)

    __radd__ = __add__

    def __neg__(self):
        if not self.requires_grad:
            return Tensor(-self.value)
        return Tensor(-self.value, True, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self.value, _val(other)
        parents = [p for p in (self, other) if isinstance(p, Tensor)]
        if not any(p.requires_grad for p in parents):
            return Tensor(a * b)

        def vjp(g):
            out = []
            if isinstance(self, Tensor):
                out.append(_unbroadcast(g * b, a.shape))
            if isinstance(other, Tensor):
                out.append(_unbroadcast(g * a, other.value.shape))
            return tuple(out)

        return Tensor(a * b, True, tuple(parents), vjp)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            a, b = self.value, other.value
            if not (self.requires_grad or other.requires_grad):
                return Tensor(a / b)

            def vjp(g):
                return (_unbroadcast(g / b, a.shape),
                        _unbroadcast(-g * a / (b * b), b.shape))

            return Tensor(a / b, True, (self, other), vjp)
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        c = np.asarray(other, dtype=np.float64)
        if not self.requires_grad:
            return Tensor(c / self.value)
        a = self.value
        return Tensor(c / a, True, (self,),
                      lambda g: (_unbroadcast(-g * c / (a * a), a.shape),))

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            raise TypeError("only scalar exponents supported")
        a = self.value
        if not self.requires_grad:
            return Tensor(a ** n)
        return Tensor(a ** n, True, (self,), lambda g: (g * n * a ** (n - 1),))

    def __matmul__(self, other):
        a, b = self.value, _val(other)
        parents = [p for p in (self, other) if isinstance(p, Tensor)]
        if not any(p.requires_grad for p in parents):
            return Tensor(a @ b)

        def vjp(g):
            out = []
            if isinstance(self, Tensor):
                out.append(g @ b.T)
            if isinstance(other, Tensor):
                out.append(a.T @ g)
            return tuple(out)

        return Tensor(a @ b, True, tuple(parents), vjp)

    # -- elementwise ----------------------------------------------------------

    def relu(self):
        a = self.value
        if not self.requires_grad:
            return Tensor(np.maximum(a, 0.0))
        mask = (a > 0).astype(a.dtype)
        return Tensor(a * mask, True, (self,), lambda g: (g * mask,))

    def exp(self):
        out = np.exp(self.value)
        if not self.requires_grad:
            return Tensor(out)
        return Tensor(out, True, (self,), lambda g: (g * out,))

    def log(self):
        a = self.value
        if not self.requires_grad:
            return Tensor(np.log(a))
        return Tensor(np.log(a), True, (self,), lambda g: (g / a,))

    def sqrt(self):
        out = np.sqrt(self.value)
        if not self.requires_grad:
            return Tensor(out)
        return Tensor(out, True, (self,), lambda g: (g * 0.5 / out,))

    def sin(self):
        a = self.value
        if not self.requires_grad:
            return Tensor(np.sin(a))
        return Tensor(np.sin(a), True, (self,), lambda g: (g * np.cos(a),))

    def cos(self):
        a = self.value
        if not self.requires_grad:
            return Tensor(np.cos(a))
        return Tensor(np.cos(a), True, (self,), lambda g: (-g * np.sin(a),))

    def sigmoid(self):
        a = self.value
        out = np.where(a >= 0, 1.0 / (1.0 + np.exp(-np.abs(a))),
                       np.exp(-np.abs(a)) / (1.0 + np.exp(-np.abs(a))))
        if not self.requires_grad:
            return Tensor(out)
        return Tensor(out, True, (self,), lambda g: (g * out * (1.0 - out),))

    # -- shape ---------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        a = self.value
        if not self.requires_grad:
            return Tensor(a.reshape(shape))
        return Tensor(a.reshape(shape), True, (self,),
                      lambda g: (g.reshape(a.shape),))

    def transpose(self, axes=None):
        a = self.value
        if not self.requires_grad:
            return Tensor(a.transpose(axes))
        inv = None if axes is None else np.argsort(axes)
        return Tensor(a.transpose(axes), True, (self,),
                      lambda g: (g.transpose(inv),))

    @property
    def T(self):
        return self.transpose()

    def sum(self, axis=None, keepdims=False):
        a = self.value
        out = a.sum(axis=axis, keepdims=keepdims)
        if not self.requires_grad:
            return Tensor(out)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, a.shape).copy(),)

        return Tensor(out, True, (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def parameter(value) -> Tensor:
    """Leaf tensor tracked by the optimizer (grad buffer preallocated)."""
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# Structural ops
# ---------------------------------------------------------------------------

def concat(tensors, axis=0) -> Tensor:
    vals = [_val(t) for t in tensors]
    out = np.concatenate(vals, axis=axis)
    parents = tuple(t for t in tensors if isinstance(t, Tensor))
    if not any(p.requires_grad for p in parents):
        return Tensor(out)
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p for t, p in zip(tensors, pieces) if isinstance(t, Tensor))

    return Tensor(out, True, parents, vjp)


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather along axis 0; adjoint scatter-adds."""
    idx = np.asarray(idx)
    out = x.value[idx]
    if not x.requires_grad:
        return Tensor(out)

    def vjp(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx, g)
        return (gx,)

    return Tensor(out, True, (x,), vjp)


def take_cols(x: Tensor, idx) -> Tensor:
    """Gather along axis 1; adjoint scatter-adds."""
    idx = np.asarray(idx)
    out = x.value[:, idx]
    if not x.requires_grad:
        return Tensor(out)

    def vjp(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, (slice(None), idx), g)
        return (gx,)

    return Tensor(out, True, (x,), vjp)


def take_pairs(x: Tensor, rows, cols) -> Tensor:
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    out = x.value[rows, cols]
    if not x.requires_grad:
        return Tensor(out)

    def vjp(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, (rows, cols), g)
        return (gx,)

    return Tensor(out, True, (x,), vjp)


def segment_sum(x: Tensor, segments, n_segments: int) -> Tensor:
    """Sum rows of ``x`` into their segment; adjoint gathers."""
    segments = np.asarray(segments)
    out = np.zeros((n_segments,) + x.value.shape[1:], dtype=x.value.dtype)
    np.add.at(out, segments, x.value)
    if not x.requires_grad:
        return Tensor(out)
    return Tensor(out, True, (x,), lambda g: (g[segments],))


def segment_softmax(logits: Tensor, segments, n_segments: int) -> Tensor:
    """Softmax within each segment (numerically shifted by the segment max)."""
    segments = np.asarray(segments)
    m = np.full(n_segments, -np.inf)
    np.maximum.at(m, segments, logits.value)
    shifted = logits - m[segments]  # constant shift, gradient-transparent
    e = shifted.exp()
    denom = segment_sum(e, segments, n_segments)
    return e / take_rows(denom, segments)


def sparse_matmul(smat, x: Tensor, out_shape=None) -> Tensor:
    """Multiply by a constant scipy sparse matrix; adjoint uses the transpose."""
    out = smat @ x.value
    if out_shape is not None:
        out = out.reshape(out_shape)
    if not x.requires_grad:
        return Tensor(out)
    return Tensor(out, True, (x,), lambda g: (smat.T @ g.ravel(),))


def nll_loss(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax."""
    targets = np.asarray(targets, dtype=np.int64)
    nrows, ncols = logits.value.shape
    if targets.shape != (nrows,):
        raise ValueError(f"targets shape {targets.shape} does not match {nrows} rows")
    if targets.min() < 0 or targets.max() >= ncols:
        raise IndexError(f"target index out of range for {ncols} classes")
    m = logits.value.max(axis=1)  # detached shift
    z = logits - m[:, None]
    lse = z.exp().sum(axis=1).log() + m
    picked = take_pairs(logits, np.arange(nrows), targets)
    return (lse - picked).mean()


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1 ** self.step_count)
            vhat = self.v[i] / (1 - b2 ** self.step_count)
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
