"""Reverse-mode automatic differentiation over scalars and flat arrays.

A ``Tape`` is an append-only arena of ``Node`` records.  Creation order is a
topological order of the computation DAG, so the backward sweep is a single
reverse pass.  Node values may be Python floats or numpy float64 arrays; an
array value carries an implicit "batch" axis so recurrent filter graphs can
be evaluated for many sequences at once without changing the graph shape.

Local partial derivatives are recorded eagerly at forward time.  A partial is
one of:

* ``None``          -- identity (adjoint passes through unchanged)
* float / ndarray   -- elementwise factor (``parent_adjoint += partial * g``)
* callable          -- fused op (``parent_adjoint += fn(g)``), used by matvec,
                       FFT and gather/scatter style operations

``backward`` accumulates into ``Node.grad`` (two calls without a reset double
the gradients).  Each sweep is independent: adjoints are propagated through a
scratch buffer, so stale intermediate gradients never leak into later sweeps.
"""

from __future__ import annotations

import math

import numpy as np


class AutodiffError(Exception):
    """Raised for structural misuse (tape mixing, non-scalar loss, ...)."""


class Node:
    """One value in the computation graph."""

    __slots__ = ("tape", "idx", "value", "shape", "grad", "parents", "vjps")

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Node(idx={self.idx}, value={self.value!r})"


class Tape:
    """Append-only node arena with checkpoint marks for partial clearing."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.leaves: list[Node] = []

    def _record(self, value, parents, vjps):
        node = Node()
        node.tape = self
        node.idx = len(self.nodes)
        node.value = value
        node.shape = value.shape if isinstance(value, np.ndarray) else ()
        node.grad = 0.0
        node.parents = parents
        node.vjps = vjps
        self.nodes.append(node)
        return node

    def leaf(self, value):
        """Register an independent variable (gradient target)."""
        node = self._record(value, (), ())
        self.leaves.append(node)
        return node

    def mark(self) -> int:
        """Checkpoint the current node count for later truncation."""
        return len(self.nodes)

    def reset_to(self, mark: int):
        """Drop every node recorded after ``mark`` (frees graph memory)."""
        del self.nodes[mark:]
        self.leaves = [n for n in self.leaves if n.idx < mark]

    def zero_grad(self):
        for node in self.nodes:
            node.grad = 0.0

    def backward(self, loss: Node, seed=1.0):
        """Accumulate d(loss)/d(node) into ``.grad`` for every ancestor.

        Returns a dict mapping each leaf node of this tape to its gradient.
        """
        if loss.tape is not self:
            raise AutodiffError("loss node does not belong to this tape")
        if loss.shape != ():
            raise AutodiffError("backward requires a scalar loss node")
        nodes = self.nodes
        top = loss.idx
        adj: list = [None] * (top + 1)
        adj[top] = seed
        ndarray = np.ndarray
        for i in range(top, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = nodes[i]
            parents = node.parents
            if parents:
                for p, v in zip(parents, node.vjps):
                    if v is None:
                        contrib = g
                    elif callable(v):
                        contrib = v(g)
                    else:
                        contrib = v * g
                    pshape = p.shape
                    if isinstance(contrib, ndarray):
                        if contrib.shape != pshape:
                            contrib = (contrib.sum() if pshape == ()
                                       else _unbroadcast(contrib, pshape))
                    elif pshape != ():
                        contrib = np.broadcast_to(contrib, pshape)
                    j = p.idx
                    prev = adj[j]
                    adj[j] = contrib if prev is None else prev + contrib
            ng = node.grad
            node.grad = g if (type(ng) is float and ng == 0.0) else ng + g
        return {leaf: leaf.grad for leaf in self.leaves if leaf.idx <= top}


def _unbroadcast(g, shape):
    """Reduce an adjoint back to the shape of the parent it feeds."""
    if shape == ():
        return np.sum(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _tape_of(a, b):
    if isinstance(a, Node):
        if isinstance(b, Node) and b.tape is not a.tape:
            raise AutodiffError("operands live on different tapes")
        return a.tape
    return b.tape


# ---------------------------------------------------------------------------
# Elementwise primitives.  Binary ops accept a plain number/array on either
# side; constants are folded into the recorded partials (they never become
# nodes, keeping the arena small).
# ---------------------------------------------------------------------------

def add(a, b):
    if isinstance(a, Node):
        if isinstance(b, Node):
            if a.tape is not b.tape:
                raise AutodiffError("operands live on different tapes")
            return a.tape._record(a.value + b.value, (a, b), (None, None))
        return a.tape._record(a.value + b, (a,), (None,))
    return b.tape._record(a + b.value, (b,), (None,))


def sub(a, b):
    if isinstance(a, Node):
        if isinstance(b, Node):
            if a.tape is not b.tape:
                raise AutodiffError("operands live on different tapes")
            return a.tape._record(a.value - b.value, (a, b), (None, -1.0))
        return a.tape._record(a.value - b, (a,), (None,))
    return b.tape._record(a - b.value, (b,), (-1.0,))


def mul(a, b):
    if isinstance(a, Node):
        if isinstance(b, Node):
            if a.tape is not b.tape:
                raise AutodiffError("operands live on different tapes")
            return a.tape._record(a.value * b.value, (a, b), (b.value, a.value))
        return a.tape._record(a.value * b, (a,), (b,))
    return b.tape._record(a * b.value, (b,), (a,))


def div(a, b):
    tape = _tape_of(a, b)
    bval = b.value if isinstance(b, Node) else b
    if np.min(np.abs(bval)) < 1e-300:
        raise AutodiffError("division by (near-)zero denominator")
    inv = 1.0 / bval
    if isinstance(a, Node):
        out = a.value * inv
        if isinstance(b, Node):
            return tape._record(out, (a, b), (inv, -out * inv))
        return tape._record(out, (a,), (inv,))
    out = a * inv
    return tape._record(out, (b,), (-out * inv,))


def fma(a, k, b):
    """Fused ``a*k + b`` (single node; partials are value references)."""
    tape = a.tape
    return tape._record(a.value * k.value + b.value, (a, k, b), (k.value, a.value, None))


def neg(a):
    return a.tape._record(-a.value, (a,), (-1.0,))


def sin(a):
    return a.tape._record(np.sin(a.value), (a,), (np.cos(a.value),))


def cos(a):
    return a.tape._record(np.cos(a.value), (a,), (-np.sin(a.value),))


def tanh(a):
    out = np.tanh(a.value)
    return a.tape._record(out, (a,), (1.0 - out * out,))


def pow2(a):
    return a.tape._record(a.value * a.value, (a,), (2.0 * a.value,))


def sum_(a):
    """Sum of all elements -> scalar node."""
    shape = a.shape

    def back(g, _shape=shape):
        return np.broadcast_to(g, _shape)

    return a.tape._record(float(np.sum(a.value)), (a,), (back,))


def mean(a):
    shape = a.shape
    n = 1
    for dim in shape:
        n *= dim

    def back(g, _shape=shape, _n=n):
        return np.broadcast_to(g / _n, _shape)

    return a.tape._record(float(np.mean(a.value)), (a,), (back,))


# ---------------------------------------------------------------------------
# Fused vector ops
# ---------------------------------------------------------------------------

def matvec(w, h):
    """Dense layer core: ``w @ h`` with registered Jacobian actions."""
    wval, hval = w.value, h.value

    def back_w(g, _h=hval):
        return np.outer(g, _h)

    def back_h(g, _w=wval):
        return _w.T @ g

    return w.tape._record(wval @ hval, (w, h), (back_w, back_h))


def collect(nodes):
    """Stack N like-shaped nodes into one node with a new leading axis."""
    tape = nodes[0].tape
    value = np.stack([n.value for n in nodes])
    vjps = tuple(_RowPick(i) for i in range(len(nodes)))
    return tape._record(value, tuple(nodes), vjps)


class _RowPick:
    __slots__ = ("i",)

    def __init__(self, i):
        self.i = i

    def __call__(self, g):
        return g[self.i]


def gather(a, idx):
    """Fancy-index ``a.value[idx]``; adjoint scatter-adds back."""
    shape = np.shape(a.value)

    def back(g, _idx=idx, _shape=shape):
        out = np.zeros(_shape)
        np.add.at(out, _idx, g)
        return out

    return a.tape._record(a.value[idx], (a,), (back,))


def pad_axis1(a, size, offset):
    """Zero-embed axis 1 of a 3-D value into length ``size`` at ``offset``."""
    val = a.value
    out = np.zeros((val.shape[0], size, val.shape[2]))
    out[:, offset:offset + val.shape[1], :] = val
    win = val.shape[1]

    def back(g, _o=offset, _w=win):
        return g[:, _o:_o + _w, :]

    return a.tape._record(out, (a,), (back,))


def rfft_axis1(a):
    """Real FFT along axis 1.  Complex node, consumed by magnitude ops.

    The adjoint of the linear map x -> rfft(x) under the convention
    "complex adjoint = dL/d(re) + i*dL/d(im)" is
    ``n * Re(ifft(zero_padded_adjoint, n))``.
    """
    n = a.value.shape[1]

    def back(g, _n=n):
        return _n * np.real(np.fft.ifft(g, n=_n, axis=1))

    return a.tape._record(np.fft.rfft(a.value, axis=1), (a,), (back,))


def magnitude(z):
    """|z| for a complex node (safe subgradient 0 at exact zeros)."""
    mag = np.abs(z.value)

    def back(g, _z=z.value, _m=mag):
        scale = np.where(_m > 0.0, g / np.where(_m > 0.0, _m, 1.0), 0.0)
        return scale * _z

    return z.tape._record(mag, (z,), (back,))


def magnitude_sq(z):
    """|z|^2 for a complex node."""
    val = z.value.real * z.value.real + z.value.imag * z.value.imag

    def back(g, _z=z.value):
        return (2.0 * g) * _z

    return z.tape._record(val, (z,), (back,))


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

def finite_difference(f, params, rel_step=1e-4):
    """Central finite differences of ``f(params) -> float`` per element.

    ``params`` is a dict of name -> float or ndarray; the returned dict has
    the same structure.  Step size is relative: ``h = rel_step*max(1, |x|)``.
    """
    grads = {}
    for name, val in params.items():
        arr = np.asarray(val, dtype=float)
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = rel_step * max(1.0, abs(orig))
            flat[i] = orig + h
            fp = f(params | {name: _like(val, arr)})
            flat[i] = orig - h
            fm = f(params | {name: _like(val, arr)})
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads[name] = _like(val, g)
    return grads


def _like(template, arr):
    if isinstance(template, (float, int)):
        return float(arr)
    return arr.copy()


def max_grad_deviation(analytic, numeric):
    """max over parameters of |g_a - g_fd| / max(1, |g_a|, |g_fd|)."""
    worst = 0.0
    for name, ga in analytic.items():
        ga = np.asarray(ga, dtype=float)
        gn = np.asarray(numeric[name], dtype=float)
        denom = np.maximum(1.0, np.maximum(np.abs(ga), np.abs(gn)))
        dev = np.max(np.abs(ga - gn) / denom)
        worst = max(worst, float(dev))
    return worst
