"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: every op returns a Tensor holding its value, the parent
tensors, and a closure that propagates gradients. Graphs are rebuilt per
timestep/episode and torn down by normal garbage collection.

Numerics contract:
  * every forward result is checked for NaN/Inf and raises NonFiniteError;
  * matrix products reduce with loop-order rounding (no BLAS), so forward
    values are bit-reproducible and, for small inner dimensions, identical
    to plain scalar-loop evaluation (the tests' oracles rely on this);
  * softmax and log-softmax subtract the max before exponentiating.
"""

import math
from contextlib import contextmanager

import numpy as np

from . import backend

DTYPE = np.float64


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def constant(data):
    return Tensor(data)


def _check_finite(data, op):
    # NaN/Inf anywhere poisons the sum; a finite sum of finite values cannot
    # overflow at the magnitudes this library works with.
    if not math.isfinite(data.sum()):
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite value out of {op}")


def _make(data, op, parents, backward_fn):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    _check_finite(data, op)
    needs = False
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                needs = True
                break
    if needs:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn(out)
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _acc(t, g):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.array(g, dtype=DTYPE)  # own the buffer; g may alias
        else:
            t.grad += g


def backward(root):
    """Accumulate d(root)/d(leaf) into .grad of every reachable tensor.

    root must hold exactly one element. Shared nodes receive the sum of all
    downstream contributions.
    """
    if root.data.size != 1:
        raise ValueError("backward requires a scalar root")
    if not root.requires_grad:
        return
    topo = []
    visited = set()
    stack = [(root, False)]
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
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


# Loop-order matrix helpers (see module docstring).

def _mm(a, b):
    return (a[:, :, None] * b[None, :, :]).sum(axis=1)


def _mv(a, x):
    return (a * x[None, :]).sum(axis=1)


# ---------------------------------------------------------------------------
# elementwise / arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    """Elementwise a + b; b may also be a 1-element tensor (broadcast)."""
    if a.data.shape == b.data.shape:
        data = a.data + b.data

        def bw(out):
            def run():
                _acc(a, out.grad)
                _acc(b, out.grad)
            return run
    elif b.data.size == 1:
        data = a.data + b.data.reshape(())

        def bw(out):
            def run():
                _acc(a, out.grad)
                _acc(b, np.array([out.grad.sum()]).reshape(b.data.shape))
            return run
    else:
        raise ValueError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")
    return _make(data, "add", (a, b), bw)


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch {a.data.shape} vs {b.data.shape}")
    data = a.data - b.data

    def bw(out):
        def run():
            _acc(a, out.grad)
            _acc(b, -out.grad)
        return run
    return _make(data, "sub", (a, b), bw)


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch {a.data.shape} vs {b.data.shape}")
    data = a.data * b.data

    def bw(out):
        def run():
            _acc(a, out.grad * b.data)
            _acc(b, out.grad * a.data)
        return run
    return _make(data, "mul", (a, b), bw)


def scale(a, c):
    c = float(c)
    data = a.data * c

    def bw(out):
        def run():
            _acc(a, out.grad * c)
        return run
    return _make(data, "scale", (a,), bw)


def square(a):
    data = a.data * a.data

    def bw(out):
        def run():
            _acc(a, out.grad * (2.0 * a.data))
        return run
    return _make(data, "square", (a,), bw)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

def matmul(a, b):
    """(m,n) @ (n,p) -> (m,p)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.data.shape} vs {b.data.shape}")
    data = _mm(a.data, b.data)

    def bw(out):
        def run():
            g = out.grad
            _acc(a, (g[:, None, :] * b.data[None, :, :]).sum(axis=2))
            _acc(b, (a.data[:, :, None] * g[:, None, :]).sum(axis=0))
        return run
    return _make(data, "matmul", (a, b), bw)


def matvec(a, x):
    """(m,n) @ (n,) -> (m,). Also the per-row dot of a against x."""
    if a.data.ndim != 2 or x.data.ndim != 1 or a.data.shape[1] != x.data.shape[0]:
        raise ValueError(f"matvec shape mismatch {a.data.shape} vs {x.data.shape}")
    data = _mv(a.data, x.data)

    def bw(out):
        def run():
            g = out.grad
            _acc(a, g[:, None] * x.data[None, :])
            _acc(x, (a.data * g[:, None]).sum(axis=0))
        return run
    return _make(data, "matvec", (a, x), bw)


def dot(a, b):
    """(n,) . (n,) -> (1,)."""
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ValueError(f"dot shape mismatch {a.data.shape} vs {b.data.shape}")
    data = np.array([(a.data * b.data).sum()])

    def bw(out):
        def run():
            g = out.grad[0]
            _acc(a, g * b.data)
            _acc(b, g * a.data)
        return run
    return _make(data, "dot", (a, b), bw)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(a):
    data = np.maximum(a.data, 0.0)

    def bw(out):
        def run():
            _acc(a, out.grad * (a.data > 0.0))
        return run
    return _make(data, "relu", (a,), bw)


def sigmoid(a):
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    with np.errstate(over="ignore"):
        data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        data[~pos] = e / (1.0 + e)

    def bw(out):
        def run():
            _acc(a, out.grad * out.data * (1.0 - out.data))
        return run
    return _make(data, "sigmoid", (a,), bw)


def tanh(a):
    data = np.tanh(a.data)

    def bw(out):
        def run():
            _acc(a, out.grad * (1.0 - out.data * out.data))
        return run
    return _make(data, "tanh", (a,), bw)


def softmax_vec(a):
    x = a.data
    e = np.exp(x - x.max())
    data = e / e.sum()

    def bw(out):
        def run():
            p, g = out.data, out.grad
            _acc(a, p * (g - (g * p).sum()))
        return run
    return _make(data, "softmax", (a,), bw)


def log_softmax_vec(a):
    x = a.data
    sh = x - x.max()
    data = sh - np.log(np.exp(sh).sum())

    def bw(out):
        def run():
            g = out.grad
            _acc(a, g - np.exp(out.data) * g.sum())
        return run
    return _make(data, "log_softmax", (a,), bw)


def softmax_rows(a):
    x = a.data
    e = np.exp(x - x.max(axis=1, keepdims=True))
    data = e / e.sum(axis=1, keepdims=True)

    def bw(out):
        def run():
            p, g = out.data, out.grad
            _acc(a, p * (g - (g * p).sum(axis=1, keepdims=True)))
        return run
    return _make(data, "softmax_rows", (a,), bw)


# ---------------------------------------------------------------------------
# shaping / reductions / indexing
# ---------------------------------------------------------------------------

def sum_all(a):
    data = np.array([a.data.sum()])

    def bw(out):
        def run():
            _acc(a, np.full_like(a.data, out.grad[0]))
        return run
    return _make(data, "sum_all", (a,), bw)


def sum_rows(a):
    """Sum a (t,k) matrix over rows -> (k,)."""
    data = a.data.sum(axis=0)

    def bw(out):
        def run():
            _acc(a, np.broadcast_to(out.grad, a.data.shape).copy())
        return run
    return _make(data, "sum_rows", (a,), bw)


def pick(a, i):
    """Select element i of a vector -> (1,) tensor."""
    i = int(i)
    data = a.data[i : i + 1].copy()

    def bw(out):
        def run():
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[i] += out.grad[0]
        return run
    return _make(data, "pick", (a,), bw)


def stack_rows(vecs):
    """Stack (k,) tensors into an (n,k) matrix."""
    data = np.stack([v.data for v in vecs], axis=0)

    def bw(out):
        def run():
            for j, v in enumerate(vecs):
                _acc(v, out.grad[j])
        return run
    return _make(data, "stack_rows", tuple(vecs), bw)


def concat_cols(mats):
    """Concatenate (t,ki) matrices along columns."""
    data = np.concatenate([m.data for m in mats], axis=1)
    widths = [m.data.shape[1] for m in mats]

    def bw(out):
        def run():
            j = 0
            for w, m in zip(widths, mats):
                _acc(m, out.grad[:, j : j + w])
                j += w
        return run
    return _make(data, "concat_cols", tuple(mats), bw)


def concat_vecs(vecs):
    data = np.concatenate([v.data for v in vecs])
    sizes = [v.data.shape[0] for v in vecs]

    def bw(out):
        def run():
            j = 0
            for s, v in zip(sizes, vecs):
                _acc(v, out.grad[j : j + s])
                j += s
        return run
    return _make(data, "concat_vecs", tuple(vecs), bw)


def slice_cols(a, j0, j1):
    data = np.ascontiguousarray(a.data[:, j0:j1])

    def bw(out):
        def run():
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[:, j0:j1] += out.grad
        return run
    return _make(data, "slice_cols", (a,), bw)


def squeeze_col(a):
    """(t,1) -> (t,)."""
    if a.data.ndim != 2 or a.data.shape[1] != 1:
        raise ValueError(f"squeeze_col expects (t,1), got {a.data.shape}")
    data = np.ascontiguousarray(a.data[:, 0])

    def bw(out):
        def run():
            _acc(a, out.grad[:, None])
        return run
    return _make(data, "squeeze_col", (a,), bw)


def transpose(a):
    data = np.ascontiguousarray(a.data.T)

    def bw(out):
        def run():
            _acc(a, np.ascontiguousarray(out.grad.T))
        return run
    return _make(data, "transpose", (a,), bw)


def take_row(a, i):
    """Row i of an (n,k) matrix -> (k,)."""
    i = int(i)
    data = a.data[i].copy()

    def bw(out):
        def run():
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[i] += out.grad
        return run
    return _make(data, "take_row", (a,), bw)


def embed_rows(table, ids):
    """Gather rows of a (v,k) table -> (len(ids), k)."""
    idx = np.asarray(ids, dtype=np.intp)
    data = table.data[idx].copy()

    def bw(out):
        def run():
            if table.requires_grad:
                if table.grad is None:
                    table.grad = np.zeros_like(table.data)
                np.add.at(table.grad, idx, out.grad)
        return run
    return _make(data, "embed_rows", (table,), bw)


def weighted_embed_sum(table, ids, weights):
    """sum_j weights[j] * table[ids[j]] -> (k,).

    weights is a constant (len(ids), k) array; rows for padding ids carry
    zero weight so the padding row never contributes values or gradients.
    """
    idx = np.asarray(ids, dtype=np.intp)
    w = np.asarray(weights, dtype=DTYPE)
    data = (w * table.data[idx]).sum(axis=0)

    def bw(out):
        def run():
            if table.requires_grad:
                if table.grad is None:
                    table.grad = np.zeros_like(table.data)
                np.add.at(table.grad, idx, w * out.grad[None, :])
        return run
    return _make(data, "weighted_embed_sum", (table,), bw)


# ---------------------------------------------------------------------------
# fused kernels (backend-switched)
# ---------------------------------------------------------------------------

def affine(x, w, b):
    """x (t,nin) @ w (nin,nout) + b -> (t,nout), via the active kernel backend."""
    k = backend.impl
    data = k.affine_fwd(x.data, w.data, b.data)

    def bw(out):
        def run():
            gx, gw, gb = k.affine_bwd(x.data, w.data, out.grad)
            _acc(x, gx)
            _acc(w, gw)
            _acc(b, gb)
        return run
    return _make(data, "affine", (x, w, b), bw)


def affine_vec(x, w, b):
    """(nin,) @ w + b -> (nout,)."""
    k = backend.impl
    data = k.affine_fwd(x.data[None, :], w.data, b.data)[0]

    def bw(out):
        def run():
            gx, gw, gb = k.affine_bwd(x.data[None, :], w.data, out.grad[None, :])
            _acc(x, gx[0])
            _acc(w, gw)
            _acc(b, gb)
        return run
    return _make(data, "affine_vec", (x, w, b), bw)


def gru_cell(x, h, w, u, b):
    """One GRU step: gates stacked (update, reset, candidate) in w/u/b rows."""
    k = backend.impl
    data, cache = k.gru_cell_fwd(x.data, h.data, w.data, u.data, b.data)

    def bw(out):
        def run():
            gx, gh, gw, gu, gb = k.gru_cell_bwd(w.data, u.data, cache, out.grad)
            _acc(x, gx)
            _acc(h, gh)
            _acc(w, gw)
            _acc(u, gu)
            _acc(b, gb)
        return run
    return _make(data, "gru_cell", (x, h, w, u, b), bw)


def multihead_attention(x, wq, wk, wv, wo, heads):
    """Scaled dot-product self-attention over the rows of x.

    x (t,k); wq/wk/wv/wo (k,k); per head: A = softmax(Q K^T / sqrt(k/heads)),
    o = A V; heads concatenated then projected by wo. Returns (t,k).
    """
    t, kdim = x.data.shape
    if kdim % heads:
        raise ValueError(f"embed dim {kdim} not divisible by {heads} heads")
    dh = kdim // heads
    s = 1.0 / np.sqrt(dh)
    q = _mm(x.data, wq.data)
    kk = _mm(x.data, wk.data)
    v = _mm(x.data, wv.data)
    att = []
    o = np.empty_like(q)
    for hh in range(heads):
        c = slice(hh * dh, (hh + 1) * dh)
        sc = _mm(q[:, c], np.ascontiguousarray(kk[:, c].T)) * s
        e = np.exp(sc - sc.max(axis=1, keepdims=True))
        a = e / e.sum(axis=1, keepdims=True)
        att.append(a)
        o[:, c] = _mm(a, v[:, c])
    data = _mm(o, wo.data)

    def bw(out):
        def run():
            g = out.grad
            _acc(wo, (o[:, :, None] * g[:, None, :]).sum(axis=0))
            go = (g[:, None, :] * wo.data[None, :, :]).sum(axis=2)
            gq = np.zeros_like(q)
            gk = np.zeros_like(kk)
            gv = np.zeros_like(v)
            for hh in range(heads):
                c = slice(hh * dh, (hh + 1) * dh)
                a = att[hh]
                goh = go[:, c]
                ga = _mm(goh, np.ascontiguousarray(v[:, c].T))
                gv[:, c] = _mm(np.ascontiguousarray(a.T), goh)
                gs = a * (ga - (ga * a).sum(axis=1, keepdims=True)) * s
                gq[:, c] = _mm(gs, kk[:, c])
                gk[:, c] = _mm(np.ascontiguousarray(gs.T), q[:, c])
            _acc(wq, (x.data[:, :, None] * gq[:, None, :]).sum(axis=0))
            _acc(wk, (x.data[:, :, None] * gk[:, None, :]).sum(axis=0))
            _acc(wv, (x.data[:, :, None] * gv[:, None, :]).sum(axis=0))
            gx = (gq[:, None, :] * wq.data[None, :, :]).sum(axis=2)
            gx += (gk[:, None, :] * wk.data[None, :, :]).sum(axis=2)
            gx += (gv[:, None, :] * wv.data[None, :, :]).sum(axis=2)
            _acc(x, gx)
        return run
    return _make(data, "multihead_attention", (x, wq, wk, wv, wo), bw)


# ---------------------------------------------------------------------------
# composite conveniences
# ---------------------------------------------------------------------------

def cross_entropy(logits, gold):
    """-log softmax(logits)[gold] as a (1,) tensor."""
    return scale(pick(log_softmax_vec(logits), gold), -1.0)


def entropy_of_logits(logits):
    """Shannon entropy of softmax(logits), as a (1,) tensor."""
    p = softmax_vec(logits)
    lp = log_softmax_vec(logits)
    return scale(sum_all(mul(p, lp)), -1.0)
