"""Numpy reference implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable; they
are also the correctness reference the compiled kernels are tested against.

Matrix products here deliberately avoid BLAS: a broadcast multiply followed by
``.sum(axis=...)`` reduces sequentially for small inner dimensions, which keeps
the forward results bit-identical to a plain scalar loop (and therefore to the
compiled kernels, which are written as plain loops).
"""

import numpy as np


def _mm(a, b):
    """a (m,n) @ b (n,p) with loop-order rounding."""
    return (a[:, :, None] * b[None, :, :]).sum(axis=1)


def _mv(a, x):
    """a (m,n) @ x (n,) with loop-order rounding."""
    return (a * x[None, :]).sum(axis=1)


def affine_fwd(x, w, b):
    """y = x @ w + b for x (t, nin), w (nin, nout), b (nout,)."""
    return _mm(x, w) + b[None, :]


def affine_bwd(x, w, gy):
    gx = (gy[:, None, :] * w[None, :, :]).sum(axis=2)
    gw = (x[:, :, None] * gy[:, None, :]).sum(axis=0)
    gb = gy.sum(axis=0)
    return gx, gw, gb


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    with np.errstate(over="ignore"):
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        ea = np.exp(a[~pos])
        out[~pos] = ea / (1.0 + ea)
    return out


def gru_cell_fwd(x, h, w, u, b):
    """One GRU step.

    x (nin,), h (nh,); w (3*nh, nin), u (3*nh, nh), b (3*nh,) hold the update,
    reset and candidate gates stacked in that order. Returns (h_new, cache).
    """
    nh = h.shape[0]
    # z and r read h directly; the candidate block sees r*h instead.
    a = _mv(w, x) + b
    a[: 2 * nh] += _mv(u[: 2 * nh], h)
    zr = _sigmoid(a[: 2 * nh])
    z, r = zr[:nh], zr[nh:]
    rh = r * h
    an = a[2 * nh :] + _mv(u[2 * nh :], rh)
    n = np.tanh(an)
    h_new = (1.0 - z) * n + z * h
    cache = (x, h, z, r, n, rh)
    return h_new, cache


def gru_cell_bwd(w, u, cache, g):
    """Gradients of one GRU step given g = dL/dh_new."""
    x, h, z, r, n, rh = cache
    nh = h.shape[0]
    dz = g * (h - n)
    dn = g * (1.0 - z)
    gh = g * z
    dan = dn * (1.0 - n * n)
    drh = (u[2 * nh :] * dan[:, None]).sum(axis=0)
    dr = drh * h
    gh = gh + drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    da = np.concatenate([daz, dar, dan])
    gx = (w * da[:, None]).sum(axis=0)
    gw = da[:, None] * x[None, :]
    gu = np.empty_like(u)
    gu[: 2 * nh] = da[: 2 * nh, None] * h[None, :]
    gu[2 * nh :] = dan[:, None] * rh[None, :]
    gh = gh + (u[: 2 * nh] * da[: 2 * nh, None]).sum(axis=0)
    gb = da
    return gx, gh, gw, gu, gb
