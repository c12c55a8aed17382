"""Minimal dense tensor engine with reverse-mode differentiation.

Scalars are float64 throughout. Every op records its inputs and a backward
rule on the tensors it produces; `backward` replays the recorded ops in exact
reverse execution order (creation sequence), accumulating gradients
additively at fan-out. Shapes must match exactly; there is no broadcasting
beyond what individual ops (conv bias, linear bias) define themselves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KL_EPS = 1e-12

_seq_counter = itertools.count()


class ShapeError(ValueError):
    pass


class GradientError(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    """An op produced NaN/Inf, which violates the engine contract."""


def _check_finite(arr, op_name):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op_name} produced non-finite values")


class Tensor:
    """Dense n-d array node on the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_seq", "_op",
                 "_backward_ran")

    def __init__(self, data, requires_grad=False, _parents=(), _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if _op == "leaf":
            _check_finite(arr, "leaf tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents  # tuple of (Tensor, grad_fn)
        self._seq = next(_seq_counter)
        self._op = _op
        self._backward_ran = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None
        self._backward_ran = False

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, grad={self.requires_grad})"

    # Light operator sugar; heavy ops are module-level functions.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__


def _result(data, parents, op_name):
    """Wrap an op output, keeping grad tracking only where needed."""
    _check_finite(data, op_name)
    req = any(p.requires_grad for p, _ in parents)
    t = Tensor.__new__(Tensor)
    t.data = np.asarray(data, dtype=np.float64)
    t.requires_grad = req
    t.grad = None
    t._parents = tuple(parents) if req else ()
    t._seq = next(_seq_counter)
    t._op = op_name
    t._backward_ran = False
    return t


def backward(loss: Tensor):
    """Populate .grad on every requires_grad tensor reachable from `loss`.

    `loss` must be scalar. Calling backward twice on the same loss without
    zero_grad/reset is an error.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise GradientError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss._backward_ran:
        raise GradientError("backward already ran on this tensor; reset first")
    loss._backward_ran = True

    grads = {id(loss): np.ones_like(loss.data)}
    # Collect reachable grad-requiring subgraph.
    nodes = {}
    stack = [loss]
    seen = set()
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        nodes[id(t)] = t
        for p, _ in t._parents:
            if p.requires_grad:
                stack.append(p)
    # Exact reverse execution order.
    for t in sorted(nodes.values(), key=lambda n: n._seq, reverse=True):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.grad is None:
            t.grad = g.copy()
        else:
            t.grad = t.grad + g
        for p, fn in t._parents:
            if not p.requires_grad:
                continue
            pg = fn(g)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data + b.data, [(a, lambda g: g), (b, lambda g: g)], "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data - b.data, [(a, lambda g: g), (b, lambda g: -g)], "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data * b.data,
                   [(a, lambda g: g * b.data), (b, lambda g: g * a.data)], "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, [(a, lambda g: g * c)], "scale")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient 0 at exactly 0
    return _result(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)], "relu")


def reshape(a: Tensor, shape) -> Tensor:
    in_shape = a.shape
    return _result(a.data.reshape(shape),
                   [(a, lambda g: g.reshape(in_shape))], "reshape")


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (-1,))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a 2D tensor")
    return _result(a.data.T, [(a, lambda g: g.T)], "transpose")


def tsum(a: Tensor, axis=None) -> Tensor:
    in_shape = a.shape

    def back(g):
        if axis is None:
            return np.full(in_shape, g)
        return np.broadcast_to(np.expand_dims(g, axis), in_shape).copy()

    return _result(a.data.sum(axis=axis), [(a, back)], "sum")


def tmean(a: Tensor, axis=None) -> Tensor:
    in_shape = a.shape
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= in_shape[ax]

    def back(g):
        if axis is None:
            return np.full(in_shape, g / n)
        return np.broadcast_to(np.expand_dims(g, axis), in_shape).copy() / n

    return _result(a.data.mean(axis=axis), [(a, back)], "mean")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _result(a.data @ b.data,
                   [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
                   "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor = None) -> Tensor:
    """Affine map: x (N, in) @ w (in, out) + b (out,)."""
    squeeze = x.data.ndim == 1
    x2 = reshape(x, (1, -1)) if squeeze else x
    if x2.shape[1] != w.shape[0]:
        raise ShapeError(f"linear shape mismatch {x.shape} vs {w.shape}")
    out = matmul(x2, w)
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"linear bias shape {b.shape} vs out dim {w.shape[1]}")
        n = out.shape[0]
        out = _result(out.data + b.data,
                      [(out, lambda g: g), (b, lambda g: g.sum(axis=0))],
                      "bias_add")
    return reshape(out, (-1,)) if squeeze else out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return y * (g - dot)

    return _result(y, [(a, back)], "softmax")


# ---------------------------------------------------------------------------
# Convolutions (cross-correlation), 2D and 3D
# ---------------------------------------------------------------------------

def _as_tuple(v, n):
    if isinstance(v, (tuple, list)):
        if len(v) != n:
            raise ShapeError(f"expected {n} values, got {v}")
        return tuple(int(x) for x in v)
    return (int(v),) * n


def _im2col(x, kshape, stride, pad, nsp):
    """Patch matrix (N * prod(out_sp), C * prod(kshape)) plus out_sp."""
    pads = [(0, 0), (0, 0)] + [(p, p) for p in pad]
    xp = np.pad(x, pads)
    win = sliding_window_view(xp, kshape, axis=tuple(range(2, 2 + nsp)))
    sel = (slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)
    win = win[sel]
    out_sp = win.shape[2:2 + nsp]
    # (N, *S_out, C, *K), contiguous, so the matmul below hits BLAS.
    axes = (0,) + tuple(range(2, 2 + nsp)) + (1,) + tuple(range(2 + nsp, 2 + 2 * nsp))
    cols = np.ascontiguousarray(win.transpose(axes))
    return cols.reshape(x.shape[0] * int(np.prod(out_sp)), -1), out_sp


def _spatial_first(arr, nsp):
    """(N, C, *S) -> (N*prod(S), C)."""
    axes = (0,) + tuple(range(2, 2 + nsp)) + (1,)
    return np.ascontiguousarray(arr.transpose(axes)).reshape(-1, arr.shape[1])


def _channels_first(mat, n, out_sp, c):
    """(N*prod(S), C) -> (N, C, *S)."""
    arr = mat.reshape((n,) + tuple(out_sp) + (c,))
    nsp = len(out_sp)
    axes = (0, nsp + 1) + tuple(range(1, nsp + 1))
    return np.ascontiguousarray(arr.transpose(axes))


def _convnd(x: Tensor, k: Tensor, stride, padding, bias, nsp, name):
    if x.data.ndim != nsp + 2 or k.data.ndim != nsp + 2:
        raise ShapeError(f"{name}: expected {nsp + 2}D input/kernel, "
                         f"got {x.shape} / {k.shape}")
    if x.shape[1] != k.shape[1]:
        raise ShapeError(f"{name}: channel mismatch {x.shape[1]} vs {k.shape[1]}")
    stride = _as_tuple(stride, nsp)
    pad = _as_tuple(padding, nsp)
    ksp = k.shape[2:]
    for p, kk in zip(pad, ksp):
        if p > kk - 1:
            raise ShapeError(f"{name}: padding {p} exceeds kernel-1 ({kk - 1})")
    in_sp = x.shape[2:]
    out_sp = tuple((s + 2 * p - kk) // st + 1
                   for s, p, kk, st in zip(in_sp, pad, ksp, stride))
    if any(s < 1 for s in out_sp):
        raise ShapeError(f"{name}: kernel {ksp} too large for input {in_sp} pad {pad}")

    n, c_out = x.shape[0], k.shape[0]
    cols, _ = _im2col(x.data, ksp, stride, pad, nsp)
    kmat = k.data.reshape(c_out, -1)
    out = _channels_first(cols @ kmat.T, n, out_sp, c_out)

    def grad_k(g):
        gmat = _spatial_first(g, nsp)              # (N*S_out, O)
        return (gmat.T @ cols).reshape(k.shape)

    def grad_x(g):
        # Transposed conv: dilate by stride, pad left k-1-p and right
        # k-1-p+r (r = rows the stride floor dropped), then correlate with
        # the spatially flipped kernel with in/out channels swapped.
        dil_sp = tuple((s - 1) * st + 1 for s, st in zip(g.shape[2:], stride))
        gd = np.zeros(g.shape[:2] + dil_sp, dtype=g.dtype)
        sel = (slice(None), slice(None)) + tuple(slice(None, None, st) for st in stride)
        gd[sel] = g
        pads = [(0, 0), (0, 0)]
        for s, p, kk, st in zip(in_sp, pad, ksp, stride):
            q = kk - 1 - p
            r = (s + 2 * p - kk) % st
            pads.append((q, q + r))
        gd = np.pad(gd, pads)
        kf = k.data
        for ax in range(2, 2 + nsp):
            kf = np.flip(kf, axis=ax)
        kf = np.swapaxes(kf, 0, 1)                 # (C, O, *K)
        gcols, gout_sp = _im2col(gd, ksp, (1,) * nsp, (0,) * nsp, nsp)
        gx = gcols @ kf.reshape(x.shape[1], -1).T
        return _channels_first(gx, n, gout_sp, x.shape[1])

    parents = [(x, grad_x), (k, grad_k)]
    if bias is not None:
        if bias.shape != (k.shape[0],):
            raise ShapeError(f"{name}: bias shape {bias.shape} vs {k.shape[0]} channels")
        out = out + bias.data.reshape((1, -1) + (1,) * nsp)
        sum_axes = (0,) + tuple(range(2, 2 + nsp))
        parents.append((bias, lambda g: g.sum(axis=sum_axes)))
    return _result(out, parents, name)


def conv2d(x: Tensor, k: Tensor, stride=1, padding=0, bias: Tensor = None) -> Tensor:
    """2D cross-correlation, x (N,C,H,W), k (O,C,kh,kw)."""
    return _convnd(x, k, stride, padding, bias, 2, "conv2d")


def conv3d(x: Tensor, k: Tensor, stride=1, padding=0, bias: Tensor = None) -> Tensor:
    """3D cross-correlation, x (N,C,D,H,W), k (O,C,kd,kh,kw)."""
    return _convnd(x, k, stride, padding, bias, 3, "conv3d")


# ---------------------------------------------------------------------------
# Attention and KL divergence
# ---------------------------------------------------------------------------

def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V with Q (nq,dk), K (nv,dk), V (nv,dv)."""
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ShapeError("attention expects 2D Q, K, V")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"attention d_k mismatch: Q {q.shape} vs K {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention n_v mismatch: K {k.shape} vs V {v.shape}")
    d_k = q.shape[1]
    scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v)


def _validate_prob(vec, name):
    if vec.ndim != 1:
        raise ShapeError(f"{name} must be a 1D probability vector")
    if (vec < 0).any():
        raise ValueError(f"{name} has negative entries")
    if abs(vec.sum() - 1.0) > 1e-6:
        raise ValueError(f"{name} sums to {vec.sum()}, not 1")


def kl_div(target, pred: Tensor) -> Tensor:
    """Forward KL(target || pred) with eps-clamped pred; 0*log(0/..) = 0."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError(f"kl_div length mismatch {t.shape} vs {pred.shape}")
    _validate_prob(t, "target")
    _validate_prob(pred.data, "pred")
    p = np.maximum(pred.data, KL_EPS)
    active = t > 0
    val = np.where(active, t * np.log(np.maximum(t, KL_EPS) / p), 0.0).sum()

    def back(g):
        # d/dp of t*log(t/p) = -t/p, bounded by the eps clamp so saturated
        # predictions still receive a (large, finite) restoring gradient.
        gp = np.where(active, -t / p, 0.0)
        return g * gp

    return _result(val, [(pred, back)], "kl_div")


# ---------------------------------------------------------------------------
# Gradient verification and Adam
# ---------------------------------------------------------------------------

def finite_diff_check(f, x: Tensor, h: float = 1e-4) -> float:
    """Max relative error between backprop and central-difference gradients.

    `f` maps a Tensor to a scalar Tensor and must rebuild its graph on each
    call. Error per element: |g_bp - g_fd| / max(1, |g_fd|).
    """
    x.zero_grad()
    x.requires_grad = True
    out = f(x)
    backward(out)
    g_bp = x.grad if x.grad is not None else np.zeros_like(x.data)

    base = x.data
    g_fd = np.empty_like(base)
    flat = g_fd.reshape(-1)
    for i in range(base.size):
        pert = base.reshape(-1).copy()
        pert[i] = base.reshape(-1)[i] + h
        fp = f(Tensor(pert.reshape(base.shape))).item()
        pert[i] = base.reshape(-1)[i] - h
        fm = f(Tensor(pert.reshape(base.shape))).item()
        flat[i] = (fp - fm) / (2.0 * h)
    err = np.abs(g_bp - g_fd) / np.maximum(1.0, np.abs(g_fd))
    return float(err.max())


@dataclass
class AdamState:
    """Adam optimizer state for a fixed list of parameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on params' data."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params/grads/state length mismatch")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} vs param {p.data.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
