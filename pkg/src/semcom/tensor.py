"""Dense float32 tensors with reverse-mode autodiff, Adam, and checkpoints.

Every trainable piece of the pipeline is built from the ops in this module.
Arrays are numpy; ops keep the dtype of their inputs so that ``grad_check``
can re-run a graph in float64 while ordinary training stays in float32.
"""

from __future__ import annotations

import contextlib
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (frozen inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor._from_op(self.data, (), None)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return index_select(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    """A named leaf tensor that always requires grad."""

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _lift(x):
    if isinstance(x, Tensor):
        return x
    return Tensor._from_op(np.asarray(x, dtype=DTYPE), (), None)


def _unbroadcast(grad, shape):
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor._from_op(a.data + b.data, (a, b), backward)


def neg(a):
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(ad * bd, (a, b), backward)


def relu(x):
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """tanh-approximated GELU."""
    d = x.data
    inner = _GELU_C * (d + 0.044715 * d**3)
    t = np.tanh(inner)
    out = 0.5 * d * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * d**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * dinner),)

    return Tensor._from_op(out.astype(d.dtype), (x,), backward)


def sigmoid(x):
    d = x.data
    out = (0.5 * (1.0 + np.tanh(0.5 * d))).astype(d.dtype)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------------------
# shape


def reshape(x, shape):
    old = x.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes=None):
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor._from_op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def swapaxes(x, a1, a2):
    return Tensor._from_op(np.swapaxes(x.data, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),))


def index_select(x, index):
    shape, dtype = x.shape, x.data.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return Tensor._from_op(x.data[index], (x,), backward)


def concat(tensors, axis):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


# ---------------------------------------------------------------------------
# reductions (accumulate in float64)


def tsum(x, axis=None, keepdims=False):
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.data.dtype)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(x.data.dtype),)

    return Tensor._from_op(np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims=False):
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Batched matmul over the last two axes; leading axes broadcast."""
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return Tensor._from_op(ad @ bd, (a, b), backward)


# ---------------------------------------------------------------------------
# normalisation and probabilities


def layer_norm(x, gamma, beta, axis=-1, eps=1e-5):
    """Normalise along ``axis``; gamma/beta must broadcast against x."""
    d = x.data
    mu = d.mean(axis=axis, keepdims=True, dtype=np.float64).astype(d.dtype)
    xc = d - mu
    var = (xc * xc).mean(axis=axis, keepdims=True, dtype=np.float64).astype(d.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = d.shape[axis]
    gd = gamma.data

    def backward(g):
        ggamma = _unbroadcast(g * xhat, gd.shape) if gamma.requires_grad else None
        gbeta = _unbroadcast(g, beta.shape) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gh = g * gd
            gx = (inv / n) * (
                n * gh
                - gh.sum(axis=axis, keepdims=True)
                - xhat * (gh * xhat).sum(axis=axis, keepdims=True)
            )
        return gx, ggamma, gbeta

    out = xhat * gd + beta.data
    return Tensor._from_op(out.astype(d.dtype), (x, gamma, beta), backward)


def _stable_softmax(d, axis):
    e = np.exp(d - d.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    """Softmax along ``axis`` with max subtraction."""
    x = _lift(x)
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"axis {axis} out of range for shape {x.shape}")
    s = _stable_softmax(x.data, axis)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(s, (x,), backward)


def log_softmax(x, axis=-1):
    d = x.data
    m = d.max(axis=axis, keepdims=True)
    lse = m + np.log(np.exp(d - m).sum(axis=axis, keepdims=True))
    out = d - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward)


def cross_entropy(logits, target):
    """Mean of -log softmax(logits)[target].

    ``logits`` is (C,) with an int target or (B, C) with B targets.
    """
    logits = _lift(logits)
    num_classes = logits.shape[-1]
    t = np.atleast_1d(np.asarray(target))
    if t.dtype.kind not in "iu" or np.any(t < 0) or np.any(t >= num_classes):
        raise ValueError(f"target {target!r} out of range for {num_classes} classes")
    lp = log_softmax(logits, axis=-1)
    if logits.ndim == 1:
        return neg(lp[int(t[0])])
    picked = lp[np.arange(len(t)), t]
    return neg(mean(picked))


def weighted_squared_error(pred, target, weight):
    """sum(weight * (pred - target)**2); target and weight are constants."""
    diff = pred.data - np.asarray(target, dtype=pred.data.dtype)
    w = np.asarray(weight, dtype=pred.data.dtype)
    wd = w * diff
    out = np.asarray((wd * diff).sum(dtype=np.float64), dtype=pred.data.dtype)
    return Tensor._from_op(out, (pred,), lambda g: (2.0 * g * wd,))


# ---------------------------------------------------------------------------
# convolutions (NCHW, square kernels)


def _im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * k * k, ho * wo), ho, wo


def _col2im(cols, shape, k, stride, pad, ho, wo):
    n, c, h, w = shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return out


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """x (N, Cin, H, W), weight (Cout, Cin, k, k), bias (Cout,)."""
    xd, wd = x.data, weight.data
    cout, cin, k, _ = wd.shape
    if xd.ndim != 4 or xd.shape[1] != cin:
        raise ValueError(f"conv2d: input {xd.shape} incompatible with weight {wd.shape}")
    cols, ho, wo = _im2col(xd, k, stride, padding)
    wmat = wd.reshape(cout, -1)
    out = (wmat @ cols).reshape(len(xd), cout, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)

    def backward(g):
        g2 = g.reshape(len(xd), cout, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            gx = _col2im(wmat.T @ g2, xd.shape, k, stride, padding, ho, wo)
        if weight.requires_grad:
            gw = np.einsum("nop,nkp->ok", g2, cols).reshape(wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward)


def conv_transpose2d(x, weight, bias=None, stride=1, padding=0):
    """Adjoint of conv2d. x (N, Cin, H, W), weight (Cin, Cout, k, k).

    Output extent is (H - 1) * stride - 2 * padding + k.
    """
    xd, wd = x.data, weight.data
    cin, cout, k, _ = wd.shape
    if xd.ndim != 4 or xd.shape[1] != cin:
        raise ValueError(f"conv_transpose2d: input {xd.shape} incompatible with weight {wd.shape}")
    n, _, h, w = xd.shape
    ho = (h - 1) * stride - 2 * padding + k
    wo = (w - 1) * stride - 2 * padding + k
    wmat = wd.reshape(cin, cout * k * k)
    xflat = xd.reshape(n, cin, h * w)
    cols = wmat.T @ xflat
    out = _col2im(cols, (n, cout, ho, wo), k, stride, padding, h, w)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)

    def backward(g):
        gcols, _, _ = _im2col(g, k, stride, padding)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (wmat @ gcols).reshape(xd.shape)
        if weight.requires_grad:
            gw = np.einsum("nip,nkp->ik", xflat, gcols).reshape(wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward)


# ---------------------------------------------------------------------------
# gradient checking


class NumericalError(ArithmeticError):
    pass


def grad_check(f, inputs, eps=1e-3, floor=1e-6):
    """Compare reverse-mode gradients of ``f(*inputs)`` with finite differences.

    The numerical derivative is the five-point central difference with step
    ``eps`` (truncation error O(eps^4)), and the graph is evaluated in float64
    (inputs are temporarily upcast), so the comparison measures the backward
    rules rather than stencil or float32 error. Per coordinate the error is
    |a - n| / max(|a|, |n|, floor). Returns the maximum over all coordinates.
    """
    inputs = list(inputs)
    saved = [(t.data, t.requires_grad, t.grad) for t in inputs]

    def value():
        v = float(f(*inputs).data)
        if not math.isfinite(v):
            raise NumericalError("grad_check: f is not finite near the input")
        return v

    try:
        for t in inputs:
            t.data = t.data.astype(np.float64)
            t.requires_grad = True
            t.grad = None
        out = f(*inputs)
        if out.data.size != 1 or not np.isfinite(out.data).all():
            raise NumericalError("grad_check: f must return a finite scalar")
        out.backward()
        analytic = [np.zeros_like(t.data) if t.grad is None else t.grad for t in inputs]

        worst = 0.0
        with no_grad():
            for t, a in zip(inputs, analytic):
                flat = t.data.reshape(-1)
                num = np.empty(flat.size)
                for i in range(flat.size):
                    orig = flat[i]
                    samples = []
                    for k in (2, 1, -1, -2):
                        flat[i] = orig + k * eps
                        samples.append(value())
                    flat[i] = orig
                    p2, p1, m1, m2 = samples
                    num[i] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps)
                af = a.reshape(-1)
                denom = np.maximum(np.maximum(np.abs(af), np.abs(num)), floor)
                if flat.size:
                    worst = max(worst, float(np.max(np.abs(af - num) / denom)))
        return worst
    finally:
        for t, (d, rg, g) in zip(inputs, saved):
            t.data, t.requires_grad, t.grad = d, rg, g


# ---------------------------------------------------------------------------
# modules


class Module:
    """Container whose Parameter / Module attributes form a named tree."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=DTYPE)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def name_parameters(self):
        """Stamp each Parameter with its dotted path (used by checkpoints)."""
        for name, p in self.named_parameters():
            p.name = name
        return self


def normal_param(rng, shape, std=0.02):
    return Parameter(rng.normal(0.0, std, size=shape))


def zeros_param(shape):
    return Parameter(np.zeros(shape))


def ones_param(shape):
    return Parameter(np.ones(shape))


def parameter_checksum(module):
    """Order-sensitive digest of all parameter bytes."""
    import hashlib

    h = hashlib.sha256()
    for name, p in module.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def init(cls, params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            m=[np.zeros(p.shape) for p in params],
            v=[np.zeros(p.shape) for p in params],
        )


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params, grads and state lengths differ")
    for p, g, m in zip(params, grads, state.m):
        if g is not None and np.shape(g) != p.shape or m.shape != p.shape:
            raise ValueError(f"adam_step: shape mismatch for {getattr(p, 'name', '?')}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = 0.0
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype)
    return params, state


class Adam:
    def __init__(self, params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState.init(self.params, lr, beta1, beta2, eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state)


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"SEMC"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_parameters(path, named_params):
    """Write (name, Parameter | ndarray) pairs in the SEMC layout."""
    items = list(named_params.items() if isinstance(named_params, dict) else named_params)
    chunks = [CKPT_MAGIC, struct.pack("<HI", CKPT_VERSION, len(items))]
    for name, value in items:
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def load_parameters(path):
    """Return an ordered dict name -> float32 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CKPT_MAGIC or len(buf) < 10:
        raise CheckpointError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack_from("<HI", buf, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 10
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", buf, off)
            off += 4 * rank
            nbytes = 4 * int(np.prod(shape, dtype=np.int64))
            if off + nbytes > len(buf):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=off).reshape(shape).astype(DTYPE)
            off += nbytes
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return out


def save_module(module, path):
    save_parameters(path, list(module.named_parameters()))


def load_module(module, path):
    module.load_state_dict(load_parameters(path))
    return module
