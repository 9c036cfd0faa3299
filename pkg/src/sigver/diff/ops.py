"""Differentiable primitives.

Every op takes/returns :class:`Tensor` and records a backward closure that
returns one gradient per parent (``None`` for parents that need none).  Ops
broadcast like numpy; gradients are summed back to each operand's shape.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, make


class ShapeError(ValueError):
    pass


def _shape_error(op: str, *shapes) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {', '.join(str(tuple(s)) for s in shapes)}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _broadcast_check(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(op, a.shape, b.shape) from None


# ------------------------------------------------------------------ elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("add", a, b)
    return make(a.data + b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("sub", a, b)
    return make(a.data - b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("mul", a, b)
    return make(a.data * b.data, (a, b),
                lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("div", a, b)
    out = a.data / b.data
    return make(out, (a, b),
                lambda g: (_unbroadcast(g / b.data, a.shape),
                           _unbroadcast(-g * out / b.data, b.shape)))


def square(x: Tensor) -> Tensor:
    return make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return make(np.log(x.data), (x,), lambda g: (g / x.data,))


def softplus(x: Tensor) -> Tensor:
    out = np.logaddexp(0.0, x.data).astype(x.dtype)
    sig = 1.0 / (1.0 + np.exp(-x.data))
    return make(out, (x,), lambda g: (g * sig,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient at 0 is 0
    return make(np.maximum(x.data, 0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make(out, (x,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form cannot overflow for either sign
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return make(out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make(out, (x,), backward)


# -------------------------------------------------------------------- reductions


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# ------------------------------------------------------------------- structural


def reshape(x: Tensor, shape) -> Tensor:
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return make(x.data[index], (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise _shape_error("concat", *(t.shape for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make(out, tuple(tensors), backward)


# ------------------------------------------------------------------ linear algebra


def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise _shape_error("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make(out, (a, b), backward)


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``; weight is (in, out)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise _shape_error("affine", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[1],):
        raise _shape_error("affine", x.shape, weight.shape, bias.shape)
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(*lead, weight.shape[1])

    def backward(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = x2.T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(out, parents, backward)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution (cross-correlation) along the time axis.

    x: (..., T, C_in); weight: (K, C_in, C_out); bias: (C_out,).  For even K the
    extra zero goes on the right.
    """
    if weight.ndim != 3 or x.ndim < 2 or x.shape[-1] != weight.shape[1]:
        raise _shape_error("conv1d", x.shape, weight.shape)
    k, c_in, c_out = weight.shape
    if bias is not None and bias.shape != (c_out,):
        raise _shape_error("conv1d", x.shape, weight.shape, bias.shape)
    lead, t = x.shape[:-2], x.shape[-2]
    left = (k - 1) // 2
    xd = x.data.reshape(-1, t, c_in)
    padded = np.pad(xd, ((0, 0), (left, k - 1 - left), (0, 0)))
    # windows: (B, T, C_in, K) -> columns (B*T, K*C_in) with K outer
    cols = np.lib.stride_tricks.sliding_window_view(padded, k, axis=1)
    cols = cols.transpose(0, 1, 3, 2).reshape(-1, k * c_in)
    w2 = weight.data.reshape(k * c_in, c_out)
    out = cols @ w2
    if bias is not None:
        out = out + bias.data
    out = out.reshape(*lead, t, c_out)

    def backward(g):
        g2 = g.reshape(-1, c_out)
        gw = (cols.T @ g2).reshape(k, c_in, c_out)
        gcols = (g2 @ w2.T).reshape(-1, t, k, c_in)
        gpad = np.zeros_like(padded)
        for j in range(k):
            gpad[:, j:j + t, :] += gcols[:, :, j, :]
        gx = gpad[:, left:left + t, :].reshape(x.shape)
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(out, parents, backward)


def maxpool1d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling (stride = window) along axis -2; ties pick the first.

    A trailing remainder shorter than ``window`` is dropped.
    """
    t = x.shape[-2]
    if window < 1 or t < window:
        raise _shape_error("maxpool1d", x.shape)
    keep = (t // window) * window
    lead, c = x.shape[:-2], x.shape[-1]
    blocks = x.data[..., :keep, :].reshape(*lead, keep // window, window, c)
    if window == 2:
        first, second = blocks[..., 0, :], blocks[..., 1, :]
        pick_first = first >= second
        out = np.where(pick_first, first, second)

        def backward(g):
            gx = np.zeros_like(x.data)
            gb = gx[..., :keep, :].reshape(*lead, keep // 2, 2, c)
            gb[..., 0, :] = g * pick_first
            gb[..., 1, :] = g * ~pick_first
            return (gx,)

        return make(out, (x,), backward)

    arg = blocks.argmax(axis=-2)
    out = np.take_along_axis(blocks, arg[..., None, :], axis=-2)[..., 0, :]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None, :], g[..., None, :], axis=-2)
        gx = np.zeros_like(x.data)
        gx[..., :keep, :] = gb.reshape(*lead, keep, c)
        return (gx,)

    return make(out, (x,), backward)


# ---------------------------------------------------------------- normalisation


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise _shape_error("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make(out, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: training mode needs a seeded generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return make(x.data * keep, (x,), lambda g: (g * keep,))


# ------------------------------------------------------------------------ losses


def binary_cross_entropy(p: Tensor, target, eps: float = 1e-7) -> Tensor:
    """Mean BCE of probabilities ``p`` against 0/1 targets (probabilities clipped)."""
    y = np.asarray(getattr(target, "data", target), dtype=p.dtype)
    if y.shape != p.shape:
        raise _shape_error("binary_cross_entropy", p.shape, y.shape)
    q = np.clip(p.data, eps, 1.0 - eps)
    loss = -(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)).mean()
    inside = (p.data > eps) & (p.data < 1.0 - eps)

    def backward(g):
        return (g * inside * (q - y) / (q * (1.0 - q)) / y.size,)

    return make(np.asarray(loss, dtype=p.dtype), (p,), backward)


def binary_cross_entropy_with_logits(z: Tensor, target) -> Tensor:
    """BCE of ``sigmoid(z)``, computed stably from logits."""
    y = np.asarray(getattr(target, "data", target), dtype=z.dtype)
    if y.shape != z.shape:
        raise _shape_error("binary_cross_entropy_with_logits", z.shape, y.shape)
    loss = (np.logaddexp(0.0, z.data) - y * z.data).mean()
    prob = _sigmoid(z.data)
    return make(np.asarray(loss, dtype=z.dtype), (z,), lambda g: (g * (prob - y) / y.size,))


# --------------------------------------------------------------------- recurrence


def gru_scan(xw: Tensor, w_hh: Tensor, b_hh: Tensor) -> Tensor:
    """Run a GRU over time from a zero state and return the final hidden state.

    ``xw`` holds the precomputed input projections ``x @ W_ih + b_ih`` with shape
    (B, T, 3H), gate blocks ordered (update z, reset r, candidate n)::

        z = sigmoid(xz + h Uz + bz);  r = sigmoid(xr + h Ur + br)
        n = tanh(xn + r * (h Un + bn));  h' = (1 - z) * n + z * h

    The backward pass is hand-written BPTT; the unrolled graph would cost T
    separate slicing nodes.
    """
    if xw.ndim != 3 or w_hh.ndim != 2 or w_hh.shape[1] != 3 * w_hh.shape[0] \
            or xw.shape[-1] != w_hh.shape[1] or b_hh.shape != (w_hh.shape[1],):
        raise _shape_error("gru_scan", xw.shape, w_hh.shape, b_hh.shape)
    b, t, h3 = xw.shape
    hid = h3 // 3
    u, bu = w_hh.data, b_hh.data
    h = np.zeros((b, hid), dtype=xw.dtype)
    cache = []
    for step in range(t):
        a = xw.data[:, step]
        gh = h @ u + bu
        z = _sigmoid(a[:, :hid] + gh[:, :hid])
        r = _sigmoid(a[:, hid:2 * hid] + gh[:, hid:2 * hid])
        n = np.tanh(a[:, 2 * hid:] + r * gh[:, 2 * hid:])
        cache.append((h, gh, z, r, n))
        h = (1.0 - z) * n + z * h

    def backward(g):
        gxw = np.empty_like(xw.data)
        gu = np.zeros_like(u)
        gbu = np.zeros_like(bu)
        dh = g
        for step in range(t - 1, -1, -1):
            h_prev, gh, z, r, n = cache[step]
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dn_pre = dn * (1.0 - n * n)
            dr = dn_pre * gh[:, 2 * hid:]
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dgh = np.concatenate([dz_pre, dr_pre, dn_pre * r], axis=1)
            gxw[:, step] = np.concatenate([dz_pre, dr_pre, dn_pre], axis=1)
            gu += h_prev.T @ dgh
            gbu += dgh.sum(axis=0)
            dh = dh * z + dgh @ u.T
        return gxw, gu, gbu

    return make(h, (xw, w_hh, b_hh), backward)
