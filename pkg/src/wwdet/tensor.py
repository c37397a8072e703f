"""Dense tensors with reverse-mode automatic differentiation.

The op set is deliberately small: exactly what the residual classifiers
need (convolution, batch norm, activations, pooling, channel split/concat,
fully connected, cross-entropy) plus the arithmetic used by tests.

Storage and compute default to float32.  Every op also accepts float64
inputs so reference paths can run at higher precision; dtypes must not be
mixed within one op.

Gradients are recorded per output tensor as a closure over its parents.
``Graph.trace`` linearizes the recording in topological order and
``backward`` walks it exactly once in reverse.
"""

import threading

import numpy as np

from . import kernels

_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager disabling gradient recording on the current thread."""

    def __enter__(self):
        self._prev = is_grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


class ShapeError(ValueError):
    pass


def _as_array(data, dtype):
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype in (np.float32, np.float64):
        return np.ascontiguousarray(arr)
    return np.ascontiguousarray(arr, dtype=np.float32)


class Tensor:
    """A dense n-d array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd", "_op")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._bwd = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag}, op={self._op})"

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._scalar_error()

    def _scalar_error(self):
        raise ValueError(f"expected a scalar tensor, got shape {self.data.shape}")

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def backward(self):
        backward(self)

    # arithmetic sugar used by tests and the SE gate
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    __radd__ = __add__

    def __neg__(self):
        return mul(self, _wrap(-1.0, self.dtype))

    def __sub__(self, other):
        return add(self, -_wrap(other, self.dtype))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    __rmul__ = __mul__

    def __pow__(self, p):
        return pow_(self, p)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _wrap(value, dtype):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _check_dtypes(op, *tensors):
    dtypes = {t.dtype for t in tensors if t is not None}
    if len(dtypes) > 1:
        raise TypeError(f"{op}: mixed dtypes {sorted(d.name for d in dtypes)}")


def _record(out, op, parents, bwd):
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
        out._op = op
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Sum gradient over axes that were broadcast in the forward."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (a, b) in enumerate(zip(g.shape, shape)) if b == 1 and a != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class OpRecord:
    """One recorded operation: name, input tensors, output tensor."""

    __slots__ = ("op", "inputs", "output")

    def __init__(self, op, inputs, output):
        self.op = op
        self.inputs = inputs
        self.output = output


class Graph:
    """Topologically ordered trace of the operations behind one tensor."""

    def __init__(self, records):
        self.records = records

    @classmethod
    def trace(cls, root):
        order, seen, stack = [], set(), [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or node._bwd is None:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        return cls([OpRecord(t._op, t._parents, t) for t in order])

    def run_backward(self):
        for rec in reversed(self.records):
            if rec.output.grad is not None:
                rec.output._bwd()

    def release(self):
        """Drop closures, parent links, and intermediate gradients.

        The backward closures capture their output tensor, so every
        recorded op is a reference cycle; clearing the links here frees
        the activations by refcount instead of waiting on the garbage
        collector, which cannot see the numpy memory behind the cycle.
        """
        for rec in self.records:
            out = rec.output
            out._bwd = None
            out._parents = ()
            out.grad = None


def backward(loss):
    """Populate d(loss)/d(leaf) for every requires_grad leaf under loss.

    The graph behind ``loss`` is released afterwards: intermediate
    gradients are discarded (leaf gradients stay) and a second backward
    through the same ops is a no-op.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    graph = Graph.trace(loss)
    loss.grad = np.ones_like(loss.data)
    graph.run_backward()
    graph.release()


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a, b):
    _check_dtypes("add", a, b)
    out = Tensor(a.data + b.data)

    def bwd():
        g = out.grad
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, "add", (a, b), bwd)


def mul(a, b):
    _check_dtypes("mul", a, b)
    out = Tensor(a.data * b.data)

    def bwd():
        g = out.grad
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, "mul", (a, b), bwd)


def pow_(a, p):
    p = float(p)
    out = Tensor(a.data ** p)

    def bwd():
        _accum(a, out.grad * p * a.data ** (p - 1.0))

    return _record(out, "pow", (a,), bwd)


def sum_(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd():
        g = out.grad
        if axis is not None and not keepdims:
            axes = (axis,) if np.isscalar(axis) else axis
            g = np.expand_dims(g, tuple(ax % a.data.ndim for ax in axes))
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _record(out, "sum", (a,), bwd)


def mean_(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in ((axis,) if np.isscalar(axis) else axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), _wrap(1.0 / count, a.dtype))


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape))

    def bwd():
        _accum(a, out.grad.reshape(a.data.shape))

    return _record(out, "reshape", (a,), bwd)


# ---------------------------------------------------------------------------
# activations


def relu(a):
    out = Tensor(np.maximum(a.data, 0))

    def bwd():
        _accum(a, out.grad * (a.data > 0))

    return _record(out, "relu", (a,), bwd)


def sigmoid(a):
    x = a.data
    pos = x >= 0
    z = np.empty_like(x)
    z[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    z[~pos] = ex / (1.0 + ex)
    out = Tensor(z)

    def bwd():
        _accum(a, out.grad * z * (1.0 - z))

    return _record(out, "sigmoid", (a,), bwd)


def softmax(a):
    """Softmax over the last axis; rows sum to one."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def bwd():
        g = out.grad
        _accum(a, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _record(out, "softmax", (a,), bwd)


# ---------------------------------------------------------------------------
# structured ops


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation over [N, C, H, W] with zero padding."""
    _check_dtypes("conv2d", x, weight, bias)
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d input: expected 4-d [N,C,H,W], got shape {x.data.shape}")
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d kernel: expected 4-d [O,C,kh,kw], got shape {weight.data.shape}")
    n, c, h, w = x.data.shape
    o, ck, kh, kw = weight.data.shape
    if ck != c:
        raise ShapeError(
            f"conv2d kernel: expected {c} input channels to match input "
            f"{x.data.shape}, got kernel shape {weight.data.shape}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"conv2d kernel: window {kh}x{kw} exceeds padded input "
            f"{h + 2 * padding}x{w + 2 * padding}")
    if bias is not None and bias.data.shape != (o,):
        raise ShapeError(
            f"conv2d bias: expected shape ({o},) to match kernel "
            f"{weight.data.shape}, got {bias.data.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride={stride} padding={padding}")

    y = kernels.conv2d_forward(x.data, weight.data, stride, padding)
    if bias is not None:
        y += bias.data[None, :, None, None]
    out = Tensor(y)

    def bwd():
        g = np.ascontiguousarray(out.grad, dtype=x.data.dtype)
        if x.requires_grad:
            _accum(x, kernels.conv2d_backward_input(g, weight.data, stride, padding, (h, w)))
        if weight.requires_grad:
            _accum(weight, kernels.conv2d_backward_weight(x.data, g, stride, padding, (kh, kw)))
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, "conv2d", parents, bwd)


def max_pool2d(x, size, stride=None, padding=0):
    if x.data.ndim != 4:
        raise ShapeError(f"max_pool2d input: expected 4-d [N,C,H,W], got shape {x.data.shape}")
    stride = size if stride is None else stride
    n, c, h, w = x.data.shape
    if size > h + 2 * padding or size > w + 2 * padding:
        raise ShapeError(
            f"max_pool2d: window {size} exceeds padded input "
            f"{h + 2 * padding}x{w + 2 * padding}")
    y, idx = kernels.max_pool_forward(x.data, size, stride, padding)
    out = Tensor(y)

    def bwd():
        g = np.ascontiguousarray(out.grad, dtype=x.data.dtype)
        _accum(x, kernels.max_pool_backward(g, idx, (h, w), padding))

    return _record(out, "max_pool2d", (x,), bwd)


def global_avg_pool(x):
    """Mean over the spatial axes: [N, C, H, W] -> [N, C]."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool input: expected 4-d, got shape {x.data.shape}")
    _, _, h, w = x.data.shape
    out = Tensor(x.data.mean(axis=(2, 3)))

    def bwd():
        g = out.grad[:, :, None, None] / np.asarray(h * w, dtype=x.data.dtype)
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _record(out, "global_avg_pool", (x,), bwd)


def fully_connected(x, weight, bias=None):
    """Affine map [N, F] @ [F, O] (+ bias[O])."""
    _check_dtypes("fully_connected", x, weight, bias)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(
            f"fully_connected: expected 2-d input and weight, got "
            f"{x.data.shape} and {weight.data.shape}")
    if x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"fully_connected weight: expected shape ({x.data.shape[1]}, O) to match "
            f"input {x.data.shape}, got {weight.data.shape}")
    if bias is not None and bias.data.shape != (weight.data.shape[1],):
        raise ShapeError(
            f"fully_connected bias: expected shape ({weight.data.shape[1]},), "
            f"got {bias.data.shape}")
    y = x.data @ weight.data
    if bias is not None:
        y += bias.data
    out = Tensor(y)

    def bwd():
        g = out.grad
        if x.requires_grad:
            _accum(x, g @ weight.data.T)
        if weight.requires_grad:
            _accum(weight, x.data.T @ g)
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, "fully_connected", parents, bwd)


def split_channels(x, s):
    """Split [N, C, H, W] into s tensors of C/s channels each."""
    if x.data.ndim != 4:
        raise ShapeError(f"split_channels input: expected 4-d, got shape {x.data.shape}")
    c = x.data.shape[1]
    if s < 1 or c % s != 0:
        raise ShapeError(f"split_channels: {c} channels not divisible by s={s}")
    width = c // s
    parts = []
    for i in range(s):
        lo = i * width
        part = Tensor(np.ascontiguousarray(x.data[:, lo:lo + width]))

        def bwd(part=part, lo=lo):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, lo:lo + width] += part.grad

        parts.append(_record(part, f"split_channels[{i}]", (x,), bwd))
    return parts


def concat_channels(parts):
    """Concatenate tensors along the channel axis; inverse of split_channels."""
    _check_dtypes("concat_channels", *parts)
    shapes = {(p.data.shape[0],) + p.data.shape[2:] for p in parts}
    if len(shapes) > 1:
        raise ShapeError(
            f"concat_channels: incompatible part shapes {[p.data.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    offsets = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def bwd():
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(part, out.grad[:, lo:hi])

    return _record(out, "concat_channels", tuple(parts), bwd)


class RunningStats:
    """Per-channel running mean/variance for batch norm eval mode."""

    def __init__(self, channels, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.count = 0

    @property
    def initialized(self):
        return self.count > 0


def batch_norm(x, gamma, beta, stats, training, eps=1e-5, momentum=0.1):
    """Channel-wise batch normalization over [N, C, H, W].

    Train mode normalizes with batch statistics over (N, H, W) and folds
    them into ``stats``; eval mode requires ``stats`` to be initialized.
    """
    _check_dtypes("batch_norm", x, gamma, beta)
    if x.data.ndim != 4:
        raise ShapeError(f"batch_norm input: expected 4-d, got shape {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"batch_norm gamma/beta: expected shape ({c},), got "
            f"{gamma.data.shape} and {beta.data.shape}")
    if eps <= 0:
        raise ValueError(f"batch_norm: eps must be positive, got {eps}")

    dtype = x.data.dtype
    if training:
        count = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        unbiased = var * (count / max(count - 1, 1))
        stats.mean = ((1.0 - momentum) * stats.mean + momentum * mean).astype(stats.mean.dtype)
        stats.var = ((1.0 - momentum) * stats.var + momentum * unbiased).astype(stats.var.dtype)
        stats.count += 1
    else:
        if not stats.initialized:
            raise RuntimeError(
                "batch_norm: eval mode requires running statistics; none recorded yet")
        mean = stats.mean.astype(dtype)
        var = stats.var.astype(dtype)

    inv_std = 1.0 / np.sqrt(var.astype(dtype) + np.asarray(eps, dtype=dtype))
    xhat = (x.data - mean.astype(dtype)[None, :, None, None]) * inv_std[None, :, None, None]
    out = Tensor(xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None])

    def bwd():
        g = out.grad
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        scale = gamma.data[None, :, None, None] * inv_std[None, :, None, None]
        if training:
            m = g.mean(axis=(0, 2, 3), keepdims=True)
            mx = (g * xhat).mean(axis=(0, 2, 3), keepdims=True)
            _accum(x, scale * (g - m - xhat * mx))
        else:
            _accum(x, scale * g)

    return _record(out, "batch_norm", (x, gamma, beta), bwd)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy between row softmax of ``logits`` and int ``labels``."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: expected 2-d logits, got {logits.data.shape}")
    labels = np.asarray(labels)
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise ShapeError(
            f"softmax_cross_entropy labels: expected shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"softmax_cross_entropy: labels out of range [0, {k})")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    rows = np.arange(n)
    losses = lse - z[rows, labels]
    out = Tensor(np.asarray(losses.mean(), dtype=z.dtype))

    def bwd():
        p = np.exp(z - zmax)
        p /= p.sum(axis=1, keepdims=True)
        p[rows, labels] -= 1.0
        _accum(logits, p * (out.grad / n))

    return _record(out, "softmax_cross_entropy", (logits,), bwd)
