"""Independent reference implementations used as test oracles.

Everything here is written straight from the defining formulas (explicit
loops, float64) with no code shared with the package internals.
"""

import numpy as np


def naive_conv2d(x, w, stride=1, padding=0):
    """Direct 7-loop cross-correlation in float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        h, wd = h + 2 * padding, wd + 2 * padding
    oh = (h - kh) // stride + 1
    ow = (wd - kw) // stride + 1
    y = np.zeros((n, o, oh, ow))
    for ni in range(n):
        for oi in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += (x[ni, ci, i * stride + u, j * stride + v]
                                        * w[oi, ci, u, v])
                    y[ni, oi, i, j] = acc
    return y


def naive_max_pool(x, size, stride, padding=0):
    x = np.asarray(x, dtype=np.float64)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   constant_values=-np.inf)
    n, c, h, w = x.shape
    oh = (h - size) // stride + 1
    ow = (w - size) // stride + 1
    y = np.zeros((n, c, oh, ow))
    for ni in range(n):
        for ci in range(c):
            for i in range(oh):
                for j in range(ow):
                    y[ni, ci, i, j] = x[ni, ci,
                                        i * stride:i * stride + size,
                                        j * stride:j * stride + size].max()
    return y


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(b).max(), floor) if b.size else floor
    return float(np.abs(a - b).max() / denom)


def fd_gradient(f, array, coords, h=1e-3):
    """Central finite differences of scalar f at selected flat coordinates."""
    flat = array.reshape(-1)
    grads = np.zeros(len(coords))
    for k, idx in enumerate(coords):
        orig = flat[idx]
        flat[idx] = orig + h
        hi = f()
        flat[idx] = orig - h
        lo = f()
        flat[idx] = orig
        grads[k] = (hi - lo) / (2.0 * h)
    return grads


def hierarchy_reference(xs, branch_fns):
    """Literal hierarchy transcription: y1 = x1, y2 = K2(x2),
    y_i = K_i(x_i + y_{i-1}) for 2 < i <= s."""
    s = len(xs)
    ys = [xs[0]]
    y2 = branch_fns[0](xs[1])
    ys.append(y2)
    prev = y2
    for i in range(3, s + 1):
        prev = branch_fns[i - 2](xs[i - 1] + prev)
        ys.append(prev)
    return ys


def se_reference(x, w1, b1, w2, b2):
    """Straight-line squeeze-excitation in float64."""
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.mean(axis=(2, 3))                       # [N, C]
    hidden = np.maximum(squeezed @ w1 + b1, 0.0)
    gates = 1.0 / (1.0 + np.exp(-(hidden @ w2 + b2)))
    return x * gates[:, :, None, None]


def resize_reference(values, target):
    """Per-column align-corners linear interpolation in float64."""
    v = np.asarray(values, dtype=np.float64)
    frames = v.shape[1]
    out = np.zeros((v.shape[0], target))
    for i in range(target):
        src = i * (frames - 1) / (target - 1)
        lo = int(np.floor(src))
        if lo >= frames - 1:
            lo = frames - 2
        frac = src - lo
        out[:, i] = v[:, lo] * (1.0 - frac) + v[:, lo + 1] * frac
    return out


def adam_reference(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, w0=0.0):
    """Scalar Adam trajectory from the update equations."""
    w, m, v = float(w0), 0.0, 0.0
    path = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        w -= lr * mhat / (np.sqrt(vhat) + eps)
        path.append(w)
    return path


def cast_model_f64(model):
    """Flip a model's parameters and running stats to float64, in place."""
    for p in model.parameters():
        p.data = p.data.astype(np.float64)
    for _, rs in model.named_stats():
        rs.mean = rs.mean.astype(np.float64)
        rs.var = rs.var.astype(np.float64)
    return model
