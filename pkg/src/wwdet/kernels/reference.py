"""NumPy kernel backend: im2col convolution routed through BLAS.

Same contracts as the compiled backend in ``_fast.pyx``: inputs arrive
pre-padded, dtypes are float32 or float64, outputs are C-contiguous.
"""

import numpy as np

# Cap on the transient im2col buffer; batches are chunked to stay under it.
_IM2COL_BUDGET_BYTES = 64 * 1024 * 1024


def _windows(x, kh, kw, stride):
    """View of shape [N, C, Ho, Wo, kh, kw] over the padded input."""
    v = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return v[:, :, ::stride, ::stride]


def conv2d_forward(x, w, stride):
    n, c, _, _ = x.shape
    o, _, kh, kw = w.shape
    view = _windows(x, kh, kw, stride)
    ho, wo = view.shape[2], view.shape[3]
    cols = c * kh * kw
    wmat = w.reshape(o, cols).T
    out = np.empty((n, ho, wo, o), dtype=x.dtype)
    per_sample = ho * wo * cols * x.dtype.itemsize
    chunk = max(1, _IM2COL_BUDGET_BYTES // max(per_sample, 1))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        block = view[lo:hi].transpose(0, 2, 3, 1, 4, 5).reshape(-1, cols)
        out[lo:hi] = (block @ wmat).reshape(hi - lo, ho, wo, o)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward_input(gy, w, stride, h, wid):
    n, o, ho, wo = gy.shape
    _, c, kh, kw = w.shape
    gx = np.zeros((n, c, h, wid), dtype=gy.dtype)
    gmat = gy.transpose(0, 2, 3, 1).reshape(-1, o)
    for u in range(kh):
        for v in range(kw):
            # [N*Ho*Wo, O] @ [O, C] accumulated into the strided input slice
            contrib = (gmat @ w[:, :, u, v]).reshape(n, ho, wo, c)
            gx[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += (
                contrib.transpose(0, 3, 1, 2))
    return gx


def conv2d_backward_weight(x, gy, stride, kh, kw):
    n, c, _, _ = x.shape
    o, ho, wo = gy.shape[1], gy.shape[2], gy.shape[3]
    gw = np.empty((o, c, kh, kw), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            xv = x[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride]
            gw[:, :, u, v] = np.tensordot(gy, xv, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def max_pool_forward(x, size, stride):
    n, c, h, w = x.shape
    view = _windows(x, size, size, stride)
    ho, wo = view.shape[2], view.shape[3]
    flat = view.reshape(n, c, ho, wo, size * size)
    local = flat.argmax(axis=4)
    y = np.ascontiguousarray(np.take_along_axis(flat, local[..., None], axis=4)[..., 0])
    rows = np.arange(ho)[:, None] * stride + (local // size)
    cols = np.arange(wo)[None, :] * stride + (local % size)
    idx = (rows * w + cols).astype(np.int64)
    return y, idx


def max_pool_backward(gy, idx, h, w):
    n, c = gy.shape[0], gy.shape[1]
    gx = np.zeros((n, c, h * w), dtype=gy.dtype)
    planes = (np.arange(n * c) * (h * w)).reshape(n, c, 1, 1)
    np.add.at(gx.reshape(-1), (idx + planes).ravel(), gy.ravel())
    return gx.reshape(n, c, h, w)
