# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Direct-loop convolution and pooling kernels.

All functions take pre-padded inputs (the dispatch layer owns padding) and
exist in float32 and float64 specializations.  Each convolution kernel
picks between two loop structures based on which axis gives the longer
unit-stride inner loop:

* a width-major path for stride-1 convs with wide outputs (stems and
  early stages), whose inner loops run along the output row;
* a channel-major path for narrow, deep feature maps and all strided
  convs, which transposes the small operands to channels-last once and
  runs the inner loops over output channels.

Reductions split into independent partial sums where the serial
dependency chain would otherwise bind; this reorders floating-point
accumulation, which backend-parity tests must tolerate.
"""

import numpy as np

cimport cython


ctypedef fused floating:
    float
    double


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = (H - kh) // stride + 1
    cdef Py_ssize_t Wo = (W - kw) // stride + 1
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    cdef Py_ssize_t n, o, c, u, v, i, j, row
    cdef floating wv, w0, w1, w2, xv
    cdef floating[:, :, :, ::1] y, wt, tmp

    if stride == 1 and Wo > O:
        out_np = np.zeros((N, O, Ho, Wo), dtype=dtype)
        y = out_np
        with nogil:
            for n in range(N):
                for o in range(O):
                    for i in range(Ho):
                        for c in range(C):
                            for u in range(kh):
                                row = i + u
                                if kw == 3:
                                    w0 = w[o, c, u, 0]
                                    w1 = w[o, c, u, 1]
                                    w2 = w[o, c, u, 2]
                                    for j in range(Wo):
                                        y[n, o, i, j] += (w0 * x[n, c, row, j]
                                                          + w1 * x[n, c, row, j + 1]
                                                          + w2 * x[n, c, row, j + 2])
                                else:
                                    for v in range(kw):
                                        wv = w[o, c, u, v]
                                        for j in range(Wo):
                                            y[n, o, i, j] += wv * x[n, c, row, j + v]
        return out_np

    # Channels-last: accumulate into [N, Ho, Wo, O] so the inner loop is a
    # unit-stride sweep over output channels, then transpose once.
    wt_np = np.ascontiguousarray(np.asarray(w).transpose(1, 2, 3, 0))
    tmp_np = np.zeros((N, Ho, Wo, O), dtype=dtype)
    wt = wt_np
    tmp = tmp_np
    with nogil:
        for n in range(N):
            for c in range(C):
                for u in range(kh):
                    for v in range(kw):
                        for i in range(Ho):
                            row = i * stride + u
                            for j in range(Wo):
                                xv = x[n, c, row, j * stride + v]
                                for o in range(O):
                                    tmp[n, i, j, o] += xv * wt[c, u, v, o]
    return np.ascontiguousarray(tmp_np.transpose(0, 3, 1, 2))


def conv2d_backward_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] w,
                          int stride, Py_ssize_t H, Py_ssize_t W):
    """Gradient w.r.t. the (padded) input of shape [N, C, H, W]."""
    cdef Py_ssize_t N = gy.shape[0], O = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    cdef Py_ssize_t C = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_np = np.zeros((N, C, H, W), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = out_np
    cdef Py_ssize_t n, o, c, u, v, i, j, row, O8
    cdef floating wv, a0, a1, a2, a3, a4, a5, a6, a7
    cdef floating[:, :, :, ::1] wt, gt

    if stride == 1 and Wo > O:
        with nogil:
            for n in range(N):
                for o in range(O):
                    for i in range(Ho):
                        for c in range(C):
                            for u in range(kh):
                                row = i + u
                                for v in range(kw):
                                    wv = w[o, c, u, v]
                                    for j in range(Wo):
                                        gx[n, c, row, j + v] += wv * gy[n, o, i, j]
        return out_np

    # Channels-last: per input position, reduce over output channels with a
    # unit-stride dot split into eight partial sums.
    wt_np = np.ascontiguousarray(np.asarray(w).transpose(1, 2, 3, 0))
    gt_np = np.ascontiguousarray(np.asarray(gy).transpose(0, 2, 3, 1))
    wt = wt_np
    gt = gt_np
    O8 = O - (O & 7)
    with nogil:
        for n in range(N):
            for c in range(C):
                for u in range(kh):
                    for v in range(kw):
                        for i in range(Ho):
                            row = i * stride + u
                            for j in range(Wo):
                                a0 = 0; a1 = 0; a2 = 0; a3 = 0
                                a4 = 0; a5 = 0; a6 = 0; a7 = 0
                                for o in range(0, O8, 8):
                                    a0 += wt[c, u, v, o] * gt[n, i, j, o]
                                    a1 += wt[c, u, v, o + 1] * gt[n, i, j, o + 1]
                                    a2 += wt[c, u, v, o + 2] * gt[n, i, j, o + 2]
                                    a3 += wt[c, u, v, o + 3] * gt[n, i, j, o + 3]
                                    a4 += wt[c, u, v, o + 4] * gt[n, i, j, o + 4]
                                    a5 += wt[c, u, v, o + 5] * gt[n, i, j, o + 5]
                                    a6 += wt[c, u, v, o + 6] * gt[n, i, j, o + 6]
                                    a7 += wt[c, u, v, o + 7] * gt[n, i, j, o + 7]
                                for o in range(O8, O):
                                    a0 += wt[c, u, v, o] * gt[n, i, j, o]
                                gx[n, c, row, j * stride + v] += (
                                    ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7)))
    return out_np


def conv2d_backward_weight(floating[:, :, :, ::1] x, floating[:, :, :, ::1] gy,
                           int stride, Py_ssize_t kh, Py_ssize_t kw):
    """Gradient w.r.t. the kernel, from the padded input and output grad."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t O = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    cdef Py_ssize_t n, o, c, u, v, i, j, row, W4
    cdef floating xv, a0, a1, a2, a3
    cdef floating[:, :, :, ::1] gw, gt, gwt

    if stride == 1 and Wo > O:
        out_np = np.zeros((O, C, kh, kw), dtype=dtype)
        gw = out_np
        W4 = Wo - (Wo & 3)
        with nogil:
            for o in range(O):
                for c in range(C):
                    for u in range(kh):
                        for v in range(kw):
                            a0 = 0; a1 = 0; a2 = 0; a3 = 0
                            for n in range(N):
                                for i in range(Ho):
                                    row = i + u
                                    for j in range(0, W4, 4):
                                        a0 += x[n, c, row, j + v] * gy[n, o, i, j]
                                        a1 += x[n, c, row, j + 1 + v] * gy[n, o, i, j + 1]
                                        a2 += x[n, c, row, j + 2 + v] * gy[n, o, i, j + 2]
                                        a3 += x[n, c, row, j + 3 + v] * gy[n, o, i, j + 3]
                                    for j in range(W4, Wo):
                                        a0 += x[n, c, row, j + v] * gy[n, o, i, j]
                            gw[o, c, u, v] = (a0 + a1) + (a2 + a3)
        return out_np

    # Channels-last: accumulate into [C, kh, kw, O] with a unit-stride sweep
    # over output channels, then transpose the small result once.
    gt_np = np.ascontiguousarray(np.asarray(gy).transpose(0, 2, 3, 1))
    gwt_np = np.zeros((C, kh, kw, O), dtype=dtype)
    gt = gt_np
    gwt = gwt_np
    with nogil:
        for n in range(N):
            for c in range(C):
                for u in range(kh):
                    for v in range(kw):
                        for i in range(Ho):
                            row = i * stride + u
                            for j in range(Wo):
                                xv = x[n, c, row, j * stride + v]
                                for o in range(O):
                                    gwt[c, u, v, o] += xv * gt[n, i, j, o]
    return np.ascontiguousarray(gwt_np.transpose(3, 0, 1, 2))


def max_pool_forward(floating[:, :, :, ::1] x, int size, int stride):
    """Returns (pooled, argmax) with argmax as flat indices into each H*W plane."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H - size) // stride + 1
    cdef Py_ssize_t Wo = (W - size) // stride + 1
    if floating is float:
        out_np = np.empty((N, C, Ho, Wo), dtype=np.float32)
    else:
        out_np = np.empty((N, C, Ho, Wo), dtype=np.float64)
    idx_np = np.empty((N, C, Ho, Wo), dtype=np.int64)
    cdef floating[:, :, :, ::1] y = out_np
    cdef long long[:, :, :, ::1] idx = idx_np
    cdef Py_ssize_t n, c, i, j, u, v, r, q
    cdef floating best, val
    cdef Py_ssize_t best_at
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        best = x[n, c, i * stride, j * stride]
                        best_at = (i * stride) * W + j * stride
                        for u in range(size):
                            r = i * stride + u
                            for v in range(size):
                                q = j * stride + v
                                val = x[n, c, r, q]
                                if val > best:
                                    best = val
                                    best_at = r * W + q
                        y[n, c, i, j] = best
                        idx[n, c, i, j] = best_at
    return out_np, idx_np


def max_pool_backward(floating[:, :, :, ::1] gy, long long[:, :, :, ::1] idx,
                      Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t N = gy.shape[0], C = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    if floating is float:
        out_np = np.zeros((N, C, H * W), dtype=np.float32)
    else:
        out_np = np.zeros((N, C, H * W), dtype=np.float64)
    cdef floating[:, :, ::1] gx = out_np
    cdef Py_ssize_t n, c, i, j
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        gx[n, c, idx[n, c, i, j]] += gy[n, c, i, j]
    return out_np.reshape(N, C, H, W)
