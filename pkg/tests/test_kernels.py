"""Backend parity: the compiled kernels and the NumPy reference must agree
to float tolerance on every routine, for both dtypes, across a shape grid."""

import numpy as np
import pytest

import oracles
from wwdet import kernels

try:
    from wwdet.kernels import _fast                      # noqa: F401
    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False

needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernels not built")


@pytest.fixture
def both_backends():
    """Restore whatever backend was active before the test."""
    before = kernels.backend()
    yield
    kernels.set_backend(before)


def run_conv(backend, x, w, stride, padding):
    kernels.set_backend(backend)
    y = kernels.conv2d_forward(x, w, stride, padding)
    gy = np.ones_like(y)
    gx = kernels.conv2d_backward_input(gy, w, stride, padding, x.shape[2:])
    gw = kernels.conv2d_backward_weight(x, gy, stride, padding, w.shape[2:])
    return y, gx, gw


GRID = [
    # n, c, h, w, o, k, stride, padding
    (1, 1, 5, 5, 1, 1, 1, 0),
    (2, 3, 8, 7, 4, 3, 1, 1),     # wide output row: width-major compiled path
    (2, 2, 9, 9, 3, 3, 2, 1),
    (1, 4, 11, 6, 2, 5, 3, 2),
    (3, 1, 7, 12, 5, 7, 2, 3),
    (2, 3, 6, 6, 8, 3, 1, 1),     # deep narrow output: channel-major path
    (1, 2, 6, 7, 11, 3, 1, 1),    # channel count not a multiple of the unroll
]


@needs_cython
@pytest.mark.parametrize("n,c,h,w,o,k,stride,padding", GRID)
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_conv_backends_agree(both_backends, n, c, h, w, o, k, stride, padding, dtype):
    rng = np.random.default_rng(hash((n, c, h, w, o, k)) % 2**32)
    x = rng.standard_normal((n, c, h, w)).astype(dtype)
    wt = rng.standard_normal((o, c, k, k)).astype(dtype)
    fast = run_conv("cython", x, wt, stride, padding)
    ref = run_conv("numpy", x, wt, stride, padding)
    for a, b in zip(fast, ref):
        assert a.dtype == b.dtype == dtype
        assert oracles.rel_err(a, b) <= 1e-6


@needs_cython
@pytest.mark.parametrize("size,stride,padding", [(2, 2, 0), (3, 1, 0), (3, 2, 1)])
def test_pool_backends_agree(both_backends, size, stride, padding):
    rng = np.random.default_rng(99)
    x = rng.standard_normal((2, 3, 10, 9)).astype(np.float32)

    kernels.set_backend("cython")
    y1, i1 = kernels.max_pool_forward(x, size, stride, padding)
    g1 = kernels.max_pool_backward(np.ones_like(y1), i1, x.shape[2:], padding)
    kernels.set_backend("numpy")
    y2, i2 = kernels.max_pool_forward(x, size, stride, padding)
    g2 = kernels.max_pool_backward(np.ones_like(y2), i2, x.shape[2:], padding)

    assert np.array_equal(y1, y2)
    assert np.array_equal(i1, i2)          # identical argmax tie-breaking
    assert np.array_equal(g1, g2)


@needs_cython
def test_pool_tie_break_is_first_flat_index(both_backends):
    x = np.zeros((1, 1, 4, 4), dtype=np.float32)
    for name in ("cython", "numpy"):
        kernels.set_backend(name)
        _, idx = kernels.max_pool_forward(x, 2, 2)
        assert idx.reshape(-1).tolist() == [0, 2, 8, 10]


def test_numpy_conv_matches_loop_oracle(both_backends):
    kernels.set_backend("numpy")
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 9, 8)).astype(np.float64)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float64)
    got = kernels.conv2d_forward(x, w, 2, 1)
    assert oracles.rel_err(got, oracles.naive_conv2d(x, w, 2, 1)) <= 1e-12


def test_backend_switching(both_backends):
    kernels.set_backend("numpy")
    assert kernels.backend() == "numpy"
    kernels.set_backend("auto")
    assert kernels.backend() in ("cython", "numpy")
    with pytest.raises(ValueError, match="unknown kernel backend"):
        kernels.set_backend("fortran")


def test_output_shape_helper():
    assert kernels.conv_output_hw(9, 9, 3, 3, 2, 1) == (5, 5)
    assert kernels.conv_output_hw(7, 7, 7, 7, 1, 0) == (1, 1)
