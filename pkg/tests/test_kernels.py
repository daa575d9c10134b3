import numpy as np
import pytest

from imagedx.errors import KernelBackendError
from imagedx.nn import kernels, pykernels


def _out_dim(size, k, s):
    return (size - k) // s + 1


CASES = [
    # (n, c, hp, wp, kh, kw, sh, sw)
    (2, 3, 9, 9, 3, 3, 1, 1),
    (1, 4, 12, 10, 3, 3, 2, 2),
    (3, 2, 8, 8, 1, 1, 1, 1),
    (2, 5, 15, 11, 7, 7, 2, 2),
    (1, 1, 6, 6, 2, 2, 2, 2),
]


def _backends():
    names = kernels.available_backends()
    if "cython" not in names:
        pytest.skip("compiled kernels not built")
    return names


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("case", CASES)
def test_im2col_backends_agree(case, dtype):
    _backends()
    n, c, hp, wp, kh, kw, sh, sw = case
    oh, ow = _out_dim(hp, kh, sh), _out_dim(wp, kw, sw)
    xp = np.random.default_rng(0).standard_normal((n, c, hp, wp)).astype(dtype)
    a = pykernels.im2col(xp, kh, kw, sh, sw, oh, ow)
    from imagedx.nn import _ckernels

    b = _ckernels.im2col(xp, kh, kw, sh, sw, oh, ow)
    assert a.dtype == b.dtype == dtype
    assert np.array_equal(a, b)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("case", CASES)
def test_col2im_backends_agree(case, dtype):
    _backends()
    n, c, hp, wp, kh, kw, sh, sw = case
    oh, ow = _out_dim(hp, kh, sh), _out_dim(wp, kw, sw)
    cols = (
        np.random.default_rng(1)
        .standard_normal((n * oh * ow, c * kh * kw))
        .astype(dtype)
    )
    a = pykernels.col2im(cols, n, c, hp, wp, kh, kw, sh, sw, oh, ow)
    from imagedx.nn import _ckernels

    b = _ckernels.col2im(np.ascontiguousarray(cols), n, c, hp, wp, kh, kw, sh, sw, oh, ow)
    # overlapping windows accumulate in different orders across backends
    atol = 1e-12 if dtype == np.float64 else 1e-5
    assert np.allclose(a, b, atol=atol)


@pytest.mark.parametrize("case", CASES)
def test_col2im_is_adjoint_of_im2col(case):
    # independent oracle: for linear maps, <A x, y> == <x, A^T y>
    n, c, hp, wp, kh, kw, sh, sw = case
    oh, ow = _out_dim(hp, kh, sh), _out_dim(wp, kw, sw)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((n, c, hp, wp))
    y = rng.standard_normal((n * oh * ow, c * kh * kw))
    lhs = float(np.sum(kernels.im2col(x, kh, kw, sh, sw, oh, ow) * y))
    rhs = float(np.sum(x * kernels.col2im(y, n, c, hp, wp, kh, kw, sh, sw, oh, ow)))
    assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs))


def test_im2col_known_values():
    # hand-checkable 1x1 input windows: im2col with k=1 is a reshape
    x = np.arange(2 * 3 * 2 * 2, dtype=np.float64).reshape(2, 3, 2, 2)
    cols = kernels.im2col(x, 1, 1, 1, 1, 2, 2)
    assert cols.shape == (8, 3)
    # row for (n=0, i=0, j=0) must list channels in order
    assert cols[0].tolist() == [x[0, 0, 0, 0], x[0, 1, 0, 0], x[0, 2, 0, 0]]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_maxpool_backends_agree(dtype):
    _backends()
    rng = np.random.default_rng(3)
    xp = rng.standard_normal((2, 4, 11, 9)).astype(dtype)
    kh = kw = 3
    sh = sw = 2
    oh, ow = _out_dim(11, 3, 2), _out_dim(9, 3, 2)
    out_a, arg_a = pykernels.maxpool_forward(xp, kh, kw, sh, sw, oh, ow)
    from imagedx.nn import _ckernels

    out_b, arg_b = _ckernels.maxpool_forward(xp, kh, kw, sh, sw, oh, ow)
    assert np.array_equal(out_a, out_b)
    assert np.array_equal(arg_a, arg_b)

    dout = rng.standard_normal(out_a.shape).astype(dtype)
    da = pykernels.maxpool_backward(dout, arg_a, 11, 9, kh, kw, sh, sw)
    db = _ckernels.maxpool_backward(np.ascontiguousarray(dout), arg_b, 11, 9, kh, kw, sh, sw)
    assert np.allclose(da, db, atol=1e-6 if dtype == np.float32 else 0)


def test_maxpool_matches_naive_loop():
    # brute-force oracle
    rng = np.random.default_rng(4)
    xp = rng.standard_normal((1, 2, 7, 7))
    kh = kw = 3
    sh = sw = 2
    oh = ow = 3
    out, arg = kernels.maxpool_forward(xp, kh, kw, sh, sw, oh, ow)
    for c in range(2):
        for i in range(oh):
            for j in range(ow):
                window = xp[0, c, i * 2 : i * 2 + 3, j * 2 : j * 2 + 3]
                assert out[0, c, i, j] == window.max()


def test_set_backend_round_trip():
    prev = kernels.set_backend("python")
    try:
        assert kernels.backend_name() == "python"
        with pytest.raises(KernelBackendError):
            kernels.set_backend("fortran")
    finally:
        kernels.set_backend(prev)


def test_maxpool_argmax_first_win_tie_break():
    xp = np.zeros((1, 1, 4, 4))
    out, arg = kernels.maxpool_forward(xp, 2, 2, 2, 2, 2, 2)
    assert (arg == 0).all()  # all-equal windows pick the first element
    if "cython" in kernels.available_backends():
        from imagedx.nn import _ckernels

        _, arg_c = _ckernels.maxpool_forward(xp, 2, 2, 2, 2, 2, 2)
        assert np.array_equal(arg, arg_c)
