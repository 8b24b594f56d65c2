import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from downscaler import kernels

needs_ext = pytest.mark.skipif("ext" not in kernels.available_backends(),
                               reason="compiled kernels not built")


def test_backend_is_named():
    assert kernels.BACKEND in kernels.available_backends()


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_impl("gpu")


@needs_ext
@settings(max_examples=40, deadline=None)
@given(b=st.integers(1, 3), c=st.integers(1, 4), o=st.integers(1, 4), h=st.integers(3, 9),
       w=st.integers(3, 9), k=st.sampled_from([1, 3, 5]), same=st.booleans(),
       dtype=st.sampled_from([np.float32, np.float64]), seed=st.integers(0, 2**16))
def test_ext_matches_numpy(b, c, o, h, w, k, same, dtype, seed):
    if not same and (h < k or w < k):
        return
    rng = np.random.default_rng(seed)
    pad = k // 2 if same else 0
    x = rng.standard_normal((b, c, h, w)).astype(dtype)
    wt = rng.standard_normal((o, c, k, k)).astype(dtype)
    bias = rng.standard_normal(o).astype(dtype)
    tol = 1e-4 if dtype == np.float32 else 1e-12
    fe = kernels.conv2d_forward(x, wt, bias, pad, backend="ext")
    fp = kernels.conv2d_forward(x, wt, bias, pad, backend="python")
    assert fe.dtype == fp.dtype == dtype
    np.testing.assert_allclose(fe, fp, rtol=tol, atol=tol)
    g = rng.standard_normal(fe.shape).astype(dtype)
    for a, bb in zip(kernels.conv2d_backward(x, wt, g, pad, backend="ext"),
                     kernels.conv2d_backward(x, wt, g, pad, backend="python")):
        np.testing.assert_allclose(a, bb, rtol=tol, atol=tol)


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_backends_deterministic(backend, rng):
    x = rng.standard_normal((4, 3, 8, 8)).astype(np.float32)
    w = rng.standard_normal((5, 3, 3, 3)).astype(np.float32)
    g = rng.standard_normal((4, 5, 8, 8)).astype(np.float32)
    a = kernels.conv2d_backward(x, w, g, 1, backend=backend)
    b = kernels.conv2d_backward(x.copy(), w.copy(), g.copy(), 1, backend=backend)
    for u, v in zip(a, b):
        assert u.tobytes() == v.tobytes()


def test_non_contiguous_input_accepted(rng):
    x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)[:, :, ::-1, :]
    w = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
    out = kernels.conv2d_forward(x, w, np.zeros(2, np.float32), 1)
    ref = kernels.conv2d_forward(np.ascontiguousarray(x), w, np.zeros(2, np.float32), 1)
    np.testing.assert_array_equal(out, ref)
