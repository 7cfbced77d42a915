import numpy as np
import pytest

from oracles import conv1d_loops
from s2pnilm import _pykernels, kernels


def _case(rng, n, length, cin, cout, k):
    x = rng.normal(size=(n, length, cin))
    w = rng.normal(size=(k, cin, cout))
    b = rng.normal(size=cout)
    return x, w, b


@pytest.mark.parametrize("padding", ["same", "valid"])
def test_forward_matches_loops(kernel_backend, padding, rng):
    for _ in range(20):
        n, length, cin, cout = rng.integers(1, 4), rng.integers(3, 20), rng.integers(1, 4), rng.integers(1, 5)
        k = int(rng.integers(1, length + 1))
        x, w, b = _case(rng, n, length, cin, cout, k)
        pad, l_out = ((k - 1) // 2, length) if padding == "same" else (0, length - k + 1)
        got = kernels.conv1d_forward(x, w, b, pad, l_out)
        for i in range(n):
            np.testing.assert_allclose(got[i], conv1d_loops(x[i], w, b, padding), rtol=1e-12, atol=1e-12)


def test_backward_matches_autograd_by_linearity(kernel_backend, rng):
    # the conv is linear in x and w, so <dout, conv(x, w)> has exact gradients
    for dtype, tol in ((np.float64, 1e-10), (np.float32, 1e-4)):
        x, w, b = _case(rng, 3, 17, 2, 4, 5)
        x, w, b = x.astype(dtype), w.astype(dtype), b.astype(dtype)
        dout = rng.normal(size=(3, 17, 4)).astype(dtype)
        dx, dw, db = kernels.conv1d_backward(x, w, dout, 2)
        np.testing.assert_allclose(db, dout.sum(axis=(0, 1)), rtol=tol)
        for k in range(5):
            for c in range(2):
                for o in range(4):
                    e = np.zeros_like(w)
                    e[k, c, o] = 1
                    ref = np.sum(dout * kernels.conv1d_forward(x, e, np.zeros_like(b), 2, 17))
                    assert dw[k, c, o] == pytest.approx(ref, rel=tol, abs=tol)
        xs = np.zeros_like(x)
        xs[1, 4, 1] = 1
        ref = np.sum(dout * kernels.conv1d_forward(xs, w, np.zeros_like(b), 2, 17))
        assert dx[1, 4, 1] == pytest.approx(ref, rel=tol, abs=tol)


def test_backward_without_dx(kernel_backend, rng):
    x, w, b = _case(rng, 2, 9, 1, 3, 4)
    dout = rng.normal(size=(2, 6, 3))
    dx, dw, db = kernels.conv1d_backward(x, w, dout, 0, need_dx=False)
    assert dx is None
    _, dw2, db2 = kernels.conv1d_backward(x, w, dout, 0)
    np.testing.assert_array_equal(dw, dw2)


@pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")
def test_backends_agree(rng):
    x, w, b = _case(rng, 64, 99, 16, 16, 7)
    x, w, b = x.astype(np.float32), w.astype(np.float32), b.astype(np.float32)
    dout = rng.normal(size=(64, 99, 16)).astype(np.float32)
    a = kernels.conv1d_forward(x, w, b, 3, 99, impl="compiled")
    p = kernels.conv1d_forward(x, w, b, 3, 99, impl="python")
    np.testing.assert_allclose(a, p, rtol=1e-4, atol=1e-4)
    for ga, gp in zip(kernels.conv1d_backward(x, w, dout, 3, impl="compiled"),
                      kernels.conv1d_backward(x, w, dout, 3, impl="python")):
        np.testing.assert_allclose(ga, gp, rtol=1e-3, atol=1e-3)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("gpu")


def test_python_fallback_is_always_registered():
    assert kernels.BACKENDS["python"] is _pykernels


def test_read_only_inputs(kernel_backend):
    x = np.ones((1, 5, 1), dtype=np.float32)
    w = np.ones((3, 1, 2), dtype=np.float32)
    for a in (x, w):
        a.flags.writeable = False
    out = kernels.conv1d_forward(x, w, np.zeros(2, dtype=np.float32), 1, 5)
    assert out[0, :, 0].tolist() == [2, 3, 3, 3, 2]
    _, dw, _ = kernels.conv1d_backward(x, w, np.ones((1, 5, 2), dtype=np.float32), 1)
    assert dw[:, 0, 0].tolist() == [4, 5, 4]


def test_env_var_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, S2PNILM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from s2pnilm import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
