"""Pure numpy conv1d kernels, used when the compiled extension is unavailable.

Same contract as the compiled module: ``x`` is ``[N, L, C_in]``, ``w`` is
``[K, C_in, C_out]``, everything C-contiguous and of one float dtype.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHUNK_ELEMS = 4194304


def _chunk(l_out, width, nsamples):
    per = l_out * width
    if per <= 0:
        return max(nsamples, 1)
    return max(1, min(CHUNK_ELEMS // per, nsamples))


def _padded(x, pad_left, ksize, l_out):
    n, length, cin = x.shape
    total = l_out + ksize - 1
    xp = np.zeros((n, total, cin), dtype=x.dtype)
    lo = max(0, -pad_left)
    hi = min(length, total - pad_left)
    if hi > lo:
        xp[:, pad_left + lo:pad_left + hi, :] = x[:, lo:hi, :]
    return xp


def _im2col(x, pad_left, ksize, l_out):
    xp = _padded(x, pad_left, ksize, l_out)
    # [n, l_out, cin, k] -> [n, l_out, k, cin]
    view = sliding_window_view(xp, ksize, axis=1)
    cols = np.ascontiguousarray(view.transpose(0, 1, 3, 2))
    return cols.reshape(x.shape[0] * l_out, ksize * x.shape[2])


def _forward(x, w, b, pad_left, l_out, out):
    ksize, cin, cout = w.shape
    w2 = w.reshape(ksize * cin, cout)
    step = _chunk(l_out, ksize * cin, x.shape[0])
    for n0 in range(0, x.shape[0], step):
        n1 = min(n0 + step, x.shape[0])
        cols = _im2col(x[n0:n1], pad_left, ksize, l_out)
        res = cols @ w2
        res += b
        out[n0:n1] = res.reshape(n1 - n0, l_out, cout)


def _backward(x, w, dout, pad_left, dw, db, dx):
    ksize, cin, cout = w.shape
    l_out = dout.shape[1]
    length = x.shape[1]
    w2 = w.reshape(ksize * cin, cout)
    dw2 = dw.reshape(ksize * cin, cout)
    step = _chunk(l_out, ksize * cin, x.shape[0])
    for n0 in range(0, x.shape[0], step):
        n1 = min(n0 + step, x.shape[0])
        d2 = dout[n0:n1].reshape(-1, cout)
        db += d2.sum(axis=0)
        cols = _im2col(x[n0:n1], pad_left, ksize, l_out)
        dw2 += cols.T @ d2
        if dx is not None:
            dcols = (d2 @ w2.T).reshape(n1 - n0, l_out, ksize, cin)
            dxp = np.zeros((n1 - n0, l_out + ksize - 1, cin), dtype=x.dtype)
            for k in range(ksize):
                dxp[:, k:k + l_out, :] += dcols[:, :, k, :]
            lo = max(0, -pad_left)
            hi = min(length, l_out + ksize - 1 - pad_left)
            if hi > lo:
                dx[n0:n1, lo:hi, :] += dxp[:, pad_left + lo:pad_left + hi, :]
