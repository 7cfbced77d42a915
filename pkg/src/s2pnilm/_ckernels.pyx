# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled conv1d kernels.

Both kernels build an im2col buffer sample-chunk by sample-chunk and hand the
contraction to BLAS through scipy's Cython bindings. Arrays are C-contiguous,
row-major; the row-major product is mapped onto column-major gemm by swapping
operands.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()

# Elements per im2col chunk; keeps the scratch buffer around 16 MB for float32.
cdef Py_ssize_t CHUNK_ELEMS = 4194304
cdef char NOTRANS = 78  # 'N'
cdef char TRANS = 84  # 'T'


cdef inline void _gemm_rm(char transa, char transb, int m, int n, int k,
                          floating alpha, floating *a, int lda,
                          floating *b, int ldb, floating beta,
                          floating *c, int ldc) noexcept nogil:
    # C[m, n] = op(A) @ op(B), all row-major.
    if floating is float:
        sgemm(&transb, &transa, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        dgemm(&transb, &transa, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _im2col(const floating[:, :, ::1] x, Py_ssize_t n0, Py_ssize_t n1,
                  Py_ssize_t ksize, Py_ssize_t pad_left, Py_ssize_t l_out,
                  floating[:, ::1] cols) noexcept nogil:
    # Row (n, l) of cols is the contiguous span x[n, l-pad_left : l-pad_left+ksize, :]
    # with out-of-range taps zeroed.
    cdef Py_ssize_t n, l, lo, hi, src
    cdef Py_ssize_t length = x.shape[1]
    cdef Py_ssize_t cin = x.shape[2]
    cdef Py_ssize_t width = ksize * cin
    cdef floating *row
    cdef floating *xs
    for n in range(n0, n1):
        xs = &x[n, 0, 0]
        for l in range(l_out):
            row = &cols[(n - n0) * l_out + l, 0]
            src = l - pad_left
            lo = 0 if src >= 0 else -src
            hi = ksize if src + ksize <= length else length - src
            if hi <= lo:
                memset(row, 0, width * sizeof(floating))
                continue
            if lo > 0:
                memset(row, 0, lo * cin * sizeof(floating))
            memcpy(row + lo * cin, xs + (src + lo) * cin, (hi - lo) * cin * sizeof(floating))
            if hi < ksize:
                memset(row + hi * cin, 0, (ksize - hi) * cin * sizeof(floating))


cdef void _col2im_add(floating[:, ::1] cols, Py_ssize_t n0, Py_ssize_t n1,
                      Py_ssize_t ksize, Py_ssize_t pad_left, Py_ssize_t l_out,
                      floating[:, :, ::1] dx) noexcept nogil:
    cdef Py_ssize_t n, l, j, lo, hi, src
    cdef Py_ssize_t length = dx.shape[1]
    cdef Py_ssize_t cin = dx.shape[2]
    cdef floating *row
    cdef floating *dst
    for n in range(n0, n1):
        for l in range(l_out):
            row = &cols[(n - n0) * l_out + l, 0]
            src = l - pad_left
            lo = 0 if src >= 0 else -src
            hi = ksize if src + ksize <= length else length - src
            if hi <= lo:
                continue
            dst = &dx[n, 0, 0] + (src + lo) * cin
            row = row + lo * cin
            for j in range((hi - lo) * cin):
                dst[j] += row[j]


cdef Py_ssize_t _chunk(Py_ssize_t l_out, Py_ssize_t width, Py_ssize_t nsamples):
    cdef Py_ssize_t per = l_out * width
    if per <= 0:
        return nsamples if nsamples > 0 else 1
    cdef Py_ssize_t chunk = CHUNK_ELEMS // per
    if chunk < 1:
        chunk = 1
    if chunk > nsamples:
        chunk = nsamples
    return chunk if chunk > 0 else 1


def _forward(const floating[:, :, ::1] x, const floating[:, :, ::1] w, const floating[::1] b,
             Py_ssize_t pad_left, Py_ssize_t l_out, floating[:, :, ::1] out):
    cdef Py_ssize_t nsamp = x.shape[0]
    cdef Py_ssize_t ksize = w.shape[0]
    cdef Py_ssize_t cin = w.shape[1]
    cdef Py_ssize_t cout = w.shape[2]
    cdef Py_ssize_t width = ksize * cin
    cdef Py_ssize_t chunk = _chunk(l_out, width, nsamp)
    cdef Py_ssize_t n0, n1, rows, r, co
    dtype = np.float32 if floating is float else np.float64
    cdef floating[:, ::1] cols = np.empty((chunk * l_out, width), dtype=dtype)
    cdef floating *outp
    with nogil:
        n0 = 0
        while n0 < nsamp:
            n1 = min(n0 + chunk, nsamp)
            rows = (n1 - n0) * l_out
            _im2col(x, n0, n1, ksize, pad_left, l_out, cols)
            outp = &out[n0, 0, 0]
            for r in range(rows):
                for co in range(cout):
                    outp[r * cout + co] = b[co]
            _gemm_rm(NOTRANS, NOTRANS, <int>rows, <int>cout, <int>width, 1,
                     &cols[0, 0], <int>width, <floating *>&w[0, 0, 0], <int>cout, 1,
                     outp, <int>cout)
            n0 = n1


def _backward(const floating[:, :, ::1] x, const floating[:, :, ::1] w,
              const floating[:, :, ::1] dout,
              Py_ssize_t pad_left, floating[:, :, ::1] dw, floating[::1] db,
              dx_obj):
    cdef Py_ssize_t nsamp = x.shape[0]
    cdef Py_ssize_t l_out = dout.shape[1]
    cdef Py_ssize_t ksize = w.shape[0]
    cdef Py_ssize_t cin = w.shape[1]
    cdef Py_ssize_t cout = w.shape[2]
    cdef Py_ssize_t width = ksize * cin
    cdef Py_ssize_t chunk = _chunk(l_out, width, nsamp)
    cdef Py_ssize_t n0, n1, rows, r, co
    cdef bint need_dx = dx_obj is not None
    dtype = np.float32 if floating is float else np.float64
    cdef floating[:, ::1] cols = np.empty((chunk * l_out, width), dtype=dtype)
    cdef floating[:, ::1] dcols
    cdef floating[:, :, ::1] dx
    if need_dx:
        dx = dx_obj
        dcols = np.empty((chunk * l_out, width), dtype=dtype)
    cdef const floating *dop
    with nogil:
        n0 = 0
        while n0 < nsamp:
            n1 = min(n0 + chunk, nsamp)
            rows = (n1 - n0) * l_out
            dop = &dout[n0, 0, 0]
            for r in range(rows):
                for co in range(cout):
                    db[co] += dop[r * cout + co]
            _im2col(x, n0, n1, ksize, pad_left, l_out, cols)
            # dw[width, cout] += cols^T @ dout
            _gemm_rm(TRANS, NOTRANS, <int>width, <int>cout, <int>rows, 1,
                     &cols[0, 0], <int>width, <floating *>dop, <int>cout, 1,
                     &dw[0, 0, 0], <int>cout)
            if need_dx:
                # dcols[rows, width] = dout @ w^T
                _gemm_rm(NOTRANS, TRANS, <int>rows, <int>width, <int>cout, 1,
                         <floating *>dop, <int>cout, <floating *>&w[0, 0, 0], <int>cout, 0,
                         &dcols[0, 0], <int>width)
                _col2im_add(dcols, n0, n1, ksize, pad_left, l_out, dx)
            n0 = n1
