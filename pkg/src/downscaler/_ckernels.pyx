# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled conv2d kernels: im2col/col2im loops around a BLAS gemm.

Batch items are processed sequentially and weight gradients are accumulated
in batch order, so results are bit-reproducible for a fixed BLAS.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()


cdef inline void _gemm_rm(bint ta, bint tb, int m, int n, int k, floating alpha,
                          floating* a, int lda, floating* b, int ldb,
                          floating beta, floating* c, int ldc) noexcept nogil:
    # row-major C = op(A) @ op(B), expressed as column-major C^T = op(B)^T op(A)^T
    cdef char tra = b'T' if ta else b'N'
    cdef char trb = b'T' if tb else b'N'
    if floating is float:
        sgemm(&trb, &tra, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        dgemm(&trb, &tra, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _im2col(floating[:, :, ::1] x, int k, int pad, int ho, int wo,
                  floating[:, ::1] cols) noexcept nogil:
    cdef int C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef int c, di, dj, i, j, si, sj, r
    for c in range(C):
        for di in range(k):
            for dj in range(k):
                r = (c * k + di) * k + dj
                for i in range(ho):
                    si = i + di - pad
                    if si < 0 or si >= H:
                        for j in range(wo):
                            cols[r, i * wo + j] = 0
                        continue
                    for j in range(wo):
                        sj = j + dj - pad
                        if sj < 0 or sj >= W:
                            cols[r, i * wo + j] = 0
                        else:
                            cols[r, i * wo + j] = x[c, si, sj]


cdef void _col2im_add(floating[:, ::1] cols, int k, int pad, int ho, int wo,
                      floating[:, :, ::1] gx) noexcept nogil:
    cdef int C = gx.shape[0], H = gx.shape[1], W = gx.shape[2]
    cdef int c, di, dj, i, j, si, sj, r
    for c in range(C):
        for di in range(k):
            for dj in range(k):
                r = (c * k + di) * k + dj
                for i in range(ho):
                    si = i + di - pad
                    if si < 0 or si >= H:
                        continue
                    for j in range(wo):
                        sj = j + dj - pad
                        if 0 <= sj < W:
                            gx[c, si, sj] += cols[r, i * wo + j]


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                   floating[::1] b, int pad):
    cdef int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w.shape[0], k = w.shape[2]
    cdef int ho = H + 2 * pad - k + 1, wo = W + 2 * pad - k + 1
    cdef int P = ho * wo, CKK = C * k * k
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((B, O, ho, wo), dtype=dtype)
    cols_arr = np.empty((CKK, P), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef floating[:, ::1] cols = cols_arr
    cdef int n, o, i, j
    with nogil:
        for n in range(B):
            _im2col(x[n], k, pad, ho, wo, cols)
            _gemm_rm(False, False, O, P, CKK, 1, &w[0, 0, 0, 0], CKK,
                     &cols[0, 0], P, 0, &out[n, 0, 0, 0], P)
            for o in range(O):
                for i in range(ho):
                    for j in range(wo):
                        out[n, o, i, j] += b[o]
    return out_arr


def conv2d_backward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                    floating[:, :, :, ::1] g, int pad):
    cdef int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w.shape[0], k = w.shape[2]
    cdef int ho = g.shape[2], wo = g.shape[3]
    cdef int P = ho * wo, CKK = C * k * k
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((B, C, H, W), dtype=dtype)
    gw_arr = np.zeros((O, C, k, k), dtype=dtype)
    gb_arr = np.zeros(O, dtype=dtype)
    cols_arr = np.empty((CKK, P), dtype=dtype)
    dcols_arr = np.empty((CKK, P), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef floating[::1] gb = gb_arr
    cdef floating[:, ::1] cols = cols_arr
    cdef floating[:, ::1] dcols = dcols_arr
    cdef int n, o, i, j
    cdef floating acc
    with nogil:
        for n in range(B):
            _im2col(x[n], k, pad, ho, wo, cols)
            _gemm_rm(False, True, O, CKK, P, 1, &g[n, 0, 0, 0], P,
                     &cols[0, 0], P, 1, &gw[0, 0, 0, 0], CKK)
            _gemm_rm(True, False, CKK, P, O, 1, &w[0, 0, 0, 0], CKK,
                     &g[n, 0, 0, 0], P, 0, &dcols[0, 0], P)
            _col2im_add(dcols, k, pad, ho, wo, gx[n])
            for o in range(O):
                acc = 0
                for i in range(ho):
                    for j in range(wo):
                        acc = acc + g[n, o, i, j]
                gb[o] += acc
    return gx_arr, gw_arr, gb_arr
