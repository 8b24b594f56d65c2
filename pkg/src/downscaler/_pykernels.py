"""Pure-numpy conv2d kernels (im2col + matmul). Fallback for ``_ckernels``."""
import numpy as np


def _im2col(x, k, pad, ho, wo):
    n, c = x.shape[:2]
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, di, dj] = x[:, :, di:di + ho, dj:dj + wo]
    return cols.reshape(n, c * k * k, ho * wo)


def conv2d_forward(x, w, b, pad):
    n, _, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    cols = _im2col(x, k, pad, ho, wo)
    out = np.matmul(w.reshape(o, -1), cols)
    out += b[None, :, None]
    return out.reshape(n, o, ho, wo)


def conv2d_backward(x, w, g, pad):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = g.shape[2:]
    cols = _im2col(x, k, pad, ho, wo)
    g2 = g.reshape(n, o, ho * wo)
    gw = np.zeros((o, c * k * k), dtype=x.dtype)
    for i in range(n):
        gw += g2[i] @ cols[i].T
    gb = g2.sum(axis=2).sum(axis=0)
    dcols = np.matmul(w.reshape(o, -1).T, g2).reshape(n, c, k, k, ho, wo)
    gxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            gxp[:, :, di:di + ho, dj:dj + wo] += dcols[:, :, di, dj]
    gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
    return np.ascontiguousarray(gx), gw.reshape(w.shape), gb
