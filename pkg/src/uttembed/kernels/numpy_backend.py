"""Pure-numpy convolution kernels (fallback backend).

All functions take the input already zero-padded; geometry is resolved by
the dispatching wrapper in ``uttembed.kernels``. The inner loops run over
the kernel footprint only (kh*kw iterations), with each iteration a
strided-slice contraction that numpy hands to BLAS.
"""

import numpy as np


def conv2d_forward(xp, w, sh, sw, out):
    kh, kw = w.shape[2], w.shape[3]
    ho, wo = out.shape[2], out.shape[3]
    for di in range(kh):
        for dj in range(kw):
            patch = xp[:, :, di : di + sh * ho : sh, dj : dj + sw * wo : sw]
            out += np.einsum("ncij,kc->nkij", patch, w[:, :, di, dj], optimize=True)
    return out


def conv2d_grad_input(gy, w, sh, sw, gxp):
    kh, kw = w.shape[2], w.shape[3]
    ho, wo = gy.shape[2], gy.shape[3]
    for di in range(kh):
        for dj in range(kw):
            gxp[:, :, di : di + sh * ho : sh, dj : dj + sw * wo : sw] += np.einsum(
                "nkij,kc->ncij", gy, w[:, :, di, dj], optimize=True
            )
    return gxp


def conv2d_grad_weight(gy, xp, sh, sw, gw):
    kh, kw = gw.shape[2], gw.shape[3]
    ho, wo = gy.shape[2], gy.shape[3]
    for di in range(kh):
        for dj in range(kw):
            patch = xp[:, :, di : di + sh * ho : sh, dj : dj + sw * wo : sw]
            gw[:, :, di, dj] = np.einsum("nkij,ncij->kc", gy, patch, optimize=True)
    return gw
