# Compiled convolution kernels: direct loops over pre-padded inputs.
# Geometry checks live in the dispatching wrapper; these assume consistent,
# C-contiguous arrays of a single floating dtype.
#
# Loops are ordered so the innermost index walks contiguous output/input
# rows (axpy / dot shapes), which the C compiler vectorizes.

cimport cython
from cython cimport floating


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d_forward(floating[:, :, :, ::1] xp, floating[:, :, :, ::1] w,
                   Py_ssize_t sh, Py_ssize_t sw, floating[:, :, :, ::1] out):
    cdef Py_ssize_t N = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t K = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t n, k, c, i, j, di, dj, ih
    cdef floating wv
    with nogil:
        for n in range(N):
            for k in range(K):
                for c in range(C):
                    for di in range(kh):
                        for dj in range(kw):
                            wv = w[k, c, di, dj]
                            for i in range(ho):
                                ih = i * sh + di
                                if sw == 1:
                                    for j in range(wo):
                                        out[n, k, i, j] += wv * xp[n, c, ih, dj + j]
                                else:
                                    for j in range(wo):
                                        out[n, k, i, j] += wv * xp[n, c, ih, dj + j * sw]


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d_grad_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] w,
                      Py_ssize_t sh, Py_ssize_t sw, floating[:, :, :, ::1] gxp):
    cdef Py_ssize_t N = gy.shape[0], K = gy.shape[1]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t C = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t n, k, c, i, j, di, dj, ih
    cdef floating wv
    with nogil:
        for n in range(N):
            for k in range(K):
                for c in range(C):
                    for di in range(kh):
                        for dj in range(kw):
                            wv = w[k, c, di, dj]
                            for i in range(ho):
                                ih = i * sh + di
                                if sw == 1:
                                    for j in range(wo):
                                        gxp[n, c, ih, dj + j] += wv * gy[n, k, i, j]
                                else:
                                    for j in range(wo):
                                        gxp[n, c, ih, dj + j * sw] += wv * gy[n, k, i, j]


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d_grad_weight(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] xp,
                       Py_ssize_t sh, Py_ssize_t sw, floating[:, :, :, ::1] gw):
    cdef Py_ssize_t N = gy.shape[0], K = gy.shape[1]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t C = gw.shape[1], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t n, k, c, i, j, di, dj, ih
    cdef floating acc
    with nogil:
        for n in range(N):
            for k in range(K):
                for i in range(ho):
                    for c in range(C):
                        for di in range(kh):
                            ih = i * sh + di
                            for dj in range(kw):
                                acc = 0
                                if sw == 1:
                                    for j in range(wo):
                                        acc = acc + gy[n, k, i, j] * xp[n, c, ih, dj + j]
                                else:
                                    for j in range(wo):
                                        acc = acc + gy[n, k, i, j] * xp[n, c, ih, dj + j * sw]
                                gw[k, c, di, dj] += acc
