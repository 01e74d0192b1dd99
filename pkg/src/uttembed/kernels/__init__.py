"""Convolution kernel dispatch.

Two interchangeable backends compute the same three primitives (forward,
gradient wrt input, gradient wrt weight):

* ``cython`` - compiled direct-loop kernels (``_convkern`` extension)
* ``numpy``  - strided-slice einsum fallback, always available

The backend is selected once at import time: the compiled extension when
it imported cleanly, else the fallback. Set ``UTTEMBED_KERNELS=numpy`` or
``=cython`` to force one (forcing ``cython`` without the built extension
raises). ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

import numpy as np

from . import numpy_backend

try:
    from . import _convkern
except ImportError:
    _convkern = None

_requested = os.environ.get("UTTEMBED_KERNELS", "auto")
if _requested == "numpy":
    _impl = None
elif _requested == "cython":
    if _convkern is None:
        raise ImportError(
            "UTTEMBED_KERNELS=cython but the _convkern extension is not built"
        )
    _impl = _convkern
elif _requested == "auto":
    _impl = _convkern
else:
    raise ValueError(f"UTTEMBED_KERNELS must be auto|numpy|cython, got {_requested!r}")


def backend_name():
    return "numpy" if _impl is None else "cython"


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _norm_padding(padding):
    """Normalize to ((top, bottom), (left, right)).

    Accepts an int (same all around), a (ph, pw) pair, or per-side pairs
    for asymmetric padding, e.g. ((1, 1), (2, 0)) for causal time padding.
    """
    ph, pw = _pair(padding)
    return _pair(ph), _pair(pw)


def _geometry(x_shape, w_shape, stride, padding):
    n, c, h, wdt = x_shape
    k, cw, kh, kw = w_shape
    sh, sw = _pair(stride)
    (pt, pb), (pl, pr) = _norm_padding(padding)
    if cw != c:
        raise ValueError(f"channel mismatch: input {x_shape} vs weight {w_shape}")
    hp, wp = h + pt + pb, wdt + pl + pr
    if kh > hp or kw > wp:
        raise ValueError(
            f"kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        )
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    return sh, sw, (pt, pb), (pl, pr), ho, wo


def _padded(x, ph, pw):
    if ph == (0, 0) and pw == (0, 0):
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), ph, pw))


def conv2d_forward(x, w, stride=1, padding=0):
    sh, sw, ph, pw, ho, wo = _geometry(x.shape, w.shape, stride, padding)
    xp = _padded(x, ph, pw)
    out = np.zeros((x.shape[0], w.shape[0], ho, wo), dtype=x.dtype)
    if _impl is None:
        numpy_backend.conv2d_forward(xp, w, sh, sw, out)
    else:
        _impl.conv2d_forward(xp, np.ascontiguousarray(w), sh, sw, out)
    return out


def conv2d_grad_input(gy, w, x_shape, stride=1, padding=0):
    sh, sw, ph, pw, ho, wo = _geometry(x_shape, w.shape, stride, padding)
    n, c, h, wdt = x_shape
    gxp = np.zeros((n, c, h + sum(ph), wdt + sum(pw)), dtype=gy.dtype)
    if _impl is None:
        numpy_backend.conv2d_grad_input(gy, w, sh, sw, gxp)
    else:
        _impl.conv2d_grad_input(
            np.ascontiguousarray(gy), np.ascontiguousarray(w), sh, sw, gxp
        )
    if ph == (0, 0) and pw == (0, 0):
        return gxp
    return gxp[:, :, ph[0] : ph[0] + h, pw[0] : pw[0] + wdt].copy()


def conv2d_grad_weight(gy, x, w_shape, stride=1, padding=0):
    sh, sw, ph, pw, ho, wo = _geometry(x.shape, w_shape, stride, padding)
    xp = _padded(x, ph, pw)
    gw = np.zeros(w_shape, dtype=gy.dtype)
    if _impl is None:
        numpy_backend.conv2d_grad_weight(gy, xp, sh, sw, gw)
    else:
        _impl.conv2d_grad_weight(np.ascontiguousarray(gy), xp, sh, sw, gw)
    return gw
