"""Central finite-difference verification of reverse-mode gradients.

``max_rel_err`` is the workhorse: it compares tape gradients of a scalar
loss against central differences, element by element, at 64-bit precision.
Large parameters are spot-checked on a seeded random subset of elements so
the full suite stays fast; small ones are checked exhaustively.
"""

import numpy as np

from .autograd import no_grad, tape


def fd_gradient(loss_fn, param, indices, h=1e-5):
    """Central finite differences of ``loss_fn()`` wrt param.data[indices]."""
    flat = param.data.reshape(-1)
    grads = np.empty(len(indices), dtype=np.float64)
    with no_grad():
        for k, idx in enumerate(indices):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss_fn().item()
            flat[idx] = orig - h
            down = loss_fn().item()
            flat[idx] = orig
            grads[k] = (up - down) / (2.0 * h)
    return grads


def max_rel_err(loss_fn, params, h=1e-5, max_elems=64, seed=0):
    """Max relative error |g_ad - g_fd| / max(|g_fd|, 1e-8) over all params.

    ``loss_fn`` must rebuild the scalar loss from the live ``params`` on
    every call and be deterministic. Parameters with more than
    ``max_elems`` entries are subsampled (seeded), smaller ones checked
    in full.
    """
    rng = np.random.default_rng(seed)
    t = tape()
    t.clear()
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    t.clear()

    worst = 0.0
    for p in params:
        if p.grad is None:
            raise AssertionError("parameter did not receive a gradient")
        g_ad = p.grad.reshape(-1)
        n = p.data.size
        if n <= max_elems:
            indices = np.arange(n)
        else:
            indices = rng.choice(n, size=max_elems, replace=False)
        g_fd = fd_gradient(loss_fn, p, indices, h=h)
        rel = np.abs(g_ad[indices] - g_fd) / np.maximum(np.abs(g_fd), 1e-8)
        worst = max(worst, float(rel.max()))
    return worst
