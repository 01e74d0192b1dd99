"""Dense tensors with reverse-mode automatic differentiation.

Covers exactly the operations the rest of the package needs: broadcast
elementwise arithmetic, a strict 2-D matmul, shape ops, axis reductions
(sum/mean/max/softmax/l2norm) and a 2-D convolution backed by the
compiled-or-numpy kernel layer.

Recording goes through a thread-local :class:`GradTape`. Every op whose
inputs participate in differentiation appends one entry (output, inputs,
backward closure); ``backward(loss)`` replays the tape in reverse, which
is a valid topological order because inputs are always recorded before
their consumers. Tapes are confined to the thread that recorded them.

Precision policy: tensors carry float32 (training default) or float64
(gradient checking); ops preserve the dtype of their operands.
"""

import threading
from contextlib import contextmanager

import numpy as np

from .kernels import conv2d_forward, conv2d_grad_input, conv2d_grad_weight


class ShapeError(ValueError):
    """Raised when operand dimensions are incompatible."""


_state = threading.local()


def _tape():
    t = getattr(_state, "tape", None)
    if t is None:
        t = GradTape()
        _state.tape = t
    return t


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording inside the block (eval-mode forward)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class GradTape:
    """Ordered record of differentiable ops executed on this thread.

    Each entry is ``(out, inputs, backward_fn)`` where ``backward_fn(g)``
    returns one gradient array per input (or None for a non-diff input).
    Clear the tape between optimization steps; repeated ``backward`` calls
    without clearing accumulate into leaf ``.grad`` buffers.
    """

    def __init__(self):
        self._ops = []

    def __len__(self):
        return len(self._ops)

    def record(self, out, inputs, backward_fn):
        self._ops.append((out, inputs, backward_fn))
        out._recorded = True

    def clear(self):
        self._ops.clear()

    def backward(self, loss):
        if loss.data.size != 1:
            raise ShapeError(
                f"backward requires a scalar loss, got shape {loss.data.shape}"
            )
        flow = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        if loss.requires_grad and not loss._recorded:
            leaves[id(loss)] = loss
        for out, inputs, backward_fn in reversed(self._ops):
            g = flow.get(id(out))
            if g is None:
                continue
            for inp, gi in zip(inputs, backward_fn(g)):
                if gi is None:
                    continue
                key = id(inp)
                if key in flow:
                    flow[key] = flow[key] + gi
                else:
                    flow[key] = gi
                if inp.requires_grad and not inp._recorded:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
            leaf.grad += flow[key]


def tape():
    """The calling thread's active tape."""
    return _tape()


def _unbroadcast(g, shape):
    # reduce a broadcasted gradient back to `shape` (trailing-aligned rule)
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a_shape, b_shape):
    try:
        return np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise ShapeError(
            f"operands not broadcast-compatible: {a_shape} vs {b_shape}"
        ) from None


class Tensor:
    """Dense real array, optionally participating in gradient recording."""

    __array_priority__ = 100  # keep numpy from hijacking reflected ops

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._recorded = False  # True once produced by a recorded op

    # -- basics ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype):
        out = Tensor(self.data.astype(dtype), requires_grad=False)
        if _grad_enabled() and self._tracked():
            out.requires_grad = True
            src_dtype = self.data.dtype
            _tape().record(out, (self,), lambda g: (g.astype(src_dtype),))
        return out

    def _tracked(self):
        return self.requires_grad or self._recorded

    def backward(self):
        """Populate dloss/dleaf for every requires_grad leaf this loss reaches."""
        _tape().backward(self)

    # -- op plumbing ------------------------------------------------------

    @staticmethod
    def _lift(x, like=None):
        if isinstance(x, Tensor):
            return x
        dtype = like.data.dtype if like is not None else None
        return Tensor(np.asarray(x, dtype=dtype))

    @staticmethod
    def _make(data, inputs, backward_fn):
        out = Tensor(data)
        if _grad_enabled() and any(t._tracked() for t in inputs):
            out.requires_grad = True
            _tape().record(out, tuple(inputs), backward_fn)
        return out

    # -- elementwise ------------------------------------------------------

    def __add__(self, other):
        other = Tensor._lift(other, self)
        _check_broadcast(self.shape, other.shape)
        a, b = self, other

        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._make(a.data + b.data, (a, b), bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other, self)
        _check_broadcast(self.shape, other.shape)
        a, b = self, other

        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Tensor._make(a.data - b.data, (a, b), bwd)

    def __rsub__(self, other):
        return Tensor._lift(other, self).__sub__(self)

    def __mul__(self, other):
        other = Tensor._lift(other, self)
        _check_broadcast(self.shape, other.shape)
        a, b = self, other

        def bwd(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor._make(a.data * b.data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other, self)
        _check_broadcast(self.shape, other.shape)
        a, b = self, other

        def bwd(g):
            ga = _unbroadcast(g / b.data, a.shape)
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            return ga, gb

        return Tensor._make(a.data / b.data, (a, b), bwd)

    def __rtruediv__(self, other):
        return Tensor._lift(other, self).__truediv__(self)

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        x, p = self, float(exponent)

        def bwd(g):
            return (g * p * x.data ** (p - 1.0),)

        return Tensor._make(x.data**p, (x,), bwd)

    def square(self):
        x = self
        return Tensor._make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))

    def exp(self):
        y = np.exp(self.data)
        return Tensor._make(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self
        return Tensor._make(np.log(x.data), (x,), lambda g: (g / x.data,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return Tensor._make(y, (self,), lambda g: (g / (2.0 * y),))

    def tanh(self):
        y = np.tanh(self.data)
        return Tensor._make(y, (self,), lambda g: (g * (1.0 - y * y),))

    def relu(self):
        # subgradient at 0 defined as 0
        mask = self.data > 0
        return Tensor._make(
            np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,)
        )

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return Tensor._make(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(old),)
        )

    def transpose(self, *axes):
        if len(axes) == 0:
            axes = tuple(reversed(range(self.data.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return Tensor._make(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),)
        )

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, idx):
        x = self
        y = x.data[idx]

        def bwd(g):
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            return (gx,)

        return Tensor._make(y, (x,), bwd)

    # -- reductions -------------------------------------------------------

    def _check_axis(self, axis):
        if axis is None:
            return
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in axes:
            if not -self.data.ndim <= ax < self.data.ndim:
                raise ShapeError(
                    f"axis {ax} out of range for rank-{self.data.ndim} tensor"
                )

    def sum(self, axis=None, keepdims=False):
        self._check_axis(axis)
        x = self

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.data.shape).copy(),)

        return Tensor._make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bwd)

    def mean(self, axis=None, keepdims=False):
        self._check_axis(axis)
        x = self
        if axis is None:
            count = float(x.data.size)
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = float(np.prod([x.data.shape[a] for a in axes]))

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.data.shape).copy() / count,)

        return Tensor._make(x.data.mean(axis=axis, keepdims=keepdims), (x,), bwd)

    def max(self, axis=None, keepdims=False):
        """Max reduction; ties route the gradient to the first index."""
        self._check_axis(axis)
        x = self
        if axis is None:
            flat_idx = int(np.argmax(x.data))
            y = x.data.reshape(-1)[flat_idx]

            def bwd(g):
                gx = np.zeros_like(x.data)
                gx.reshape(-1)[flat_idx] = g
                return (gx,)

            out_data = np.asarray(y)
        else:
            if isinstance(axis, tuple):
                raise ShapeError("max supports a single axis or None")
            idx = np.argmax(x.data, axis=axis)  # first max wins
            out_data = np.take_along_axis(
                x.data, np.expand_dims(idx, axis), axis=axis
            )
            if not keepdims:
                out_data = np.squeeze(out_data, axis=axis)

            def bwd(g):
                if not keepdims:
                    g = np.expand_dims(g, axis)
                gx = np.zeros_like(x.data)
                np.put_along_axis(gx, np.expand_dims(idx, axis), g, axis=axis)
                return (gx,)

        return Tensor._make(out_data, (x,), bwd)

    def softmax(self, axis=-1):
        """Softmax along `axis`, computed with max-subtraction for stability."""
        self._check_axis(axis)
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)

        def bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            return (y * (g - dot),)

        return Tensor._make(y, (self,), bwd)

    def l2norm(self, axis=None, keepdims=False):
        """Euclidean norm over `axis` (smooth away from exactly-zero slices)."""
        return self.square().sum(axis=axis, keepdims=keepdims).sqrt()

    # -- linear algebra -----------------------------------------------------

    def matmul(self, other):
        other = Tensor._lift(other, self)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2:
            raise ShapeError(
                f"matmul expects rank-2 operands, got {a.shape} and {b.shape}"
            )
        if a.shape[1] != b.shape[0]:
            raise ShapeError(
                f"matmul inner extents disagree: {a.shape} vs {b.shape}"
            )

        def bwd(g):
            return g @ b.data.T, a.data.T @ g

        return Tensor._make(a.data @ b.data, (a, b), bwd)

    __matmul__ = matmul

    def conv2d(self, weight, stride=1, padding=0):
        """2-D cross-correlation: self (N,C,H,W) with weight (K,C,kh,kw)."""
        x, w = self, weight
        if x.data.ndim != 4 or w.data.ndim != 4:
            raise ShapeError(
                f"conv2d expects 4-D input and weight, got {x.shape} and {w.shape}"
            )
        if x.shape[1] != w.shape[1]:
            raise ShapeError(
                f"conv2d channel mismatch: input {x.shape} vs weight {w.shape}"
            )
        y = conv2d_forward(x.data, w.data, stride, padding)

        def bwd(g):
            gx = conv2d_grad_input(g, w.data, x.data.shape, stride, padding)
            gw = conv2d_grad_weight(g, x.data, w.data.shape, stride, padding)
            return gx, gw

        return Tensor._make(y, (x, w), bwd)


def concatenate(tensors, axis=0):
    tensors = [Tensor._lift(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd
    )


def stack(tensors, axis=0):
    tensors = [Tensor._lift(t) for t in tensors]

    def bwd(g):
        parts = np.split(g, len(tensors), axis=axis)
        return tuple(np.squeeze(p, axis=axis) for p in parts)

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tensors, bwd)
