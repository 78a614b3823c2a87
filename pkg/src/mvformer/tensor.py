"""Dense rank-4 tensors with reverse-mode automatic differentiation.

Every value in this package is a ``Tensor``: a row-major (batch, channel,
height, width) float array with an optional gradient slot.  Scalars are
shape ``(1, 1, 1, 1)``, per-channel vectors ``(1, C, 1, 1)``, convolution
kernels ``(c_out, c_in/groups, kh, kw)``.  Ops record their inputs and a
backward rule on the produced tensor; ``backward(loss)`` materializes the
tape in topological order and accumulates gradients into the leaves.

Storage is float32 by default.  Ops preserve the dtype of their inputs, so
a graph built from float64 leaves evaluates entirely in 64-bit (used by the
finite-difference gradient checks).
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Dimension mismatch between tensors (offending axes named in message)."""


class GraphError(RuntimeError):
    """Backward called on a non-scalar loss or a detached graph."""


_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """Rank-4 array with optional grad slot and tape linkage.

    Leaves created with ``requires_grad=True`` accumulate into ``grad``
    across backward passes (cleared by the optimizer).  Intermediate
    results drop their gradient after backward unless ``retain_grad`` is
    set.  ``data`` must never be mutated once the tensor has been recorded
    as an input of another op.
    """

    __slots__ = ("data", "requires_grad", "grad", "retain_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"Tensor must be rank-4 (n, c, h, w); got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.retain_grad = False
        self._parents = ()
        self._backward = None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def scalar(value, requires_grad=False, dtype=np.float32):
        return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype), requires_grad)

    @staticmethod
    def channel_vector(values, requires_grad=False, dtype=np.float32):
        arr = np.asarray(values, dtype=dtype).reshape(1, -1, 1, 1)
        return Tensor(arr, requires_grad)

    @staticmethod
    def zeros(shape, requires_grad=False, dtype=np.float32):
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad)

    @staticmethod
    def ones(shape, requires_grad=False, dtype=np.float32):
        return Tensor(np.ones(shape, dtype=dtype), requires_grad)

    # -- properties --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor; got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def backward(self):
        backward(self)


def _as_tensor(value, like=None):
    """Wrap python scalars as constant (1,1,1,1) tensors, matching dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else np.float32
    return Tensor.scalar(value, dtype=dtype)


def _node(data, parents, backward_fn):
    """Create an op output; the tape link exists only if a parent needs grad."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_broadcast(a_shape, b_shape):
    for axis, (da, db) in enumerate(zip(a_shape, b_shape)):
        if da != db and da != 1 and db != 1:
            raise ShapeError(
                f"cannot broadcast axis {axis}: sizes {da} and {db} "
                f"(shapes {a_shape} vs {b_shape})"
            )


def _unbroadcast(grad, shape):
    """Sum gradient over axes that were broadcast, restoring `shape`."""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


# -- elementwise ops ---------------------------------------------------------


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _check_broadcast(a.shape, b.shape)
    data = a.data + b.data

    def bw(g, acc):
        acc(a, _unbroadcast(g, a.shape))
        acc(b, _unbroadcast(g, b.shape))

    return _node(data, (a, b), bw)


def sub(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _check_broadcast(a.shape, b.shape)
    data = a.data - b.data

    def bw(g, acc):
        acc(a, _unbroadcast(g, a.shape))
        acc(b, _unbroadcast(-g, b.shape))

    return _node(data, (a, b), bw)


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _check_broadcast(a.shape, b.shape)
    data = a.data * b.data

    def bw(g, acc):
        if a.requires_grad:
            acc(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            acc(b, _unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), bw)


def div(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _check_broadcast(a.shape, b.shape)
    data = a.data / b.data

    def bw(g, acc):
        if a.requires_grad:
            acc(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            acc(b, _unbroadcast(-g * data / b.data, b.shape))

    return _node(data, (a, b), bw)


def square(x):
    data = x.data * x.data

    def bw(g, acc):
        acc(x, 2.0 * x.data * g)

    return _node(data, (x,), bw)


def sqrt(x):
    data = np.sqrt(x.data)

    def bw(g, acc):
        acc(x, g * (0.5 / data))

    return _node(data, (x,), bw)


def relu(x):
    mask = x.data > 0
    data = np.where(mask, x.data, 0)

    def bw(g, acc):
        acc(x, g * mask)

    return _node(data, (x,), bw)


def exp(x):
    data = np.exp(x.data)

    def bw(g, acc):
        acc(x, g * data)

    return _node(data, (x,), bw)


def log(x):
    data = np.log(x.data)

    def bw(g, acc):
        acc(x, g / x.data)

    return _node(data, (x,), bw)


# -- reductions ---------------------------------------------------------------


def _norm_axes(x, axes):
    if axes is None:
        return (0, 1, 2, 3)
    axes = tuple(sorted(int(a) % 4 for a in axes))
    if len(set(axes)) != len(axes):
        raise ShapeError(f"duplicate reduction axes {axes}")
    return axes


def tsum(x, axes=None):
    """Sum over `axes` (all by default); result keeps rank 4."""
    axes = _norm_axes(x, axes)
    data = x.data.sum(axis=axes, keepdims=True)

    def bw(g, acc):
        acc(x, np.broadcast_to(g, x.shape))

    return _node(data, (x,), bw)


def mean(x, axes=None):
    """Arithmetic mean over `axes`; result keeps rank 4."""
    axes = _norm_axes(x, axes)
    count = 1
    for a in axes:
        count *= x.shape[a]
    if count == 0:
        raise ShapeError(f"mean over empty extent (axes {axes} of shape {x.shape})")
    data = x.data.mean(axis=axes, keepdims=True)

    def bw(g, acc):
        acc(x, np.broadcast_to(g / count, x.shape))

    return _node(data, (x,), bw)


def moments(x, axes):
    """Mean and population variance over `axes`, both on the tape.

    Variance divides by the element count (no Bessel correction), matching
    the normalization layers that consume it.
    """
    axes = _norm_axes(x, axes)
    if axes == ():
        raise ShapeError("moments needs at least one reduction axis")
    mu = mean(x, axes)
    var = mean(square(sub(x, mu)), axes)
    return mu, var


def global_avg_pool(x):
    """Per-channel spatial mean: (n, c, h, w) -> (n, c, 1, 1)."""
    return mean(x, (2, 3))


# -- channel split / concat ----------------------------------------------------


def channel_split(x, sizes):
    """Slice `x` along the channel axis into len(sizes) tensors.

    Zero sizes yield empty (n, 0, h, w) tensors that downstream code skips;
    concatenating the outputs in order reproduces `x` bitwise.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise ShapeError(f"negative split size in {sizes}")
    if sum(sizes) != x.shape[1]:
        raise ShapeError(f"split sizes {sizes} sum to {sum(sizes)}, input has {x.shape[1]} channels")
    parts = []
    offset = 0
    for s in sizes:
        lo, hi = offset, offset + s
        offset = hi
        data = x.data[:, lo:hi]

        def bw(g, acc, lo=lo, hi=hi):
            full = np.zeros_like(x.data)
            full[:, lo:hi] = g
            acc(x, full)

        parts.append(_node(data, (x,), bw))
    return parts


def channel_concat(parts):
    """Stack tensors along the channel axis, in argument order."""
    parts = list(parts)
    if not parts:
        raise ShapeError("channel_concat needs at least one part")
    ref = parts[0]
    for i, p in enumerate(parts[1:], start=1):
        for axis in (0, 2, 3):
            if p.shape[axis] != ref.shape[axis]:
                raise ShapeError(
                    f"channel_concat part {i} disagrees on axis {axis}: "
                    f"{p.shape} vs {ref.shape}"
                )
    data = np.concatenate([p.data for p in parts], axis=1)
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(g, acc):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                acc(p, g[:, lo:hi])

    return _node(data, tuple(parts), bw)


# -- convolution -----------------------------------------------------------------


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x, w, b=None, stride=1, pad=0, groups=1):
    """Cross-correlation of `x` with kernel `w` (no kernel flip).

    `w` has shape (c_out, c_in/groups, kh, kw); `b`, when given, is a
    per-channel (1, c_out, 1, 1) tensor.  Depthwise convolution is
    groups == c_in; pointwise is kh == kw == 1.  Output spatial dims follow
    the floor convention: (h + 2*pad - kh) // stride + 1.
    """
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    n, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    if groups < 1 or cin % groups or cout % groups:
        raise ShapeError(f"conv2d: groups={groups} must divide c_in={cin} and c_out={cout}")
    if cin // groups != cin_g:
        raise ShapeError(
            f"conv2d: weight expects {cin_g} channels per group, input supplies {cin // groups} "
            f"(c_in={cin}, groups={groups})"
        )
    if kh < 1 or kw < 1:
        raise ShapeError(f"conv2d: kernel dims must be >= 1, got ({kh}, {kw})")
    hout = (h + 2 * ph - kh) // sh + 1
    wout = (wd + 2 * pw - kw) // sw + 1
    if hout < 1 or wout < 1:
        raise ShapeError(
            f"conv2d: input spatial ({h}, {wd}) too small for kernel ({kh}, {kw}) "
            f"with pad ({ph}, {pw}), stride ({sh}, {sw})"
        )
    if b is not None and b.shape != (1, cout, 1, 1):
        raise ShapeError(f"conv2d: bias must be (1, {cout}, 1, 1), got {b.shape}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    sn, sc, srow, scol = xp.strides
    patches = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, groups, cin_g, kh, kw, hout, wout),
        strides=(sn, sc * cin_g, sc, srow, scol, srow * sh, scol * sw),
        writeable=False,
    )
    wg = w.data.reshape(groups, cout // groups, cin_g, kh, kw)
    out = np.einsum("ngiuvyx,goiuv->ngoyx", patches, wg, optimize=True)
    out = out.reshape(n, cout, hout, wout)
    if b is not None:
        out = out + b.data

    parents = (x, w) if b is None else (x, w, b)

    def bw(g, acc):
        gg = g.reshape(n, groups, cout // groups, hout, wout)
        if w.requires_grad:
            gw = np.einsum("ngiuvyx,ngoyx->goiuv", patches, gg, optimize=True)
            acc(w, gw.reshape(cout, cin_g, kh, kw))
        if b is not None and b.requires_grad:
            acc(b, g.sum(axis=(0, 2, 3), keepdims=True))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            gxp_g = gxp.reshape(n, groups, cin_g, xp.shape[2], xp.shape[3])
            for u in range(kh):
                for v in range(kw):
                    contrib = np.einsum("goi,ngoyx->ngiyx", wg[:, :, :, u, v], gg, optimize=True)
                    gxp_g[:, :, :, u : u + hout * sh : sh, v : v + wout * sw : sw] += contrib
            acc(x, gxp[:, :, ph : ph + h, pw : pw + wd])

    return _node(out, parents, bw)


# -- backward ----------------------------------------------------------------------


def _topo_order(root):
    """Materialize the tape: every node's inputs precede it, each visited once.

    Iterative depth-first postorder; a node is appended only after every
    grad-requiring parent has been appended.
    """
    order = []
    done = set()
    stack = [(root, 0)]  # (node, index of next parent to visit)
    while stack:
        node, i = stack.pop()
        if id(node) in done:
            continue
        parents = node._parents
        n = len(parents)
        while i < n and (not parents[i].requires_grad or id(parents[i]) in done):
            i += 1
        if i < n:
            stack.append((node, i + 1))
            stack.append((parents[i], 0))
        else:
            done.add(id(node))
            order.append(node)
    return order


def backward(loss):
    """Populate gradients of every reachable leaf with d(loss)/d(leaf).

    `loss` must be a scalar on the tape.  Leaf gradients accumulate across
    calls; intermediate gradients are dropped unless `retain_grad` was set.
    Gradient arrays are never mutated in place.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss; got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is not attached to any differentiable input (detached graph)")

    grads = {id(loss): np.ones_like(loss.data)}

    def acc(t, g):
        if not t.requires_grad:
            return
        key = id(t)
        if key in grads:
            grads[key] = grads[key] + g
        else:
            grads[key] = g

    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            raise GraphError("tape node visited without a gradient (graph inconsistency)")
        if node._backward is not None:
            node._backward(g, acc)
            if node.retain_grad:
                node.grad = g
        else:
            node.grad = g if node.grad is None else node.grad + g
