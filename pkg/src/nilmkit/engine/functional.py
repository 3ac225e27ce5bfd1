"""Differentiable operations on :class:`~nilmkit.engine.tensor.Tensor`."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from nilmkit.engine.tensor import Tensor, constant, record
from nilmkit.errors import DomainError, InvalidStride, ShapeMismatch, UnknownKind


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul expects rank-2 operands, got {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {list(a.shape)} x {list(b.shape)}")
    A, B = a.data, b.data

    def bw(g):
        return g @ B.T, A.T @ g

    return record("matmul", A @ B, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` as one tape node; weight is [out, in]."""
    X, W = x.data, weight.data
    if X.shape[-1] != W.shape[1]:
        raise ShapeMismatch(f"linear: input features {X.shape[-1]} != weight columns {W.shape[1]}")
    out = X @ W.T
    if bias is not None:
        out = out + bias.data

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = X.reshape(-1, X.shape[-1])
        gx = (g2 @ W).reshape(X.shape)
        gw = g2.T @ x2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("linear", out, inputs, bw)


# ---------------------------------------------------------------------------
# 1D convolution

def _same_pads(length: int, k: int, stride: int) -> tuple[int, int, int]:
    out = -(-length // stride)
    total = max((out - 1) * stride + k - length, 0)
    left = total - total // 2  # extra zero goes left on odd totals
    return left, total - left, out


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pl: int, pr: int) -> np.ndarray:
    # x [N, C, L], w [O, C, k] -> [N, O, Lout]
    n, c, _ = x.shape
    o, _, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr))) if (pl or pr) else x
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]  # [N, C, Lout, k]
    lout = win.shape[2]
    cols = win.transpose(0, 2, 1, 3).reshape(n * lout, c * k)
    y = cols @ w.reshape(o, c * k).T
    return np.ascontiguousarray(y.reshape(n, lout, o).transpose(0, 2, 1))


def _conv_input_adjoint(g: np.ndarray, w: np.ndarray, stride: int, pl: int, pr: int, lin: int) -> np.ndarray:
    # adjoint of _conv_forward w.r.t. x: g [N, O, Lout] -> [N, C, Lin]
    n, o, lout = g.shape
    _, c, k = w.shape
    dcols = (g.transpose(0, 2, 1).reshape(n * lout, o) @ w.reshape(o, c * k)).reshape(n, lout, c, k)
    dxp = np.zeros((n, c, lin + pl + pr))
    span = stride * (lout - 1) + 1
    for j in range(k):
        dxp[:, :, j:j + span:stride] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, pl:pl + lin]


def _conv_weight_adjoint(g: np.ndarray, x: np.ndarray, k: int, stride: int, pl: int, pr: int) -> np.ndarray:
    # gradient of _conv_forward w.r.t. w
    n, c, _ = x.shape
    o, lout = g.shape[1], g.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr))) if (pl or pr) else x
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :][:, :, :lout, :]
    cols = win.transpose(0, 2, 1, 3).reshape(n * lout, c * k)
    return (g.transpose(1, 0, 2).reshape(o, n * lout) @ cols).reshape(o, c, k)


def conv_output_length(length: int, k: int, stride: int, mode: str = "forward", padding: str = "valid") -> int:
    if mode == "forward":
        if padding == "same":
            return -(-length // stride)
        return (length - k) // stride + 1
    if padding == "same":
        return length * stride
    return (length - 1) * stride + k


def conv1d(
    input: Tensor,
    kernels: Tensor,
    mode: str = "forward",
    stride: int = 1,
    padding: str = "valid",
    bias: Tensor | None = None,
) -> Tensor:
    """Cross-correlation of ``input`` [C, L] or [N, C, L] with ``kernels`` [O, C, k].

    ``mode="transposed"`` applies the adjoint of the forward map whose
    output has ``C`` channels, so the result has ``O`` channels and a longer
    length: ``(L-1)*stride + k`` for valid padding, ``L*stride`` for same.
    """
    if mode not in ("forward", "transposed"):
        raise UnknownKind(f"conv mode {mode!r}")
    if padding not in ("same", "valid"):
        raise UnknownKind(f"padding {padding!r}")
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise InvalidStride(f"stride must be a positive integer, got {stride!r}")
    if kernels.ndim != 3:
        raise ShapeMismatch("kernels must be [out_ch, in_ch, k]")
    squeeze = input.ndim == 2
    if input.ndim not in (2, 3):
        raise ShapeMismatch("conv1d input must be [C, L] or [N, C, L]")
    x = input.data[None] if squeeze else input.data
    o, c, k = kernels.shape
    if x.shape[1] != c:
        raise ShapeMismatch(f"input has {x.shape[1]} channels, kernels expect {c}")
    if bias is not None and bias.shape != (o,):
        raise ShapeMismatch(f"bias must have shape [{o}]")
    w = kernels.data
    length = x.shape[2]

    if mode == "forward":
        if padding == "same":
            pl, pr, _ = _same_pads(length, k, stride)
        else:
            if k > length:
                raise ShapeMismatch(f"kernel {k} longer than input {length} with valid padding")
            pl = pr = 0
        y = _conv_forward(x, w, stride, pl, pr)

        def bw(g):
            g3 = g[None] if squeeze else g
            gx = _conv_input_adjoint(g3, w, stride, pl, pr, length)
            gw = _conv_weight_adjoint(g3, x, k, stride, pl, pr)
            out = [gx[0] if squeeze else gx, gw]
            if bias is not None:
                out.append(g3.sum(axis=(0, 2)))
            return tuple(out)
    else:
        # forward-conv kernel whose adjoint maps C -> O channels
        wf = np.ascontiguousarray(w.transpose(1, 0, 2))  # [C, O, k]
        lout = conv_output_length(length, k, stride, "transposed", padding)
        if padding == "same":
            pl, pr, _ = _same_pads(lout, k, stride)
        else:
            pl = pr = 0
        y = _conv_input_adjoint(x, wf, stride, pl, pr, lout)

        def bw(g):
            g3 = g[None] if squeeze else g
            gx = _conv_forward(g3, wf, stride, pl, pr)
            gwf = _conv_weight_adjoint(x, g3, k, stride, pl, pr)  # [C, O, k]
            out = [gx[0] if squeeze else gx, gwf.transpose(1, 0, 2)]
            if bias is not None:
                out.append(g3.sum(axis=(0, 2)))
            return tuple(out)

    if bias is not None:
        y = y + bias.data[None, :, None]
    if squeeze:
        y = y[0]
    inputs = (input, kernels) if bias is None else (input, kernels, bias)
    return record(f"conv1d_{mode}", np.ascontiguousarray(y), inputs, bw)


# ---------------------------------------------------------------------------
# pointwise

def _sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def elementwise(kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Pointwise sigmoid/tanh/relu (unary) or hadamard/add/sub (binary)."""
    if kind in ("hadamard", "add", "sub"):
        if b is None or a.shape != b.shape:
            raise ShapeMismatch(f"{kind} needs equal shapes, got {list(a.shape)} and "
                                f"{None if b is None else list(b.shape)}")
        A, B = a.data, b.data
        if kind == "add":
            return record("add", A + B, (a, b), lambda g: (g, g))
        if kind == "sub":
            return record("sub", A - B, (a, b), lambda g: (g, -g))
        return record("hadamard", A * B, (a, b), lambda g: (g * B, g * A))
    if kind == "sigmoid":
        s = _sigmoid(a.data)
        return record("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))
    if kind == "tanh":
        t = np.tanh(a.data)
        return record("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))
    if kind == "relu":
        mask = a.data > 0  # subgradient 0 at exactly 0
        return record("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))
    raise UnknownKind(f"elementwise kind {kind!r}")


def sigmoid(a: Tensor) -> Tensor:
    return elementwise("sigmoid", a)


def tanh(a: Tensor) -> Tensor:
    return elementwise("tanh", a)


def relu(a: Tensor) -> Tensor:
    return elementwise("relu", a)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("hadamard", a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("sub", a, b)


def activation(kind: str | None, a: Tensor) -> Tensor:
    if kind in (None, "linear", "identity"):
        return a
    return elementwise(kind, a)


def one_minus(a: Tensor) -> Tensor:
    return record("one_minus", 1.0 - a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    return record("scale", a.data * c, (a,), lambda g: (g * c,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    A = a.data
    inside = (A >= lo) & (A <= hi)
    return record("clamp", np.clip(A, lo, hi), (a,), lambda g: (g * inside,))


def bias_add(x: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """Add a 1-D bias along ``axis`` with broadcasting over the other axes."""
    ax = axis % x.ndim
    if b.ndim != 1 or b.shape[0] != x.shape[ax]:
        raise ShapeMismatch(f"bias of length {b.shape} does not match axis {ax} of {list(x.shape)}")
    shape = [1] * x.ndim
    shape[ax] = -1
    other = tuple(i for i in range(x.ndim) if i != ax)
    return record("bias_add", x.data + b.data.reshape(shape), (x, b),
                  lambda g: (g, g.sum(axis=other)))


# ---------------------------------------------------------------------------
# reductions and shape plumbing

def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    A = a.data
    out = np.asarray(A.sum(axis=axis), dtype=np.float64)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, A.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), A.shape).copy(),)

    return record("sum", out, (a,), bw)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return record("transpose", np.ascontiguousarray(a.data.transpose(axes)), (a,),
                  lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    arrs = [t.data for t in tensors]
    out = np.concatenate(arrs, axis=axis)
    bounds = np.cumsum([a.shape[axis] for a in arrs])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", out, tuple(tensors), bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        lead = (slice(None),) * (axis % g.ndim)
        return tuple(g[lead + (i,)] for i in range(len(tensors)))

    return record("stack", out, tuple(tensors), bw)


def take(a: Tensor, idx) -> Tensor:
    """Basic (slice/int) indexing."""
    A = a.data
    out = np.ascontiguousarray(A[idx])

    def bw(g):
        full = np.zeros_like(A)
        full[idx] = g
        return (full,)

    return record("take", out, (a,), bw)


# ---------------------------------------------------------------------------
# losses

def loss(kind: str, prediction: Tensor, target) -> Tensor:
    """Scalar mean-squared error or binary cross-entropy."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    P = prediction.data
    if P.shape != t.shape:
        raise ShapeMismatch(f"prediction {list(P.shape)} vs target {list(t.shape)}")
    n = P.size
    if kind == "mse":
        d = P - t
        return record("mse", np.asarray(np.mean(d * d)), (prediction,),
                      lambda g: (g * 2.0 * d / n,))
    if kind == "bce":
        if np.any(P <= 0.0) or np.any(P >= 1.0):
            raise DomainError("bce predictions must lie strictly inside (0, 1)")
        val = -np.mean(t * np.log(P) + (1.0 - t) * np.log(1.0 - P))
        return record("bce", np.asarray(val), (prediction,),
                      lambda g: (g * ((1.0 - t) / (1.0 - P) - t / P) / n,))
    raise UnknownKind(f"loss kind {kind!r}")


__all__ = [
    "matmul", "linear", "conv1d", "conv_output_length", "elementwise", "sigmoid", "tanh",
    "relu", "hadamard", "add", "sub", "activation", "one_minus", "scale", "clamp",
    "bias_add", "sum", "mean", "reshape", "transpose", "concat", "stack", "take", "loss",
    "constant",
]
