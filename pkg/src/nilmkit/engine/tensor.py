"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable operation builds its result through :func:`record`,
which attaches a :class:`TapeNode` holding the op tag, the input tensors and
a closure that maps the output gradient to input gradients.  The tape for a
scalar root is the topological order of the nodes reachable from it.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from nilmkit.errors import DetachedTape, NonFiniteInput, NotScalar, ShapeMismatch

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread (inference mode)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class TapeNode:
    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op: str, inputs: tuple, backward: Callable):
        self.op = op
        self.inputs = inputs
        self.backward = backward


class Tensor:
    """N-dimensional float64 array with an optional gradient.

    ``data`` is a C-contiguous ndarray; ``grad`` is ``None`` until a backward
    pass reaches the tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)  # always copies
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node: TapeNode | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.node = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{rg})"

    # operator sugar; the named functions in functional.py are canonical
    def __add__(self, other):
        from nilmkit.engine import functional as F
        return F.elementwise("add", self, _as_tensor(other, self.shape))

    def __sub__(self, other):
        from nilmkit.engine import functional as F
        return F.elementwise("sub", self, _as_tensor(other, self.shape))

    def __mul__(self, other):
        from nilmkit.engine import functional as F
        if isinstance(other, (int, float)):
            return F.scale(self, float(other))
        return F.elementwise("hadamard", self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from nilmkit.engine import functional as F
        return F.matmul(self, other)

    def __getitem__(self, idx):
        from nilmkit.engine import functional as F
        return F.take(self, idx)


def _as_tensor(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.broadcast_to(np.asarray(x, dtype=np.float64), shape).copy())


def make_tensor(shape: Sequence[int], values: Iterable[float], requires_grad: bool = False) -> Tensor:
    """Build a tensor from an extent list and a flat row-major value list."""
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ShapeMismatch(f"extents must be positive, got {list(shape)}")
    vals = np.array(list(values), dtype=np.float64)
    if int(np.prod(shape, dtype=np.int64)) != vals.size:
        raise ShapeMismatch(f"shape {list(shape)} holds {int(np.prod(shape))} values, got {vals.size}")
    if not np.all(np.isfinite(vals)):
        raise NonFiniteInput("tensor values must be finite")
    return Tensor(vals.reshape(shape), requires_grad=requires_grad)


def constant(arr) -> Tensor:
    return Tensor._wrap(np.ascontiguousarray(arr, dtype=np.float64))


def parameter(arr, name: str | None = None) -> Tensor:
    return Tensor(arr, requires_grad=True, name=name)


def record(op: str, data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    """Wrap ``data`` as an op result, attaching a tape node when needed.

    ``backward(g)`` must return one gradient (or ``None``) per input.
    """
    out = Tensor._wrap(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op, inputs, backward)
    return out


def tape_order(root: Tensor) -> list[Tensor]:
    """Topological order of the recorded graph ending at ``root``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for parent in t.node.inputs:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(t) into ``t.grad`` for every reachable requires_grad tensor."""
    if root.size != 1:
        raise NotScalar(f"backward needs a scalar root, got shape {list(root.shape)}")
    if root.node is None:
        raise DetachedTape("root was not produced by a recorded operation")
    order = tape_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.grad is None:
            t.grad = g.copy() if t.node is None else g
        else:
            t.grad = t.grad + g
        if t.node is None:
            continue
        in_grads = t.node.backward(g)
        for parent, pg in zip(t.node.inputs, in_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.data.shape:
                pg = pg.reshape(parent.data.shape)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
