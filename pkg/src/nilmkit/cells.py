"""LSTM / GRU cells and sequence layers built on the tensor engine.

Gate layouts use the block form: one weight matrix acting on the
concatenation ``[h(t-1); x(t)]``.  LSTM blocks stack ``[i, f, o, g]``;
GRU blocks stack ``[u, r]`` with a separate candidate pair ``U``, ``W``.
Inputs may be unbatched (``[features]``) or batched (``[N, features]``);
sequences are ``[T, features]`` or ``[T, N, features]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nilmkit.engine import functional as F
from nilmkit.engine.tensor import Tensor, constant, parameter
from nilmkit.errors import EmptySequence, ShapeMismatch


@dataclass
class CellParams:
    kind: str  # "lstm" or "gru"
    W: Tensor  # [4H, H+In] (lstm) or [2H, H+In] (gru gates)
    b: Tensor  # [4H] or [2H]
    hidden_size: int
    input_size: int
    U: Tensor | None = None  # gru candidate, [H, H]
    Wc: Tensor | None = None  # gru candidate, [H, In]
    output_activation: str = "tanh"  # lstm state activation

    def tensors(self) -> list[Tensor]:
        out = [self.W, self.b]
        if self.kind == "gru":
            out += [self.U, self.Wc]
        return out

    def _bias(self, j: int) -> np.ndarray:
        h = self.hidden_size
        return self.b.data[j * h:(j + 1) * h]

    # named views of the block bias
    @property
    def b_i(self):
        return self._bias(0)

    @property
    def b_f(self):
        return self._bias(1)

    @property
    def b_o(self):
        return self._bias(2)

    @property
    def b_g(self):
        return self._bias(3)

    @property
    def b_u(self):
        return self._bias(0)

    @property
    def b_r(self):
        return self._bias(1)


@dataclass
class CellState:
    h: Tensor
    c: Tensor | None = None


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_lstm(input_size: int, hidden_size: int, rng: np.random.Generator,
              output_activation: str = "tanh") -> CellParams:
    fan = hidden_size + input_size
    return CellParams(
        kind="lstm",
        W=parameter(_uniform(rng, (4 * hidden_size, fan), fan)),
        b=parameter(_uniform(rng, (4 * hidden_size,), fan)),
        hidden_size=hidden_size,
        input_size=input_size,
        output_activation=output_activation,
    )


def init_gru(input_size: int, hidden_size: int, rng: np.random.Generator) -> CellParams:
    fan = hidden_size + input_size
    return CellParams(
        kind="gru",
        W=parameter(_uniform(rng, (2 * hidden_size, fan), fan)),
        b=parameter(_uniform(rng, (2 * hidden_size,), fan)),
        hidden_size=hidden_size,
        input_size=input_size,
        U=parameter(_uniform(rng, (hidden_size, hidden_size), fan)),
        Wc=parameter(_uniform(rng, (hidden_size, input_size), fan)),
    )


def zero_state(params: CellParams, batch: int | None = None) -> CellState:
    shape = (params.hidden_size,) if batch is None else (batch, params.hidden_size)
    h = constant(np.zeros(shape))
    c = constant(np.zeros(shape)) if params.kind == "lstm" else None
    return CellState(h, c)


def _check(params: CellParams, x: Tensor, prev: CellState) -> None:
    if x.shape[-1] != params.input_size:
        raise ShapeMismatch(f"input has {x.shape[-1]} features, cell expects {params.input_size}")
    if prev.h.shape[-1] != params.hidden_size or prev.h.shape[:-1] != x.shape[:-1]:
        raise ShapeMismatch(f"state shape {list(prev.h.shape)} does not fit input {list(x.shape)}")
    if params.kind == "lstm" and (prev.c is None or prev.c.shape != prev.h.shape):
        raise ShapeMismatch("lstm state needs a cell vector shaped like h")


def lstm_step(params: CellParams, x: Tensor, prev: CellState) -> CellState:
    _check(params, x, prev)
    H = params.hidden_size
    z = F.linear(F.concat([prev.h, x], axis=-1), params.W, params.b)
    i = F.sigmoid(F.take(z, (..., slice(0, H))))
    f = F.sigmoid(F.take(z, (..., slice(H, 2 * H))))
    o = F.sigmoid(F.take(z, (..., slice(2 * H, 3 * H))))
    g = F.tanh(F.take(z, (..., slice(3 * H, 4 * H))))
    c = F.add(F.hadamard(f, prev.c), F.hadamard(i, g))
    h = F.hadamard(o, F.elementwise(params.output_activation, c))
    return CellState(h, c)


def gru_step(params: CellParams, x: Tensor, prev: CellState) -> CellState:
    _check(params, x, prev)
    H = params.hidden_size
    gates = F.linear(F.concat([prev.h, x], axis=-1), params.W, params.b)
    u = F.sigmoid(F.take(gates, (..., slice(0, H))))
    r = F.sigmoid(F.take(gates, (..., slice(H, 2 * H))))
    cand = F.tanh(F.add(F.hadamard(r, F.linear(prev.h, params.U)), F.linear(x, params.Wc)))
    h = F.add(F.hadamard(F.one_minus(u), cand), F.hadamard(u, prev.h))
    return CellState(h)


def _scan(params: CellParams, sequence: Tensor, reverse: bool = False) -> list[Tensor]:
    T = sequence.shape[0]
    if T < 1:
        raise EmptySequence("sequence has no time steps")
    batch = sequence.shape[1] if sequence.ndim == 3 else None
    state = zero_state(params, batch)
    step = lstm_step if params.kind == "lstm" else gru_step
    out: list[Tensor] = [None] * T  # type: ignore[list-item]
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        state = step(params, F.take(sequence, t), state)
        out[t] = state.h
    return out


def lstm_layer(params: CellParams, sequence: Tensor) -> Tensor:
    return F.stack(_scan(params, sequence), axis=0)


def gru_layer(params: CellParams, sequence: Tensor) -> Tensor:
    return F.stack(_scan(params, sequence), axis=0)


def bilstm_layer(params_fwd: CellParams, params_bwd: CellParams, sequence: Tensor) -> Tensor:
    """Forward scan over t = 1..T, backward scan over t = T..1, outputs ``[h_fwd; h_bwd]``."""
    if sequence.ndim < 2 or sequence.shape[0] < 1:
        raise EmptySequence("sequence has no time steps")
    fwd = F.stack(_scan(params_fwd, sequence), axis=0)
    bwd = F.stack(_scan(params_bwd, sequence, reverse=True), axis=0)
    return F.concat([fwd, bwd], axis=-1)


class RecurrentLayer:
    """A sequence-to-sequence recurrent layer usable in :func:`stacked_forward`."""

    def __init__(self, kind: str, input_size: int, hidden_size: int,
                 rng: np.random.Generator | None = None, output_activation: str = "tanh"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kind = kind
        self.input_size = input_size
        self.hidden_size = hidden_size
        if kind == "lstm":
            self.cells = [init_lstm(input_size, hidden_size, rng, output_activation)]
        elif kind == "bilstm":
            self.cells = [init_lstm(input_size, hidden_size, rng, output_activation),
                          init_lstm(input_size, hidden_size, rng, output_activation)]
        elif kind == "gru":
            self.cells = [init_gru(input_size, hidden_size, rng)]
        else:
            raise ValueError(f"unknown recurrent layer kind {kind!r}")

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size if self.kind == "bilstm" else self.hidden_size

    def tensors(self) -> list[Tensor]:
        return [t for cell in self.cells for t in cell.tensors()]

    def __call__(self, sequence: Tensor) -> Tensor:
        if self.kind == "bilstm":
            return bilstm_layer(self.cells[0], self.cells[1], sequence)
        if self.kind == "lstm":
            return lstm_layer(self.cells[0], sequence)
        return gru_layer(self.cells[0], sequence)


def stacked_forward(layers: Sequence[RecurrentLayer], sequence: Tensor) -> Tensor:
    """Feed the full output sequence of each layer into the next."""
    for prev, nxt in zip(layers, layers[1:]):
        if prev.output_size != nxt.input_size:
            raise ShapeMismatch(f"layer emits {prev.output_size} features, next expects {nxt.input_size}")
    out = sequence
    for layer in layers:
        out = layer(out)
    return out
