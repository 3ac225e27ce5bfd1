"""Executable networks built from a :class:`ModelSpec`."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from nilmkit import engine as E
from nilmkit.cells import RecurrentLayer
from nilmkit.engine.tensor import Tensor, parameter
from nilmkit.errors import ShapeMismatch
from nilmkit.models.spec import ModelSpec

# data layouts flowing between layers
CONV, SEQ, FLAT = "conv", "seq", "flat"  # [N, C, L], [T, N, F], [N, F]


def _uniform(rng, shape, fan_in):
    b = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-b, b, size=shape)


class Network:
    """Parameters plus a forward pass for one spec.

    Parameters live in ``params`` (an ordered name -> Tensor map) in
    declaration order; checkpoints serialize them in that order.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self._plan: list[tuple] = []
        rng = np.random.default_rng(seed)
        layout, dims = CONV, (spec.channels, spec.k)
        for i, layer in enumerate(spec.layers):
            layout, dims = self._add(i, layer, layout, dims, rng)
        if spec.output == "sequence" and (layout != FLAT or dims != (spec.k,)):
            if not (layout == CONV and dims == (1, spec.k)):
                raise ShapeMismatch(f"{spec.arch}: final layer emits {layout}{dims}, expected length {spec.k}")
        if spec.output == "score" and (layout != FLAT or dims != (1,)):
            raise ShapeMismatch(f"{spec.arch}: score head must emit one value")
        self.out_layout = layout

    # -- construction ---------------------------------------------------------

    def _param(self, name, arr):
        t = parameter(arr, name=name)
        self.params[name] = t
        return t

    def _add(self, i, layer, layout, dims, rng):
        kind = layer.kind
        if kind in ("conv", "tconv"):
            if layout != CONV:
                raise ShapeMismatch(f"layer {i}: {kind} needs [N, C, L] input")
            c, length = dims
            o, k, s = layer.units, layer.kernel, layer.stride
            shape = (o, c, k)
            w = self._param(f"{i}.{kind}.weight", _uniform(rng, shape, c * k))
            b = self._param(f"{i}.{kind}.bias", _uniform(rng, (o,), c * k))
            mode = "forward" if kind == "conv" else "transposed"
            new_len = E.conv_output_length(length, k, s, mode, "same")
            self._plan.append(("conv", mode, w, b, s, layer.activation))
            return CONV, (o, new_len)
        if kind in ("bilstm", "lstm", "gru"):
            if layout == CONV:
                self._plan.append(("to_seq",))
                t, f = dims[1], dims[0]
            elif layout == SEQ:
                t, f = dims
            else:
                raise ShapeMismatch(f"layer {i}: recurrent layer needs a sequence")
            rl = RecurrentLayer(kind, f, layer.units, rng)
            names = ["fwd", "bwd"] if kind == "bilstm" else [kind]
            for cell, nm in zip(rl.cells, names):
                for pname, tensor in zip(("W", "b", "U", "Wc"), cell.tensors()):
                    tensor.name = f"{i}.{nm}.{pname}"
                    self.params[tensor.name] = tensor
            self._plan.append(("rnn", rl))
            return SEQ, (t, rl.output_size)
        if kind == "flatten":
            self._plan.append(("flatten", layout))
            return FLAT, (int(np.prod(dims)),)
        if kind == "last_step":
            if layout != SEQ:
                raise ShapeMismatch(f"layer {i}: last_step needs a sequence")
            self._plan.append(("last_step",))
            return FLAT, (dims[1],)
        if kind == "dense":
            if layout != FLAT:
                raise ShapeMismatch(f"layer {i}: dense needs flat input; add a flatten layer")
            n_in = dims[0]
            n_out = layer.units if layer.units is not None else self.spec.k
            w = self._param(f"{i}.dense.weight", _uniform(rng, (n_out, n_in), n_in))
            b = self._param(f"{i}.dense.bias", _uniform(rng, (n_out,), n_in))
            self._plan.append(("dense", w, b, layer.activation))
            return FLAT, (n_out,)
        raise ShapeMismatch(f"layer {i}: unknown kind {kind!r}")

    # -- use --------------------------------------------------------------------

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def forward(self, x) -> Tensor:
        """``x``: [N, C, k] array or tensor -> [N, 1, k] (sequence) or [N, 1] (score)."""
        if not isinstance(x, Tensor):
            x = E.constant(x)
        if x.ndim != 3 or x.shape[1:] != (self.spec.channels, self.spec.k):
            raise ShapeMismatch(f"expected [N, {self.spec.channels}, {self.spec.k}], got {list(x.shape)}")
        n = x.shape[0]
        h = x
        for step in self._plan:
            op = step[0]
            if op == "conv":
                _, mode, w, b, s, act = step
                h = E.activation(act, E.conv1d(h, w, mode=mode, stride=s, padding="same", bias=b))
            elif op == "to_seq":
                h = E.transpose(h, (2, 0, 1))
            elif op == "rnn":
                h = step[1](h)
            elif op == "flatten":
                if step[1] == SEQ:
                    h = E.transpose(h, (1, 0, 2))
                h = E.reshape(h, (n, -1))
            elif op == "last_step":
                h = E.take(h, -1)
            elif op == "dense":
                _, w, b, act = step
                h = E.activation(act, E.linear(h, w, b))
        return E.reshape(h, (n, 1, -1)) if self.spec.output == "sequence" else h

    __call__ = forward

    def predict(self, x: np.ndarray, batch: int = 256) -> np.ndarray:
        outs = []
        with E.no_grad():
            for a in range(0, x.shape[0], batch):
                outs.append(self.forward(x[a:a + batch]).data)
        return np.concatenate(outs) if outs else np.zeros((0, 1, self.spec.k))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params.values()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.parameter_count():
            raise ShapeMismatch(f"{flat.size} values for {self.parameter_count()} parameters")
        pos = 0
        for p in self.params.values():
            p.data[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def clone(self) -> "Network":
        twin = Network(self.spec)
        twin.set_flat(self.get_flat())
        return twin
