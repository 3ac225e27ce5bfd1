"""Declarative model descriptions and the architecture builders."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from nilmkit.data.frame import AGGREGATE, ELECTRICAL
from nilmkit.errors import ChannelMismatch, IncompatibleWindow, WindowTooShort

FEEDBACK = "feedback"

ARCHITECTURES = (
    "cobilstm", "tdlcnn", "r_tdlcnn", "m_tdlcnn", "mr_tdlcnn",
    "energan_generator", "energan_discriminator", "custom",
)

TDLCNN_VARIANTS = {
    "base": ("tdlcnn", (AGGREGATE,)),
    "recurrent": ("r_tdlcnn", (AGGREGATE, FEEDBACK)),
    "multichannel": ("m_tdlcnn", (AGGREGATE, *ELECTRICAL)),
    "mr": ("mr_tdlcnn", (AGGREGATE, *ELECTRICAL, FEEDBACK)),
}


@dataclass(frozen=True)
class LayerSpec:
    """One layer.

    kinds: ``conv``, ``tconv`` (filters, kernel, stride), ``bilstm``,
    ``lstm``, ``gru`` (units), ``flatten``, ``last_step``, ``dense`` (units).
    ``units=None`` on a dense layer means "the window length k".
    """

    kind: str
    units: int | None = None
    kernel: int | None = None
    stride: int = 1
    activation: str | None = None

    def label(self, k: int) -> str:
        name = {"conv": "Conv", "tconv": "TConv", "bilstm": "BiLSTM", "lstm": "LSTM", "gru": "GRU",
                "flatten": "Flatten", "last_step": "LastStep", "dense": "Dense"}[self.kind]
        if self.kind in ("conv", "tconv"):
            return f"{name}-{self.units}@{self.kernel}" + (f"/s{self.stride}" if self.stride != 1 else "")
        if self.kind in ("flatten", "last_step"):
            return name
        if self.kind == "dense" and self.activation is None:
            return f"Linear-{self.units if self.units is not None else k}"
        return f"{name}-{self.units}"


@dataclass(frozen=True)
class ModelSpec:
    arch: str
    layers: tuple
    input_channels: tuple
    k: int
    learning_rate: float = 1e-4
    batch_size: int = 50
    max_epochs: int = 400
    output: str = "sequence"  # "sequence" -> [N, 1, k]; "score" -> [N, 1]

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.k < 1 or self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("k and hyperparameters must be strictly positive")
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers))
        object.__setattr__(self, "input_channels", tuple(self.input_channels))

    @property
    def channels(self) -> int:
        return len(self.input_channels)

    @property
    def uses_feedback(self) -> bool:
        return FEEDBACK in self.input_channels

    def summary(self) -> list[str]:
        """Labels of the parameterized and reducing layers; flatten is implicit."""
        return [l.label(self.k) for l in self.layers if l.kind != "flatten"]

    def with_hyper(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(l) for l in self.layers]
        d["input_channels"] = list(self.input_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["layers"] = tuple(LayerSpec(**l) for l in d["layers"])
        return cls(**d)


def build_cobilstm(k: int = 60, channels: int = 1, hidden=(60, 72), dense: int = 60,
                   input_channels=None) -> ModelSpec:
    """Two stacked bidirectional LSTMs, a tanh dense layer and a linear length-k head."""
    if k < 5:
        raise WindowTooShort(f"window length {k} < 5")
    if input_channels is None:
        input_channels = (AGGREGATE, *ELECTRICAL)[:channels] if channels <= 4 else None
    if input_channels is None or len(input_channels) != channels:
        raise ChannelMismatch(f"cannot infer names for {channels} input channels")
    layers = [LayerSpec("bilstm", units=h) for h in hidden]
    layers += [LayerSpec("flatten"), LayerSpec("dense", units=dense, activation="tanh"), LayerSpec("dense")]
    return ModelSpec("cobilstm", tuple(layers), tuple(input_channels), k)


def build_tdlcnn(variant: str = "base", k: int = 60, channels: int | None = None,
                 filters=(60, 120), kernel: int = 5, dense: int = 60) -> ModelSpec:
    """Tapped-delay-line CNN.

    ``channels`` counts measured inputs (the fed-back estimate of the
    recurrent variants is added on top): 1 for base/recurrent, 4 for
    multichannel/mr.
    """
    if variant not in TDLCNN_VARIANTS:
        raise ValueError(f"unknown TDLCNN variant {variant!r}")
    arch, names = TDLCNN_VARIANTS[variant]
    measured = len([n for n in names if n != FEEDBACK])
    if channels is None:
        channels = measured
    if channels != measured:
        raise ChannelMismatch(f"{variant} TDLCNN takes {measured} measured channel(s), got {channels}")
    if k < kernel:
        raise WindowTooShort(f"window length {k} < kernel {kernel}")
    layers = [LayerSpec("conv", units=f, kernel=kernel, activation="tanh") for f in filters]
    layers += [LayerSpec("flatten"), LayerSpec("dense", units=dense, activation="tanh"), LayerSpec("dense")]
    return ModelSpec(arch, tuple(layers), names, k)


def feeder_variant(variant: str) -> str:
    """The non-recurrent variant that produces the fed-back estimate."""
    return {"recurrent": "base", "mr": "multichannel"}[variant]


def build_energan_specs(k: int = 64, latent_dim: int = 64) -> tuple[ModelSpec, ModelSpec]:
    """Generator (conv encoder + transposed-conv decoder) and discriminator specs.

    Each encoder stage halves the length, so ``k`` must be a multiple of 8.
    The decoder's two listed transposed stages are followed by a one-filter
    transposed output head that restores length ``k`` and a single channel.
    """
    if k < 8 or k % 8:
        raise IncompatibleWindow(f"window length {k} is not a positive multiple of 8")
    if latent_dim < 1:
        raise ValueError("latent_dim must be positive")
    gen = (
        LayerSpec("conv", 256, 8, 2, "relu"),
        LayerSpec("conv", 128, 16, 2, "relu"),
        LayerSpec("conv", latent_dim, 32, 2, "relu"),
        LayerSpec("tconv", 64, 8, 2, "relu"),
        LayerSpec("tconv", 128, 16, 2, "relu"),
        LayerSpec("tconv", 1, 32, 2, None),
    )
    disc = (
        LayerSpec("conv", 60, 5, 1, "relu"),
        LayerSpec("gru", 40),
        LayerSpec("gru", 30),
        LayerSpec("last_step"),
        LayerSpec("dense", 30, activation="relu"),
        LayerSpec("dense", 1, activation="sigmoid"),
    )
    g = ModelSpec("energan_generator", gen, (AGGREGATE,), k)
    d = ModelSpec("energan_discriminator", disc, ("candidate", AGGREGATE), k, output="score")
    return g, d


__all__ = [
    "FEEDBACK", "LayerSpec", "ModelSpec", "build_cobilstm", "build_tdlcnn", "build_energan_specs",
    "feeder_variant", "TDLCNN_VARIANTS",
]
