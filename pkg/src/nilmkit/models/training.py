"""Training loops, inference by overlap averaging, and the staged
feedback pipeline of the recurrent TDLCNN variants."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from nilmkit import engine as E
from nilmkit.data.frame import TimeSeriesFrame
from nilmkit.data.transforms import NormStats, fit_stats
from nilmkit.data.windows import WindowSet, make_windows, overlap_average
from nilmkit.errors import (
    ChannelMismatch, DivergedTraining, FrameTooShort, MissingChannel, WindowTooLong,
)
from nilmkit.models.network import Network
from nilmkit.models.spec import FEEDBACK, ModelSpec, build_tdlcnn, feeder_variant

logger = logging.getLogger(__name__)

ARCH_VARIANT = {"tdlcnn": "base", "r_tdlcnn": "recurrent", "m_tdlcnn": "multichannel", "mr_tdlcnn": "mr"}


@dataclass
class TrainedModel:
    """A per-appliance regressor together with the scaling it was trained under."""

    spec: ModelSpec
    network: Network
    stats: NormStats
    appliance: str
    log: list = field(default_factory=list)
    feeder: "TrainedModel | None" = None
    previous: "TrainedModel | None" = field(default=None, repr=False)

    def tensors(self):
        return self.network.tensors()


def _seeds(seed: int):
    init, shuffle = np.random.SeedSequence(seed).spawn(2)
    return init, np.random.default_rng(shuffle)


def train(spec: ModelSpec, windows: WindowSet, budget: int | None = None, seed: int = 0,
          appliance: str | None = None, init: Network | None = None,
          learning_rate: float | None = None, batch_size: int | None = None,
          validation: WindowSet | None = None, patience: int | None = None) -> TrainedModel:
    """Fit ``spec`` to normalized ``windows`` with mini-batch Adam on the mse loss.

    ``init`` warm-starts from an existing network (its parameters are
    copied, never mutated).  ``patience`` enables early stopping on the
    ``validation`` loss.
    """
    if windows.stats is None:
        raise ValueError("windows must be normalized before training")
    if windows.targets is None:
        raise ValueError("training windows need targets")
    if tuple(windows.channels) != spec.input_channels:
        raise ChannelMismatch(f"windows carry {windows.channels}, spec expects {spec.input_channels}")
    budget = spec.max_epochs if budget is None else budget
    if budget < 1:
        raise ValueError("training budget must be at least one epoch")
    lr = spec.learning_rate if learning_rate is None else learning_rate
    bs = spec.batch_size if batch_size is None else batch_size

    init_seed, rng = _seeds(seed)
    net = init.clone() if init is not None else Network(spec, init_seed)
    params = net.tensors()
    state = E.AdamState.for_params(params, learning_rate=lr)
    x, y = windows.inputs, windows.targets
    n = x.shape[0]
    log: list[float] = []
    best, best_flat, stale = np.inf, None, 0
    for epoch in range(budget):
        order = rng.permutation(n)
        total = 0.0
        for a in range(0, n, bs):
            idx = order[a:a + bs]
            loss = E.loss("mse", net(x[idx]), y[idx])
            if not np.isfinite(loss.item()):
                raise DivergedTraining(f"non-finite loss at epoch {epoch}")
            E.backward(loss)
            E.adam_step(params, state)
            total += loss.item() * idx.size
        log.append(total / n)
        if validation is not None and patience:
            val = float(np.mean((net.predict(validation.inputs) - validation.targets) ** 2))
            if val < best:
                best, best_flat, stale = val, net.get_flat(), 0
            else:
                stale += 1
                if stale >= patience:
                    logger.info("early stop at epoch %d", epoch)
                    break
    if best_flat is not None:
        net.set_flat(best_flat)
    if not np.all(np.isfinite(net.get_flat())):
        raise DivergedTraining("parameters became non-finite")
    return TrainedModel(spec, net, windows.stats, appliance or windows.target, log)


def frame_stats(frame: TimeSeriesFrame, channels, target: str) -> NormStats:
    """Scaling for the measured inputs and the target; the fed-back estimate reuses the target's range."""
    cols = {c: frame[c] for c in channels if c != FEEDBACK}
    cols[target] = frame[target]
    stats = fit_stats(cols, allow_constant=True)
    if FEEDBACK in channels:
        stats.bounds[FEEDBACK] = stats.bounds[target]
    return stats


def feeder_spec(spec: ModelSpec) -> ModelSpec:
    variant = ARCH_VARIANT.get(spec.arch)
    if variant not in ("recurrent", "mr"):
        raise ChannelMismatch(f"{spec.arch} has no feedback input")
    base = build_tdlcnn(feeder_variant(variant), spec.k)
    return base.with_hyper(learning_rate=spec.learning_rate, batch_size=spec.batch_size,
                           max_epochs=spec.max_epochs)


def fit(spec: ModelSpec, frame: TimeSeriesFrame, appliance: str, epochs: int | None = None,
        seed: int = 0, stride: int | None = None, stats: NormStats | None = None,
        init: TrainedModel | None = None, **train_kw) -> TrainedModel:
    """Window, scale and train on a frame.

    Feedback variants are trained in two stages: a feeder model is fit
    first, its in-sample estimate becomes the extra input channel, then the
    main model is fit on the augmented frame.
    """
    feeder = None
    if spec.uses_feedback:
        if init is not None and init.feeder is not None:
            feeder = fit(init.feeder.spec, frame, appliance, epochs, seed, stride,
                         init.feeder.stats, init.feeder, **train_kw)
        else:
            feeder = fit(feeder_spec(spec), frame, appliance, epochs, seed, stride, **train_kw)
        frame = frame.with_channels(**{FEEDBACK: disaggregate(feeder, frame)})
    missing = [c for c in (*spec.input_channels, appliance) if c not in frame.channels]
    if missing:
        raise MissingChannel(f"frame lacks channels {missing}")
    stride = stride or max(1, spec.k // 2)
    if stats is None:
        stats = frame_stats(frame, spec.input_channels, appliance)
    wins, _ = make_windows(frame, spec.input_channels, appliance, spec.k, stride).normalized(stats)
    model = train(spec, wins, epochs, seed, appliance,
                  init=init.network if init is not None else None, **train_kw)
    model.feeder = feeder
    return model


def _scaled_inputs(model: TrainedModel, frame: TimeSeriesFrame) -> TimeSeriesFrame:
    chans = {c: model.stats.scale(c, frame[c]) for c in model.spec.input_channels}
    return TimeSeriesFrame(frame.timestamps, chans, frame.sampling_interval)


def disaggregate(model: TrainedModel, frame: TimeSeriesFrame) -> np.ndarray:
    """Estimated appliance power for every sample of ``frame`` (watts, >= 0).

    Stride-1 windows are averaged where they overlap.  Samples in gap-free
    segments shorter than the window get no estimate and are reported as 0.
    """
    spec = model.spec
    if spec.uses_feedback and FEEDBACK not in frame.channels:
        if model.feeder is None:
            raise MissingChannel("model needs a fed-back estimate but has no feeder")
        frame = frame.with_channels(**{FEEDBACK: disaggregate(model.feeder, frame)})
    missing = [c for c in spec.input_channels if c not in frame.channels]
    if missing:
        raise MissingChannel(f"frame lacks channels {missing}")
    if len(frame) < spec.k:
        raise FrameTooShort(f"frame has {len(frame)} samples, model window is {spec.k}")
    scaled = _scaled_inputs(model, frame)
    try:
        wins = make_windows(scaled, spec.input_channels, None, spec.k, 1)
    except WindowTooLong:
        raise FrameTooShort("no gap-free segment is as long as the model window") from None
    pred = model.network.predict(wins.inputs)
    series = overlap_average(pred, wins.offsets, len(frame), allow_gaps=True)
    watts = model.stats.unscale(model.appliance, series)
    return np.maximum(np.nan_to_num(watts, nan=0.0), 0.0)


def recurrent_refine(module1: TrainedModel, module2: TrainedModel, frame: TimeSeriesFrame) -> np.ndarray:
    """Feed module 2's estimate to module 1 as an extra input channel."""
    if not module1.spec.uses_feedback:
        raise ChannelMismatch("module 1 has no feedback input channel")
    if module2.spec.uses_feedback:
        raise ChannelMismatch("module 2 must be a non-recurrent model")
    estimate = disaggregate(module2, frame)
    return disaggregate(module1, frame.with_channels(**{FEEDBACK: estimate}))
