"""Adversarially trained autoencoder disaggregator.

The generator encodes the aggregate window into a latent code and decodes
it into the appliance window.  The discriminator scores (candidate,
aggregate) pairs stacked as two input channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nilmkit import engine as E
from nilmkit.data.frame import AGGREGATE, TimeSeriesFrame
from nilmkit.data.transforms import NormStats
from nilmkit.data.windows import WindowSet, make_windows, overlap_average
from nilmkit.errors import DivergedTraining, FrameTooShort, MissingChannel, WindowTooLong
from nilmkit.models.network import Network
from nilmkit.models.spec import ModelSpec, build_energan_specs
from nilmkit.models.training import TrainedModel, frame_stats

PROB_FLOOR = 1e-7


@dataclass
class GanPair:
    generator: TrainedModel
    discriminator: TrainedModel
    reconstruction_weight: float = 10.0
    g_state: E.AdamState | None = None
    d_state: E.AdamState | None = None
    rng: np.random.Generator | None = field(default=None, repr=False)
    log: list = field(default_factory=list)  # (d_loss, g_loss, reconstruction) per step

    def __post_init__(self):
        if self.reconstruction_weight < 0:
            raise ValueError("reconstruction weight must be non-negative")

    @property
    def k(self) -> int:
        return self.generator.spec.k

    @property
    def stats(self) -> NormStats:
        return self.generator.stats

    @property
    def appliance(self) -> str:
        return self.generator.appliance


def build_energan(k: int = 64, latent_dim: int = 64, reconstruction_weight: float = 10.0,
                  seed: int = 0, learning_rate: float = 1e-4, appliance: str = "appliance",
                  stats: NormStats | None = None) -> GanPair:
    gspec, dspec = build_energan_specs(k, latent_dim)
    gspec = gspec.with_hyper(learning_rate=learning_rate)
    dspec = dspec.with_hyper(learning_rate=learning_rate)
    gs, ds, shuffle = np.random.SeedSequence(seed).spawn(3)
    gen, disc = Network(gspec, gs), Network(dspec, ds)
    stats = stats or NormStats()
    return GanPair(
        TrainedModel(gspec, gen, stats, appliance),
        TrainedModel(dspec, disc, stats, appliance),
        reconstruction_weight,
        E.AdamState.for_params(gen.tensors(), learning_rate=learning_rate),
        E.AdamState.for_params(disc.tensors(), learning_rate=learning_rate),
        np.random.default_rng(shuffle),
    )


def _score(disc: Network, candidate, aggregate) -> E.Tensor:
    pair = E.concat([candidate, aggregate], axis=1)
    return E.clamp(disc(pair), PROB_FLOOR, 1.0 - PROB_FLOOR)


def gan_train_step(pair: GanPair, batch) -> tuple[float, float]:
    """One discriminator update followed by one generator update.

    ``batch`` is a normalized :class:`WindowSet` or an ``(inputs, targets)``
    pair shaped ``[N, 1, k]``.  Returns ``(d_loss, g_loss)``.
    """
    x, y = (batch.inputs, batch.targets) if isinstance(batch, WindowSet) else batch
    x, y = E.constant(x), E.constant(y)
    gen, disc = pair.generator.network, pair.discriminator.network
    n = x.shape[0]
    ones, zeros = np.ones((n, 1)), np.zeros((n, 1))

    with E.no_grad():
        fake = gen(x)
    d_loss = E.add(E.loss("bce", _score(disc, y, x), ones),
                   E.loss("bce", _score(disc, E.constant(fake.data), x), zeros))
    E.backward(d_loss)
    E.adam_step(disc.tensors(), pair.d_state)

    fake = gen(x)
    adv = E.loss("bce", _score(disc, fake, x), ones)
    rec = E.loss("mse", fake, y)
    g_loss = E.add(adv, E.scale(rec, pair.reconstruction_weight))
    E.backward(g_loss)
    for p in disc.tensors():  # the generator step must not leave gradients behind
        p.grad = None
    E.adam_step(gen.tensors(), pair.g_state)

    d, g = d_loss.item(), g_loss.item()
    if not (np.isfinite(d) and np.isfinite(g)):
        raise DivergedTraining("adversarial losses became non-finite")
    pair.log.append((d, g, rec.item()))
    return d, g


def gan_fit(frame: TimeSeriesFrame, appliance: str, k: int = 64, epochs: int = 10, seed: int = 0,
            stride: int | None = None, batch_size: int = 50, learning_rate: float = 1e-4,
            latent_dim: int = 64, reconstruction_weight: float = 10.0,
            pair: GanPair | None = None) -> GanPair:
    """Train a pair on aggregate -> ``appliance`` windows of ``frame``."""
    if pair is None:
        stats = frame_stats(frame, (AGGREGATE,), appliance)
        pair = build_energan(k, latent_dim, reconstruction_weight, seed, learning_rate, appliance, stats)
    k = pair.k
    wins, _ = make_windows(frame, (AGGREGATE,), appliance, k, stride or max(1, k // 2)).normalized(pair.stats)
    n = len(wins)
    for _ in range(epochs):
        order = pair.rng.permutation(n)
        for a in range(0, n, batch_size):
            idx = order[a:a + batch_size]
            gan_train_step(pair, (wins.inputs[idx], wins.targets[idx]))
    return pair


def gan_disaggregate(pair: GanPair, frame: TimeSeriesFrame) -> np.ndarray:
    """Estimate from the aggregate alone; appliance channels are never read."""
    if AGGREGATE not in frame.channels:
        raise MissingChannel("frame has no aggregate channel")
    if len(frame) < pair.k:
        raise FrameTooShort(f"frame has {len(frame)} samples, window is {pair.k}")
    agg = TimeSeriesFrame(frame.timestamps, {AGGREGATE: pair.stats.scale(AGGREGATE, frame[AGGREGATE])},
                          frame.sampling_interval)
    try:
        wins = make_windows(agg, (AGGREGATE,), None, pair.k, 1)
    except WindowTooLong:
        raise FrameTooShort("no gap-free segment is as long as the window") from None
    pred = pair.generator.network.predict(wins.inputs)
    series = overlap_average(pred, wins.offsets, len(frame), allow_gaps=True)
    watts = pair.stats.unscale(pair.appliance, series)
    return np.maximum(np.nan_to_num(watts, nan=0.0), 0.0)


def discriminator_scores(pair: GanPair, candidate: np.ndarray, aggregate: np.ndarray) -> np.ndarray:
    with E.no_grad():
        return pair.discriminator.network(np.concatenate([candidate, aggregate], axis=1)).data


__all__ = ["GanPair", "build_energan", "gan_train_step", "gan_fit", "gan_disaggregate",
           "discriminator_scores", "ModelSpec"]
