"""Resampling, min-max scaling, electrical features and noise injection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nilmkit.data.frame import AGGREGATE, TimeSeriesFrame
from nilmkit.errors import DegenerateChannel, NonIntegerRatio


def resample(frame: TimeSeriesFrame, target_interval: int) -> TimeSeriesFrame:
    """Block-mean downsampling; each gap-free segment is handled on its own.

    Trailing samples that do not fill a whole block are dropped.
    """
    src = frame.sampling_interval
    if target_interval < src or target_interval % src:
        raise NonIntegerRatio(f"{target_interval}s is not an integer multiple of {src}s")
    ratio = target_interval // src
    if ratio == 1:
        return frame.slice(0)
    ts_parts, parts = [], {k: [] for k in frame.names}
    for a, b in frame.segment_bounds():
        n = (b - a) // ratio
        if n == 0:
            continue
        ts_parts.append(frame.timestamps[a:a + n * ratio:ratio])
        for k in frame.names:
            parts[k].append(frame.channels[k][a:a + n * ratio].reshape(n, ratio).mean(axis=1))
    ts = np.concatenate(ts_parts) if ts_parts else np.zeros(0, dtype=np.int64)
    chans = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in parts.items()}
    return TimeSeriesFrame(ts, chans, target_interval, 0, dict(frame.meta))


@dataclass
class NormStats:
    """Per-channel (min, max) pairs computed on training data."""

    bounds: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> tuple[float, float]:
        return self.bounds[name]

    def __contains__(self, name: str) -> bool:
        return name in self.bounds

    def scale(self, name: str, x):
        lo, hi = self.bounds[name]
        if hi == lo:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        return (np.asarray(x, dtype=np.float64) - lo) / (hi - lo)

    def unscale(self, name: str, x):
        lo, hi = self.bounds[name]
        return np.asarray(x, dtype=np.float64) * (hi - lo) + lo

    def to_dict(self) -> dict:
        return {k: [float(lo), float(hi)] for k, (lo, hi) in self.bounds.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls({k: (float(v[0]), float(v[1])) for k, v in d.items()})


def fit_stats(values: dict, allow_constant: bool = False) -> NormStats:
    bounds = {}
    for name, arr in values.items():
        arr = np.asarray(arr, dtype=np.float64)
        lo, hi = float(arr.min()), float(arr.max())
        if hi == lo and not allow_constant:
            raise DegenerateChannel(f"channel {name!r} is constant ({lo})")
        bounds[name] = (lo, hi)
    return NormStats(bounds)


def normalize(target, stats: NormStats | None = None, allow_constant: bool = False):
    """Min-max scale a frame or :class:`~nilmkit.data.windows.WindowSet` to [0, 1].

    Returns ``(normalized, stats)``.  When ``stats`` is given it is applied
    verbatim, so test data may land outside [0, 1].  Constant channels raise
    :class:`DegenerateChannel` unless ``allow_constant`` is set, in which case
    they map to 0.
    """
    from nilmkit.data.windows import WindowSet

    if isinstance(target, WindowSet):
        return target.normalized(stats, allow_constant)
    if stats is None:
        stats = fit_stats(target.channels, allow_constant)
    else:
        for name in target.names:
            if name in stats:
                lo, hi = stats[name]
                if hi == lo and not allow_constant:
                    raise DegenerateChannel(f"channel {name!r} has max == min in the supplied stats")
    chans = {k: (stats.scale(k, v) if k in stats else v) for k, v in target.channels.items()}
    return target.with_channels(**chans), stats


def denormalize(frame: TimeSeriesFrame, stats: NormStats) -> TimeSeriesFrame:
    chans = {k: (stats.unscale(k, v) if k in stats else v) for k, v in frame.channels.items()}
    return frame.with_channels(**chans)


def power_triangle(I, V, theta):
    """Apparent, active and reactive power from current, voltage and phase angle."""
    I = np.asarray(I, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    s = I * V
    p = s * np.cos(theta)
    q = s * np.sin(theta)
    if s.ndim == 0:
        return float(s), float(p), float(q)
    return s, p, q


def inject_noise(frame: TimeSeriesFrame, percent: float, seed: int | None = None,
                 channel: str = AGGREGATE) -> TimeSeriesFrame:
    """Multiplicative Gaussian noise: one standard deviation is ``percent``% of each sample.

    Results are clipped at zero.
    """
    if not 0 <= percent <= 100:
        raise ValueError("percent must lie in [0, 100]")
    if percent == 0:
        return frame.slice(0)
    rng = np.random.default_rng(seed)
    p = frame[channel]
    noisy = p + rng.standard_normal(p.shape) * (percent / 100.0) * p
    return frame.with_channels(**{channel: np.maximum(noisy, 0.0)})
