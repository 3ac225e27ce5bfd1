from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nilmkit.errors import NonMonotoneTime, ShapeMismatch, UnknownChannel

AGGREGATE = "aggregate"
ELECTRICAL = ("s", "q", "I")


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Timestamped multi-channel power record.

    ``timestamps`` are integer epoch seconds; ``channels`` maps names to
    float arrays of the same length.  Gaps larger than one interval are
    allowed but split the frame into independent segments.
    """

    timestamps: np.ndarray
    channels: dict
    sampling_interval: int
    dropped_count: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        chans = {k: np.asarray(v, dtype=np.float64) for k, v in self.channels.items()}
        object.__setattr__(self, "channels", chans)
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise NonMonotoneTime("timestamps must be strictly increasing")
        for name, arr in chans.items():
            if arr.shape != ts.shape:
                raise ShapeMismatch(f"channel {name!r} has {arr.size} samples, expected {ts.size}")
        if self.sampling_interval <= 0:
            raise ValueError("sampling_interval must be positive")

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise UnknownChannel(name) from None

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    def with_channels(self, **updates) -> "TimeSeriesFrame":
        chans = dict(self.channels)
        chans.update({k: np.asarray(v, dtype=np.float64) for k, v in updates.items()})
        return TimeSeriesFrame(self.timestamps, chans, self.sampling_interval, self.dropped_count, dict(self.meta))

    def slice(self, start: int, stop: int | None = None) -> "TimeSeriesFrame":
        sl = slice(start, stop)
        return TimeSeriesFrame(self.timestamps[sl], {k: v[sl] for k, v in self.channels.items()},
                               self.sampling_interval, 0, dict(self.meta))

    def split(self, fraction: float) -> tuple["TimeSeriesFrame", "TimeSeriesFrame"]:
        cut = int(round(len(self) * fraction))
        return self.slice(0, cut), self.slice(cut)

    def segment_bounds(self) -> list[tuple[int, int]]:
        """Half-open index ranges of gap-free runs."""
        if len(self) == 0:
            return []
        breaks = np.nonzero(np.diff(self.timestamps) != self.sampling_interval)[0] + 1
        edges = [0, *breaks.tolist(), len(self)]
        return list(zip(edges[:-1], edges[1:]))

    def segments(self) -> list["TimeSeriesFrame"]:
        return [self.slice(a, b) for a, b in self.segment_bounds()]

    def equals(self, other: "TimeSeriesFrame") -> bool:
        return (
            self.sampling_interval == other.sampling_interval
            and np.array_equal(self.timestamps, other.timestamps)
            and self.names == other.names
            and all(np.array_equal(self.channels[k], other.channels[k]) for k in self.channels)
        )
