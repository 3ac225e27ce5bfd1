"""Sliding windows over frames and overlap-averaged reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from nilmkit.data.frame import TimeSeriesFrame
from nilmkit.data.transforms import NormStats, fit_stats
from nilmkit.errors import GapInCoverage, ShapeMismatch, WindowTooLong


@dataclass(frozen=True)
class WindowSet:
    """Paired input/target windows.

    ``inputs`` is ``[N, C, k]`` and ``targets`` is ``[N, 1, k]`` (or ``None``
    for inference).  ``offsets`` are start indices into the source frame.
    """

    inputs: np.ndarray
    targets: np.ndarray | None
    offsets: np.ndarray
    k: int
    stride: int
    channels: tuple
    target: str | None
    total_len: int
    stats: NormStats | None = None

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def normalized(self, stats: NormStats | None = None, allow_constant: bool = False):
        if self.stats is not None:
            raise ValueError("window set is already normalized")
        if stats is None:
            vals = {c: self.inputs[:, j, :] for j, c in enumerate(self.channels)}
            if self.targets is not None:
                vals[self.target] = self.targets
            stats = fit_stats(vals, allow_constant)
        inputs = np.stack([stats.scale(c, self.inputs[:, j, :]) for j, c in enumerate(self.channels)], axis=1)
        targets = None if self.targets is None else stats.scale(self.target, self.targets)
        return replace(self, inputs=inputs, targets=targets, stats=stats), stats

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.intp)
        return replace(self, inputs=self.inputs[idx], offsets=self.offsets[idx],
                       targets=None if self.targets is None else self.targets[idx])


def window_count(length: int, k: int, stride: int) -> int:
    return (length - k) // stride + 1 if length >= k else 0


def make_windows(frame: TimeSeriesFrame, channels, target: str | None, k: int, stride: int = 1) -> WindowSet:
    """Cut every gap-free segment of ``frame`` into length-``k`` windows.

    Windows never straddle a gap.  Within a segment the count is
    ``floor((len - k) / stride) + 1``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    channels = tuple(channels)
    cols = [frame[c] for c in channels]
    tgt = frame[target] if target is not None else None
    if k > len(frame):
        raise WindowTooLong(f"window of {k} samples exceeds frame length {len(frame)}")
    data = np.stack(cols, axis=0) if cols else np.zeros((0, len(frame)))
    ins, outs, offs = [], [], []
    for a, b in frame.segment_bounds():
        n = window_count(b - a, k, stride)
        if n == 0:
            continue
        starts = a + stride * np.arange(n)
        idx = starts[:, None] + np.arange(k)[None, :]
        ins.append(data[:, idx].transpose(1, 0, 2))
        if tgt is not None:
            outs.append(tgt[idx][:, None, :])
        offs.append(starts)
    if not offs:
        raise WindowTooLong(f"no gap-free segment holds {k} samples")
    return WindowSet(
        inputs=np.ascontiguousarray(np.concatenate(ins)),
        targets=np.ascontiguousarray(np.concatenate(outs)) if tgt is not None else None,
        offsets=np.concatenate(offs).astype(np.int64),
        k=k, stride=stride, channels=channels, target=target, total_len=len(frame),
    )


def overlap_average(windows_out, offsets, total_len: int, return_coverage: bool = False,
                    allow_gaps: bool = False):
    """Average overlapping window predictions back onto a length-``total_len`` series.

    Uncovered samples raise :class:`GapInCoverage` unless ``allow_gaps`` is
    set, in which case they come back as NaN.
    """
    w = np.asarray(windows_out, dtype=np.float64)
    if w.ndim == 3:
        if w.shape[1] != 1:
            raise ShapeMismatch("expected one output channel per window")
        w = w[:, 0, :]
    offsets = np.asarray(offsets, dtype=np.int64)
    if w.ndim != 2 or w.shape[0] != offsets.size:
        raise ShapeMismatch(f"{offsets.size} offsets for windows shaped {list(w.shape)}")
    k = w.shape[1]
    if offsets.size and (offsets.min() < 0 or offsets.max() + k > total_len):
        raise ShapeMismatch("window offsets run past the series")
    idx = (offsets[:, None] + np.arange(k)[None, :]).ravel()
    flat = w.ravel()
    cover = np.bincount(idx, minlength=total_len)
    if np.any(cover == 0) and not allow_gaps:
        raise GapInCoverage(f"{int(np.sum(cover == 0))} samples are covered by no window")
    # averaging deviations from the per-sample minimum keeps agreeing windows exact
    base = np.full(total_len, np.inf)
    np.minimum.at(base, idx, flat)
    sums = np.bincount(idx, weights=flat - base[idx], minlength=total_len)
    with np.errstate(invalid="ignore", divide="ignore"):
        series = np.where(cover > 0, base + sums / np.maximum(cover, 1), np.nan)
    return (series, cover) if return_coverage else series
