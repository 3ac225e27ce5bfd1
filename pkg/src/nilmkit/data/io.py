"""CSV ingestion and persistence of :class:`TimeSeriesFrame`.

File layout: UTF-8, header row, first column ``unix_ts`` (integer seconds),
then one float column per channel.  Missing cells are empty.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Mapping

import numpy as np

from nilmkit.data.frame import TimeSeriesFrame
from nilmkit.errors import MalformedHeader, NonMonotoneTime

logger = logging.getLogger(__name__)

TIME_COLUMN = "unix_ts"


def _parse_float(cell: str) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_channels(path, schema: Mapping[str, str] | None = None,
                  interval: int | None = None) -> TimeSeriesFrame:
    """Read a frame from CSV.

    ``schema`` maps file column names to channel names; when omitted every
    column is loaded under its own name.  Rows with an unparsable, missing
    or negative value are dropped and counted in ``dropped_count``.  The
    sampling interval is the smallest timestamp step in the file unless
    ``interval`` is given (a one-row file defaults to 1 s).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedHeader(f"{path}: empty file") from None
        if not header or header[0] != TIME_COLUMN:
            raise MalformedHeader(f"{path}: first column must be {TIME_COLUMN!r}, got {header[:1]}")
        cols = header[1:]
        if not cols or len(set(cols)) != len(cols) or any(not c for c in cols):
            raise MalformedHeader(f"{path}: channel names must be non-empty and unique")
        if schema is None:
            schema = {c: c for c in cols}
        missing = [c for c in schema if c not in cols]
        if missing:
            raise MalformedHeader(f"{path}: columns {missing} named in schema are absent")
        picks = [(cols.index(src) + 1, dst) for src, dst in schema.items()]

        raw_ts: list[int] = []
        rows: list[list[float]] = []
        kept_ts: list[int] = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                ts = int(row[0].strip())
            except (ValueError, IndexError):
                dropped += 1
                continue
            raw_ts.append(ts)
            vals = [_parse_float(row[i]) if i < len(row) else None for i, _ in picks]
            if any(v is None or v < 0 for v in vals):
                dropped += 1
                continue
            kept_ts.append(ts)
            rows.append(vals)

    raw = np.asarray(raw_ts, dtype=np.int64)
    if raw.size > 1 and np.any(np.diff(raw) <= 0):
        raise NonMonotoneTime(f"{path}: timestamps are not strictly increasing")
    if interval is None:
        interval = int(np.min(np.diff(raw))) if raw.size > 1 else 1
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(picks))
    channels = {dst: data[:, j].copy() for j, (_, dst) in enumerate(picks)}
    if dropped:
        logger.info("%s: dropped %d rows during cleaning", path, dropped)
    return TimeSeriesFrame(np.asarray(kept_ts, dtype=np.int64), channels, interval, dropped)


def save_frame(frame: TimeSeriesFrame, path) -> None:
    """Write ``frame`` so that :func:`load_channels` reproduces it exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = frame.names
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([TIME_COLUMN, *names])
        cols = [frame.channels[n] for n in names]
        for i, ts in enumerate(frame.timestamps.tolist()):
            w.writerow([ts, *(repr(float(c[i])) for c in cols)])
