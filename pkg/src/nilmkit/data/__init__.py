"""Ingestion, resampling, scaling, windowing and synthetic households."""

from nilmkit.data.frame import AGGREGATE, ELECTRICAL, TimeSeriesFrame
from nilmkit.data.io import load_channels, save_frame
from nilmkit.data.synth import SynthProfile, load_profiles, synth_generate
from nilmkit.data.transforms import (
    NormStats, denormalize, fit_stats, inject_noise, normalize, power_triangle, resample,
)
from nilmkit.data.windows import WindowSet, make_windows, overlap_average, window_count

__all__ = [
    "AGGREGATE", "ELECTRICAL", "TimeSeriesFrame", "load_channels", "save_frame",
    "SynthProfile", "load_profiles", "synth_generate", "NormStats", "denormalize",
    "fit_stats", "inject_noise", "normalize", "power_triangle", "resample",
    "WindowSet", "make_windows", "overlap_average", "window_count",
]
