"""Seeded synthetic households built from simple appliance archetypes."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from nilmkit.data.frame import AGGREGATE, TimeSeriesFrame

ARCHETYPES = ("two-state", "multi-state", "cyclic", "always-on")
MAINS_VOLTAGE = 230.0
START_TS = 1_577_836_800  # 2020-01-01T00:00:00Z

# resistive loads sit near unity, motor loads lag
DEFAULT_POWER_FACTOR = {"two-state": 1.0, "multi-state": 0.9, "cyclic": 0.8, "always-on": 0.95}


@dataclass(frozen=True)
class SynthProfile:
    """One appliance.

    ``levels`` and ``durations`` (in samples) describe an activation:

    * two-state: one on-level held for ``durations[0]``
    * multi-state: consecutive stages ``levels[i]`` for ``durations[i]``
    * cyclic: on at ``levels[0]`` for ``durations[0]``, off for ``durations[1]``, repeating
    * always-on: constant ``levels[0]``

    ``duty_per_hour`` is the expected number of activation starts per hour
    (two-state and multi-state only).  ``noise_sigma`` adds to the aggregate
    noise floor in watts.
    """

    name: str
    archetype: str
    levels: tuple = (1000.0,)
    durations: tuple = (30,)
    duty_per_hour: float = 0.5
    noise_sigma: float = 0.0
    power_factor: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "durations", tuple(int(v) for v in self.durations))
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}; choose from {ARCHETYPES}")
        if not self.levels or any(v <= 0 for v in self.levels):
            raise ValueError(f"{self.name}: power levels must be strictly positive")
        if any(d < 1 for d in self.durations):
            raise ValueError(f"{self.name}: durations must be at least one sample")
        need = {"two-state": (1, 1), "multi-state": (1, None), "cyclic": (1, 2), "always-on": (1, 0)}[self.archetype]
        if self.archetype == "multi-state" and len(self.durations) != len(self.levels):
            raise ValueError(f"{self.name}: multi-state needs one duration per level")
        if self.archetype in ("two-state", "cyclic") and len(self.durations) < need[1]:
            raise ValueError(f"{self.name}: {self.archetype} needs {need[1]} duration(s)")
        if self.duty_per_hour < 0 or self.noise_sigma < 0:
            raise ValueError(f"{self.name}: duty and noise must be non-negative")
        pf = self.power_factor if self.power_factor is not None else DEFAULT_POWER_FACTOR[self.archetype]
        if not 0 < pf <= 1:
            raise ValueError(f"{self.name}: power factor must lie in (0, 1]")
        object.__setattr__(self, "power_factor", float(pf))

    @property
    def cycle_length(self) -> int:
        if self.archetype == "always-on":
            return 1
        if self.archetype == "cyclic":
            return self.durations[0] + self.durations[1]
        return sum(self.durations) if self.archetype == "multi-state" else self.durations[0]

    def activation(self) -> np.ndarray:
        if self.archetype == "multi-state":
            return np.repeat(np.asarray(self.levels), self.durations)
        return np.full(self.durations[0], self.levels[0])

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("meta")
        d["levels"] = list(self.levels)
        d["durations"] = list(self.durations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthProfile":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def load_profiles(path) -> list[SynthProfile]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    items = raw["appliances"] if isinstance(raw, dict) else raw
    return [SynthProfile.from_dict(d) for d in items]


def _simulate(profile: SynthProfile, duration: int, interval: int, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros(duration)
    if profile.archetype == "always-on":
        out[:] = profile.levels[0]
        return out
    if profile.archetype == "cyclic":
        on, off = profile.durations[0], profile.durations[1]
        phase = int(rng.integers(on + off))
        t = (np.arange(duration) + phase) % (on + off)
        out[t < on] = profile.levels[0]
        return out
    shape = profile.activation()
    p_start = min(1.0, profile.duty_per_hour * interval / 3600.0)
    starts = rng.random(duration) < p_start
    t = 0
    while t < duration:
        if starts[t]:
            n = min(shape.size, duration - t)
            out[t:t + n] = shape[:n]
            t += shape.size
        else:
            t += 1
    return out


def synth_generate(profiles, duration: int, seed: int, interval: int = 60,
                   start: int = START_TS) -> TimeSeriesFrame:
    """Simulate ``duration`` samples of a household.

    The frame holds one channel per appliance, the aggregate (their sum plus
    Gaussian noise clipped at zero) and the electrical channels ``s``, ``q``
    and ``I`` derived from each appliance's power factor at 230 V.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("at least one appliance profile is required")
    names = [p.name for p in profiles]
    if len(set(names)) != len(names) or AGGREGATE in names:
        raise ValueError("appliance names must be unique and not 'aggregate'")
    longest = max(p.cycle_length for p in profiles)
    if duration < longest:
        raise ValueError(f"duration {duration} is shorter than the longest cycle ({longest})")

    streams = np.random.default_rng(seed).spawn(len(profiles) + 1)
    channels = {}
    total = np.zeros(duration)
    reactive = np.zeros(duration)
    for prof, rng in zip(profiles, streams):
        p = _simulate(prof, duration, interval, rng)
        channels[prof.name] = p
        total += p
        reactive += p * np.tan(np.arccos(prof.power_factor))
    sigma = float(np.sqrt(sum(p.noise_sigma ** 2 for p in profiles)))
    agg = total if sigma == 0 else np.maximum(total + streams[-1].normal(0.0, sigma, duration), 0.0)
    s = np.hypot(agg, reactive)
    channels = {AGGREGATE: agg, **channels, "s": s, "q": reactive, "I": s / MAINS_VOLTAGE}
    ts = start + interval * np.arange(duration, dtype=np.int64)
    return TimeSeriesFrame(ts, channels, interval)
