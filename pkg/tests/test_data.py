import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nilmkit.data import (
    SynthProfile, TimeSeriesFrame, denormalize, inject_noise, load_channels, make_windows,
    normalize, overlap_average, power_triangle, resample, save_frame, synth_generate, window_count,
)
from nilmkit.errors import (
    DegenerateChannel, GapInCoverage, MalformedHeader, NonIntegerRatio, NonMonotoneTime,
    UnknownChannel, WindowTooLong,
)


def frame(values, interval=60, start=0, **extra):
    n = len(values)
    chans = {"aggregate": values, **extra}
    return TimeSeriesFrame(start + interval * np.arange(n), chans, interval)


def write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text, encoding="utf-8")
    return p


# -- ingestion ---------------------------------------------------------------

def test_load_well_formed(tmp_path):
    f = load_channels(write(tmp_path, "unix_ts,aggregate\n0,1.5\n60,2\n120,3\n"))
    assert len(f) == 3 and f.sampling_interval == 60 and f.dropped_count == 0
    assert np.array_equal(f["aggregate"], [1.5, 2, 3])


def test_load_drops_nan_row(tmp_path):
    f = load_channels(write(tmp_path, "unix_ts,aggregate\n0,1\n60,NaN\n120,3\n"))
    assert len(f) == 2 and f.dropped_count == 1


def test_load_drops_empty_and_negative(tmp_path):
    f = load_channels(write(tmp_path, "unix_ts,aggregate,fridge\n0,1,\n60,2,1\n120,-3,1\n180,4,2\n"))
    assert len(f) == 2 and f.dropped_count == 2
    # the dropped row at 0 s does not change the inferred interval
    assert f.sampling_interval == 60


def test_load_errors(tmp_path):
    with pytest.raises(NonMonotoneTime):
        load_channels(write(tmp_path, "unix_ts,aggregate\n0,1\n0,2\n"))
    with pytest.raises(MalformedHeader):
        load_channels(write(tmp_path, "time,aggregate\n0,1\n"))
    with pytest.raises(FileNotFoundError):
        load_channels(tmp_path / "absent.csv")


def test_load_schema_renames(tmp_path):
    f = load_channels(write(tmp_path, "unix_ts,mains,kettle\n0,5,1\n60,6,2\n"), {"mains": "aggregate"})
    assert f.names == ["aggregate"]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False, allow_infinity=False), min_size=2, max_size=30))
def test_csv_round_trip_is_bit_faithful(tmp_path_factory, vals):
    f = frame(np.array(vals), fridge=np.array(vals)[::-1].copy())
    path = tmp_path_factory.mktemp("rt") / "f.csv"
    save_frame(f, path)
    assert load_channels(path).equals(f)


# -- resampling --------------------------------------------------------------

def test_resample_examples():
    f = frame(np.array([2.0, 4, 6, 8]), interval=30)
    assert resample(f, 30).equals(f)
    r = resample(f, 60)
    assert np.array_equal(r["aggregate"], [3, 7]) and r.sampling_interval == 60
    assert len(resample(frame(np.arange(7.0)), 120)) == 3
    with pytest.raises(NonIntegerRatio):
        resample(f, 45)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e4), min_size=2, max_size=50), st.integers(1, 5))
def test_resample_preserves_mean(vals, ratio):
    f = frame(np.array(vals))
    r = resample(f, 60 * ratio)
    used = (len(vals) // ratio) * ratio
    if used:
        assert abs(r["aggregate"].mean() - np.mean(vals[:used])) <= 1e-12 * max(1.0, np.max(vals))


def test_resample_respects_gaps():
    ts = np.array([0, 60, 120, 180, 600, 660])
    f = TimeSeriesFrame(ts, {"aggregate": np.array([1.0, 3, 5, 7, 10, 20])}, 60)
    r = resample(f, 120)
    assert np.array_equal(r["aggregate"], [2, 6, 15])
    assert np.array_equal(r.timestamps, [0, 120, 600])


# -- normalization -----------------------------------------------------------

def test_normalize_examples():
    f = frame(np.array([0.0, 5, 10]))
    n, stats = normalize(f)
    assert np.array_equal(n["aggregate"], [0, 0.5, 1]) and stats["aggregate"] == (0, 10)
    t, _ = normalize(frame(np.array([12.0])), stats)
    assert t["aggregate"][0] == pytest.approx(1.2, abs=1e-15)
    with pytest.raises(DegenerateChannel):
        normalize(frame(np.array([3.0, 3.0])))
    z, _ = normalize(frame(np.array([3.0, 3.0])), allow_constant=True)
    assert np.array_equal(z["aggregate"], [0, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e5), min_size=2, max_size=40).filter(lambda v: max(v) > min(v)))
def test_normalize_inverse(vals):
    f = frame(np.array(vals))
    n, stats = normalize(f)
    back = denormalize(n, stats)
    assert np.max(np.abs(back["aggregate"] - f["aggregate"])) <= 1e-12 * max(1.0, max(vals))
    assert n["aggregate"].min() >= 0 and n["aggregate"].max() <= 1


# -- power triangle ----------------------------------------------------------

def test_power_triangle_examples():
    assert power_triangle(5, 230, 0) == (1150, 1150, 0)
    s, p, q = power_triangle(5, 230, math.pi / 2)
    assert abs(p) < 1e-9 and q == pytest.approx(s)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 100), st.floats(0, 400), st.floats(-math.pi, math.pi))
def test_power_triangle_pythagoras(I, V, th):
    s, p, q = power_triangle(I, V, th)
    assert abs(p * p + q * q - s * s) <= 1e-9 * max(1.0, s * s)


# -- windows -----------------------------------------------------------------

def test_window_examples():
    assert len(make_windows(frame(np.arange(5.0)), ["aggregate"], "aggregate", 5, 1)) == 1
    w = make_windows(frame(np.arange(6.0)), ["aggregate"], "aggregate", 4, 1)
    assert np.array_equal(w.offsets, [0, 1, 2])
    f = frame(np.arange(8.0), s=np.ones(8), q=np.ones(8), I=np.ones(8), fridge=np.arange(8.0))
    w = make_windows(f, ["aggregate", "s", "q", "I"], "fridge", 3, 2)
    assert w.inputs.shape == (3, 4, 3) and w.targets.shape == (3, 1, 3)
    with pytest.raises(WindowTooLong):
        make_windows(f, ["aggregate"], "fridge", 9)
    with pytest.raises(UnknownChannel):
        make_windows(f, ["nope"], "fridge", 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 20), st.integers(1, 7))
def test_window_count_and_pairing(n, k, stride):
    if k > n:
        return
    x = np.arange(n, dtype=float)
    w = make_windows(frame(x, fridge=x * 2), ["aggregate"], "fridge", k, stride)
    assert len(w) == (n - k) // stride + 1 == window_count(n, k, stride)
    assert np.all(np.diff(w.offsets) == stride)
    assert np.array_equal(w.targets[:, 0, :], 2 * w.inputs[:, 0, :])


def test_windows_do_not_straddle_gaps():
    ts = np.array([0, 60, 120, 180, 1000, 1060, 1120])
    f = TimeSeriesFrame(ts, {"aggregate": np.arange(7.0)}, 60)
    w = make_windows(f, ["aggregate"], "aggregate", 3)
    assert np.array_equal(w.offsets, [0, 1, 4])


def test_window_normalization_in_unit_range():
    x = np.random.default_rng(0).uniform(0, 500, 40)
    w, stats = make_windows(frame(x, fridge=x / 2), ["aggregate"], "fridge", 8, 4).normalized()
    assert w.inputs.min() >= 0 and w.inputs.max() <= 1 and w.targets.max() <= 1
    assert w.stats is stats


# -- overlap averaging -------------------------------------------------------

def test_overlap_examples():
    out = overlap_average(np.full((3, 1, 4), 2.5), [0, 1, 2], 6)
    assert np.array_equal(out, np.full(6, 2.5))
    wins = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    wins[1, 0] = wins[0, 1] + 2  # overlap sample disagrees by 2
    out = overlap_average(wins, [0, 1], 4)
    assert out[1] == wins[0, 1] + 1
    with pytest.raises(GapInCoverage):
        overlap_average(np.ones((2, 2)), [0, 3], 5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1e4), min_size=3, max_size=40), st.integers(1, 10))
def test_overlap_reconstructs_exactly(vals, k):
    x = np.array(vals)
    if k > x.size:
        return
    w = make_windows(frame(x), ["aggregate"], "aggregate", k, 1)
    series, cover = overlap_average(w.targets, w.offsets, x.size, return_coverage=True)
    assert np.array_equal(series, x)
    assert cover.sum() == len(w) * k


# -- noise ---------------------------------------------------------------------

def test_noise_zero_is_identity():
    f = frame(np.linspace(0, 100, 50))
    assert inject_noise(f, 0, seed=1).equals(f)


def test_noise_std_matches_percentage():
    f = frame(np.full(100_000, 1000.0))
    sd = inject_noise(f, 40, seed=3)["aggregate"].std()
    assert 380 <= sd <= 420


def test_noise_clips_and_is_deterministic():
    f = frame(np.full(5000, 1.0))
    a, b = inject_noise(f, 100, seed=9), inject_noise(f, 100, seed=9)
    assert a["aggregate"].min() >= 0 and a.equals(b)


# -- synthesis -----------------------------------------------------------------

def test_synth_always_on():
    f = synth_generate([SynthProfile("router", "always-on", levels=(60,))], 100, seed=0)
    assert np.array_equal(f["aggregate"], np.full(100, 60.0))


PROFILES = [
    SynthProfile("kettle", "two-state", levels=(2000,), durations=(4,), duty_per_hour=1.0),
    SynthProfile("fridge", "cyclic", levels=(120,), durations=(20, 40)),
    SynthProfile("washer", "multi-state", levels=(2000, 300, 500), durations=(10, 20, 5), duty_per_hour=0.3),
]


def test_synth_sum_and_determinism():
    a = synth_generate(PROFILES, 3000, seed=5)
    assert np.array_equal(a["aggregate"], a["kettle"] + a["fridge"] + a["washer"])
    assert a.equals(synth_generate(PROFILES, 3000, seed=5))
    assert not a.equals(synth_generate(PROFILES, 3000, seed=6))
    assert np.allclose(a["s"] ** 2, a["aggregate"] ** 2 + a["q"] ** 2)


def test_synth_noise_floor():
    noisy = [SynthProfile("fridge", "cyclic", levels=(120,), durations=(20, 40), noise_sigma=5.0)]
    f = synth_generate(noisy, 2000, seed=1)
    assert f["aggregate"].min() >= 0
    assert 3 < np.std(f["aggregate"] - f["fridge"]) < 7


def test_synth_profile_validation():
    with pytest.raises(ValueError):
        SynthProfile("x", "two-state", levels=(0,))
    with pytest.raises(ValueError):
        SynthProfile("x", "two-state", durations=(0,))
    with pytest.raises(ValueError):
        synth_generate([SynthProfile("f", "cyclic", durations=(50, 50))], 10, seed=0)
