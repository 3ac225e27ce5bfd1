import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from nilmkit.errors import (
    EmptyInput, LengthMismatch, UnsortedLevels, ZeroTotalEnergy, ZeroTruthEnergy,
)
from nilmkit.metrics import (
    MetricReport, fraction_indices, mae, noise_degradation, nrms, percentile_errors,
    pointwise_metrics, rmse, sae, write_plot_csv,
)

watts = st.floats(0, 5000, allow_nan=False, allow_infinity=False)


def series_pair(min_size=1, max_size=200):
    return st.integers(min_size, max_size).flatmap(
        lambda n: st.tuples(st.lists(watts, min_size=n, max_size=n),
                            st.lists(watts, min_size=n, max_size=n).filter(lambda t: sum(t) > 0)))


def close(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_pointwise_examples():
    m = pointwise_metrics([0, 0], [3, 1])
    assert m.mae == 2 and m.rmse == pytest.approx(math.sqrt(5)) and m.sae == 1
    assert nrms(np.zeros(5), [1, 2, 3, 4, 5]) == 1.0
    t = np.array([4.0, 0, 7])
    m = pointwise_metrics(t, t)
    assert (m.mae, m.rmse, m.nrms, m.sae, m.max) == (0, 0, 0, 0, 0)


def test_pointwise_errors():
    with pytest.raises(LengthMismatch):
        mae([1, 2], [1])
    with pytest.raises(ZeroTruthEnergy):
        sae([1, 2], [0, 0])
    with pytest.raises(ZeroTruthEnergy):
        nrms([1, 2], [0, 0])


@settings(max_examples=300, deadline=None)
@given(series_pair())
def test_pointwise_match_loop_oracles(pair):
    e, t = pair
    assert close(mae(e, t), oracles.mae(e, t))
    assert close(rmse(e, t), oracles.rmse(e, t))
    assert close(nrms(e, t), oracles.nrms(e, t))
    assert close(sae(e, t), oracles.sae(e, t))
    assert mae(e, t) <= rmse(e, t) + 1e-12


@settings(max_examples=100, deadline=None)
@given(series_pair(), st.floats(0.01, 100))
def test_nrms_scale_invariant(pair, c):
    e, t = map(np.asarray, pair)
    assert nrms(c * e, c * t) == pytest.approx(nrms(e, t), rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(series_pair(min_size=2), st.randoms(use_true_random=False))
def test_sae_depends_only_on_totals(pair, rnd):
    e, t = list(pair[0]), list(pair[1])
    rnd.shuffle(e)
    assert sae(e, t) == pytest.approx(sae(pair[0], t), rel=1e-9, abs=1e-12)


def test_fraction_examples():
    perfect = {"a": [1.0, 2.0], "b": [3.0, 0.0]}
    for fi in fraction_indices(perfect, perfect).values():
        assert fi.defi == 0
    single = fraction_indices({"a": [5.0]}, {"a": [5.0]})["a"]
    assert single.eefi == 1 and single.aefi == 1
    fi = fraction_indices({"a": [30.0], "b": [10.0]}, {"a": [20.0], "b": [20.0]})
    assert fi["a"].eefi == pytest.approx(math.sqrt(0.75))
    assert fi["a"].aefi == pytest.approx(math.sqrt(20 / 40))
    fc = fraction_indices({"a": [30.0], "b": [10.0]}, {"a": [10.0], "b": [10.0]}, corrected=True)
    assert fc["a"].aefi == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ZeroTotalEnergy):
        fraction_indices({"a": [0.0]}, {"a": [1.0]})


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.lists(series_pair(5, 5), min_size=n, max_size=n)),
       st.booleans())
def test_fraction_match_oracle(pairs, corrected):
    est = {f"a{i}": p[0] for i, p in enumerate(pairs)}
    tru = {f"a{i}": p[1] for i, p in enumerate(pairs)}
    if sum(map(sum, est.values())) <= 0:
        return
    got = fraction_indices(est, tru, corrected)
    ref = oracles.fraction_indices(est, tru, corrected)
    for j in est:
        assert close(got[j].eefi, ref[j][0]) and close(got[j].aefi, ref[j][1])
        assert got[j].defi == abs(got[j].eefi - got[j].aefi)


def test_noise_degradation_examples():
    assert noise_degradation([(0, 7), (5, 7), (10, 7)]) == ([0, 0], 0)
    assert noise_degradation([(0, 10), (5, 15)])[0] == [1.0]
    rates, _ = noise_degradation([(0, 17.700), (5, 16.9)])
    assert rates[0] == pytest.approx(-0.16, abs=1e-12)
    with pytest.raises(UnsortedLevels):
        noise_degradation([(5, 1), (0, 2)])
    with pytest.raises(UnsortedLevels):
        noise_degradation([(0, 1)])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0.5, 10), watts), min_size=2, max_size=8))
def test_noise_degradation_matches_oracle(steps):
    levels = np.cumsum([s for s, _ in steps])
    curve = list(zip(levels.tolist(), [m for _, m in steps]))
    rates, mean = noise_degradation(curve)
    ref_rates, ref_mean = oracles.delta_r(curve)
    assert all(close(a, b) for a, b in zip(rates, ref_rates)) and close(mean, ref_mean)


def test_percentile_examples():
    assert percentile_errors(np.full(9, 4.2)) == [4.2, 4.2, 4.2]
    assert percentile_errors(np.arange(1, 101), [50]) == [50.5]
    with pytest.raises(EmptyInput):
        percentile_errors([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5000, 5000), min_size=1, max_size=200),
       st.lists(st.floats(0, 100), min_size=1, max_size=5))
def test_percentiles_match_oracle_and_are_monotone(errors, levels):
    levels = sorted(levels)
    got = percentile_errors(errors, levels)
    assert all(close(g, oracles.percentile(errors, lv)) for g, lv in zip(got, levels))
    assert all(b >= a - 1e-9 for a, b in zip(got, got[1:]))


def test_report_invariants_and_writers(tmp_path):
    rng = np.random.default_rng(0)
    truths = {"kettle": rng.uniform(0, 2000, 50), "fridge": rng.uniform(0, 150, 50)}
    est = {k: np.abs(v + rng.normal(0, 30, 50)) for k, v in truths.items()}
    rep = MetricReport.build(est, truths)
    for row in rep.appliances.values():
        assert row["mae"] <= row["rmse"] and all(v >= 0 for v in row.values())
        assert row["defi"] == abs(row["eefi"] - row["aefi"])
    a = rep.write_json(tmp_path / "r.json").read_bytes()
    assert json.loads(a)["appliances"]["kettle"]["p50"] > 0
    assert rep.write_json(tmp_path / "r.json").read_bytes() == a
    text = rep.to_text().splitlines()
    assert text[0].split()[:3] == ["appliance", "mae", "rmse"] and len(text) == 3
    assert len({len(line) for line in text}) == 1
    p = write_plot_csv(tmp_path / "p.csv", [0, 60], [1.5, 2.5])
    assert p.read_text().splitlines() == ["x,y", "0,1.5", "60,2.5"]
