"""Evaluation metrics and report writers.

All metrics are computed over the whole examined period, including
intervals where the appliance is off.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from nilmkit.errors import EmptyInput, LengthMismatch, UnsortedLevels, ZeroTotalEnergy, ZeroTruthEnergy

PERCENTILES = (50, 65, 98)


def _pair(estimate, truth) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(estimate, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if e.size != t.size:
        raise LengthMismatch(f"estimate has {e.size} samples, truth has {t.size}")
    if e.size == 0:
        raise EmptyInput("metrics need at least one sample")
    return e, t


def mae(estimate, truth) -> float:
    e, t = _pair(estimate, truth)
    return float(np.mean(np.abs(e - t)))


def rmse(estimate, truth) -> float:
    e, t = _pair(estimate, truth)
    return float(np.sqrt(np.mean((e - t) ** 2)))


def nrms(estimate, truth) -> float:
    e, t = _pair(estimate, truth)
    denom = float(np.sum(t * t))
    if denom <= 0:
        raise ZeroTruthEnergy("nrms needs a truth series with nonzero energy")
    return float(np.sqrt(np.sum((e - t) ** 2) / denom))


def sae(estimate, truth) -> float:
    e, t = _pair(estimate, truth)
    total = float(np.sum(t))
    if total <= 0:
        raise ZeroTruthEnergy("sae needs a truth series with positive total")
    return abs(float(np.sum(e)) - total) / total


@dataclass(frozen=True)
class Pointwise:
    mae: float
    rmse: float
    nrms: float
    sae: float
    min: float
    max: float
    mean: float
    std: float


def pointwise_metrics(estimate, truth) -> Pointwise:
    """Error metrics plus summary statistics of the absolute differences."""
    e, t = _pair(estimate, truth)
    d = np.abs(e - t)
    return Pointwise(mae(e, t), rmse(e, t), nrms(e, t), sae(e, t),
                     float(d.min()), float(d.max()), float(d.mean()), float(d.std()))


@dataclass(frozen=True)
class FractionIndex:
    eefi: float
    aefi: float
    defi: float


def fraction_indices(estimates: dict, truths: dict, corrected: bool = False) -> dict[str, FractionIndex]:
    """Estimated and actual energy-fraction indices per appliance.

    By default the actual index is normalized by the *estimated* grand
    total; ``corrected=True`` uses the true grand total instead.  Both agree
    when estimates are exact.
    """
    if not estimates:
        raise EmptyInput("need at least one appliance")
    if set(estimates) != set(truths):
        raise LengthMismatch("estimate and truth appliance sets differ")
    est_tot = {j: float(np.sum(np.asarray(estimates[j], dtype=np.float64))) for j in estimates}
    true_tot = {j: float(np.sum(np.asarray(truths[j], dtype=np.float64))) for j in estimates}
    grand_est = sum(est_tot.values())
    grand = sum(true_tot.values()) if corrected else grand_est
    if grand_est <= 0 or grand <= 0:
        raise ZeroTotalEnergy("grand total energy must be positive")
    out = {}
    for j in estimates:
        ee = float(np.sqrt(est_tot[j] / grand_est))
        ae = float(np.sqrt(true_tot[j] / grand))
        out[j] = FractionIndex(ee, ae, abs(ee - ae))
    return out


def noise_degradation(mae_by_noise) -> tuple[list[float], float]:
    """Per-interval MAE change per noise percentage point, and the mean of its magnitude."""
    pts = [(float(n), float(m)) for n, m in mae_by_noise]
    if len(pts) < 2:
        raise UnsortedLevels("need at least two noise levels")
    levels = [n for n, _ in pts]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise UnsortedLevels(f"noise levels must be strictly increasing, got {levels}")
    rates = [(m2 - m1) / (n2 - n1) for (n1, m1), (n2, m2) in zip(pts, pts[1:])]
    return rates, float(np.mean(np.abs(rates)))


def percentile_errors(errors, levels=PERCENTILES) -> list[float]:
    """Linear-interpolation percentiles of the absolute errors."""
    e = np.abs(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise EmptyInput("no errors to summarize")
    return [float(v) for v in np.percentile(e, list(levels), method="linear")]


@dataclass
class MetricReport:
    """Per-appliance pointwise metrics plus cross-appliance fraction indices."""

    appliances: dict = field(default_factory=dict)  # name -> dict of metrics
    corrected_aefi: bool = False

    @classmethod
    def build(cls, estimates: dict, truths: dict, corrected: bool = False,
              levels=PERCENTILES) -> "MetricReport":
        rep = cls(corrected_aefi=corrected)
        for j in sorted(estimates):
            pw = pointwise_metrics(estimates[j], truths[j])
            e, t = _pair(estimates[j], truths[j])
            row = asdict(pw)
            row.update({f"p{lv:g}": v for lv, v in zip(levels, percentile_errors(e - t, levels))})
            rep.appliances[j] = row
        for j, fi in fraction_indices(estimates, truths, corrected).items():
            rep.appliances[j].update(asdict(fi))
        return rep

    def to_dict(self) -> dict:
        return {"corrected_aefi": self.corrected_aefi, "appliances": self.appliances}

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def to_text(self) -> str:
        if not self.appliances:
            return ""
        cols = list(next(iter(self.appliances.values())))
        rows = [["appliance", *cols]]
        rows += [[j, *(f"{v[c]:.6g}" for c in cols)] for j, v in self.appliances.items()]
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(r, widths)))
                 for r in rows]
        return "\n".join(lines) + "\n"

    def write_text(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def write_plot_csv(path, x, y, x_name: str = "x", y_name: str = "y") -> Path:
    """Two-column series for external charting."""
    x, y = np.asarray(x).ravel(), np.asarray(y).ravel()
    if x.size != y.size:
        raise LengthMismatch("x and y differ in length")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([x_name, y_name])
        w.writerows(zip((repr(v.item()) for v in x), (repr(v.item()) for v in y)))
    return path
