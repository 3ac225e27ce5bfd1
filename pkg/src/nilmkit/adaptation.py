"""Drift detection on disaggregation-error distributions and model updating.

A reference error distribution comes from a validation period.  Each new
evaluation window is compared against it in two stages: a two-sample
Kolmogorov-Smirnov test first, then, only if it rejects, the K-L
divergence against a threshold.  The second stage guards against the K-S
test rejecting on harmless variation when samples are large.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from nilmkit.data.frame import TimeSeriesFrame
from nilmkit.data.windows import WindowSet, make_windows
from nilmkit.errors import EmptySample, MissingGroundTruth
from nilmkit.models.spec import FEEDBACK
from nilmkit.models.training import TrainedModel, disaggregate, train

N_BINS = 50
UPPER_QUANTILE = 99.9
EPSILON = 1e-6
DEFAULT_ALPHA = 0.10
DEFAULT_KL_THRESHOLD = 0.10


@dataclass(frozen=True)
class ErrorDistribution:
    errors: np.ndarray  # sorted absolute errors
    edges: np.ndarray
    counts: np.ndarray
    label: str = ""

    @property
    def n(self) -> int:
        return int(self.errors.size)

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def rebinned(self, edges: np.ndarray) -> "ErrorDistribution":
        return ErrorDistribution(self.errors, edges, _histogram(self.errors, edges), self.label)


def reference_edges(errors: np.ndarray, bins: int = N_BINS) -> np.ndarray:
    """Equal-width bins on ``[0, p99.9]`` of the given errors."""
    hi = float(np.percentile(errors, UPPER_QUANTILE)) if errors.size else 0.0
    if not hi > 0:
        hi = 1.0
    return np.linspace(0.0, hi, bins + 1)


def _histogram(errors: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # values past the last edge land in the last bin so every sample is counted
    idx = np.clip(np.searchsorted(edges, errors, side="right") - 1, 0, edges.size - 2)
    return np.bincount(idx, minlength=edges.size - 1).astype(np.int64)


def error_distribution(errors, label: str = "", edges: np.ndarray | None = None) -> ErrorDistribution:
    e = np.sort(np.abs(np.asarray(errors, dtype=np.float64).ravel()))
    if e.size == 0:
        raise EmptySample("error distribution needs at least one sample")
    edges = reference_edges(e) if edges is None else np.asarray(edges, dtype=np.float64)
    return ErrorDistribution(e, edges, _histogram(e, edges), label)


def _estimate(model, frame: TimeSeriesFrame) -> np.ndarray:
    if isinstance(model, TrainedModel):
        return disaggregate(model, frame)
    if hasattr(model, "generator") and hasattr(model, "discriminator"):
        from nilmkit.models.gan import gan_disaggregate
        return gan_disaggregate(model, frame)
    return np.asarray(model(frame), dtype=np.float64)


def collect_errors(model, frame: TimeSeriesFrame, appliance: str | None = None,
                   window: int | None = None, label: str = "",
                   edges: np.ndarray | None = None) -> ErrorDistribution:
    """Absolute per-sample errors of ``model`` against the frame's ground truth.

    ``model`` is a trained model, an adversarial pair, or any callable
    mapping a frame to an estimate.  ``window`` (seconds) keeps only the
    samples in the first ``window`` seconds of the frame.
    """
    appliance = appliance or getattr(model, "appliance", None)
    if appliance is None or appliance not in frame.channels:
        raise MissingGroundTruth(f"frame has no ground truth for {appliance!r}")
    if window is not None:
        stop = int(np.searchsorted(frame.timestamps, frame.timestamps[0] + window, side="left"))
        frame = frame.slice(0, stop)
    return error_distribution(_estimate(model, frame) - frame[appliance], label, edges)


def split_windows(frame: TimeSeriesFrame, window: int) -> list[TimeSeriesFrame]:
    """Consecutive, non-overlapping time windows of ``window`` seconds.

    A trailing window holding less than half the nominal sample count is
    folded into its predecessor; sparse histograms would inflate K-L.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    t0 = frame.timestamps[0]
    bucket = (frame.timestamps - t0) // window
    cuts = np.flatnonzero(np.diff(bucket)) + 1
    nominal = window / frame.sampling_interval
    if cuts.size and len(frame) - cuts[-1] < nominal / 2:
        cuts = cuts[:-1]
    bounds = np.concatenate([[0], cuts, [len(frame)]])
    return [frame.slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def kl_divergence(p, q, eps: float = EPSILON) -> float:
    """D(P || Q) in nats after adding ``eps`` mass per bin and renormalizing.

    Distributions are rebinned onto P's edges; plain probability or count
    vectors of equal length are also accepted.
    """
    if isinstance(p, ErrorDistribution):
        if isinstance(q, ErrorDistribution) and not np.array_equal(q.edges, p.edges):
            q = q.rebinned(p.edges)
        p = p.counts
    if isinstance(q, ErrorDistribution):
        q = q.counts
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("histograms must share their bins")
    p = p / p.sum() + eps
    q = q / q.sum() + eps
    p /= p.sum()
    q /= q.sum()
    return max(0.0, float(np.sum(p * np.log(p / q))))


def ks_critical(alpha: float) -> float:
    """Asymptotic two-sample coefficient c(alpha)."""
    return float(np.sqrt(-0.5 * np.log(alpha / 2.0)))


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    support = np.concatenate([a, b])
    fa = np.searchsorted(a, support, side="right") / a.size
    fb = np.searchsorted(b, support, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_test(a, b, alpha: float = DEFAULT_ALPHA) -> tuple[float, bool]:
    """Two-sample K-S statistic and whether it rejects equality at ``alpha``."""
    if isinstance(a, ErrorDistribution):
        a = a.errors
    if isinstance(b, ErrorDistribution):
        b = b.errors
    d = ks_statistic(a, b)
    n, m = np.size(a), np.size(b)
    return d, bool(d > ks_critical(alpha) * np.sqrt((n + m) / (n * m)))


@dataclass(frozen=True)
class DriftVerdict:
    ks_statistic: float
    ks_reject: bool
    kl_score: float
    update_required: bool
    rationale: str

    def to_dict(self) -> dict:
        return {"ks_statistic": self.ks_statistic, "ks_reject": self.ks_reject,
                "kl_score": self.kl_score, "update_required": self.update_required}


def decide(ks_stat: float, ks_reject: bool, kl_score: float,
           threshold: float = DEFAULT_KL_THRESHOLD) -> DriftVerdict:
    """The two-stage rule on already computed test results."""
    if not ks_reject:
        why = f"K-S statistic {ks_stat:.4f} within the critical band; no drift"
        return DriftVerdict(ks_stat, False, kl_score, False, why)
    update = kl_score >= threshold
    why = (f"K-S rejects; K-L {kl_score:.4f} "
           + (f">= {threshold:g}, update required" if update else f"< {threshold:g}, variation tolerated"))
    return DriftVerdict(ks_stat, True, kl_score, update, why)


def should_update(reference: ErrorDistribution, current: ErrorDistribution,
                  alpha: float = DEFAULT_ALPHA, threshold: float = DEFAULT_KL_THRESHOLD) -> DriftVerdict:
    d, reject = ks_test(reference, current, alpha)
    kl = kl_divergence(reference, current) if reject else 0.0
    return decide(d, reject, kl, threshold)


# -- updating ------------------------------------------------------------------

def model_windows(model: TrainedModel, frame: TimeSeriesFrame, stride: int | None = None) -> WindowSet:
    """Training windows for ``model`` scaled with its own statistics."""
    spec = model.spec
    if spec.uses_feedback and FEEDBACK not in frame.channels:
        frame = frame.with_channels(**{FEEDBACK: disaggregate(model.feeder, frame)})
    if model.appliance not in frame.channels:
        raise MissingGroundTruth(f"frame has no ground truth for {model.appliance!r}")
    wins = make_windows(frame, spec.input_channels, model.appliance, spec.k, stride or max(1, spec.k // 2))
    return wins.normalized(model.stats)[0]


def _concat(a: WindowSet, b: WindowSet | None) -> WindowSet:
    if b is None or len(b) == 0:
        return a
    if a.channels != b.channels or a.k != b.k or a.target != b.target:
        raise ValueError("window sets are not compatible")
    return replace(a, inputs=np.concatenate([a.inputs, b.inputs]),
                   targets=np.concatenate([a.targets, b.targets]),
                   offsets=np.concatenate([a.offsets, b.offsets]))


def update_model(model: TrainedModel, old_data: WindowSet, new_data: WindowSet | None,
                 epochs: int | None = None, seed: int = 0,
                 tuner: Callable[[WindowSet], dict] | None = None, **train_kw) -> TrainedModel:
    """Warm-start retraining on old plus new windows.

    Both sets must already be scaled with ``model.stats``.  ``tuner`` may
    return hyperparameter overrides (``learning_rate``, ``batch_size``) for
    the combined set.  The returned model keeps the old one in ``previous``.
    """
    for ws in (old_data, new_data):
        if ws is not None and len(ws) and ws.stats is None:
            raise ValueError("windows must be scaled with the model's statistics")
    data = _concat(old_data, new_data)
    if tuner is not None:
        train_kw = {**tuner(data), **train_kw}
    fresh = train(model.spec, data, epochs, seed, model.appliance, init=model.network, **train_kw)
    return TrainedModel(model.spec, fresh.network, model.stats, model.appliance,
                        fresh.log, model.feeder, previous=model)


def rollback(model: TrainedModel) -> TrainedModel:
    if model.previous is None:
        raise ValueError("model has no previous version")
    return model.previous


class ServingSlot:
    """Holds the in-service model; readers always see one complete model."""

    def __init__(self, model):
        self._model = model
        self._lock = threading.Lock()

    def get(self):
        with self._lock:
            return self._model

    def swap(self, model):
        with self._lock:
            old, self._model = self._model, model
        return old


def append_drift_log(path, appliance: str, label: str, verdict: DriftVerdict) -> None:
    rec = {"appliance": appliance, "window_label": label, **verdict.to_dict()}
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class AdaptationResult:
    model: TrainedModel
    verdicts: list
    updates: int


def adapt_stream(model: TrainedModel, reference_frame: TimeSeriesFrame, train_frame: TimeSeriesFrame,
                 stream: TimeSeriesFrame, window: int, alpha: float = DEFAULT_ALPHA,
                 threshold: float = DEFAULT_KL_THRESHOLD, epochs: int | None = None, seed: int = 0,
                 log_path=None, slot: ServingSlot | None = None, **train_kw) -> AdaptationResult:
    """Monitor ``stream`` window by window and update on confirmed drift.

    The reference distribution comes from ``reference_frame``; each update
    retrains on the training data accumulated so far plus the drifted window,
    and later windows are compared against a reference recomputed on that
    window with the updated model.
    """
    slot = slot or ServingSlot(model)
    reference = collect_errors(slot.get(), reference_frame, label="reference")
    old = model_windows(model, train_frame)
    verdicts, updates = [], 0
    for i, chunk in enumerate(split_windows(stream, window)):
        current = slot.get()
        if len(chunk) < current.spec.k:
            continue
        label = f"window-{i}"
        dist = collect_errors(current, chunk, label=label, edges=reference.edges)
        verdict = should_update(reference, dist, alpha, threshold)
        verdicts.append((label, verdict))
        if log_path is not None:
            append_drift_log(log_path, current.appliance, label, verdict)
        if verdict.update_required:
            new = model_windows(current, chunk)
            updated = update_model(current, old, new, epochs, seed + updates + 1, **train_kw)
            slot.swap(updated)
            old = _concat(old, new)
            updates += 1
            reference = collect_errors(updated, chunk, label=f"reference-{i}")
    return AdaptationResult(slot.get(), verdicts, updates)
