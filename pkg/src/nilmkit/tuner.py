"""Gaussian-process Bayesian optimization of model hyperparameters.

Configurations are encoded onto the unit cube (learning rate on a log
scale).  The surrogate uses a squared-exponential kernel with fixed
heuristic hyperparameters and the acquisition is expected improvement,
maximized over a random candidate pool.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.stats import norm

from nilmkit.errors import IllConditioned, ObjectiveFailed

POOL_SIZE = 512
NOISE = 1e-6
MAX_JITTER = 1e-2


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    integer: bool = False
    log: bool = False

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError(f"axis {self.name}: upper bound is below lower bound")
        if self.log and self.lo <= 0:
            raise ValueError(f"axis {self.name}: log axis needs positive bounds")

    def _t(self, v):
        return math.log(v) if self.log else float(v)

    def encode(self, v: float) -> float:
        if self.hi == self.lo:
            return 0.0
        return (self._t(v) - self._t(self.lo)) / (self._t(self.hi) - self._t(self.lo))

    def decode(self, u: float) -> float:
        a, b = self._t(self.lo), self._t(self.hi)
        v = a + float(np.clip(u, 0.0, 1.0)) * (b - a)
        v = math.exp(v) if self.log else v
        if self.integer:
            v = int(np.clip(round(v), math.ceil(self.lo), math.floor(self.hi)))
        return v


def _axes(bounds) -> tuple[Axis, ...]:
    if isinstance(bounds, Mapping):
        out = []
        for name, b in bounds.items():
            if isinstance(b, Axis):
                out.append(b)
            else:
                lo, hi, *kind = b
                kind = kind[0] if kind else ("int" if isinstance(lo, int) and isinstance(hi, int) else "float")
                out.append(Axis(name, lo, hi, integer=kind == "int", log=kind == "log"))
        bounds = out
    axes = tuple(bounds)
    if not axes:
        raise ValueError("search bounds are empty")
    return axes


# the five model-configuration axes with default search bounds
MODEL_SPACE = (
    Axis("depth", 1, 3, integer=True),
    Axis("hidden_units", 16, 128, integer=True),
    Axis("max_epochs", 5, 50, integer=True),
    Axis("batch_size", 16, 128, integer=True),
    Axis("learning_rate", 1e-4, 1e-2, log=True),
)


@dataclass(frozen=True)
class ConfigPoint:
    """One configuration; ``values`` pairs axis names with decoded values."""

    values: tuple

    @classmethod
    def from_unit(cls, axes, u) -> "ConfigPoint":
        return cls(tuple((a.name, a.decode(x)) for a, x in zip(axes, u)))

    def encode(self, axes) -> np.ndarray:
        d = self.as_dict()
        return np.array([a.encode(d[a.name]) for a in axes])

    def as_dict(self) -> dict:
        return dict(self.values)

    def __getitem__(self, name):
        return self.as_dict()[name]

    def within(self, axes) -> bool:
        d = self.as_dict()
        return all(a.lo <= d[a.name] <= a.hi for a in axes)


def se_kernel(A: np.ndarray, B: np.ndarray, length_scales, signal_var: float) -> np.ndarray:
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    d = (A[:, None, :] - B[None, :, :]) / np.asarray(length_scales)
    return signal_var * np.exp(-0.5 * np.sum(d * d, axis=-1))


@dataclass
class SurrogateState:
    X: np.ndarray  # encoded points [n, d]
    y: np.ndarray  # observed errors
    length_scales: np.ndarray
    signal_var: float
    noise_var: float = NOISE
    chol: np.ndarray | None = field(default=None, repr=False)
    jitter: float = 0.0

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.shape[0] != self.y.size:
            raise ValueError("one observation per evaluated point is required")
        if self.y.size == 0:
            raise ValueError("surrogate needs at least one observation")
        self.length_scales = np.broadcast_to(np.asarray(self.length_scales, dtype=np.float64),
                                             (self.X.shape[1],)).copy()
        self._factorize()

    @property
    def mean_level(self) -> float:
        return float(self.y.mean())

    def _factorize(self):
        K = se_kernel(self.X, self.X, self.length_scales, self.signal_var)
        n = K.shape[0]
        jitter = 0.0
        while True:
            try:
                self.chol = cholesky(K + (self.noise_var + jitter) * np.eye(n), lower=True)
                self.jitter = jitter
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 10, 1e-10 * max(self.signal_var, 1.0))
                if jitter > MAX_JITTER * max(self.signal_var, 1.0):
                    raise IllConditioned("covariance is not positive definite after maximum jitter") from None
        self.alpha = cho_solve((self.chol, True), self.y - self.mean_level)


def fit_surrogate(X, y, axes=None, noise_var: float = NOISE) -> SurrogateState:
    """Surrogate with heuristic hyperparameters.

    Length scale is half of each axis's width (0.5 on the unit cube); the
    signal variance is the variance of the observations (1 when they are
    all equal).
    """
    y = np.asarray(y, dtype=np.float64)
    var = float(np.var(y)) if y.size > 1 else 0.0
    return SurrogateState(X, y, 0.5, var if var > 0 else 1.0, noise_var)


def gp_posterior(state: SurrogateState, candidate, axes=None) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at one or more encoded candidates."""
    if isinstance(candidate, ConfigPoint):
        if axes is None:
            raise ValueError("axes are needed to encode a ConfigPoint")
        candidate = candidate.encode(axes)
    C = np.atleast_2d(np.asarray(candidate, dtype=np.float64))
    ks = se_kernel(C, state.X, state.length_scales, state.signal_var)
    mean = state.mean_level + ks @ state.alpha
    v = cho_solve((state.chol, True), ks.T)
    var = state.signal_var - np.sum(ks * v.T, axis=1)
    return mean, np.maximum(var, 0.0)


def expected_improvement(mean, std, best) -> np.ndarray:
    """EI for minimization; exactly zero where ``std`` is zero and no improvement is possible."""
    mean, std = np.asarray(mean, dtype=np.float64), np.asarray(std, dtype=np.float64)
    gap = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, gap / np.where(std > 0, std, 1.0), 0.0)
        ei = gap * norm.cdf(z) + std * norm.pdf(z)
    ei = np.where(std > 0, ei, np.maximum(gap, 0.0))
    return np.maximum(ei, 0.0)


def expected_improvement_at(state: SurrogateState, candidate, best: float, axes=None) -> np.ndarray:
    mean, var = gp_posterior(state, candidate, axes)
    return expected_improvement(mean, np.sqrt(var), best)


@dataclass
class TuneResult:
    best: ConfigPoint
    best_error: float
    state: SurrogateState
    history: list  # (ConfigPoint, error)


def tune(objective: Callable[[ConfigPoint], float], bounds, budget: int, seed: int = 0,
         pool_size: int = POOL_SIZE, log_path=None) -> TuneResult:
    """Minimize ``objective`` over ``bounds`` with ``budget`` evaluations.

    Two random configurations seed the surrogate; each further evaluation
    is the pool candidate with the largest expected improvement among those
    not yet evaluated.  The returned best is the exact argmin of the
    observed errors.
    """
    if budget < 2:
        raise ValueError("budget must be at least 2")
    axes = _axes(bounds)
    rng = np.random.default_rng(seed)
    history: list[tuple[ConfigPoint, float]] = []
    seen: set = set()
    running = math.inf
    log = Path(log_path).open("w", encoding="utf-8") if log_path else None

    def fresh(points) -> list[ConfigPoint]:
        out = []
        for u in points:
            c = ConfigPoint.from_unit(axes, u)
            if c.values not in seen and c.values not in {o.values for o in out}:
                out.append(c)
        return out

    def evaluate(c: ConfigPoint):
        nonlocal running
        try:
            err = float(objective(c))
        except Exception as exc:
            raise ObjectiveFailed(c.as_dict(), exc) from exc
        if not math.isfinite(err):
            raise ObjectiveFailed(c.as_dict(), ValueError(f"non-finite error {err}"))
        seen.add(c.values)
        history.append((c, err))
        running = min(running, err)
        if log:
            log.write(json.dumps({"iteration": len(history), "config": c.as_dict(), "error": err,
                                  "running_best": running}, sort_keys=True) + "\n")
            log.flush()

    state = None
    try:
        for c in fresh(rng.random((64, len(axes))))[:2]:
            evaluate(c)
        while len(history) < budget:
            X = np.array([c.encode(axes) for c, _ in history])
            y = np.array([e for _, e in history])
            state = fit_surrogate(X, y)
            pool = fresh(rng.random((pool_size, len(axes))))
            if not pool:
                break  # the space is exhausted
            enc = np.array([c.encode(axes) for c in pool])
            ei = expected_improvement_at(state, enc, running)
            evaluate(pool[int(np.argmax(ei))])
    finally:
        if log:
            log.close()
    X = np.array([c.encode(axes) for c, _ in history])
    y = np.array([e for _, e in history])
    state = fit_surrogate(X, y)
    i = int(np.argmin(y))
    return TuneResult(history[i][0], float(y[i]), state, history)


def config_to_spec(config: ConfigPoint, arch: str = "tdlcnn", k: int = 60):
    """Map a model configuration onto a spec of the given architecture family."""
    from nilmkit.models.spec import build_cobilstm, build_tdlcnn

    d = config.as_dict()
    depth, units = int(d.get("depth", 2)), int(d.get("hidden_units", 60))
    if arch == "cobilstm":
        spec = build_cobilstm(k, hidden=(units,) * depth, dense=units)
    else:
        variant = {"tdlcnn": "base", "m_tdlcnn": "multichannel", "r_tdlcnn": "recurrent",
                   "mr_tdlcnn": "mr"}.get(arch, arch)
        spec = build_tdlcnn(variant, k, filters=(units,) * depth, dense=units)
    hyper = {}
    if "max_epochs" in d:
        hyper["max_epochs"] = int(d["max_epochs"])
    if "batch_size" in d:
        hyper["batch_size"] = int(d["batch_size"])
    if "learning_rate" in d:
        hyper["learning_rate"] = float(d["learning_rate"])
    return spec.with_hyper(**hyper)
