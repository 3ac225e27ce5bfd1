"""Autoregressive baseline fit by least squares on the lag matrix."""

from __future__ import annotations

import numpy as np

from nilmkit.errors import SingularSystem


def lag_matrix(series: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``[y(t-1), ..., y(t-p)]`` paired with targets ``y(t)`` for t = p..n-1."""
    y = np.asarray(series, dtype=np.float64)
    n = y.size
    X = np.stack([y[p - i - 1:n - i - 1] for i in range(p)], axis=1)
    return X, y[p:]


def ar_fit(series, p: int, rtol: float = 1e-10) -> np.ndarray:
    """Coefficients ``a`` with ``y(t) ~ sum_i a[i] * y(t-1-i)``.

    A rank-deficient lag matrix is accepted when the system is still
    solved exactly (the minimum-norm solution is returned); otherwise
    :class:`SingularSystem` is raised.
    """
    y = np.asarray(series, dtype=np.float64)
    if p < 1:
        raise ValueError("order p must be >= 1")
    if y.size <= p:
        raise ValueError(f"series of length {y.size} is too short for order {p}")
    X, t = lag_matrix(y, p)
    coef, _, rank, _ = np.linalg.lstsq(X, t, rcond=None)
    if rank < p:
        resid = np.max(np.abs(X @ coef - t)) if t.size else 0.0
        if resid > rtol * max(1.0, np.max(np.abs(t))):
            raise SingularSystem(f"lag matrix has rank {rank} < {p} and no exact solution")
    return coef


def ar_predict(series, coef, horizon: int) -> np.ndarray:
    """Recursive multi-step forecast continuing ``series``."""
    coef = np.asarray(coef, dtype=np.float64)
    p = coef.size
    hist = list(np.asarray(series, dtype=np.float64)[-p:][::-1])  # most recent first
    out = np.empty(horizon)
    for h in range(horizon):
        nxt = float(np.dot(coef, hist[:p]))
        out[h] = nxt
        hist.insert(0, nxt)
    return out


def ar_one_step(series, coef) -> np.ndarray:
    """In-sample one-step-ahead predictions for t = p..n-1."""
    X, _ = lag_matrix(series, len(coef))
    return X @ np.asarray(coef)


def ar_fit_predict(series, p: int, horizon: int) -> np.ndarray:
    return ar_predict(series, ar_fit(series, p), horizon)
