"""Time-series post-processing: autocorrelation, batch means, decay fits, regression."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft


class FitError(ValueError):
    """Raised when a regression problem is degenerate."""


def autocorrelation(series, max_lag: int, center: bool = True) -> np.ndarray:
    """Biased autocovariance ``c(l) = N^-1 sum_{n<N-l} x_n x_{n+l}`` via FFT.

    Parameters
    ----------
    series : array_like
        One-dimensional samples.
    max_lag : int
        Largest lag returned (inclusive). Must be smaller than ``len(series)``.
    center : bool
        Subtract the sample mean first.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if max_lag >= n or max_lag < 0:
        raise ValueError(f"max_lag={max_lag} must lie in [0, {n})")
    if center:
        x = x - x.mean()
    m = sfft.next_fast_len(2 * n)
    f = sfft.rfft(x, m)
    acf = sfft.irfft(f * np.conj(f), m)[: max_lag + 1]
    return acf / n


def autocorrelation_direct(series, max_lag: int, center: bool = True) -> np.ndarray:
    """O(N * max_lag) reference implementation of :func:`autocorrelation`."""
    x = np.asarray(series, dtype=float)
    if center:
        x = x - x.mean()
    n = x.size
    return np.array([np.dot(x[: n - k], x[k:]) for k in range(max_lag + 1)]) / n


@dataclass(frozen=True)
class ExpFit:
    amplitude: float
    rate: float
    residual: float
    window: tuple[float, float]


def exp_decay_fit(times, curve, window: tuple[float, float]) -> ExpFit:
    """Fit ``A exp(-kappa t)`` by least squares on ``log(curve)`` inside ``window``.

    Non-positive values end the window early (a warning is issued).
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(curve, dtype=float)
    lo, hi = window
    sel = np.flatnonzero((t >= lo) & (t <= hi))
    bad = sel[c[sel] <= 0]
    if bad.size:
        warnings.warn("non-positive values in fit window; shrinking it", RuntimeWarning)
        sel = sel[sel < bad[0]]
        hi = float(t[sel[-1]]) if sel.size else lo
    if sel.size < 2:
        raise FitError("fewer than two positive points in the fit window")
    tt, y = t[sel], np.log(c[sel])
    slope, icpt = np.polyfit(tt, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * tt + icpt)) ** 2)))
    return ExpFit(float(np.exp(icpt)), float(-slope), res, (lo, hi))


def batch_means_variance(series, n_batches: int = 32, dt: float = 1.0) -> float:
    """Asymptotic variance ``T Var(time average)`` from non-overlapping batch means.

    ``dt`` is the sampling interval, so the result is in time units
    (for i.i.d. data with ``dt=1`` it estimates the marginal variance).
    Trailing samples that do not fill a batch are dropped.
    """
    if n_batches < 10:
        raise ValueError(f"need at least 10 batches, got {n_batches}")
    x = np.asarray(series, dtype=float)
    b = x.size // n_batches
    if b < 1:
        raise ValueError(f"series of length {x.size} too short for {n_batches} batches")
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(b * dt * means.var(ddof=1))


@dataclass(frozen=True)
class WLSFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    degree: int

    def stderr(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def wls_fit(xs, ys, weights=None, degree: int = 1) -> WLSFit:
    """Weighted least squares for ``y = sum_{k=1..degree} c_k x^k`` (no intercept).

    ``weights`` are inverse variances; the covariance is ``(X^T W X)^{-1}``
    when weights are given, otherwise it is scaled by the residual variance.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("xs and ys must be 1-D arrays of equal length")
    if np.unique(x).size < degree or np.unique(x[x != 0]).size < degree:
        raise FitError(f"need at least {degree} distinct non-zero xs")
    X = np.vander(x, degree + 1, increasing=True)[:, 1:]
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise FitError("weights must be finite and non-negative")
    A = X.T @ (w[:, None] * X)
    if np.linalg.cond(A) > 1e14:
        raise FitError("singular normal equations")
    cov = np.linalg.inv(A)
    coef = cov @ (X.T @ (w * y))
    if weights is None:
        dof = x.size - degree
        r = y - X @ coef
        cov = cov * (r @ r / dof if dof > 0 else 0.0)
    cov = 0.5 * (cov + cov.T)
    return WLSFit(coef, cov, degree)


def loglog_slope(xs, ys) -> float:
    """Ordinary least-squares slope of ``log|y|`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.abs(np.asarray(ys, float))), 1)[0])
