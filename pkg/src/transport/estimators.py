"""Transport-coefficient estimators.

All functions consume recorded series laid out as ``values[t, k]`` (time
index first, replica index second, replicas sorted by id) and return an
:class:`EstimateResult`. Time integrals use the trapezoidal rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft
from scipy.integrate import trapezoid

from .statistics import FitError, batch_means_variance, wls_fit


class EstimatorError(ValueError):
    """Input series unsuitable for the requested estimator."""


@dataclass
class EstimateResult:
    value: float
    stderr: float
    n_replicas: int
    method: str
    truncation_time: Optional[float] = None
    fit_report: Optional[dict] = None
    curve: Optional[tuple] = None  # (times, values) for plotting
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0 or np.isnan(self.stderr) and self.n_replicas >= 2:
            raise EstimatorError(f"invalid stderr {self.stderr}")


# ------------------------------------------------------------------ helpers

def _as_2d(x) -> np.ndarray:
    a = np.asarray(getattr(x, "values", x), dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _mean_se(samples) -> tuple[float, float]:
    s = np.asarray(samples, float)
    s = s[np.isfinite(s)]
    if s.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(s, ddof=1) / np.sqrt(s.size)) if s.size >= 2 else float("nan")
    return float(np.mean(s)), se


def _window(values, dt, T):
    """Truncate ``values[t, k]`` to ``[0, T]`` and return it with its time grid."""
    n = values.shape[0]
    if T is not None:
        m = int(round(T / dt)) + 1
        if m > n:
            raise EstimatorError(f"series covers {(n - 1) * dt:g} time units, T={T:g} requested")
        values = values[:m]
    return values, dt * np.arange(values.shape[0])


def _time_integrals(values, dt, T=None):
    v, t = _window(values, dt, T)
    return trapezoid(v, dx=dt, axis=0), t


# --------------------------------------------------------------------- NEMD

def nemd_estimate(series, eta: float, dt: float = 1.0, n_batches: int = 32) -> EstimateResult:
    """``(time average of R) / eta``.

    One replica: batch-means error bar (at least 10 batches). Several:
    the spread of the per-replica time averages.
    """
    if eta == 0:
        raise EstimatorError("eta must be non-zero")
    v = _as_2d(series)
    K = v.shape[1]
    if K == 1:
        x = v[:, 0]
        if x.size < max(n_batches, 10):
            raise EstimatorError(f"series of length {x.size} shorter than {max(n_batches, 10)} batches")
        var = batch_means_variance(x, n_batches=n_batches, dt=1.0)
        return EstimateResult(float(x.mean() / eta), float(np.sqrt(var / x.size) / abs(eta)), 1, "nemd",
                              extra={"eta": eta, "asymptotic_variance": var * dt})
    mean, se = _mean_se(v.mean(axis=0) / eta)
    return EstimateResult(mean, se, K, "nemd", extra={"eta": eta})


def nemd_eta_scan(etas, responses, stderrs=None, degree: int = 2) -> EstimateResult:
    """Fit ``E_eta[R] = sum_k c_k eta^k`` through the origin; the response is ``c_1``.

    ``responses`` are the mean responses (``alpha_hat * eta``); ``stderrs``
    their standard errors, used as inverse-variance weights.
    """
    x = np.asarray(etas, float)
    y = np.asarray(responses, float)
    if np.unique(x).size != x.size:
        raise EstimatorError("eta values must be distinct")
    if x.size < degree + 1:
        raise EstimatorError(f"need at least {degree + 1} eta points for degree {degree}")
    w = None
    if stderrs is not None:
        se = np.asarray(stderrs, float)
        if np.any(se <= 0):
            # exact data: fall back to ordinary least squares
            w = None
        else:
            w = 1.0 / se**2
    try:
        fit = wls_fit(x, y, w, degree)
    except FitError as e:
        raise EstimatorError(f"rank-deficient eta scan: {e}") from e
    se1 = float(fit.stderr()[0])
    return EstimateResult(float(fit.coefficients[0]), se1, int(x.size), "nemd_scan",
                          fit_report={"coefficients": fit.coefficients.tolist(),
                                      "covariance": fit.covariance.tolist(), "degree": degree})


# -------------------------------------------------------------- Green-Kubo

def select_truncation(times, curve, curve_se=None, factor: float = 2.0, tail: float = 0.25) -> float:
    """First time at which ``|curve|`` falls below ``factor`` times its noise floor.

    The floor is the pointwise standard error when given, otherwise the
    standard deviation of the last ``tail`` fraction of the curve.
    """
    t = np.asarray(times, float)
    c = np.asarray(curve, float)
    if curve_se is not None:
        floor = np.asarray(curve_se, float)
    else:
        floor = np.full_like(c, np.std(c[int((1 - tail) * c.size):]))
    below = np.flatnonzero(np.abs(c) < factor * floor)
    below = below[below > 0]
    return float(t[below[0]] if below.size else t[-1])


def green_kubo(R, S0, dt: float, T: Optional[float] = None, method: str = "green_kubo") -> EstimateResult:
    """``K^-1 sum_k int_0^T R(x_t^k) S(x_0^k) dt``.

    ``T=None`` picks the truncation with :func:`select_truncation`.
    The correlation curve ``t -> mean_k R(x_t^k) S(x_0^k)`` is attached.
    """
    R = _as_2d(R)
    S0 = np.asarray(S0, float).reshape(-1)
    if S0.size != R.shape[1]:
        raise EstimatorError("one S(x_0) value per replica expected")
    prod = R * S0[None, :]
    K = R.shape[1]
    times_all = dt * np.arange(R.shape[0])
    curve = prod.mean(axis=1)
    if T is None:
        se = prod.std(axis=1, ddof=1) / np.sqrt(K) if K >= 2 else None
        T = select_truncation(times_all, curve, se)
    ints, t = _time_integrals(prod, dt, T)
    value, se = _mean_se(ints)
    flags = () if K >= 2 else ("no_stderr",)
    return EstimateResult(value, se, K, method, truncation_time=float(T),
                          curve=(times_all, curve), flags=flags)


def ttcf(R, S0, dt: float, T: Optional[float] = None) -> EstimateResult:
    """Transient time correlation estimate; ``R`` recorded along the forced dynamics."""
    return green_kubo(R, S0, dt, T, method="ttcf")


def gk_cv(R_res, S_res0, dt: float, T: Optional[float], static_terms: float) -> EstimateResult:
    """Green-Kubo with control variates: precomputed static terms plus the residual correlation."""
    res = green_kubo(R_res, S_res0, dt, T, method="gk_cv")
    res.extra["residual"] = res.value
    res.extra["static"] = float(static_terms)
    res.value = float(static_terms + res.value)
    return res


# ------------------------------------------------------------------ Einstein

def _w_parzen(t):
    return np.where(t <= 0.5, 1 - 6 * t**2 + 6 * t**3, 2 * (1 - t) ** 3)


WEIGHTS: dict[str, Callable] = {
    "Constant": lambda t: np.ones_like(t),
    "Bartlett": lambda t: 1 - t,
    "Parzen": _w_parzen,
    "TukeyHanning": lambda t: (1 + np.cos(np.pi * t)) / 2,
    "ParzenRiesz": lambda t: 1 - t**2,
    "ParzenGeometric": lambda t: 1 / (1 + t),
    "ParzenCauchy": lambda t: 1 / (1 + t**2),
}


def weight(name: str, t):
    """Lag window ``w(t)`` on ``[0, 1]``, zero outside."""
    try:
        fn = WEIGHTS[name]
    except KeyError:
        raise EstimatorError(f"unknown weight {name!r}; choose from {sorted(WEIGHTS)}") from None
    t = np.asarray(t, float)
    inside = (t >= 0) & (t <= 1)
    return np.where(inside, fn(np.clip(t, 0, 1)), 0.0)


def _causal_conv(kernel, x):
    """``out[i, k] = sum_{j<=i} kernel[i-j] x[j, k]`` via zero-padded FFT."""
    n = x.shape[0]
    m = sfft.next_fast_len(2 * n)
    f = sfft.rfft(kernel, m)[:, None] * sfft.rfft(x, m, axis=0)
    return sfft.irfft(f, m, axis=0)[:n]


def einstein_integrals(R, S, dt: float, weight_name: str, T: float) -> np.ndarray:
    """Per-replica ``T^-1 int_0^T int_0^t w((t-s)/T) R_t S_s ds dt`` (nested trapezoid)."""
    R, _ = _window(_as_2d(R), dt, T)
    S, _ = _window(_as_2d(S), dt, T)
    lags = dt * np.arange(R.shape[0])
    W = weight(weight_name, lags / T)
    conv = _causal_conv(W, S)
    inner = dt * (conv - 0.5 * W[:, None] * S[:1] - 0.5 * W[0] * S)
    return trapezoid(R * inner, dx=dt, axis=0) / T


def einstein_integrals_direct(R, S, dt, weight_name, T):
    """Quadratic-cost reference for :func:`einstein_integrals`."""
    R, _ = _window(_as_2d(R), dt, T)
    S, _ = _window(_as_2d(S), dt, T)
    n = R.shape[0]
    inner = np.zeros_like(R)
    for i in range(1, n):
        w = weight(weight_name, dt * (i - np.arange(i + 1)) / T)
        inner[i] = trapezoid(w[:, None] * S[: i + 1], dx=dt, axis=0)
    return trapezoid(R * inner, dx=dt, axis=0) / T


def einstein_windowed(R, S, dt: float, weight_name: str, T: float) -> EstimateResult:
    vals = einstein_integrals(R, S, dt, weight_name, T)
    value, se = _mean_se(vals)
    return EstimateResult(value, se, vals.size, f"einstein_{weight_name}", truncation_time=float(T))


def msd_diffusion(displacements, T: float, beta: Optional[float] = None) -> EstimateResult:
    """``E|Q_T - Q_0|^2 / (2 d T)`` over replicas; ``beta`` given returns the mobility ``beta D``."""
    d = np.asarray(displacements, float)
    if d.ndim == 1:
        d = d[:, None]
    dim = d.shape[1]
    vals = np.sum(d * d, axis=1) / (2 * dim * T)
    if beta is not None:
        vals = beta * vals
    value, se = _mean_se(vals)
    return EstimateResult(value, se, d.shape[0], "msd_mobility" if beta is not None else "msd_diffusion",
                          truncation_time=float(T))


# --------------------------------------------------------- transient methods

def transient_plain(R, eta: float, dt: float, T: Optional[float] = None) -> EstimateResult:
    """``(eta K)^-1 sum_k int_0^T R(x_t^k) dt`` for equilibrium dynamics from pushed initial states."""
    if eta == 0:
        raise EstimatorError("eta must be non-zero")
    ints, t = _time_integrals(_as_2d(R), dt, T)
    value, se = _mean_se(ints / eta)
    return EstimateResult(value, se, ints.size, "transient", truncation_time=float(t[-1]))


def _difference_estimate(Rx, Ry, eta, scale, method, T=None, dt=1.0):
    Rx, Ry = _as_2d(Rx), _as_2d(Ry)
    if Rx.shape != Ry.shape:
        raise EstimatorError("paired series must have equal shapes")
    diff = Rx - Ry
    if eta == 0:
        if np.any(diff != 0):
            raise EstimatorError("eta = 0 but the coupled replicas differ")
        return EstimateResult(0.0, 0.0, Rx.shape[1], method, flags=("eta_zero",))
    ints, t = _time_integrals(diff, dt, T)
    value, se = _mean_se(ints / (eta * scale(t)))
    return EstimateResult(value, se, Rx.shape[1], method, truncation_time=float(t[-1]))


def transient_subtraction(Rx, Ry, eta: float, dt: float, T: Optional[float] = None) -> EstimateResult:
    """Transient estimate with a synchronously coupled unperturbed replica subtracted."""
    return _difference_estimate(Rx, Ry, eta, lambda t: 1.0, "transient_subtraction", T, dt)


def nemd_coupled_cv(Rx, Ry, eta: float, dt: float) -> EstimateResult:
    """``(eta t)^-1 int_0^t [R(x^eta) - R(y^0)] ds`` averaged over coupled replica pairs."""
    return _difference_estimate(Rx, Ry, eta, lambda t: t[-1], "nemd_coupled_cv", None, dt)


def static_cv_estimate(R, LPhi, eta: float, dt: float = 1.0, n_batches: int = 32) -> EstimateResult:
    """NEMD estimate of ``R - L_eta Phi``; ``LPhi`` is the generator applied to ``Phi`` along the path."""
    res = nemd_estimate(_as_2d(R) - _as_2d(LPhi), eta, dt, n_batches)
    res.method = "static_cv"
    return res


# ----------------------------------------------------- likelihood-ratio type

def martingale_product(R, Z, dt: float) -> EstimateResult:
    """Mean over replicas of ``(t^-1 int_0^t R ds) * Z_t`` with ``Z_t`` the accumulated score."""
    R = _as_2d(R)
    Z = np.asarray(Z, float).reshape(-1)
    t = dt * (R.shape[0] - 1)
    avg = trapezoid(R, dx=dt, axis=0) / t
    value, se = _mean_se(avg * Z)
    return EstimateResult(value, se, R.shape[1], "martingale_product", truncation_time=float(t))


def girsanov_gk(R, S0, log_weights, dt: float, T: Optional[float] = None, ess_min: float = 10.0) -> EstimateResult:
    """Green-Kubo estimate from biased-dynamics replicas reweighted by their Girsanov weights."""
    R = _as_2d(R)
    S0 = np.asarray(S0, float).reshape(-1)
    lw = np.asarray(log_weights, float).reshape(-1)
    w = np.exp(lw)
    ints, t = _time_integrals(R * S0[None, :], dt, T)
    value, se = _mean_se(w * ints)
    ess = float(w.sum() ** 2 / np.sum(w * w))
    flags = ("low_ess",) if ess < ess_min else ()
    if flags:
        warnings.warn(f"effective sample size {ess:.1f} below {ess_min}", RuntimeWarning)
    mw, mw_se = _mean_se(w)
    return EstimateResult(value, se, R.shape[1], "girsanov_gk", truncation_time=float(t[-1]), flags=flags,
                          extra={"ess": ess, "mean_weight": mw, "mean_weight_se": mw_se})


def variance_ratio(a: EstimateResult, b: EstimateResult) -> float:
    """``Var(a) / Var(b)`` from the reported standard errors, scaled by replica counts."""
    return (a.stderr**2 * a.n_replicas) / (b.stderr**2 * b.n_replicas)
