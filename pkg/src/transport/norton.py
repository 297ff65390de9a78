"""Constant-flux (Norton) Langevin dynamics.

The flux ``R(q, p) = a(q) . p`` is held at ``r`` by a forcing ``F(q) dLambda``
on the momenta. Each step is a free BAOAB step followed by the exact
projection ``p <- p + dLambda F`` solving ``R = r``. The transport
coefficient is the inverse slope of the mean forcing ``E[lambda]`` in ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .estimators import EstimateResult
from .forcings import FourierFluxRe, VelocityAlongF
from .integrators import BAOAB, State, baoab_step, make_state
from .models import ContractError
from .rng import BlockNoise
from .statistics import FitError, wls_fit

CONTROL_MIN = 1e-8


class ControllabilityError(ContractError):
    """``F . grad_p R`` vanished: the flux cannot be steered by the forcing."""


# --------------------------------------------------------- linear responses

def flux_coefficients(spec, model, q) -> np.ndarray:
    """``a(q)`` such that ``R(q, p) = a(q) . p``."""
    q = np.asarray(q, float)
    if isinstance(spec, VelocityAlongF):
        return np.broadcast_to(np.asarray(spec.F, float) / model.mass, q.shape).copy()
    if isinstance(spec, FourierFluxRe):
        x = q.reshape(q.shape[:-1] + (-1, 3))
        a = np.zeros_like(x)
        a[..., 0] = np.cos(2 * np.pi * x[..., 1] / model.L) / (x.shape[-2] * model.mass)
        return a.reshape(q.shape)
    raise ContractError(f"Norton dynamics needs a momentum-linear response, got {spec!r}")


def _q_gradient_of_flux(spec, model, q, p) -> np.ndarray:
    """``grad_q (a(q) . p)``."""
    q = np.asarray(q, float)
    if isinstance(spec, VelocityAlongF):
        return np.zeros_like(q)
    x = q.reshape(q.shape[:-1] + (-1, 3))
    v = np.asarray(p, float).reshape(x.shape)
    k = 2 * np.pi / model.L
    g = np.zeros_like(x)
    g[..., 1] = -k * np.sin(k * x[..., 1]) * v[..., 0] / (x.shape[-2] * model.mass)
    return g.reshape(q.shape)


def _field(F, q):
    return F(q) if callable(F) else np.broadcast_to(np.asarray(F, float), np.shape(q))


def lambda_observable(model, F, spec, q, p, gamma: float = 1.0) -> np.ndarray:
    """Predictable part of the Norton forcing for underdamped Langevin dynamics.

    For a momentum-linear flux the second-order term vanishes, leaving
    ``lambda = [a . (grad V + gamma p / m) - (p / m) . grad_q(a . p)] / (F . a)``.
    """
    q = np.asarray(q, float)
    p = np.asarray(p, float)
    a = flux_coefficients(spec, model, q)
    Fq = _field(F, q)
    ctrl = np.sum(Fq * a, axis=-1)
    if np.any(np.abs(ctrl) < CONTROL_MIN):
        raise ControllabilityError(f"|F . grad R| = {np.min(np.abs(ctrl)):.3g} below {CONTROL_MIN}")
    gradV = -model.force(q)
    num = np.sum(a * (gradV + gamma * p / model.mass), axis=-1)
    num -= np.sum(p / model.mass * _q_gradient_of_flux(spec, model, q, p), axis=-1)
    return num / ctrl


# ---------------------------------------------------------------- dynamics

@dataclass
class NortonState:
    state: State
    r: float
    increments: list  # per-step Lambda increment / dt
    lambdas: list     # lambda observable after each step
    diagnostics: list  # increment minus its noise-driven part, / dt


def project(model, F, spec, q, p, r):
    """Shift ``p`` along ``F(q)`` so that ``R(q, p) = r``; returns ``(p, dLambda)``."""
    a = flux_coefficients(spec, model, q)
    Fq = _field(F, q)
    ctrl = np.sum(Fq * a, axis=-1)
    if np.any(np.abs(ctrl) < CONTROL_MIN):
        raise ControllabilityError(f"|F . grad R| = {np.min(np.abs(ctrl)):.3g} below {CONTROL_MIN}")
    dL = (r - np.sum(a * p, axis=-1)) / ctrl
    return p + dL[..., None] * Fq, dL


def initialize(model, scheme, F, spec, q, p, r) -> NortonState:
    """Put ``(q, p)`` on the constraint by moving the momentum along ``grad_p R``."""
    q = np.atleast_2d(np.asarray(q, float))
    p = np.atleast_2d(np.asarray(p, float)).copy()
    a = flux_coefficients(spec, model, q)
    aa = np.sum(a * a, axis=-1)
    if np.any(aa < CONTROL_MIN):
        raise ControllabilityError("grad_p R vanishes at the initial state")
    p += ((r - np.sum(a * p, axis=-1)) / aa)[..., None] * a
    return NortonState(make_state(model, scheme, q, p), float(r), [], [], [])


def norton_step(ns: NortonState, model, scheme: BAOAB, F, spec, G) -> NortonState:
    st = baoab_step(ns.state, model, scheme, G)
    p, dL = project(model, F, spec, st.q, st.p, ns.r)
    # noise-driven part of the increment: the O-step kick s G seen through a(q)
    _, s = scheme.ou_coefficients(model.mass)
    a = flux_coefficients(spec, model, st.q)
    mart = -s * np.sum(a * G, axis=-1) / np.sum(_field(F, st.q) * a, axis=-1)
    ns.state = State(st.q, p, st.f, st.aux)
    ns.increments.append(dL / scheme.dt)
    ns.diagnostics.append((dL - mart) / scheme.dt)
    ns.lambdas.append(lambda_observable(model, F, spec, st.q, p, scheme.gamma))
    return ns


@dataclass
class NortonRun:
    r: float
    lambdas: np.ndarray       # [t, K] lambda observable
    increments: np.ndarray    # [t, K] dLambda / dt
    diagnostics: np.ndarray   # [t, K] increment minus noise part
    max_violation: float
    final: State

    def mean_lambda(self):
        per = self.lambdas.mean(axis=0)
        K = per.size
        return float(per.mean()), float(per.std(ddof=1) / np.sqrt(K)) if K > 1 else float("nan")


def run_norton(model, scheme: BAOAB, F, spec, r: float, q0, p0, n_steps: int, seed: int,
               replica_ids: Sequence[int], burn_in: Optional[int] = None) -> NortonRun:
    """Simulate Norton dynamics for a block of replicas; records after ``burn_in`` steps."""
    if not isinstance(scheme, BAOAB):
        raise ContractError("Norton dynamics is implemented on top of BAOAB")
    burn_in = int(round(0.1 * n_steps)) if burn_in is None else int(burn_in)
    ids = np.asarray(replica_ids)
    noise = BlockNoise(seed, ids, model.dim)
    ns = initialize(model, scheme, F, spec, q0, p0, r)
    worst = 0.0
    for n in range(burn_in + n_steps):
        norton_step(ns, model, scheme, F, spec, noise())
        R = np.sum(flux_coefficients(spec, model, ns.state.q) * ns.state.p, axis=-1)
        worst = max(worst, float(np.max(np.abs(R - r))))
        if n < burn_in:
            ns.increments.clear(); ns.diagnostics.clear(); ns.lambdas.clear()
    K = ids.size
    shape = (0, K)
    arr = lambda x: np.array(x) if x else np.zeros(shape)
    return NortonRun(float(r), arr(ns.lambdas), arr(ns.increments), arr(ns.diagnostics), worst, ns.state)


def norton_transport(r_values, lambda_means, lambda_stderrs=None) -> EstimateResult:
    """Fit ``E[lambda] = c r`` through the origin and return ``alpha* = 1/c``."""
    r = np.asarray(r_values, float)
    y = np.asarray(lambda_means, float)
    if np.unique(r).size < 2:
        raise ContractError("need at least two distinct r values")
    w = None
    if lambda_stderrs is not None:
        se = np.asarray(lambda_stderrs, float)
        w = None if np.any(se <= 0) else 1 / se**2
    try:
        fit = wls_fit(r, y, w, 1)
    except FitError as e:
        return EstimateResult(float("nan"), float("inf"), r.size, "norton", flags=("fit_failed",),
                              extra={"reason": str(e)})
    c, sc = float(fit.coefficients[0]), float(fit.stderr()[0])
    report = {"coefficients": [c], "covariance": fit.covariance.tolist(), "degree": 1}
    if c == 0 or (sc > 0 and abs(c) < 3 * sc):
        return EstimateResult(float("nan"), float("inf"), r.size, "norton", fit_report=report,
                              flags=("slope_indistinguishable_from_zero",))
    return EstimateResult(1 / c, sc / c**2, r.size, "norton", fit_report=report)
