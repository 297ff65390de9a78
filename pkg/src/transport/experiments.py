"""Block-level simulation drivers feeding the estimators.

Each ``*_block(exp, ids)`` function simulates the replicas ``ids`` of an
:class:`Experiment` and returns a dict of arrays laid out ``[t, k]`` (time
series) or ``[k]`` (per-replica scalars). They are module-level so
:func:`transport.ensemble.map_blocks` can ship them to worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import forcings as fc
from .ensemble import equilibrium_initial, is_exact
from .integrators import (BAOAB, ChainSplitting, EulerMaruyama, State, make_state, noise_width,
                          simulate, step)
from .models import ContractError
from .rng import BlockNoise


@dataclass(frozen=True)
class Experiment:
    model: object
    scheme: object
    forcing: object = None
    response: object = None
    eta: float = 0.0
    n_steps: int = 1000
    burn_in: int = 0        # discarded steps of the production dynamics
    equilibrate: int = 0    # reference-dynamics steps before production (lattice starts)
    stride: int = 1
    seed: int = 0
    alpha: float = 0.0      # Girsanov bias strength
    r: float = 0.0          # Norton flux
    params: dict = field(default_factory=dict)

    @property
    def temperature(self) -> float:
        s = self.scheme
        if isinstance(s, ChainSplitting):
            return 0.5 * (s.T_L + s.T_R)
        return 1.0 / s.beta


def _start(exp: Experiment, ids):
    """Equilibrium initial states plus the replicas' dynamics streams (already advanced past any equilibration)."""
    q, p = equilibrium_initial(exp.model, exp.scheme, exp.seed, ids, 1.0 / exp.temperature)
    st = make_state(exp.model, exp.scheme, q, p)
    # wide enough for the forced scheme too (extra bulk thermostats draw more normals)
    width = max(noise_width(exp.model, exp.scheme), noise_width(exp.model, _forced(exp)[0]))
    noise = BlockNoise(exp.seed, ids, width)
    if exp.equilibrate > 0:
        res = simulate(exp.model, exp.scheme, st, 0, {}, exp.seed, ids, burn_in=exp.equilibrate,
                       record_initial=False, noise=noise)
        st = res.final
    elif not is_exact(exp.model) and exp.equilibrate == 0 and exp.params.get("require_equilibrium", False):
        raise ContractError("lattice starts need equilibrate > 0")
    return st, noise


def _forced(exp: Experiment, eta: Optional[float] = None):
    eta = exp.eta if eta is None else eta
    if exp.forcing is None or eta == 0:
        return exp.scheme, None
    scheme = fc.perturbed_scheme(exp.forcing, exp.scheme, eta, exp.temperature
                                 if isinstance(exp.scheme, ChainSplitting) else None)
    return scheme, fc.drift_perturbation(exp.forcing, exp.model, eta)


def _with_drift(exp, st, drift):
    """Refresh the cached force so the first step already includes the drift."""
    return make_state(exp.model, exp.scheme, st.q, st.p, drift)


def _obs(exp):
    return {"R": fc.observable(exp.response, exp.model)}


def _S(exp, st):
    return fc.conjugate_response(exp.forcing, exp.model, exp.scheme, st.q, st.p, exp.temperature)


# ------------------------------------------------------------------ blocks

def nemd_block(exp: Experiment, ids) -> dict:
    """Forced dynamics; ``R`` after ``burn_in`` steps."""
    st, noise = _start(exp, ids)
    scheme, drift = _forced(exp)
    st = _with_drift(exp, st, drift)
    res = simulate(exp.model, scheme, st, exp.n_steps, _obs(exp), exp.seed, ids, burn_in=exp.burn_in,
                   stride=exp.stride, drift=drift, noise=noise)
    return {"R": res.series["R"].values, "failed": res.failed}


def equilibrium_block(exp: Experiment, ids) -> dict:
    """Reference dynamics from equilibrium: ``R`` and ``S`` series plus total displacement."""
    st, noise = _start(exp, ids)
    q0 = st.q.copy()
    obs = _obs(exp)
    if exp.forcing is not None:
        obs["S"] = lambda s: _S(exp, s)
    res = simulate(exp.model, exp.scheme, st, exp.n_steps, obs, exp.seed, ids, burn_in=0,
                   stride=exp.stride, noise=noise)
    out = {k: v.values for k, v in res.series.items()}
    out["disp"] = (res.final.q - q0).T
    out["failed"] = res.failed
    return out


def ttcf_block(exp: Experiment, ids) -> dict:
    """Forced dynamics started from equilibrium; ``R`` along it and ``S`` at the start."""
    st, noise = _start(exp, ids)
    S0 = _S(exp, st)
    scheme, drift = _forced(exp)
    st = _with_drift(exp, st, drift)
    res = simulate(exp.model, scheme, st, exp.n_steps, _obs(exp), exp.seed, ids, burn_in=0,
                   stride=exp.stride, drift=drift, noise=noise)
    return {"R": res.series["R"].values, "S0": S0, "failed": res.failed}


def push(exp: Experiment, st: State, eta: float) -> State:
    """``Phi_eta(q, p) = (q, p + eta F(q))``."""
    F = exp.forcing.field(st.q)
    return State(st.q.copy(), st.p + eta * F, st.f.copy(), {})


def _coupled(model, pair, states, noise, n_steps, obs, stride=1, burn_in=0):
    """Advance several states with the same Gaussian draws (synchronous coupling)."""
    recs = [[] for _ in states]
    for n in range(burn_in + n_steps + 1):
        if n >= burn_in and (n - burn_in) % stride == 0:
            for r, s in zip(recs, states):
                r.append(obs(s))
        if n == burn_in + n_steps:
            break
        G = noise()
        states = [step(s, model, sc, G, dr) for s, (sc, dr) in zip(states, pair)]
    return [np.array(r) for r in recs], states


def transient_block(exp: Experiment, ids) -> dict:
    """Equilibrium dynamics from pushed and unpushed starts sharing noise: ``Rx``, ``Ry``."""
    if not isinstance(exp.scheme, BAOAB):
        raise ContractError("the momentum push needs underdamped dynamics")
    st, noise = _start(exp, ids)
    x = push(exp, st, exp.eta)
    obs = _obs(exp)["R"]
    pair = [(exp.scheme, None), (exp.scheme, None)]
    (Rx, Ry), _ = _coupled(exp.model, pair, [x, st], noise, exp.n_steps, obs, exp.stride)
    return {"Rx": Rx, "Ry": Ry}


def coupled_block(exp: Experiment, ids) -> dict:
    """Forced and reference dynamics from the same equilibrium start and noise."""
    st, noise = _start(exp, ids)
    scheme, drift = _forced(exp)
    obs = _obs(exp)["R"]
    x = _with_drift(exp, st, drift)
    if exp.params.get("independent_noise"):
        other = BlockNoise(exp.seed + 7919, ids, noise_width(exp.model, exp.scheme))
        (Rx,), _ = _coupled(exp.model, [(scheme, drift)], [x], noise, exp.n_steps, obs,
                            exp.stride, exp.burn_in)
        (Ry,), _ = _coupled(exp.model, [(exp.scheme, None)], [st.copy()], other, exp.n_steps, obs,
                            exp.stride, exp.burn_in)
    else:
        pair = [(scheme, drift), (exp.scheme, None)]
        (Rx, Ry), _ = _coupled(exp.model, pair, [x, st.copy()], noise, exp.n_steps, obs,
                               exp.stride, exp.burn_in)
    return {"Rx": Rx, "Ry": Ry}


class ScoreHook:
    """Accumulates the discrete martingale ``Z_t``, the counterpart of ``int u . dW``.

    Each Gaussian draw is weighted by the mean shift the forcing adds around
    it, divided by the draw's standard deviation. BAOAB: shift
    ``(1 + c) dt/2 F(q_mid)`` (the two half kicks bracketing the O-step),
    deviation ``s``. Euler-Maruyama: shift ``dt F(q)``, deviation
    ``sqrt(2 dt / beta)``; this is the exact score of the Gaussian transition.
    """

    def __init__(self, model, scheme, field):
        self.model, self.scheme, self.field = model, scheme, field
        self.Z = None

    def __call__(self, old: State, new: State):
        sc = self.scheme
        G = new.aux["G"]
        if isinstance(sc, BAOAB):
            c, s = sc.ou_coefficients(self.model.mass)
            inc = (1 + c) * sc.dt / 2 * np.sum(self.field(new.aux["q_mid"]) * G, axis=-1) / s
        elif isinstance(sc, EulerMaruyama):
            inc = np.sqrt(sc.dt * sc.beta / 2) * np.sum(self.field(new.aux["q_prev"]) * G, axis=-1)
        else:
            raise ContractError("score accumulation needs BAOAB or Euler-Maruyama")
        self.Z = inc if self.Z is None else self.Z + inc


def martingale_block(exp: Experiment, ids) -> dict:
    st, noise = _start(exp, ids)
    hook = ScoreHook(exp.model, exp.scheme, exp.forcing.field)
    res = simulate(exp.model, exp.scheme, st, exp.n_steps, _obs(exp), exp.seed, ids, burn_in=0,
                   stride=exp.stride, hook=hook, noise=noise)
    Z = np.zeros(len(ids)) if hook.Z is None else hook.Z
    return {"R": res.series["R"].values, "Z": Z}


class GirsanovHook:
    """Log-weight ``-alpha int u.dW - alpha^2/2 int |u|^2 dt`` for Euler-Maruyama, ``u = F / sigma``."""

    def __init__(self, scheme: EulerMaruyama, field, alpha):
        self.scheme, self.field, self.alpha = scheme, field, alpha
        self.logw = 0.0

    def __call__(self, old: State, new: State):
        sc = self.scheme
        sigma = np.sqrt(2 / sc.beta)
        u = self.field(new.aux["q_prev"]) / sigma
        dW = np.sqrt(sc.dt) * new.aux["G"]
        self.logw = self.logw - self.alpha * np.sum(u * dW, axis=-1) - 0.5 * self.alpha**2 * np.sum(u * u, axis=-1) * sc.dt


def girsanov_block(exp: Experiment, ids) -> dict:
    """Overdamped dynamics biased by ``alpha F`` from equilibrium, with Girsanov log-weights."""
    if not isinstance(exp.scheme, EulerMaruyama):
        raise ContractError("Girsanov reweighting is implemented for Euler-Maruyama")
    st, noise = _start(exp, ids)
    S0 = _S(exp, st)
    hook = GirsanovHook(exp.scheme, exp.forcing.field, exp.alpha)
    drift = (lambda q: exp.alpha * exp.forcing.field(q)) if exp.alpha else None
    st = _with_drift(exp, st, drift)
    res = simulate(exp.model, exp.scheme, st, exp.n_steps, _obs(exp), exp.seed, ids, burn_in=0,
                   stride=exp.stride, drift=drift, hook=hook, noise=noise)
    return {"R": res.series["R"].values, "S0": S0, "logw": np.broadcast_to(hook.logw, (len(ids),)).copy()}


def sample_block(exp: Experiment, ids) -> dict:
    """Per-replica time averages of the potential energy."""
    st, noise = _start(exp, ids)
    obs = {"V": lambda s: exp.model.potential(s.q)}
    res = simulate(exp.model, exp.scheme, st, exp.n_steps, obs, exp.seed, ids, burn_in=exp.burn_in,
                   stride=exp.stride, noise=noise)
    return {"avg": res.series["V"].values.mean(axis=0), "failed": res.failed}


def norton_block(exp: Experiment, ids) -> dict:
    from .norton import run_norton
    q, p = equilibrium_initial(exp.model, exp.scheme, exp.seed, ids, 1.0 / exp.temperature)
    F = exp.forcing.field
    run = run_norton(exp.model, exp.scheme, F, exp.response, exp.r, q, p, exp.n_steps, exp.seed, ids,
                     burn_in=exp.burn_in)
    return {"lam": run.lambdas.mean(axis=0), "inc": run.increments.mean(axis=0),
            "violation": np.full(len(ids), run.max_violation)}


class _Accumulate:
    def __init__(self, fn):
        self.fn, self.total, self.count = fn, 0.0, 0

    def __call__(self, old: State, new: State):
        self.total = self.total + self.fn(new)
        self.count += 1


def running_average_block(exp: Experiment, ids) -> dict:
    """Per-replica time averages of the (possibly vector) response, without storing the series.

    Runs the forced dynamics when ``exp.eta != 0``. ``avg`` is ``[k, ...]``.
    """
    st, noise = _start(exp, ids)
    scheme, drift = _forced(exp)
    st = _with_drift(exp, st, drift)
    acc = _Accumulate(_obs(exp)["R"])
    res = simulate(exp.model, scheme, st, exp.n_steps, {}, exp.seed, ids, burn_in=exp.burn_in,
                   drift=drift, hook=acc, record_initial=False, noise=noise)
    avg = np.asarray(acc.total / max(acc.count, 1), float)
    avg[res.failed] = np.nan
    return {"avg": avg, "failed": res.failed}
