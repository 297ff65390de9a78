"""Time-stepping schemes and the replica-vectorised simulation loop.

State arrays have shape ``(K, d)`` (one row per replica). Every scheme
consumes a fixed number of standard Gaussians per replica and step,
``noise_width``, supplied by :class:`transport.rng.BlockNoise`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .models import AtomChain, ContractError
from .rng import BlockNoise

Drift = Optional[Callable[[np.ndarray], np.ndarray]]


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ContractError(f"{k} must be positive, got {v}")


def _nonneg(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise ContractError(f"{k} must be non-negative, got {v}")


# ------------------------------------------------------------------ schemes

@dataclass(frozen=True)
class BAOAB:
    dt: float
    gamma: float = 1.0
    beta: float = 1.0
    # optional position-dependent temperature T(q) used by the O-step
    temperature: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _positive(dt=self.dt, beta=self.beta)
        _nonneg(gamma=self.gamma)

    def ou_coefficients(self, mass: float):
        c = np.exp(-self.gamma * self.dt / mass)
        return c, np.sqrt((1 - c * c) * mass / self.beta)


@dataclass(frozen=True)
class EulerMaruyama:
    dt: float
    beta: float = 1.0

    def __post_init__(self):
        _positive(dt=self.dt, beta=self.beta)


@dataclass(frozen=True)
class Verlet:
    dt: float

    def __post_init__(self):
        _positive(dt=self.dt)


@dataclass(frozen=True)
class ChainSplitting:
    """Strang splitting: half OU at the ends, Verlet, half OU.

    ``bulk_gamma > 0`` adds OU thermostats at ``bulk_T`` on atoms ``2..n-1``.
    """

    dt: float
    gamma_L: float = 1.0
    gamma_R: float = 1.0
    T_L: float = 1.0
    T_R: float = 1.0
    bulk_gamma: float = 0.0
    bulk_T: float = 1.0

    def __post_init__(self):
        _positive(dt=self.dt, T_L=self.T_L, T_R=self.T_R, bulk_T=self.bulk_T)
        _nonneg(gamma_L=self.gamma_L, gamma_R=self.gamma_R, bulk_gamma=self.bulk_gamma)


# -------------------------------------------------------------- step kernels

@dataclass
class State:
    q: np.ndarray
    p: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None  # cached total force at q
    aux: dict = field(default_factory=dict)

    def copy(self) -> "State":
        c = lambda a: None if a is None else a.copy()
        return State(c(self.q), c(self.p), c(self.f), dict(self.aux))


def total_force(model, q, drift: Drift = None):
    f = model.force(q)
    if drift is not None:
        f = f + drift(q)
    return f


def noise_width(model, scheme) -> int:
    if isinstance(scheme, (BAOAB, EulerMaruyama)):
        return model.dim
    if isinstance(scheme, Verlet):
        return 0
    if isinstance(scheme, ChainSplitting):
        return 4 + (2 * (model.n - 2) if scheme.bulk_gamma > 0 else 0)
    raise ContractError(f"unknown scheme {scheme!r}")


def baoab_step(state: State, model, scheme: BAOAB, G, drift: Drift = None) -> State:
    """One B-A-O-A-B step. ``state.f`` must hold the force at ``state.q``.

    The O-step noise ``G`` is kept in ``state.aux['G']`` and the position
    at the O-step in ``state.aux['q_mid']`` for likelihood-ratio estimators.
    """
    h, m = scheme.dt, model.mass
    c, s = scheme.ou_coefficients(m)
    p = state.p + 0.5 * h * state.f
    q = state.q + 0.5 * h * p / m
    q_mid = q
    if scheme.temperature is not None:
        s = np.sqrt((1 - c * c) * m * scheme.temperature(q_mid))[..., None]
    p = c * p + s * G
    q = q + 0.5 * h * p / m
    f = total_force(model, q, drift)
    p = p + 0.5 * h * f
    return State(q, p, f, {"G": G, "q_mid": q_mid})


def euler_maruyama_step(state: State, model, scheme: EulerMaruyama, G, drift: Drift = None) -> State:
    """``q <- q + dt (-grad V + drift) + sqrt(2 dt / beta) G``."""
    f = state.f if state.f is not None else total_force(model, state.q, drift)
    q = state.q + scheme.dt * f + np.sqrt(2 * scheme.dt / scheme.beta) * G
    return State(q, None, total_force(model, q, drift), {"G": G, "q_prev": state.q})


def verlet_step(state: State, model, scheme: Verlet, G=None, drift: Drift = None) -> State:
    h, m = scheme.dt, model.mass
    p = state.p + 0.5 * h * state.f
    q = state.q + h * p / m
    f = total_force(model, q, drift)
    return State(q, p + 0.5 * h * f, f, {})


def _half_ou(p, scheme: ChainSplitting, G, mass=1.0):
    h = 0.5 * scheme.dt
    p = p.copy()
    for col, g, T, k in ((0, G[:, 0], scheme.T_L, 0), (-1, G[:, 1], scheme.T_R, 1)):
        gam = scheme.gamma_L if k == 0 else scheme.gamma_R
        c = np.exp(-gam * h / mass)
        p[:, col] = c * p[:, col] + np.sqrt((1 - c * c) * mass * T) * g
    if scheme.bulk_gamma > 0:
        c = np.exp(-scheme.bulk_gamma * h / mass)
        p[:, 1:-1] = c * p[:, 1:-1] + np.sqrt((1 - c * c) * mass * scheme.bulk_T) * G[:, 2:]
    return p


def chain_step(state: State, model: AtomChain, scheme: ChainSplitting, G, drift: Drift = None) -> State:
    """Half OU on the thermostatted momenta, velocity Verlet, half OU."""
    if not isinstance(model, AtomChain):
        raise ContractError("chain_step requires an AtomChain")
    w = G.shape[1] // 2
    h = scheme.dt
    p = _half_ou(state.p, scheme, G[:, :w])
    p = p + 0.5 * h * state.f
    q = state.q + h * p / model.mass
    f = total_force(model, q, drift)
    p = p + 0.5 * h * f
    p = _half_ou(p, scheme, G[:, w:])
    return State(q, p, f, {})


def step(state: State, model, scheme, G, drift: Drift = None) -> State:
    if isinstance(scheme, BAOAB):
        return baoab_step(state, model, scheme, G, drift)
    if isinstance(scheme, EulerMaruyama):
        return euler_maruyama_step(state, model, scheme, G, drift)
    if isinstance(scheme, Verlet):
        return verlet_step(state, model, scheme, G, drift)
    if isinstance(scheme, ChainSplitting):
        return chain_step(state, model, scheme, G, drift)
    raise ContractError(f"unknown scheme {scheme!r}")


def make_state(model, scheme, q, p=None, drift: Drift = None) -> State:
    q = np.atleast_2d(np.asarray(q, dtype=float)).copy()
    if q.shape[-1] != model.dim:
        raise ContractError(f"positions of width {q.shape[-1]} do not match model dimension {model.dim}")
    if isinstance(scheme, EulerMaruyama):
        return State(q, None, total_force(model, q, drift))
    p = np.zeros_like(q) if p is None else np.atleast_2d(np.asarray(p, dtype=float)).copy()
    if p.shape != q.shape:
        raise ContractError("positions and momenta must have equal shapes")
    return State(q, p, total_force(model, q, drift))


# ---------------------------------------------------------------- simulate

Observable = Callable[[State], np.ndarray]


@dataclass
class ObservableSeries:
    """Samples ``values[t, k]`` of one observable for replicas ``replica_ids``."""

    name: str
    times: np.ndarray
    values: np.ndarray
    replica_ids: np.ndarray
    seed: int
    scheme: object
    failed: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else float("nan")


@dataclass
class SimulationResult:
    series: dict
    final: State
    failed: np.ndarray


def simulate(model, scheme, init: State, n_steps: int, observables: dict,
             seed: int, replica_ids: Sequence[int], burn_in: Optional[int] = None,
             stride: int = 1, drift: Drift = None, record_initial: bool = True,
             hook: Optional[Callable[[State, State], None]] = None,
             noise: Optional[BlockNoise] = None) -> SimulationResult:
    """Run ``n_steps`` steps for a block of replicas and record observables.

    ``burn_in`` defaults to 10% of ``n_steps``; recording starts after it
    (including the state at the end of burn-in when ``record_initial``).
    ``hook(old, new)`` is called after every post-burn-in step. Passing
    ``noise`` continues an existing set of streams (for multi-phase runs).
    Replicas whose state becomes non-finite are frozen as NaN and flagged.
    """
    if stride < 1:
        raise ContractError("stride must be >= 1")
    burn_in = int(round(0.1 * n_steps)) if burn_in is None else int(burn_in)
    if burn_in < 0:
        raise ContractError("burn_in must be >= 0")
    ids = np.asarray(replica_ids)
    if noise is None:
        noise = BlockNoise(seed, ids, noise_width(model, scheme))
    st = init.copy()
    K = st.q.shape[0]
    failed = np.zeros(K, dtype=bool)
    recs = {k: [] for k in observables}
    times = []

    def record(t):
        times.append(t)
        for k, fn in observables.items():
            recs[k].append(np.asarray(fn(st), dtype=float))

    total = burn_in + n_steps
    if record_initial and burn_in == 0:
        record(0.0)
    with np.errstate(all="ignore"):
        for n in range(1, total + 1):
            old = st
            st = step(st, model, scheme, noise(), drift)
            if hook is not None and n > burn_in:
                hook(old, st)
            if n % 64 == 0 or n == total:
                bad = ~np.all(np.isfinite(st.q), axis=1)
                if st.p is not None:
                    bad |= ~np.all(np.isfinite(st.p), axis=1)
                if bad.any():
                    failed |= bad
                    for a in (st.q, st.p, st.f):
                        if a is not None:
                            a[bad] = np.nan
            if n == burn_in and record_initial:
                record(0.0)
            elif n > burn_in and (n - burn_in) % stride == 0:
                record((n - burn_in) * scheme.dt)
    series = {}
    for k in observables:
        vals = np.array(recs[k]) if recs[k] else np.zeros((0, K))
        if vals.size:
            vals[:, failed] = np.nan
        series[k] = ObservableSeries(k, np.array(times), vals, ids, seed, scheme, failed)
    return SimulationResult(series, st, failed)
