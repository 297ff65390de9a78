"""Nonequilibrium perturbations, response observables and conjugate responses."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .integrators import BAOAB, ChainSplitting, EulerMaruyama, State
from .models import AtomChain, ContractError, LennardJonesFluid


class ForcingError(ContractError):
    """Forcing not applicable to the model or dynamics."""


# ------------------------------------------------------------------ forcings

@dataclass(frozen=True)
class ConstantForce:
    F: tuple

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if not np.isclose(np.linalg.norm(F), 1.0, rtol=1e-12, atol=1e-12):
            raise ForcingError("ConstantForce requires |F| = 1")

    def field(self, q):
        return np.broadcast_to(np.asarray(self.F, dtype=float), np.shape(q))


@dataclass(frozen=True)
class ShearSTF:
    """``F_{j,x} = sin(2 pi q_{j,y} / L)``; zero along y and z."""

    L: float

    def field(self, q):
        q = np.asarray(q, dtype=float)
        x = q.reshape(q.shape[:-1] + (-1, 3))
        out = np.zeros_like(x)
        out[..., 0] = np.sin(2 * np.pi * x[..., 1] / self.L)
        return out.reshape(q.shape)


PROFILES = ("constant", "sin")


@dataclass(frozen=True)
class TemperatureProfile:
    """``T(q) = T0 + eta dT(q)`` with ``dT`` either 1 or ``sin(2 pi q_0 / L)``."""

    profile: str = "constant"
    L: float = 1.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ForcingError(f"unknown temperature profile {self.profile!r}; choose from {PROFILES}")

    def delta_T(self, q):
        q = np.asarray(q, dtype=float)
        if self.profile == "constant":
            return np.ones(q.shape[:-1])
        return np.sin(2 * np.pi * q[..., 0] / self.L)

    def grad_delta_T(self, q):
        q = np.asarray(q, dtype=float)
        g = np.zeros_like(q)
        if self.profile == "sin":
            g[..., 0] = 2 * np.pi / self.L * np.cos(2 * np.pi * q[..., 0] / self.L)
        return g

    def lap_delta_T(self, q):
        q = np.asarray(q, dtype=float)
        if self.profile == "constant":
            return np.zeros(q.shape[:-1])
        k = 2 * np.pi / self.L
        return -k * k * np.sin(k * q[..., 0])


@dataclass(frozen=True)
class BoundaryGradient:
    """End thermostats at ``T + eta/2`` and ``T - eta/2`` (``eta`` plays ``Delta T``)."""


@dataclass(frozen=True)
class BulkRotorDrive:
    """Bond forces rescaled by ``1 -/+ eta/(n-1)`` as in the bulk-driven chain."""


@dataclass(frozen=True)
class SyntheticCombo:
    """Base forcing plus OU thermostats of strength ``a eta`` on atoms ``2..n-1``."""

    base: object
    a: float = 1.0
    extra: str = "BulkThermostats"

    def __post_init__(self):
        if self.extra != "BulkThermostats":
            raise ForcingError(f"unsupported synthetic extra {self.extra!r}")


Forcing = Union[ConstantForce, ShearSTF, TemperatureProfile, BoundaryGradient, BulkRotorDrive, SyntheticCombo]


def bulk_drive_increment(model: AtomChain, q, eta: float):
    """Extra momentum drift of the bulk drive: ``-(eta/(n-1)) v'(r_b)`` on both atoms of bond ``b``."""
    dv = model.kind.dv(np.diff(q, axis=-1)) * (eta / (model.n - 1))
    out = np.zeros_like(q)
    out[..., :-1] -= dv
    out[..., 1:] -= dv
    return out


def drift_perturbation(forcing, model, eta: float, config=None):
    """Momentum (or position, overdamped) drift ``eta F(q)``; ``None`` if the forcing acts elsewhere.

    With ``config`` given, returns the drift evaluated there instead of a callable.
    """
    if isinstance(forcing, ShearSTF) and not isinstance(model, LennardJonesFluid):
        raise ForcingError("ShearSTF requires a Lennard-Jones fluid")
    if isinstance(forcing, (BulkRotorDrive, SyntheticCombo)) and not isinstance(model, AtomChain):
        raise ForcingError("bulk drive requires an atom chain")
    if isinstance(forcing, BoundaryGradient) and not isinstance(model, AtomChain):
        raise ForcingError("boundary gradient requires an atom chain")
    if isinstance(forcing, (ConstantForce, ShearSTF)):
        fn = lambda q: eta * forcing.field(q)
    elif isinstance(forcing, BulkRotorDrive):
        fn = lambda q: bulk_drive_increment(model, q, eta)
    elif isinstance(forcing, SyntheticCombo):
        return drift_perturbation(forcing.base, model, eta, config)
    else:
        fn = None
    if config is None:
        return fn
    q = config.positions if hasattr(config, "positions") else config
    return np.zeros_like(np.asarray(q, dtype=float)) if fn is None else fn(q)


def perturbed_scheme(forcing, scheme, eta: float, T: Optional[float] = None):
    """Scheme carrying the non-drift part of a forcing (temperatures, extra thermostats)."""
    if isinstance(forcing, BoundaryGradient):
        if not isinstance(scheme, ChainSplitting):
            raise ForcingError("boundary gradient needs the chain splitting scheme")
        T = scheme.T_L if T is None else T
        if not T - eta / 2 > 0:
            raise ForcingError("T - eta/2 must stay positive")
        return dataclasses.replace(scheme, T_L=T + eta / 2, T_R=T - eta / 2)
    if isinstance(forcing, SyntheticCombo):
        T = scheme.T_L if T is None else T
        s = perturbed_scheme(forcing.base, scheme, eta, T)
        if forcing.a * eta == 0:
            return s
        return dataclasses.replace(s, bulk_gamma=forcing.a * abs(eta), bulk_T=T)
    if isinstance(forcing, TemperatureProfile):
        if not isinstance(scheme, BAOAB):
            raise ForcingError("temperature profiles are implemented for underdamped dynamics only")
        T0 = 1.0 / scheme.beta
        return dataclasses.replace(scheme, temperature=lambda q: T0 + eta * forcing.delta_T(q))
    return scheme


# ----------------------------------------------------------------- responses

@dataclass(frozen=True)
class VelocityAlongF:
    F: tuple

    def __call__(self, model, q, p):
        return np.asarray(p, float) @ np.asarray(self.F, float) / model.mass


def _fourier(model, q, p):
    q = np.asarray(q, float)
    p = np.asarray(p, float)
    x = q.reshape(q.shape[:-1] + (-1, 3))
    v = p.reshape(p.shape[:-1] + (-1, 3))
    ph = 2 * np.pi * x[..., 1] / model.L
    n = x.shape[-2]
    return v[..., 0], ph, n * model.mass


@dataclass(frozen=True)
class FourierFluxRe:
    def __call__(self, model, q, p):
        px, ph, nm = _fourier(model, q, p)
        return np.sum(px * np.cos(ph), axis=-1) / nm


@dataclass(frozen=True)
class FourierFluxIm:
    def __call__(self, model, q, p):
        px, ph, nm = _fourier(model, q, p)
        return np.sum(px * np.sin(ph), axis=-1) / nm


@dataclass(frozen=True)
class EnergyCurrentTotal:
    def __call__(self, model, q, p):
        return model.currents(q, p).total


@dataclass(frozen=True)
class PerBondCurrent:
    i: int  # bond (i, i+1), 1-based

    def __call__(self, model, q, p):
        return model.currents(q, p).bonds[..., self.i - 1]


@dataclass(frozen=True)
class BondCurrents:
    """All bond currents ``j_{i,i+1}`` as a vector observable."""

    def __call__(self, model, q, p):
        return model.currents(q, p).bonds


@dataclass(frozen=True)
class Position:
    """``R(q) = q_i``; with a unit constant force on an OU process, ``R = S``."""

    i: int = 0

    def __call__(self, model, q, p):
        return np.asarray(q, float)[..., self.i]


@dataclass(frozen=True)
class Custom:
    name: str
    fn: Callable

    def __call__(self, model, q, p):
        return self.fn(model, q, p)


def response(spec, model, config) -> np.ndarray:
    return spec(model, config.positions, config.momenta)


def observable(spec, model) -> Callable[[State], np.ndarray]:
    """Adapter turning a response spec into a simulation observable."""
    return lambda st: spec(model, st.q, st.p)


# ------------------------------------------------------- conjugate responses

def conjugate_response(forcing, model, scheme, q, p=None, T: Optional[float] = None):
    """Closed-form ``S`` matched to the forcing and the dynamics class of ``scheme``."""
    q = np.asarray(q, float)
    if isinstance(scheme, EulerMaruyama):
        beta = scheme.beta
        if isinstance(forcing, (ConstantForce, ShearSTF)):
            F = forcing.field(q)
            gradV = -model.force(q)
            div = _divergence(forcing.field, q)
            return beta * np.sum(F * gradV, axis=-1) - div
        if isinstance(forcing, TemperatureProfile):
            gradV = -model.force(q)
            dT = forcing.delta_T(q)
            return (forcing.lap_delta_T(q)
                    - 2 * beta * np.sum(gradV * forcing.grad_delta_T(q), axis=-1)
                    + dT * (beta**2 * np.sum(gradV**2, axis=-1) - beta * model.laplacian(q)))
        raise ForcingError(f"no overdamped conjugate response for {forcing!r}")
    p = np.asarray(p, float)
    if isinstance(scheme, BAOAB):
        beta, m = scheme.beta, model.mass
        if isinstance(forcing, (ConstantForce, ShearSTF)):
            return beta * np.sum(forcing.field(q) * p, axis=-1) / m
        if isinstance(forcing, TemperatureProfile):
            d = q.shape[-1]
            return beta * scheme.gamma * forcing.delta_T(q) * (beta * np.sum(p**2, axis=-1) / m**2 - d / m)
        raise ForcingError(f"no underdamped conjugate response for {forcing!r}")
    if isinstance(scheme, ChainSplitting):
        T = scheme.T_L if T is None else T
        gL, gR = scheme.gamma_L, scheme.gamma_R
        base = forcing.base if isinstance(forcing, SyntheticCombo) else forcing
        if isinstance(base, BoundaryGradient):
            return (gL * p[..., 0] ** 2 - gR * p[..., -1] ** 2) / T**2 - (gL - gR) / T
        if isinstance(base, BulkRotorDrive):
            # beta sum_i g_i p_i with g the bulk-drive field; equals 2 J_n / ((n-1) T)
            return np.sum(bulk_drive_increment(model, q, 1.0) * p, axis=-1) / T
        raise ForcingError(f"no chain conjugate response for {forcing!r}")
    raise ForcingError(f"unsupported scheme {scheme!r}")


def _divergence(field, q, h=1e-5):
    q = np.asarray(q, float)
    out = np.zeros(q.shape[:-1])
    for i in range(q.shape[-1]):
        e = np.zeros(q.shape[-1]); e[i] = h
        out += (field(q + e)[..., i] - field(q - e)[..., i]) / (2 * h)
    return out


# ------------------------------------------------------------ synthetic check

@dataclass(frozen=True)
class GradientExtra:
    """First-order extra ``G . grad_q`` with ``G = grad V``; violates the synthetic condition."""


def synthetic_check(extra, model, samples_q, samples_p=None, beta: float = 1.0, atol: float = 1e-10):
    """Check that ``L_extra^* 1`` vanishes on equilibrium samples, i.e. that the
    extra generator leaves the conjugate response unchanged.

    The Gibbs mean of ``L^* 1`` is zero for every generator, so the test is on
    the root-mean-square value. ``extra`` is ``None``, ``'BulkThermostats'`` or
    a :class:`GradientExtra`. Returns ``(ok, rms, mean)``.
    """
    q = np.asarray(samples_q, float)
    if extra is None:
        vals = np.zeros(q.shape[0])
    elif extra == "BulkThermostats":
        p = np.asarray(samples_p, float)[..., 1:-1]
        vals = _ou_adjoint_one(p, beta)
    elif isinstance(extra, GradientExtra):
        # (G.grad)^* 1 = -div G + beta G.grad V with G = grad V
        g = -model.force(q)
        vals = -model.laplacian(q) + beta * np.sum(g * g, axis=-1)
    else:
        raise ForcingError(f"unsupported extra {extra!r}")
    rms = float(np.sqrt(np.mean(vals**2)))
    return rms <= atol, rms, float(np.mean(vals))


def _ou_adjoint_one(pb, beta):
    """``sum_i (-p_i d_i + beta^{-1} d_i^2)^* 1`` on bulk momenta, evaluated term by term."""
    # in L^2(mu): (-p d_p)^* 1 = 1 - beta p^2 and (beta^{-1} d_p^2)^* 1 = beta p^2 - 1
    return np.sum((1.0 - beta * pb**2) + (beta * pb**2 - 1.0), axis=-1)
