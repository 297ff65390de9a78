"""Invariant measures of discretisation schemes, computed without sampling.

Time-step bias of invariant averages is tiny compared with the Monte Carlo
error reachable at desk scale, so the weak-order studies work directly with
the law of the scheme:

* :func:`baoab_stationary_average` pushes a phase-space density on a
  periodic 4D grid through the exact B, A and O sub-step maps (the A and B
  maps are shears, applied as Fourier phase shifts; the O map is a Gaussian
  convolution) until the average of the observable stops moving.
* :func:`linear_scheme_stationary_covariance` extracts the affine map of a
  step function for a linear model by probing it, then solves the discrete
  Lyapunov equation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .integrators import BAOAB, make_state, step
from .models import ContractError


@dataclass(frozen=True)
class PhaseGrid:
    """Periodic grid for a 2D position, 2D momentum density."""

    qx: tuple = (-3.2, 3.2)
    qy: tuple = (-2.6, 3.6)
    p: tuple = (-6.5, 6.5)
    nq: int = 48
    npm: int = 32

    def axes(self):
        def ax(lo_hi, n):
            lo, hi = lo_hi
            h = (hi - lo) / n
            return lo + h * np.arange(n), h
        return ax(self.qx, self.nq), ax(self.qy, self.nq), ax(self.p, self.npm)


@dataclass
class StationaryResult:
    dt: float
    average: float
    increments: list = field(default_factory=list)
    steps: int = 0
    seconds: float = 0.0
    density: np.ndarray | None = None
    extrapolated: float = float("nan")


def _geometric_tail(inc):
    """Remaining change if the last increments keep shrinking geometrically (Aitken)."""
    if len(inc) < 2 or inc[-2] == 0:
        return inc[-1] if inc else float("inf")
    r = inc[-1] / inc[-2]
    if not 0 < r < 0.95:
        return inc[-1] / (1 - 0.95)
    return inc[-1] * r / (1 - r)


def gibbs_average(model, observable, beta=1.0, grid: PhaseGrid = PhaseGrid(), n=1601, pad=0.8):
    """Position-space canonical average by tensor quadrature on a fine grid."""
    (x, _), (y, _), _ = grid.axes()
    xs = np.linspace(grid.qx[0] - pad, grid.qx[1] + pad, n)
    ys = np.linspace(grid.qy[0] - pad, grid.qy[1] + pad, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Q = np.stack([X, Y], axis=-1)
    Vq = model.potential(Q)
    w = np.exp(-beta * (Vq - Vq.min()))
    return float(np.sum(observable(Q) * w) / np.sum(w))


def _o_matrix(p, c, s):
    """Matrix of the O-step convolution acting on trigonometric-interpolant nodal values."""
    n = p.size
    L = n * (p[1] - p[0])
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    fine = np.linspace(p[0], p[0] + L, 40 * n, endpoint=False)
    psi = np.real(np.exp(1j * (fine[:, None, None] - p[None, :, None]) * k[None, None, :]).sum(-1)) / n
    ker = np.exp(-((p[:, None] - c * fine[None, :]) ** 2) / (2 * s * s)) / np.sqrt(2 * np.pi * s * s)
    return ker @ psi * (fine[1] - fine[0])


def baoab_stationary_average(model, scheme: BAOAB, observable, grid: PhaseGrid = PhaseGrid(),
                             horizon: float = 15.0, tol: float = 1e-10, check_every: int = 10,
                             init: np.ndarray | None = None, keep_density: bool = False) -> StationaryResult:
    """Average of ``observable(q)`` under the invariant law of BAOAB on a 2D model.

    The density is iterated for at most ``horizon`` time units, stopping
    early once successive averages (``check_every`` steps apart) differ by
    less than ``tol``. ``init`` may hold a warm-start density (shape
    ``(nq, nq, npm, npm)``); the default is the continuous Gibbs density.
    """
    if model.dim != 2:
        raise ContractError("the grid propagator handles two-dimensional models only")
    if scheme.temperature is not None:
        raise ContractError("position-dependent temperature not supported here")
    (qx, hx), (qy, hy), (p, hp) = grid.axes()
    m, beta, dt = model.mass, scheme.beta, scheme.dt
    QX, QY = np.meshgrid(qx, qy, indexing="ij")
    Q = np.stack([QX, QY], axis=-1)
    Vq = model.potential(Q)
    g = -model.force(Q)
    obs_q = observable(Q)
    c, s = scheme.ou_coefficients(m)
    M = _o_matrix(p, c, s)

    if init is None:
        pm = np.exp(-beta * p**2 / (2 * m))
        rho = np.exp(-beta * (Vq - Vq.min()))[:, :, None, None] * pm[None, None, :, None] * pm[None, None, None, :]
    else:
        rho = np.array(init, dtype=float)
    rho /= rho.sum()

    kx = 2 * np.pi * np.fft.fftfreq(grid.nq, hx)
    ky = 2 * np.pi * np.fft.rfftfreq(grid.nq, hy)
    kp = 2 * np.pi * np.fft.fftfreq(grid.npm, hp)
    kpr = 2 * np.pi * np.fft.rfftfreq(grid.npm, hp)
    # half drift q += dt/2 p/m and half kick p -= dt/2 grad V as phase shifts
    a1 = np.exp(-1j * kx[:, None, None, None] * p[None, None, :, None] * dt / (2 * m))
    a2 = np.exp(-1j * ky[None, :, None, None] * p[None, None, None, :] * dt / (2 * m))
    b1 = np.exp(1j * kp[None, None, :, None] * dt * g[:, :, 0, None, None] / 2)
    b2 = np.exp(1j * kpr[None, None, None, :] * dt * g[:, :, 1, None, None] / 2)
    # the two half kicks meet across the step boundary: one full kick per cycle
    b1, b2 = b1 * b1, b2 * b2

    def A(r):
        f = np.fft.rfftn(r, axes=(0, 1))
        f *= a1
        f *= a2
        return np.fft.irfftn(f, s=(grid.nq, grid.nq), axes=(0, 1))

    def B(r):
        f = np.fft.rfftn(r, axes=(2, 3))
        f *= b1
        f *= b2
        return np.fft.irfftn(f, s=(grid.npm, grid.npm), axes=(2, 3))

    def O(r):
        r = np.einsum("ji,abik->abjk", M, r, optimize=True)
        return np.einsum("ji,abki->abkj", M, r, optimize=True)

    def average(r):
        # the density is held just before O; the step ends after A, B
        mq = A(O(r)).sum(axis=(2, 3))
        return float(np.sum(mq * obs_q) / mq.sum())

    t0 = time.perf_counter()
    out = StationaryResult(dt=dt, average=average(rho))
    n_max = int(np.ceil(horizon / dt))
    n = 0
    while n < n_max:
        for _ in range(check_every):
            rho = A(B(A(O(rho))))
        n += check_every
        new = average(rho)
        out.increments.append(new - out.average)
        out.average = new
        if abs(_geometric_tail(out.increments)) < tol:
            break
    out.steps = n
    out.extrapolated = out.average + _geometric_tail(out.increments)
    out.seconds = time.perf_counter() - t0
    if keep_density:
        out.density = rho
    return out


def baoab_bias_study(model, dts, observable, beta=1.0, gamma=1.0, grid: PhaseGrid = PhaseGrid(), **kw):
    """Stationary averages for a decreasing sequence of steps, warm-starting each level.

    The starting density for a step ``h`` is linearly extrapolated from the
    two previous (larger) levels. Returns the list of :class:`StationaryResult`.
    """
    dts = sorted(dts, reverse=True)
    out, dens = [], []
    for dt in dts:
        if len(dens) >= 2 and np.isclose(dts[len(dens) - 1], 2 * dt) and np.isclose(dts[len(dens) - 2], 4 * dt):
            init = 1.5 * dens[-1] - 0.5 * dens[-2]
        else:
            init = dens[-1] if dens else None
        r = baoab_stationary_average(model, BAOAB(dt, gamma, beta), observable, grid=grid,
                                     init=init, keep_density=True, **kw)
        dens.append(r.density)
        r.density = None
        out.append(r)
    return out


def linear_scheme_stationary_covariance(model, scheme, dim: int | None = None):
    """Stationary mean and covariance of a scheme applied to a linear model.

    The step is probed with zero noise at the origin and at unit vectors to
    read off ``x' = A x + b + N G``, then the discrete Lyapunov equation
    ``C = A C A^T + N N^T`` is solved. Phase-space states are ``(q, p)``
    for inertial schemes and ``q`` otherwise.
    """
    from .integrators import EulerMaruyama, noise_width
    d = model.dim if dim is None else dim
    inertial = not isinstance(scheme, EulerMaruyama)
    n = 2 * d if inertial else d
    w = noise_width(model, scheme)

    def apply(x, G):
        q = x[:d][None]
        p = x[d:][None] if inertial else None
        st = step(make_state(model, scheme, q, p), model, scheme, G[None])
        return np.concatenate([st.q[0], st.p[0]]) if inertial else st.q[0]

    zero = np.zeros(w)
    b = apply(np.zeros(n), zero)
    A = np.column_stack([apply(e, zero) - b for e in np.eye(n)])
    N = np.column_stack([apply(np.zeros(n), e) - b for e in np.eye(w)])
    mean = np.linalg.solve(np.eye(n) - A, b)
    C = linalg.solve_discrete_lyapunov(A, N @ N.T)
    return mean, 0.5 * (C + C.T)
