"""Grid solver for overdamped Poisson equations ``-L0 Phi = R`` in one or two dimensions.

``L0 = -grad V . grad + beta^-1 Laplacian`` is discretised in divergence
form ``beta^-1 e^{beta V} div(e^{-beta V} grad)`` with harmonic-mean face
weights and no-flux boundaries, so the matrix is symmetric in the
Gibbs-weighted inner product. The zero-mean solution is obtained from a
bordered sparse system solved by direct factorisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.interpolate import RectBivariateSpline, make_interp_spline
from scipy.sparse.linalg import spsolve

from .models import ContractError


class PoissonError(ContractError):
    """Ill-posed or numerically singular Poisson problem."""


@dataclass
class Grid:
    """Rectangular node grid; ``bounds`` is a sequence of ``(lo, hi)`` and ``shape`` node counts."""

    bounds: Sequence[tuple]
    shape: Sequence[int]

    def __post_init__(self):
        if len(self.bounds) not in (1, 2) or len(self.shape) != len(self.bounds):
            raise PoissonError("grids are one- or two-dimensional")
        for (lo, hi), n in zip(self.bounds, self.shape):
            if not hi > lo or n < 4:
                raise PoissonError("each axis needs hi > lo and at least 4 nodes")

    @property
    def axes(self):
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.shape)]

    @property
    def spacing(self):
        return [(hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.shape)]

    def points(self) -> np.ndarray:
        """Nodes as an array of shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray
    weights: np.ndarray  # normalised Gibbs weights at the nodes
    residual: float = 0.0

    def mean(self) -> float:
        return float(np.sum(self.weights * self.values))


def gibbs_weights(model, grid: Grid, beta: float) -> np.ndarray:
    V = model.potential(grid.points())
    w = np.exp(-beta * (V - V.min()))
    return w / w.sum()


def discrete_generator(model, grid: Grid, beta: float):
    """Sparse matrix of the discretised ``L0`` on the flattened grid, and the node weights."""
    rho = gibbs_weights(model, grid, beta)
    shape = tuple(grid.shape)
    idx = np.arange(rho.size).reshape(shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(rho.size)
    for ax, h in enumerate(grid.spacing):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        a, b = rho[tuple(lo)].ravel(), rho[tuple(hi)].ravel()
        face = 2 * a * b / (a + b) / (beta * h * h)
        i, j = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()
        # symmetric flux form: (rho L)_{ij} = face
        rows += [i, j]
        cols += [j, i]
        vals += [face, face]
        np.add.at(diag, i, -face)
        np.add.at(diag, j, -face)
    W = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(rho.size, rho.size)).tocsr() + sparse.diags(diag)
    L = sparse.diags(1.0 / rho.ravel()) @ W
    return L.tocsr(), rho


def solve_poisson_overdamped(model, grid: Grid, beta: float, rhs, center_tol: float = 1e-8,
                             boundary_tol: float = 1e-10) -> GridFunction:
    """Zero-mean solution of ``-L0 Phi = rhs`` (``rhs`` nodal values or a callable of the nodes)."""
    pts = grid.points()
    R = np.asarray(rhs(pts) if callable(rhs) else rhs, float).reshape(tuple(grid.shape))
    L, rho = discrete_generator(model, grid, beta)
    edge = np.ones(rho.shape, bool)
    edge[tuple(slice(1, -1) for _ in grid.shape)] = False
    if rho[edge].max() / rho.max() > boundary_tol:
        raise PoissonError(f"boundary Gibbs weight {rho[edge].max() / rho.max():.2e} exceeds {boundary_tol}; enlarge the domain")
    mean = float(np.sum(rho * R))
    scale = float(np.sqrt(np.sum(rho * R * R))) or 1.0
    if abs(mean) > center_tol * scale:
        raise PoissonError(f"right-hand side not centred: Gibbs mean {mean:.3e}")
    r = rho.ravel()
    A = -(sparse.diags(r) @ L)
    n = r.size
    big = sparse.bmat([[A, r[:, None]], [r[None, :], None]], format="csc")
    sol = spsolve(big, np.concatenate([r * (R.ravel() - mean), [0.0]]))
    if not np.all(np.isfinite(sol)):
        dense = big.toarray() if n <= 4000 else None
        cond = np.linalg.cond(dense) if dense is not None else float("inf")
        raise PoissonError(f"singular Poisson system (condition estimate {cond:.2e})")
    phi = sol[:n]
    res = float(np.sqrt(np.sum(r * (-(L @ phi) - (R.ravel() - mean)) ** 2)))
    return GridFunction(grid, phi.reshape(R.shape), rho, res)


# ----------------------------------------------------------- evaluation

@dataclass
class ControlVariate:
    """``x -> L Phi(x)`` for overdamped dynamics with drift ``-grad V + eta F``.

    Phi and its derivatives come from cubic spline interpolation of the nodal
    values; points outside the grid evaluate to 0 and are counted.
    """

    phi: GridFunction
    model: object
    beta: float
    eta: float = 0.0
    F: Optional[tuple] = None
    excursions: int = field(default=0, init=False)

    def __post_init__(self):
        ax = self.phi.grid.axes
        if len(ax) == 1:
            self._s = make_interp_spline(ax[0], self.phi.values, k=3)
        else:
            self._s = RectBivariateSpline(ax[0], ax[1], self.phi.values, kx=3, ky=3, s=0)

    def derivatives(self, q):
        """Gradient and Laplacian of the interpolant at ``q`` (shape ``(..., dim)``)."""
        q = np.asarray(q, float)
        if q.shape[-1] == 1:
            x = q[..., 0]
            g = self._s.derivative(1)(x)[..., None]
            lap = self._s.derivative(2)(x)
        else:
            x, y = q[..., 0].ravel(), q[..., 1].ravel()
            gx = self._s.ev(x, y, dx=1).reshape(q.shape[:-1])
            gy = self._s.ev(x, y, dy=1).reshape(q.shape[:-1])
            g = np.stack([gx, gy], axis=-1)
            lap = (self._s.ev(x, y, dx=2) + self._s.ev(x, y, dy=2)).reshape(q.shape[:-1])
        return g, lap

    def value(self, q):
        q = np.asarray(q, float)
        if q.shape[-1] == 1:
            return self._s(q[..., 0])
        return self._s.ev(q[..., 0].ravel(), q[..., 1].ravel()).reshape(q.shape[:-1])

    def __call__(self, q):
        q = np.asarray(q, float)
        inside = np.ones(q.shape[:-1], bool)
        for i, (lo, hi) in enumerate(self.phi.grid.bounds):
            inside &= (q[..., i] >= lo) & (q[..., i] <= hi)
        self.excursions += int(np.size(inside) - np.count_nonzero(inside))
        g, lap = self.derivatives(np.where(inside[..., None], q, 0.0))
        drift = self.model.force(q)
        if self.eta and self.F is not None:
            drift = drift + self.eta * np.asarray(self.F, float)
        out = np.sum(drift * g, axis=-1) + lap / self.beta
        return np.where(inside, out, 0.0)


def control_variate_eval(phi: GridFunction, model, beta: float, q, eta: float = 0.0, F=None) -> np.ndarray:
    return ControlVariate(phi, model, beta, eta, F)(q)
