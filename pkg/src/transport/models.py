"""Potentials, forces and physical observables for the model systems.

All positions are arrays of shape ``(..., d)``; leading axes index replicas,
so every function evaluates a whole ensemble at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np


class ContractError(ValueError):
    """Input violates a documented precondition."""


class OverlapError(ContractError):
    """Two Lennard-Jones particles closer than the rejection radius."""


@dataclass
class Configuration:
    positions: np.ndarray
    momenta: np.ndarray
    box: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.momenta = np.asarray(self.momenta, dtype=float)
        if self.positions.shape != self.momenta.shape:
            raise ContractError("positions and momenta must have equal shapes")
        if self.box is not None:
            self.box = np.asarray(self.box, dtype=float)
            if np.any(self.box <= 0):
                raise ContractError("box edge lengths must be positive")

    def copy(self) -> "Configuration":
        return Configuration(self.positions.copy(), self.momenta.copy(),
                             None if self.box is None else self.box.copy())


def _check_dim(q, d):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (d,):
        raise ContractError(f"expected trailing dimension {d}, got shape {q.shape}")
    return q


# ---------------------------------------------------------------- oracles

@dataclass(frozen=True)
class FreeParticle:
    dim: int = 1
    mass: float = 1.0

    def potential(self, q):
        q = _check_dim(q, self.dim)
        return np.zeros(q.shape[:-1])

    def force(self, q):
        return np.zeros_like(_check_dim(q, self.dim))

    def laplacian(self, q):
        return np.zeros(_check_dim(q, self.dim).shape[:-1])


@dataclass(frozen=True)
class Harmonic:
    """``V(q) = stiffness |q|^2 / 2``."""

    stiffness: float = 1.0
    dim: int = 1
    mass: float = 1.0

    def potential(self, q):
        q = _check_dim(q, self.dim)
        return 0.5 * self.stiffness * np.sum(q * q, axis=-1)

    def force(self, q):
        return -self.stiffness * _check_dim(q, self.dim)

    def laplacian(self, q):
        q = _check_dim(q, self.dim)
        return np.full(q.shape[:-1], self.stiffness * self.dim)


@dataclass(frozen=True)
class ConvexQuartic:
    """Strongly convex ``V(q) = k|q|^2/2 + c sum q_i^4 / 4`` (``k, c > 0``)."""

    stiffness: float = 1.0
    quartic: float = 1.0
    dim: int = 1
    mass: float = 1.0

    def potential(self, q):
        q = _check_dim(q, self.dim)
        return np.sum(0.5 * self.stiffness * q**2 + 0.25 * self.quartic * q**4, axis=-1)

    def force(self, q):
        q = _check_dim(q, self.dim)
        return -(self.stiffness * q + self.quartic * q**3)

    def laplacian(self, q):
        q = _check_dim(q, self.dim)
        return np.sum(self.stiffness + 3 * self.quartic * q**2, axis=-1)


# ------------------------------------------------------- entropic switch

@dataclass(frozen=True)
class EntropicSwitch:
    """Two-dimensional double-well potential with an upper entropic channel."""

    dim: int = field(default=2, init=False)
    mass: float = 1.0

    MINIMA = ((-1.048, -0.0421), (1.048, -0.0421))
    SADDLE = (0.0, 1.5371)

    @staticmethod
    def _parts(q):
        x, y = q[..., 0], q[..., 1]
        ex = np.exp(-x**2)
        a = np.exp(-(y - 1 / 3) ** 2)
        b = np.exp(-(y - 5 / 3) ** 2)
        ey = np.exp(-y**2)
        c = np.exp(-(x - 1) ** 2)
        d = np.exp(-(x + 1) ** 2)
        return x, y, ex, a, b, ey, c, d

    def potential(self, q):
        x, y, ex, a, b, ey, c, d = self._parts(_check_dim(q, 2))
        return 3 * ex * (a - b) - 5 * ey * (c + d) + 0.2 * x**4 + 0.2 * (y - 1 / 3) ** 4

    def gradient(self, q):
        x, y, ex, a, b, ey, c, d = self._parts(_check_dim(q, 2))
        gx = -6 * x * ex * (a - b) + 10 * ey * ((x - 1) * c + (x + 1) * d) + 0.8 * x**3
        gy = (3 * ex * (-2 * (y - 1 / 3) * a + 2 * (y - 5 / 3) * b)
              + 10 * y * ey * (c + d) + 0.8 * (y - 1 / 3) ** 3)
        return np.stack([gx, gy], axis=-1)

    def force(self, q):
        return -self.gradient(q)

    def laplacian(self, q):
        x, y, ex, a, b, ey, c, d = self._parts(_check_dim(q, 2))
        # d2/dx2 and d2/dy2 of each Gaussian product, written out
        gxx = (3 * (4 * x**2 - 2) * ex * (a - b)
               - 5 * ey * ((4 * (x - 1) ** 2 - 2) * c + (4 * (x + 1) ** 2 - 2) * d)
               + 2.4 * x**2)
        gyy = (3 * ex * ((4 * (y - 1 / 3) ** 2 - 2) * a - (4 * (y - 5 / 3) ** 2 - 2) * b)
               - 5 * (4 * y**2 - 2) * ey * (c + d) + 2.4 * (y - 1 / 3) ** 2)
        return gxx + gyy


# ------------------------------------------------------------ atom chains

Boundary = Literal["fixed", "free", "periodic"]


@dataclass(frozen=True)
class FPUT:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ContractError("FPUT requires alpha > 0 and beta > 0")

    def v(self, r):
        return 0.5 * r**2 + self.alpha * r**3 / 3 + 0.25 * self.beta * r**4

    def dv(self, r):
        return r + self.alpha * r**2 + self.beta * r**3


@dataclass(frozen=True)
class Rotor:
    def v(self, r):
        return 1.0 - np.cos(r)

    def dv(self, r):
        return np.sin(r)


@dataclass(frozen=True)
class HarmonicBond:
    """Quadratic bond ``v(r) = r^2/2``; the linear chain used as an exact oracle."""

    def v(self, r):
        return 0.5 * r**2

    def dv(self, r):
        return r


@dataclass(frozen=True)
class ChainCurrents:
    bonds: np.ndarray  # (..., n-1)
    total: np.ndarray  # (...)
    energies: np.ndarray  # (..., n)


@dataclass(frozen=True)
class AtomChain:
    """Nearest-neighbour chain of ``n`` unit masses with fictitious end particles.

    Positions are displacements from the lattice. Per side the boundary is
    ``fixed`` (q_0 = 0 or q_{n+1} = 0), ``free`` (q_0 = q_1, q_{n+1} = q_n) or
    ``periodic`` (both sides, q_0 = q_n and q_{n+1} = q_1, the wrap-around
    bond counted once).
    """

    kind: Union[FPUT, Rotor, HarmonicBond]
    n: int
    left: Boundary = "free"
    right: Boundary = "free"
    mass: float = field(default=1.0, init=False)

    def __post_init__(self):
        if self.n < 3:
            raise ContractError("chain needs n >= 3")
        for side in (self.left, self.right):
            if side not in ("fixed", "free", "periodic"):
                raise ContractError(f"unknown boundary {side!r}")
        if (self.left == "periodic") != (self.right == "periodic"):
            raise ContractError("periodic boundary must be used on both sides")

    @property
    def dim(self) -> int:
        return self.n

    @property
    def periodic(self) -> bool:
        return self.left == "periodic"

    def bond_lengths(self, q):
        """``r_i = q_i - q_{i-1}`` for ``i = 1..n+1`` (``1..n`` when periodic)."""
        q = _check_dim(q, self.n)
        if self.periodic:
            return q - np.roll(q, 1, axis=-1)
        zero = np.zeros(q.shape[:-1] + (1,))
        q0 = zero if self.left == "fixed" else q[..., :1]
        qn1 = zero if self.right == "fixed" else q[..., -1:]
        return np.diff(np.concatenate([q0, q, qn1], axis=-1), axis=-1)

    def potential(self, q):
        return np.sum(self.kind.v(self.bond_lengths(q)), axis=-1)

    def force(self, q):
        dv = self.kind.dv(self.bond_lengths(q))
        if self.periodic:
            return np.roll(dv, -1, axis=-1) - dv
        # free ends give r = 0 and v'(0) = 0, so no special casing is needed
        return dv[..., 1:] - dv[..., :-1]

    def currents(self, q, p) -> ChainCurrents:
        q = _check_dim(q, self.n)
        p = _check_dim(p, self.n)
        dq = np.diff(q, axis=-1)
        j = -0.5 * (p[..., :-1] + p[..., 1:]) * self.kind.dv(dq)
        r = self.bond_lengths(q)
        vr = self.kind.v(r)
        if self.periodic:
            vr = np.concatenate([vr, vr[..., :1]], axis=-1)
        e = 0.5 * p**2 / self.mass + 0.5 * (vr[..., :-1] + vr[..., 1:])
        return ChainCurrents(j, j.sum(axis=-1), e)


def chain_currents(model: AtomChain, config: Configuration) -> ChainCurrents:
    if not isinstance(model, AtomChain):
        raise ContractError("chain_currents requires an AtomChain")
    return model.currents(config.positions, config.momenta)


# ------------------------------------------------------- Lennard-Jones

def minimum_image(displacement, box):
    """Wrap each component into ``[-L/2, L/2)``."""
    d = np.asarray(displacement, dtype=float)
    L = np.asarray(box, dtype=float)
    if np.any(L <= 0):
        raise ContractError("box edge lengths must be positive")
    w = d - L * np.floor(d / L + 0.5)
    half = 0.5 * L
    w = np.where(w < -half, w + L, w)
    w = np.where(w >= half, w - L, w)
    return w


def _switch(r, r_on, r_cut):
    """C2 switching polynomial and its derivative."""
    x = np.clip((r - r_on) / (r_cut - r_on), 0.0, 1.0)
    s = 1 - x**3 * (10 - 15 * x + 6 * x**2)
    ds = -30 * x**2 * (1 - x) ** 2 / (r_cut - r_on)
    return s, ds


@dataclass(frozen=True)
class LennardJonesFluid:
    N: int
    L: float
    epsilon: float = 1.0
    sigma: float = 1.0
    r_on: float = 2.0
    r_cut: float = 2.5
    mass: float = 1.0
    neighbor: Literal["pairs", "cells"] = "pairs"
    overlap_radius: float = 1e-6

    def __post_init__(self):
        if not (0 < self.r_on < self.r_cut <= self.L / 2):
            raise ContractError("LJ requires 0 < r_on < r_cut <= L/2")
        if self.neighbor not in ("pairs", "cells"):
            raise ContractError(f"unknown neighbor search {self.neighbor!r}")

    @property
    def dim(self) -> int:
        return 3 * self.N

    @property
    def box(self) -> np.ndarray:
        return np.full(3, float(self.L))

    def pair_energy(self, r):
        r = np.asarray(r, dtype=float)
        sr6 = (self.sigma / r) ** 6
        v = 4 * self.epsilon * (sr6**2 - sr6)
        s, _ = _switch(r, self.r_on, self.r_cut)
        return np.where(r < self.r_cut, v * s, 0.0)

    def pair_force(self, r):
        """``-du/dr`` of the tapered pair energy."""
        r = np.asarray(r, dtype=float)
        sr6 = (self.sigma / r) ** 6
        v = 4 * self.epsilon * (sr6**2 - sr6)
        dv = -24 * self.epsilon * (2 * sr6**2 - sr6) / r
        s, ds = _switch(r, self.r_on, self.r_cut)
        return np.where(r < self.r_cut, -(dv * s + v * ds), 0.0)

    def _pairs(self, q):
        x = _check_dim(q, self.dim).reshape(q.shape[:-1] + (self.N, 3))
        d = minimum_image(x[..., None, :, :] - x[..., :, None, :], self.box)  # x_j - x_i
        r = np.sqrt(np.sum(d * d, axis=-1))
        iu = np.triu_indices(self.N, 1)
        if np.any(r[..., iu[0], iu[1]] < self.overlap_radius * self.sigma):
            raise OverlapError("particle overlap below rejection radius")
        k = np.arange(self.N)
        r[..., k, k] = np.inf
        return d, r

    def potential(self, q):
        if self.neighbor == "cells" and np.ndim(q) == 1:
            return self._cells(q)[0]
        _, r = self._pairs(q)
        return 0.5 * np.sum(self.pair_energy(r), axis=(-2, -1))

    def force(self, q):
        if self.neighbor == "cells" and np.ndim(q) == 1:
            return self._cells(q)[1]
        d, r = self._pairs(q)
        f = self.pair_force(r) / r  # along d = x_j - x_i, pushes i away from j
        fi = -np.sum(f[..., None] * d, axis=-2)
        return fi.reshape(np.shape(q))

    def _cells(self, q):
        """Cell-list evaluation for a single configuration."""
        x = _check_dim(q, self.dim).reshape(self.N, 3)
        nc = int(np.floor(self.L / self.r_cut))
        if nc < 3:
            d, r = self._pairs(q)
            e = 0.5 * np.sum(self.pair_energy(r))
            f = self.pair_force(r) / r
            return e, (-np.sum(f[..., None] * d, axis=-2)).reshape(-1)
        xw = x - self.L * np.floor(x / self.L)
        cell = np.minimum((xw / (self.L / nc)).astype(int), nc - 1)
        cid = (cell[:, 0] * nc + cell[:, 1]) * nc + cell[:, 2]
        members = [np.flatnonzero(cid == c) for c in range(nc**3)]
        offsets = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)])
        ii, jj = [], []
        for c in range(nc**3):
            ci = np.array(np.unravel_index(c, (nc, nc, nc)))
            for off in offsets:
                nb = np.ravel_multi_index(tuple((ci + off) % nc), (nc, nc, nc))
                if nb < c:
                    continue
                a, b = members[c], members[nb]
                if nb == c:
                    A, B = np.triu_indices(a.size, 1)
                    ii.append(a[A]); jj.append(a[B])
                else:
                    ii.append(np.repeat(a, b.size)); jj.append(np.tile(b, a.size))
        i = np.concatenate(ii) if ii else np.zeros(0, int)
        j = np.concatenate(jj) if jj else np.zeros(0, int)
        d = minimum_image(x[j] - x[i], self.box)
        r = np.sqrt(np.sum(d * d, axis=-1))
        if np.any(r < self.overlap_radius * self.sigma):
            raise OverlapError("particle overlap below rejection radius")
        e = float(np.sum(self.pair_energy(r)))
        fr = (self.pair_force(r) / r)[:, None] * d
        f = np.zeros_like(x)
        np.add.at(f, i, -fr)
        np.add.at(f, j, fr)
        return e, f.reshape(-1)

    def lattice(self) -> np.ndarray:
        """Simple cubic lattice filling the box (first ``N`` sites)."""
        k = int(np.ceil(self.N ** (1 / 3)))
        g = (np.arange(k) + 0.5) * self.L / k
        pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        return pts[: self.N].reshape(-1).copy()


Model = Union[FreeParticle, Harmonic, ConvexQuartic, EntropicSwitch, AtomChain, LennardJonesFluid]


def potential_energy(model, positions):
    return model.potential(positions)


def force(model, positions):
    f = model.force(positions)
    if not np.all(np.isfinite(f)):
        raise FloatingPointError("non-finite force")
    return f
