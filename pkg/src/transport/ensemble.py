"""Replica ensembles: equilibrium initial conditions and schedule-independent parallel maps.

Replica ids ``0..K-1`` are cut into fixed blocks of ``block`` consecutive
ids. A block is always simulated as one vectorised batch, whichever worker
picks it up, and results are concatenated in block order, so outputs do not
depend on the number of workers.
"""

from __future__ import annotations

import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Callable, Sequence

import numpy as np

from .integrators import EulerMaruyama
from .models import (AtomChain, ConvexQuartic, EntropicSwitch, FreeParticle, Harmonic, HarmonicBond,
                     LennardJonesFluid, Rotor)
from .rng import INITIAL, stream

DEFAULT_BLOCK = 256


def blocks(K: int, block: int = DEFAULT_BLOCK) -> list[np.ndarray]:
    if K < 1:
        raise ValueError("need at least one replica")
    return [np.arange(s, min(s + block, K)) for s in range(0, K, block)]


def map_blocks(fn: Callable, payload, K: int, workers: int = 1, block: int = DEFAULT_BLOCK) -> list:
    """``[fn(payload, ids) for ids in blocks(K, block)]``, optionally in worker processes.

    ``fn`` must be a module-level function and ``payload`` picklable when
    ``workers > 1``.
    """
    bl = blocks(K, block)
    if workers <= 1 or len(bl) == 1:
        return [fn(payload, ids) for ids in bl]
    with ProcessPoolExecutor(max_workers=min(workers, len(bl))) as ex:
        return list(ex.map(fn, [payload] * len(bl), bl))


def gather(results: Sequence[dict], key: str, axis: int = -1) -> np.ndarray:
    """Concatenate one entry of per-block result dicts along the replica axis."""
    return np.concatenate([np.asarray(r[key]) for r in results], axis=axis)


# ------------------------------------------------------- initial conditions

@functools.lru_cache(maxsize=8)
def _table(model, beta):
    """Cumulative canonical weights of a low-dimensional model on a tensor grid."""
    if isinstance(model, ConvexQuartic):
        axes = [np.linspace(-6, 6, 4001)]
        logw = -beta * (0.5 * model.stiffness * axes[0] ** 2 + 0.25 * model.quartic * axes[0] ** 4)
    else:
        axes = [np.linspace(-3.5, 3.5, 701), np.linspace(-3.0, 4.0, 701)]
        X, Y = np.meshgrid(*axes, indexing="ij")
        logw = -beta * model.potential(np.stack([X, Y], axis=-1))
    w = np.exp(logw - logw.max()).ravel()
    cdf = np.cumsum(w)
    return axes, cdf / cdf[-1], logw.shape


def _grid_sample(rng, model, beta):
    """One draw: pick a cell by inverse CDF, then jitter uniformly inside it."""
    axes, cdf, shape = _table(model, beta)
    idx = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)
    sub = np.unravel_index(idx, shape)
    return np.array([ax[s] + (ax[1] - ax[0]) * (rng.random() - 0.5) for ax, s in zip(axes, sub)])


@functools.lru_cache(maxsize=8)
def _bond_table(kind, beta):
    r = np.linspace(-8, 8, 16001)
    logw = -beta * kind.v(r)
    cdf = np.cumsum(np.exp(logw - logw.max()))
    return r, cdf / cdf[-1]


def _bond_sample(kind, rng, beta, n):
    if isinstance(kind, Rotor):
        return rng.vonmises(0.0, beta, n)
    if isinstance(kind, HarmonicBond):
        return rng.standard_normal(n) / np.sqrt(beta)
    r, cdf = _bond_table(kind, beta)
    return np.interp(rng.random(n), cdf, r)


def _positions(model, rng, beta):
    if isinstance(model, FreeParticle):
        return np.zeros(model.dim)
    if isinstance(model, Harmonic):
        return rng.standard_normal(model.dim) / np.sqrt(beta * model.stiffness)
    if isinstance(model, ConvexQuartic):
        return np.concatenate([_grid_sample(rng, replace(model, dim=1), beta) for _ in range(model.dim)])
    if isinstance(model, EntropicSwitch):
        return _grid_sample(rng, model, beta)
    if isinstance(model, AtomChain):
        if model.left != "free" or model.right != "free":
            return np.zeros(model.n)
        # free ends: bonds are independent with density exp(-beta v(r))
        return np.concatenate([[0.0], np.cumsum(_bond_sample(model.kind, rng, beta, model.n - 1))])
    if isinstance(model, LennardJonesFluid):
        return model.lattice()
    raise TypeError(f"no initial condition rule for {model!r}")


EXACT_EQUILIBRIUM = (FreeParticle, Harmonic, ConvexQuartic, EntropicSwitch)


def equilibrium_initial(model, scheme, seed: int, replica_ids, beta: float = 1.0):
    """Initial ``(q, p)`` per replica from the INITIAL stream of each replica.

    Positions are exact canonical draws for the low-dimensional models and
    free-end chains; fixed or periodic chains start at rest positions and
    fluids on a lattice (these need burn-in). Momenta are
    Gaussian at temperature ``1/beta``; fluid momenta have the centre-of-mass
    drift removed. ``p`` is ``None`` for overdamped schemes.
    """
    qs, ps = [], []
    for rid in replica_ids:
        rng = stream(seed, int(rid), INITIAL)
        q = _positions(model, rng, beta)
        p = rng.standard_normal(model.dim) * np.sqrt(model.mass / beta)
        if isinstance(model, LennardJonesFluid):
            v = p.reshape(-1, 3)
            p = (v - v.mean(axis=0)).reshape(-1)
        qs.append(q)
        ps.append(p)
    return np.array(qs), (None if isinstance(scheme, EulerMaruyama) else np.array(ps))


def is_exact(model) -> bool:
    if isinstance(model, AtomChain):
        return model.left == model.right == "free"
    return isinstance(model, EXACT_EQUILIBRIUM)
