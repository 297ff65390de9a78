import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from transport.ensemble import blocks, equilibrium_initial, gather, is_exact, map_blocks
from transport.integrators import BAOAB, ChainSplitting, EulerMaruyama
from transport.models import AtomChain, FPUT, Harmonic, HarmonicBond, LennardJonesFluid, Rotor


def _ids_sum(payload, ids):
    rng = np.random.default_rng([payload, int(ids[0])])
    return {"ids": ids, "x": rng.standard_normal(len(ids))}


@given(st.integers(1, 2000), st.integers(1, 300))
def test_blocks_partition(K, b):
    bl = blocks(K, b)
    assert np.array_equal(np.concatenate(bl), np.arange(K))
    assert all(len(x) <= b for x in bl)


def test_map_blocks_worker_independent():
    a = map_blocks(_ids_sum, 5, 700, workers=1, block=100)
    b = map_blocks(_ids_sum, 5, 700, workers=3, block=100)
    assert np.array_equal(gather(a, "x"), gather(b, "x"))
    assert np.array_equal(gather(a, "ids"), np.arange(700))
    one = map_blocks(_ids_sum, 5, 1, workers=8)
    assert np.array_equal(gather(one, "x"), gather(map_blocks(_ids_sum, 5, 1), "x"))


def test_initial_conditions_depend_only_on_replica_id():
    m, sc = Harmonic(dim=2), BAOAB(0.1)
    q, p = equilibrium_initial(m, sc, 3, np.arange(10))
    q2, p2 = equilibrium_initial(m, sc, 3, [7, 2])
    np.testing.assert_array_equal(q2, q[[7, 2]])
    np.testing.assert_array_equal(p2, p[[7, 2]])
    q3, _ = equilibrium_initial(m, sc, 4, np.arange(10))
    assert not np.array_equal(q, q3)
    assert equilibrium_initial(m, EulerMaruyama(0.1), 3, [0])[1] is None


def test_harmonic_initial_variance():
    q, p = equilibrium_initial(Harmonic(stiffness=4.0), BAOAB(0.1), 0, np.arange(20000), beta=2.0)
    assert q.var() == pytest.approx(1 / 8, rel=0.05)
    assert p.var() == pytest.approx(1 / 2, rel=0.05)


@pytest.mark.parametrize("beta", [0.5, 3.3])
def test_free_rotor_chain_bonds_von_mises(beta):
    m = AtomChain(Rotor(), 5)
    q, _ = equilibrium_initial(m, ChainSplitting(0.1), 1, np.arange(20000), beta)
    c = np.cos(np.diff(q, axis=1)).ravel()
    target = special.i1(beta) / special.i0(beta)
    assert abs(c.mean() - target) < 4 * c.std() / np.sqrt(c.size)
    assert is_exact(m)


def test_fput_and_harmonic_bond_sampling():
    q, _ = equilibrium_initial(AtomChain(HarmonicBond(), 4), ChainSplitting(0.1), 2, np.arange(20000), 2.0)
    assert np.diff(q, axis=1).var() == pytest.approx(0.5, rel=0.05)
    m = AtomChain(FPUT(), 4)
    q, _ = equilibrium_initial(m, ChainSplitting(0.1), 2, np.arange(20000))
    r = np.diff(q, axis=1).ravel()
    xs = np.linspace(-8, 8, 20001)
    w = np.exp(-m.kind.v(xs))
    assert abs(r.mean() - np.sum(xs * w) / w.sum()) < 4 * r.std() / np.sqrt(r.size)


def test_fixed_chain_starts_at_rest_and_lj_momentum():
    m = AtomChain(Rotor(), 5, left="fixed", right="fixed")
    q, _ = equilibrium_initial(m, ChainSplitting(0.1), 0, np.arange(3))
    assert np.all(q == 0) and not is_exact(m)
    lj = LennardJonesFluid(27, 6.0)
    q, p = equilibrium_initial(lj, BAOAB(0.01), 0, np.arange(4))
    np.testing.assert_allclose(p.reshape(4, 27, 3).sum(axis=1), 0.0, atol=1e-12)
