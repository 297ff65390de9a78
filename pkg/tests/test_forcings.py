import numpy as np
import pytest
from hypothesis import given, strategies as st

from transport.ensemble import equilibrium_initial
from transport.forcings import (BoundaryGradient, BulkRotorDrive, ConstantForce, EnergyCurrentTotal, ForcingError,
                                FourierFluxIm, FourierFluxRe, GradientExtra, ShearSTF, SyntheticCombo,
                                TemperatureProfile, VelocityAlongF, conjugate_response, drift_perturbation,
                                perturbed_scheme, synthetic_check)
from transport.integrators import BAOAB, ChainSplitting, EulerMaruyama
from transport.models import AtomChain, EntropicSwitch, FreeParticle, Harmonic, LennardJonesFluid, Rotor

LJ = LennardJonesFluid(8, 5.0)


def test_zero_eta_gives_zero_drift():
    rng = np.random.default_rng(0)
    chain = AtomChain(Rotor(), 5)
    for forcing, model in ((ConstantForce((0.6, 0.8)), FreeParticle(2)), (ShearSTF(5.0), LJ),
                           (BulkRotorDrive(), chain), (SyntheticCombo(BulkRotorDrive()), chain)):
        q = rng.standard_normal((3, model.dim))
        np.testing.assert_array_equal(drift_perturbation(forcing, model, 0.0, q), 0.0)
    sc = ChainSplitting(0.1, T_L=1.0, T_R=1.0)
    assert perturbed_scheme(BoundaryGradient(), sc, 0.0) == sc
    assert perturbed_scheme(SyntheticCombo(BoundaryGradient()), sc, 0.0) == sc


def test_shear_at_quarter_box():
    L, eta = 4.0, 0.7
    q = np.zeros((1, 24))
    q[0, 1] = L / 4  # particle 0 at y = L/4
    q[0, 4] = L / 2  # particle 1 at y = L/2
    f = drift_perturbation(ShearSTF(L), LJ, eta, q).reshape(8, 3)
    assert f[0, 0] == pytest.approx(eta)
    assert f[0, 1] == f[0, 2] == 0.0
    assert abs(f[1, 0]) < 1e-15


@given(st.integers(0, 2**32 - 1))
def test_shear_structure(seed):
    rng = np.random.default_rng(seed)
    L = 5.0
    q = rng.uniform(0, L, (2, 24))
    F = ShearSTF(L).field(q).reshape(2, 8, 3)
    assert np.all(F[..., 1:] == 0)
    # depends only on y: moving x and z changes nothing
    q2 = q.reshape(2, 8, 3).copy()
    q2[..., [0, 2]] += rng.standard_normal((2, 8, 2))
    np.testing.assert_array_equal(ShearSTF(L).field(q2.reshape(2, 24)), ShearSTF(L).field(q))


def test_bulk_drive_matches_rescaled_forces():
    n, eta = 6, 0.3
    m = AtomChain(Rotor(), n)
    q = np.random.default_rng(1).standard_normal((4, n))
    dv = np.sin  # rotor: v(r) = 1 - cos r
    r = np.diff(q, axis=-1)  # r[b] = q[b+1] - q[b]
    c = eta / (n - 1)
    expect = np.zeros_like(q)
    for i in range(n):
        # atom i sits between bond i-1 (left) and bond i (right)
        left = dv(r[:, i - 1]) if i > 0 else 0.0
        right = dv(r[:, i]) if i < n - 1 else 0.0
        perturbed = (1 - c) * right - (1 + c) * left
        expect[:, i] = perturbed - (right - left)
    np.testing.assert_allclose(drift_perturbation(BulkRotorDrive(), m, eta, q), expect, atol=1e-14)
    np.testing.assert_allclose(m.force(q) + expect - m.force(q), expect)


def test_forcing_model_mismatch():
    with pytest.raises(ForcingError):
        drift_perturbation(ShearSTF(4.0), AtomChain(Rotor(), 4), 0.1)
    with pytest.raises(ForcingError):
        drift_perturbation(BulkRotorDrive(), FreeParticle(), 0.1)
    with pytest.raises(ForcingError):
        ConstantForce((1.0, 1.0))
    with pytest.raises(ForcingError):
        perturbed_scheme(BoundaryGradient(), BAOAB(0.1), 0.1)
    with pytest.raises(ForcingError):
        perturbed_scheme(BoundaryGradient(), ChainSplitting(0.1), 2.5)


def test_response_examples():
    F = (0.6, 0.8)
    m = FreeParticle(2, mass=2.0)
    assert VelocityAlongF(F)(m, np.zeros(2), 2.0 * np.array(F)) == pytest.approx(1.0)
    p = np.random.default_rng(0).standard_normal(24)
    q = np.zeros(24)
    px = p.reshape(8, 3)[:, 0]
    assert FourierFluxRe()(LJ, q, p) == pytest.approx(px.sum() / 8)
    assert FourierFluxIm()(LJ, q, p) == 0.0


def test_conjugate_examples():
    F = ConstantForce((1.0,))
    assert conjugate_response(F, FreeParticle(), BAOAB(0.1), [[0.3]], [[0.0]])[0] == 0.0
    p = np.array([[0.7], [-1.2]])
    beta, gamma = 2.0, 1.5
    S = conjugate_response(TemperatureProfile(), FreeParticle(), BAOAB(0.1, gamma, beta), np.zeros((2, 1)), p)
    np.testing.assert_allclose(S, beta * gamma * (beta * p[:, 0] ** 2 - 1))
    T, g = 0.8, 1.3
    pc = np.random.default_rng(0).standard_normal((5, 4))
    S = conjugate_response(BoundaryGradient(), AtomChain(Rotor(), 4), ChainSplitting(0.1, g, g, T, T), pc, pc)
    np.testing.assert_allclose(S, g * (pc[:, 0] ** 2 - pc[:, -1] ** 2) / T**2)
    # overdamped OU with F = 1: S = beta q
    np.testing.assert_allclose(conjugate_response(F, Harmonic(), EulerMaruyama(0.1), [[0.4], [-1.0]]), [0.4, -1.0])


def _mean_ok(x):
    x = np.asarray(x, float).ravel()
    return abs(x.mean()) < 3 * x.std(ddof=1) / np.sqrt(x.size)


N_SAMPLES = 100_000


def test_responses_and_conjugates_centered_at_equilibrium():
    ids = np.arange(N_SAMPLES)
    # rotor chain: total energy current and both chain conjugate responses
    m = AtomChain(Rotor(), 6)
    T = 0.7
    sc = ChainSplitting(0.1, 1.0, 1.0, T, T)
    q, p = equilibrium_initial(m, sc, 11, ids, 1 / T)
    assert _mean_ok(EnergyCurrentTotal()(m, q, p))
    assert _mean_ok(conjugate_response(BoundaryGradient(), m, sc, q, p))
    assert _mean_ok(conjugate_response(BulkRotorDrive(), m, sc, q, p))
    # entropic switch: constant force and temperature profile, both dynamics
    e = EntropicSwitch()
    b = BAOAB(0.1, 1.0, 1.0)
    q, p = equilibrium_initial(e, b, 12, ids)
    F = ConstantForce((1.0, 0.0))
    assert _mean_ok(VelocityAlongF((1.0, 0.0))(e, q, p))
    assert _mean_ok(conjugate_response(F, e, b, q, p))
    assert _mean_ok(conjugate_response(TemperatureProfile(), e, b, q, p))
    assert _mean_ok(conjugate_response(F, e, EulerMaruyama(0.1), q))
    assert _mean_ok(conjugate_response(TemperatureProfile("sin", 2.0), e, EulerMaruyama(0.1), q))


def test_synthetic_check():
    m = AtomChain(Rotor(), 5)
    sc = ChainSplitting(0.1)
    q, p = equilibrium_initial(m, sc, 3, np.arange(5000))
    assert synthetic_check("BulkThermostats", m, q, p)[0]
    assert synthetic_check(None, m, q, p)[0]
    e = EntropicSwitch()
    qe, _ = equilibrium_initial(e, BAOAB(0.1), 4, np.arange(5000))
    ok, rms, mean = synthetic_check(GradientExtra(), e, qe)
    assert not ok and rms > 0.1
    # its Gibbs mean still vanishes (integration by parts), which is why the check uses the rms
    assert abs(mean) < 4 * rms / np.sqrt(qe.shape[0])


def test_synthetic_combo_adds_bulk_thermostats():
    sc = ChainSplitting(0.1, T_L=1.0, T_R=1.0)
    s = perturbed_scheme(SyntheticCombo(BoundaryGradient(), a=0.5), sc, 0.2)
    assert (s.T_L, s.T_R, s.bulk_gamma, s.bulk_T) == pytest.approx((1.1, 0.9, 0.1, 1.0))
