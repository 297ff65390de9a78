import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg, stats

from transport.ensemble import equilibrium_initial, gather, map_blocks
from transport.experiments import Experiment, running_average_block
from transport.forcings import BondCurrents
from transport.integrators import (BAOAB, ChainSplitting, EulerMaruyama, State, Verlet, baoab_step,
                                   euler_maruyama_step, make_state, simulate)
from transport.invariant import linear_scheme_stationary_covariance
from transport.models import AtomChain, ContractError, EntropicSwitch, FreeParticle, Harmonic, HarmonicBond, Rotor


def test_free_flight_without_friction():
    m = FreeParticle(2)
    st = make_state(m, BAOAB(0.1, gamma=0.0), np.array([[1.0, 2.0]]), np.array([[0.5, -1.0]]))
    new = baoab_step(st, m, BAOAB(0.1, gamma=0.0), np.random.default_rng(0).standard_normal((1, 2)))
    np.testing.assert_allclose(new.q, [[1.05, 1.9]])
    np.testing.assert_allclose(new.p, [[0.5, -1.0]])


@given(st.floats(0.001, 0.5), st.floats(0.0, 5.0), st.floats(0.2, 5.0), st.floats(-3, 3), st.floats(-3, 3))
def test_o_step_exact(dt, gamma, beta, p, g):
    # with V = 0 the B and A steps do not touch p, so p' is the O-step alone
    sc = BAOAB(dt, gamma, beta)
    m = FreeParticle()
    new = baoab_step(make_state(m, sc, [[0.0]], [[p]]), m, sc, np.array([[g]]))
    c = np.exp(-gamma * dt)
    assert new.p[0, 0] == pytest.approx(c * p + np.sqrt((1 - c * c) / beta) * g, rel=1e-12, abs=1e-14)


def baoab_matrices(h, gamma, beta):
    """Hand-composed affine maps of B, A, O, A, B for V = q^2/2, unit mass."""
    B = np.array([[1, 0], [-h / 2, 1]])
    A = np.array([[1, h / 2], [0, 1]])
    c = np.exp(-gamma * h)
    O = np.diag([1, c])
    noise = np.array([[0.0], [np.sqrt((1 - c * c) / beta)]])
    M = B @ A @ O @ A @ B
    N = B @ A @ noise
    return M, N


@pytest.mark.parametrize("h", [0.05, 0.3, 0.8])
def test_baoab_harmonic_stationary_covariance(h):
    M, N = baoab_matrices(h, 1.0, 1.0)
    C = linalg.solve_discrete_lyapunov(M, N @ N.T)
    _, C2 = linear_scheme_stationary_covariance(Harmonic(), BAOAB(h))
    np.testing.assert_allclose(C2, C, atol=1e-12)
    # known closed form for BAOAB on a harmonic oscillator
    assert C[0, 0] == pytest.approx(1.0, rel=1e-10)
    assert C[1, 1] == pytest.approx(1 - h * h / 4, rel=1e-10)


def test_baoab_harmonic_sampled_covariance():
    h = 0.5
    m, sc = Harmonic(), BAOAB(h)
    M, N = baoab_matrices(h, 1.0, 1.0)
    C = linalg.solve_discrete_lyapunov(M, N @ N.T)
    q, p = equilibrium_initial(m, sc, 0, np.arange(2000))
    res = simulate(m, sc, make_state(m, sc, q, p), 400, {"q": lambda s: s.q[:, 0], "p": lambda s: s.p[:, 0]},
                   0, np.arange(2000), burn_in=100, stride=20)
    qs, ps = res.series["q"].values.ravel(), res.series["p"].values.ravel()
    emp = np.cov(np.stack([qs, ps]))
    # 42000 weakly correlated samples: a 5% band is over 5 standard errors
    np.testing.assert_allclose(emp, C, atol=0.05 * np.max(np.diag(C)))


def test_em_identity_and_ou_variance():
    m, sc = FreeParticle(), EulerMaruyama(0.1)
    st = make_state(m, sc, [[0.7]])
    assert euler_maruyama_step(st, m, sc, np.zeros((1, 1))).q[0, 0] == 0.7
    for dt in (0.01, 0.1, 0.5):
        _, C = linear_scheme_stationary_covariance(Harmonic(), EulerMaruyama(dt))
        assert C[0, 0] == pytest.approx(2 * dt / (1 - (1 - dt) ** 2), rel=1e-12)


def test_em_first_order_bias_in_potential_average():
    # E[V] = Var/2 = 1/(2 - dt): the bias dt/(2(2-dt)) is first order
    dts = np.array([0.02, 0.04, 0.08])
    bias = [0.5 * linear_scheme_stationary_covariance(Harmonic(), EulerMaruyama(h))[1][0, 0] - 0.5 for h in dts]
    slope = np.polyfit(np.log(dts), np.log(bias), 1)[0]
    assert 0.95 < slope < 1.05


def test_momentum_marginal_ks():
    m, sc = EntropicSwitch(), BAOAB(0.01)
    K = 2000
    ids = np.arange(K)
    q, p = equilibrium_initial(m, sc, 1, ids)
    res = simulate(m, sc, make_state(m, sc, q, p), 15000, {"px": lambda s: s.p[:, 0]}, 1, ids, burn_in=0,
                   stride=300, record_initial=False)
    x = res.series["px"].values.ravel()
    assert x.size == 100_000
    d = stats.kstest(x, "norm").statistic
    assert d < 1.63 / np.sqrt(x.size)  # 1% critical value


def test_time_average_variance_scales_inverse_time():
    m, sc = Harmonic(), EulerMaruyama(0.05)
    K = 200
    ids = np.arange(K)
    vt = []
    for T in (1e2, 1e3, 1e4):
        n = int(T / sc.dt)
        e = Experiment(m, sc, response=_Q(), n_steps=n, burn_in=0, seed=int(T))
        avg = gather(map_blocks(running_average_block, e, K), "avg")
        vt.append(avg.var(ddof=1) * T)
    assert max(vt) / min(vt) < 1.5


class _Q:
    def __call__(self, model, q, p):
        return q[..., 0]


def test_verlet_rotor_energy_conservation():
    m = AtomChain(Rotor(), 8)
    rng = np.random.default_rng(2)
    q, p = rng.standard_normal((1, 8)), rng.standard_normal((1, 8))
    sc = ChainSplitting(1e-3, 0.0, 0.0)
    st = make_state(m, sc, q, p)
    H = lambda s: m.potential(s.q) + 0.5 * np.sum(s.p**2, axis=-1)
    res = simulate(m, sc, st, 10_000, {"H": H}, 0, [0], burn_in=0, stride=100)
    assert np.max(np.abs(res.series["H"].values - H(st))) < 1e-4
    v = simulate(m, Verlet(1e-3), st, 10_000, {"H": H}, 0, [0], burn_in=0, stride=100)
    np.testing.assert_allclose(v.series["H"].values, res.series["H"].values, rtol=0, atol=1e-12)


def test_chain_equipartition():
    T = 0.5
    m, sc = AtomChain(Rotor(), 6), ChainSplitting(0.05, 1.0, 1.0, T, T)
    K = 256
    ids = np.arange(K)
    q, p = equilibrium_initial(m, sc, 3, ids, 1 / T)
    res = simulate(m, sc, make_state(m, sc, q, p), 8000, {"p2": lambda s: s.p**2}, 3, ids, burn_in=2000, stride=10)
    per = res.series["p2"].values.mean(axis=0)  # [K, n]
    mean, se = per.mean(axis=0), per.std(axis=0, ddof=1) / np.sqrt(K)
    assert np.all(np.abs(mean[1:-1] - T) < 3 * se[1:-1] + 0.01)


def harmonic_chain_current(n, TL, TR, gL=1.0, gR=1.0):
    """Mean bond current from the continuous Lyapunov equation in (bond, momentum) coordinates."""
    nb = n - 1
    N = nb + n
    A = np.zeros((N, N))
    for b in range(nb):
        A[b, nb + b + 1] += 1
        A[b, nb + b] -= 1
    for i in range(n):
        if i < nb:
            A[nb + i, i] += 1
        if i > 0:
            A[nb + i, i - 1] -= 1
    A[nb, nb] -= gL
    A[N - 1, N - 1] -= gR
    D = np.zeros((N, N))
    D[nb, nb], D[N - 1, N - 1] = 2 * gL * TL, 2 * gR * TR
    S = linalg.solve_continuous_lyapunov(A, -D)
    return np.array([-0.5 * (S[nb + b, b] + S[nb + b + 1, b]) for b in range(nb)])


def test_harmonic_chain_current_small():
    n, TL, TR = 6, 1.3, 0.7
    j = harmonic_chain_current(n, TL, TR)
    m, sc = AtomChain(HarmonicBond(), n), ChainSplitting(0.02, 1, 1, TL, TR)
    e = Experiment(m, sc, response=BondCurrents(), n_steps=25_000, burn_in=5000, seed=4)
    avg = gather(map_blocks(running_average_block, e, 128), "avg", axis=0).mean(axis=1)
    assert abs(avg.mean() - j[0]) < 3 * avg.std(ddof=1) / np.sqrt(avg.size)


def test_simulate_zero_steps_and_determinism():
    m, sc = Harmonic(), BAOAB(0.1)
    st = make_state(m, sc, [[0.3]], [[0.1]])
    r = simulate(m, sc, st, 0, {"q": lambda s: s.q[:, 0]}, 0, [0], burn_in=0, record_initial=False)
    assert r.series["q"].values.size == 0
    np.testing.assert_array_equal(r.final.q, st.q)
    a = simulate(m, sc, st, 50, {"q": lambda s: s.q[:, 0]}, 9, [0])
    b = simulate(m, sc, st, 50, {"q": lambda s: s.q[:, 0]}, 9, [0])
    assert np.array_equal(a.series["q"].values, b.series["q"].values)


def test_free_particle_constant_force_velocity():
    m, sc, eta = FreeParticle(), BAOAB(0.05), 0.3
    K = 256
    ids = np.arange(K)
    q, p = equilibrium_initial(m, sc, 5, ids)
    drift = lambda q: np.full_like(q, eta)
    res = simulate(m, sc, make_state(m, sc, q, p, drift), 4000, {"v": lambda s: s.p[:, 0]}, 5, ids, drift=drift)
    avg = res.series["v"].values.mean(axis=0)
    assert abs(avg.mean() - eta) < 3 * avg.std(ddof=1) / np.sqrt(K)


def test_failure_flagged_not_dropped():
    m = Harmonic(stiffness=1e6)
    sc = BAOAB(0.1)
    res = simulate(m, sc, make_state(m, sc, [[1.0], [0.0]], [[0.0], [0.0]]), 200,
                   {"q": lambda s: s.q[:, 0]}, 0, [0, 1], burn_in=0)
    assert res.failed.all()  # unstable step: both diverge; flagged, series NaN
    assert np.isnan(res.series["q"].values[-1]).all()


def test_scheme_contracts():
    for bad in (lambda: BAOAB(0.0), lambda: BAOAB(0.1, gamma=-1), lambda: EulerMaruyama(0.1, beta=0),
                lambda: ChainSplitting(0.1, gamma_L=-1)):
        with pytest.raises(ContractError):
            bad()
    with pytest.raises(ContractError):
        make_state(Harmonic(dim=2), BAOAB(0.1), [[0.0]])
    with pytest.raises(ContractError):
        simulate(Harmonic(), BAOAB(0.1), make_state(Harmonic(), BAOAB(0.1), [[0.0]], [[0.0]]), 5, {}, 0, [0], stride=0)
