import numpy as np
import pytest
from scipy import integrate

from transport.integrators import BAOAB
from transport.invariant import PhaseGrid, baoab_stationary_average, gibbs_average
from transport.models import EntropicSwitch, Harmonic


def test_gibbs_average_matches_adaptive_quadrature():
    m = EntropicSwitch()
    V = lambda x, y: float(m.potential(np.array([x, y])))
    w = lambda y, x: np.exp(-V(x, y))
    Z = integrate.dblquad(w, -4.5, 4.5, -4.0, 5.0, epsabs=1e-11)[0]
    num = integrate.dblquad(lambda y, x: V(x, y) * w(y, x), -4.5, 4.5, -4.0, 5.0, epsabs=1e-11)[0]
    assert gibbs_average(m, m.potential) == pytest.approx(num / Z, abs=1e-8)


def test_baoab_harmonic_positions_exact():
    # BAOAB samples the position marginal of a harmonic potential exactly at any step
    m = Harmonic(dim=2)
    grid = PhaseGrid(qx=(-5.5, 5.5), qy=(-5.5, 5.5), nq=48)
    r = baoab_stationary_average(m, BAOAB(0.3), lambda q: 0.5 * np.sum(q**2, axis=-1), grid=grid, horizon=12)
    assert r.average == pytest.approx(1.0, abs=2e-3)


def test_baoab_bias_positive_and_shrinking():
    m = EntropicSwitch()
    ref = gibbs_average(m, m.potential)
    b = [baoab_stationary_average(m, BAOAB(h), m.potential, horizon=10).average - ref for h in (0.2, 0.1)]
    assert abs(b[1]) < abs(b[0])
    assert 2.5 < abs(b[0] / b[1]) < 6
