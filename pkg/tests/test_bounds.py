import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inelastic_ks.bounds import (
    random_time_samples,
    simpson,
    time_gaussian_closed_form,
    time_gaussian_lhs,
    time_gaussian_rhs,
    verify_gain_envelope,
    verify_time_gaussian_bound,
)
from inelastic_ks.errors import ConfigurationError
from inelastic_ks.grid import MaxwellianEnvelope, PhaseGrid
from inelastic_ks.kinematics import pre_collide
from inelastic_ks.restitution import Elastic
from inelastic_ks.solver import envelope_constant

from conftest import MODELS


def test_simpson_exact_on_cubics():
    x = np.linspace(0, 2, 11)
    assert simpson(x**3, 0.2) == pytest.approx(4.0, abs=1e-13)
    with pytest.raises(ConfigurationError):
        simpson(x[:-1], 0.2)


def test_head_on_elastic_sample():
    # elastic head-on: the pre-collision pair equals the swapped post pair
    x = np.array([0.3, -0.2])
    xi, xs = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
    pre = pre_collide(xi, xs, np.array([1.0, 0.0]), Elastic())
    lhs = time_gaussian_lhs(x, xi, xs, pre.xi, pre.xi_star, 1.0, 10.0)[0]
    rhs = time_gaussian_rhs(x, xi, xs, 1.0)[0]
    assert rhs == pytest.approx(math.sqrt(math.pi) * math.exp(-0.13) / 2.0)
    assert lhs <= rhs


def test_quadrature_matches_erf_form(rng):
    s = random_time_samples([MODELS["visco0.5"]], 50, rng=rng)
    for _m, x, xi, xs, p, ps, _nh, a, t in s:
        q = time_gaussian_lhs(x, xi, xs, p, ps, a, t)[0]
        c = time_gaussian_closed_form(x, xi, xs, p, ps, a, t)[0]
        assert q == pytest.approx(c, rel=1e-6, abs=1e-300)


def test_fast_pairs_pass_with_margin():
    x = np.zeros(2)
    xi, xs = np.array([20.0, 0.0]), np.array([-20.0, 0.0])
    lhs = time_gaussian_lhs(x, xi, xs, xs, xi, 1.0, 5.0)[0]
    rhs = time_gaussian_rhs(x, xi, xs, 1.0)[0]
    assert lhs < 0.6 * rhs


def test_sweep_has_no_violations():
    rep = verify_time_gaussian_bound(random_time_samples(list(MODELS.values()), 200, rng=7), steps=2000)
    assert rep.passed
    assert rep.ratio.max() < 1.0


@given(seed=st.integers(0, 2**32 - 1))
def test_bound_holds_on_random_samples(seed):
    s = random_time_samples(list(MODELS.values()), 4, rng=seed)
    for _m, x, xi, xs, p, ps, _nh, a, t in s:
        lhs = time_gaussian_closed_form(x, xi, xs, p, ps, a, t)[0]
        assert lhs <= time_gaussian_rhs(x, xi, xs, a)[0] * (1 + 1e-12)


# -- gain envelope ----------------------------------------------------------------------

GRID = PhaseGrid(2, 4.0, 4.0, 8, 8)


@pytest.fixture(scope="module")
def k():
    return envelope_constant(1.0, 1.0, Elastic(), 2)


def test_envelope_holds_on_small_grid(k):
    rep = verify_gain_envelope(MaxwellianEnvelope(1.0, 1.0, 0.1), GRID, 1.0, 1.0, 1.0, Elastic(), k)
    assert rep.passed
    assert 0 < rep.max_ratio < 1.0


def test_envelope_bilinearity(k):
    a = verify_gain_envelope(MaxwellianEnvelope(1.0, 1.0, 0.1), GRID, 1.0, 1.0, 1.0, Elastic(), k)
    b = verify_gain_envelope(MaxwellianEnvelope(1.0, 1.0, 0.2), GRID, 1.0, 1.0, 1.0, Elastic(), k)
    assert np.allclose(b.integral, 4 * a.integral, rtol=1e-13)
    assert np.allclose(b.bound, 4 * a.bound, rtol=1e-13)


def test_envelope_of_zero(k):
    rep = verify_gain_envelope(MaxwellianEnvelope(1.0, 1.0, 0.0), GRID, 1.0, 1.0, 1.0, Elastic(), k)
    assert np.all(rep.integral == 0)
    assert rep.passed


def test_envelope_refuses_slow_decay(k):
    with pytest.raises(ConfigurationError):
        verify_gain_envelope(MaxwellianEnvelope(0.5, 1.0, 0.1), GRID, 1.0, 1.0, 1.0, Elastic(), k)


def test_discrete_path_runs(k):
    f = MaxwellianEnvelope(1.0, 1.0, 0.1).sample(GRID)
    rep = verify_gain_envelope(f, GRID, 1.0, 1.0, 1.0, Elastic(), k, Nt=4)
    assert rep.method == "discrete"
    assert rep.norm == pytest.approx(0.1)
    assert np.all(rep.integral >= 0)
