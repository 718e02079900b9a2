import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inelastic_ks.collision import (
    CollisionOperator,
    angular_quadrature,
    dimensional_constant,
    sphere_check,
)
from inelastic_ks.errors import ConfigurationError
from inelastic_ks.grid import VelocityLattice
from inelastic_ks.restitution import Constant, Elastic, MonotoneDecreasing, Viscoelastic, sphere_area

LAT = VelocityLattice(2, 12, 5.0)


@pytest.fixture(scope="module")
def ops():
    return {
        "elastic": CollisionOperator(LAT, Elastic()),
        "constant": CollisionOperator(LAT, Constant(0.5)),
        "interp": CollisionOperator(LAT, Elastic(), scheme="interpolated"),
    }


def smooth(lat, shift=(0.5, 0.0), beta=1.0):
    return np.exp(-beta * np.sum((lat.points - np.asarray(shift)) ** 2, axis=1))


def test_dimensional_constants():
    assert dimensional_constant(3) == 2 * math.pi
    assert dimensional_constant(2) == 4.0
    with pytest.raises(ConfigurationError):
        dimensional_constant(4)


def test_sphere_quadrature_reproduces_constant_3d():
    assert abs(sphere_check(3) - 2 * math.pi) < 1e-8


@pytest.mark.parametrize("n", [2, 3])
def test_angular_weights_sum_to_sphere_area(n):
    q = angular_quadrature(n)
    assert np.all(q.weights > 0)
    assert q.weights.sum() == pytest.approx(sphere_area(n - 1), abs=1e-10)
    assert np.allclose(np.linalg.norm(q.nodes, axis=1), 1.0)


def test_hemisphere_keeps_half_the_nodes_with_double_weight():
    for n in (2, 3):
        q = angular_quadrature(n)
        nodes, w = q.hemisphere()
        assert len(w) == len(q.weights) // 2
        assert w.sum() == pytest.approx(q.weights.sum())


@pytest.mark.parametrize("bad", [3, 2.5])
def test_odd_circle_rule_rejected(bad):
    with pytest.raises((ConfigurationError, ValueError)):
        angular_quadrature(2, bad)


def test_unknown_scheme_rejected():
    with pytest.raises(ConfigurationError):
        CollisionOperator(LAT, Elastic(), scheme="spectral")


# -- loss ------------------------------------------------------------------------------

def test_loss_rate_of_zero(ops):
    assert np.all(ops["elastic"].loss_rate(np.zeros(LAT.NV)) == 0)


def test_loss_rate_point_mass(ops):
    g = np.zeros(LAT.NV)
    j = 40
    g[j] = 3.0
    R = ops["elastic"].loss_rate(g)
    want = 4.0 * 3.0 * LAT.cell_volume * np.linalg.norm(LAT.points - LAT.points[j], axis=1)
    assert np.allclose(R, want, rtol=1e-13)


def test_loss_rate_maxwellian_at_origin():
    # C_2 int exp(-|v|^2)|v| dv = 4 * 2 pi * sqrt(pi)/4 = 2 pi^(3/2)
    lat = VelocityLattice(2, 64, 6.0)
    op = CollisionOperator(lat, Elastic(), angular_quadrature(2, 8))
    g = np.exp(-lat.sq)
    R = lat.cell_volume * 4.0 * np.sum(g * np.sqrt(lat.sq))
    assert R == pytest.approx(2 * math.pi**1.5, rel=1e-3)
    # the operator evaluates exactly this sum at the cell nearest the origin
    near = int(np.argmin(lat.sq))
    assert op.loss_rate(g)[near] == pytest.approx(
        4.0 * lat.cell_volume * np.sum(g * np.linalg.norm(lat.points - lat.points[near], axis=1))
    )


def test_loss_symmetry_p3(ops):
    f = smooth(LAT)
    g = smooth(LAT, (-0.3, 0.2), 2.0)
    op = ops["constant"]
    assert abs(op.loss(f, g).sum() - op.loss(g, f).sum()) <= 1e-10 * op.loss(f, g).sum()


# -- gain ------------------------------------------------------------------------------

@pytest.mark.parametrize("key", ["elastic", "constant", "interp"])
def test_gain_zero_and_bilinear(ops, key):
    op = ops[key]
    f = smooth(LAT)
    g = smooth(LAT, (-0.3, 0.2), 2.0)
    assert np.all(op.gain(np.zeros(LAT.NV)) == 0)
    base = op.gain(f, g)
    assert np.allclose(op.gain(2.0 * f, 3.0 * g), 6.0 * base, rtol=1e-13, atol=0)
    assert np.allclose(op.gain(f, g), op.gain(g, f), rtol=1e-13, atol=0)
    assert np.all(base >= 0)


def test_tensor_and_stream_agree():
    f = np.stack([smooth(LAT), smooth(LAT, (0.0, 1.0))])
    for scheme in ("conservative", "interpolated"):
        a = CollisionOperator(LAT, Constant(0.7), scheme=scheme, mode="tensor").gain(f)
        b = CollisionOperator(LAT, Constant(0.7), scheme=scheme, mode="stream").gain(f)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("model", [Elastic(), Constant(0.5), MonotoneDecreasing(1.0, 1.0), Viscoelastic(0.5)])
def test_conservative_scheme_moments(model):
    op = CollisionOperator(LAT, model)
    f = smooth(LAT)
    Qp, Qm = op.gain(f), op.loss(f)
    Q = Qp - Qm
    ref = Qm.sum()
    assert abs(Q.sum()) <= 1e-12 * ref
    assert np.all(np.abs(Q @ LAT.points) <= 1e-12 * (Qm @ np.sqrt(LAT.sq)))
    energy = Q @ LAT.sq
    assert energy <= 1e-12 * (Qm @ LAT.sq)
    if isinstance(model, Elastic):
        assert abs(energy) <= 1e-12 * (Qm @ LAT.sq)


def test_two_cell_pair_conserves_mass_and_momentum(ops):
    f = np.zeros(LAT.NV)
    i = int(np.argmin(np.sum((LAT.points - [1.0, 0.0]) ** 2, axis=1)))
    j = int(np.argmin(np.sum((LAT.points + [1.0, 0.0]) ** 2, axis=1)))
    f[i] = f[j] = 1.0
    op = ops["constant"]
    Qp = op.gain(f)
    Qm = op.loss(f)
    assert Qp.sum() == pytest.approx(Qm.sum(), rel=1e-13)
    # loss mass of the pair is 2 f_i f_j C_2 |u| dv^2
    u = np.linalg.norm(LAT.points[i] - LAT.points[j])
    assert Qm.sum() == pytest.approx(2 * 4.0 * u * LAT.cell_volume, rel=1e-13)
    assert np.allclose(Qp @ LAT.points, Qm @ LAT.points, atol=1e-12)


def test_interpolated_scheme_counts_skips():
    op = CollisionOperator(VelocityLattice(2, 8, 5.0), MonotoneDecreasing(1.0, 1.0), scheme="interpolated")
    # theta is bounded by 1/a = 1, so fast impacts have no pre-image
    assert op.stats.skipped_fraction > 0
    assert not op.stats.valid
    assert CollisionOperator(LAT, Elastic(), scheme="interpolated").stats.skipped_fraction == 0


vals = arrays(np.float64, LAT.NV, elements=st.floats(0.0, 1.0))


@given(f=vals, extra=vals)
def test_gain_is_monotone(ops, f, extra):
    g = f + extra
    for key in ("constant", "interp"):
        op = ops[key]
        assert np.all(op.gain(f) <= op.gain(g) * (1 + 1e-12) + 1e-300)


@given(f=vals)
def test_loss_rate_nonnegative_and_monotone(ops, f):
    op = ops["elastic"]
    R = op.loss_rate(f)
    assert np.all(R >= 0)
    assert np.all(op.loss_rate(f + 0.1) >= R)
