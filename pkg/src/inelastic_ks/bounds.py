"""Numerical certificates for the Gaussian time-integral bound and the gain envelope.

Both checks compare a quadrature of the left-hand side against a closed-form
right-hand side and report every violation instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .collision import CollisionOperator, _interpolated_tables, angular_quadrature, difference_lattice
from .errors import ConfigurationError
from .grid import MaxwellianEnvelope, PhaseGrid, maxwellian_norm
from .kinematics import post_collide

# Simpson with 1e4 steps is good to ~1e-7 relative on the narrowest integrands
# (fast pairs, large alpha); a violation must exceed this before it counts.
_BOUND_RTOL = 1e-6


@dataclass
class TimeBoundReport:
    lhs: np.ndarray
    rhs: np.ndarray
    models: list = field(default_factory=list)

    @property
    def ratio(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.rhs > 0, self.lhs / self.rhs, 0.0)

    @property
    def violations(self):
        return int(np.count_nonzero(self.lhs > self.rhs * (1.0 + _BOUND_RTOL)))

    @property
    def passed(self):
        return self.violations == 0

    def lines(self):
        return [
            f"samples {self.lhs.size}",
            f"max LHS/RHS {float(self.ratio.max()) if self.lhs.size else 0.0!r}",
            f"violations {self.violations}",
        ]


def simpson(y, h):
    """Composite Simpson along the last axis; needs an even number of intervals."""
    m = y.shape[-1] - 1
    if m < 2 or m % 2:
        raise ConfigurationError("Simpson's rule needs an even number of intervals")
    return h / 3.0 * (y[..., 0] + y[..., -1] + 4.0 * y[..., 1:-1:2].sum(axis=-1) + 2.0 * y[..., 2:-1:2].sum(axis=-1))


def time_gaussian_lhs(x, xi, xi_star, pre_xi, pre_xi_star, alpha, t, steps=10_000):
    """int_0^t exp(-alpha|x + tau(xi - 'xi)|^2) exp(-alpha|x + tau(xi - 'xi*)|^2) dtau, per sample."""
    x = np.atleast_2d(x)
    b1 = np.atleast_2d(xi) - np.atleast_2d(pre_xi)
    b2 = np.atleast_2d(xi) - np.atleast_2d(pre_xi_star)
    alpha = np.broadcast_to(np.asarray(alpha, float), x.shape[:1])
    t = np.broadcast_to(np.asarray(t, float), x.shape[:1])
    out = np.empty(x.shape[0])
    s = np.linspace(0.0, 1.0, steps + 1)
    for i in range(x.shape[0]):
        tau = t[i] * s
        p1 = x[i] + tau[:, None] * b1[i]
        p2 = x[i] + tau[:, None] * b2[i]
        y = np.exp(-alpha[i] * (np.sum(p1 * p1, axis=1) + np.sum(p2 * p2, axis=1)))
        out[i] = simpson(y, t[i] / steps)
    return out


def time_gaussian_closed_form(x, xi, xi_star, pre_xi, pre_xi_star, alpha, t):
    """The same integral through erf; the exponent is quadratic in tau."""
    x = np.atleast_2d(x)
    b1 = np.atleast_2d(xi) - np.atleast_2d(pre_xi)
    b2 = np.atleast_2d(xi) - np.atleast_2d(pre_xi_star)
    alpha = np.broadcast_to(np.asarray(alpha, float), x.shape[:1])
    t = np.broadcast_to(np.asarray(t, float), x.shape[:1])
    A = np.sum(b1 * b1 + b2 * b2, axis=1)
    B = np.sum(x * (b1 + b2), axis=1)
    C = 2.0 * np.sum(x * x, axis=1)
    fn = _kernels._gauss_time_integral
    return np.array([fn(alpha[i] * A[i], alpha[i] * B[i], alpha[i] * C[i], t[i]) for i in range(A.size)])


def time_gaussian_rhs(x, xi, xi_star, alpha):
    """sqrt(pi) / (alpha^(1/2) |u|) exp(-alpha |x|^2), u = xi - xi*."""
    x = np.atleast_2d(x)
    u = np.linalg.norm(np.atleast_2d(xi) - np.atleast_2d(xi_star), axis=1)
    alpha = np.asarray(alpha, float)
    with np.errstate(divide="ignore"):
        return math.sqrt(math.pi) / (np.sqrt(alpha) * u) * np.exp(-alpha * np.sum(x * x, axis=1))


def random_time_samples(models, n_samples=1000, n=None, rng=None):
    """Random (x, xi, xi*, n_hat, alpha, t) tuples split evenly across ``models``.

    Pre-collision pairs are drawn and mapped forward, so every post pair is
    in the range of the collision map.  Dimension alternates 2/3 unless fixed.
    """
    rng = np.random.default_rng(rng)
    models = list(models)
    out = []
    for i in range(n_samples):
        model = models[i % len(models)]
        dim = n if n is not None else (2, 3)[(i // len(models)) % 2]
        x = rng.normal(scale=1.5, size=dim)
        pre = rng.normal(scale=2.0, size=dim)
        pre_star = rng.normal(scale=2.0, size=dim)
        nh = rng.normal(size=dim)
        nh /= np.linalg.norm(nh)
        alpha = float(rng.uniform(0.1, 4.0))
        t = float(rng.uniform(0.1, 10.0))
        post = post_collide(pre, pre_star, nh, model)
        out.append((model, x, post.xi, post.xi_star, pre, pre_star, nh, alpha, t))
    return out


def verify_time_gaussian_bound(samples, steps=10_000):
    """Check the Gaussian time-integral bound on ``samples`` from :func:`random_time_samples`.

    Each sample is ``(model, x, xi, xi_star, pre_xi, pre_xi_star, n_hat, alpha, t)``
    with ``(xi, xi_star)`` the post-collision pair of ``(pre_xi, pre_xi_star)``.
    """
    lhs = np.empty(len(samples))
    rhs = np.empty(len(samples))
    names = []
    for i, (model, x, xi, xs, p, ps, _nh, alpha, t) in enumerate(samples):
        lhs[i] = time_gaussian_lhs(x, xi, xs, p, ps, alpha, t, steps)[0]
        rhs[i] = time_gaussian_rhs(x, xi, xs, alpha)[0]
        names.append(model.to_dict()["kind"])
    return TimeBoundReport(lhs, rhs, names)


# -- gain envelope ----------------------------------------------------------------------

@dataclass
class GainEnvelopeReport:
    integral: np.ndarray  # (NX, NV) time integral of Q+^#
    bound: np.ndarray  # k exp(-alpha|x|^2 - beta|xi|^2) ||f||^2
    k: float
    norm: float
    slack: float = 1.1
    method: str = "analytic"

    @property
    def ratio(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.bound > 0, self.integral / self.bound, np.where(self.integral > 0, np.inf, 0.0))
        return r

    @property
    def max_ratio(self):
        return float(self.ratio.max()) if self.integral.size else 0.0

    @property
    def violations(self):
        return int(np.count_nonzero(self.integral > self.slack * self.bound))

    @property
    def passed(self):
        return self.violations == 0

    def lines(self):
        return [
            f"method {self.method}",
            f"k {self.k!r}",
            f"norm {self.norm!r}",
            f"max integral/bound {self.max_ratio!r}",
            f"violations (slack {self.slack}) {self.violations}",
        ]


def verify_gain_envelope(f_sharp, grid: PhaseGrid, alpha, beta, T, model, k, quad=None, op=None, Nt=32, slack=1.1):
    """Time integral of Q+^#(f, f) over [0, T] against k exp(-alpha|x|^2-beta|xi|^2) ||f||^2.

    ``f_sharp`` is either a :class:`MaxwellianEnvelope`, taken constant in
    time and integrated exactly in tau and in the pre-collision evaluation,
    or an array on ``grid`` pushed through the discrete operator ``op`` with
    trapezoid time steps.
    """
    M = np.exp(-alpha * grid.x_sq[:, None] - beta * grid.v_sq[None, :])
    if isinstance(f_sharp, MaxwellianEnvelope):
        if f_sharp.alpha < alpha or f_sharp.beta < beta:
            raise ConfigurationError("envelope decays slower than the weight; its norm is infinite")
        norm = f_sharp.c
        lat = grid.velocity
        quad = quad or angular_quadrature(grid.n)
        d = difference_lattice(lat.Nv, lat.n)
        u = lat.dv * d
        nodes, w = quad.hemisphere()
        tab = _interpolated_tables(model, u, u @ nodes.T, nodes, w, lat)
        out = np.zeros((grid.NX, grid.NV))
        _kernels.envelope_gain_integral(
            np.ascontiguousarray(grid.x_points), np.ascontiguousarray(lat.points), lat.Nv, lat.n,
            tab["shift"], tab["W"], float(f_sharp.alpha), float(f_sharp.beta), float(T), out,
        )
        out *= f_sharp.c**2
        method = "analytic"
    else:
        from .solver import SharpCollision, TimeMesh, cumulative_trapezoid

        values = grid.flat(f_sharp)
        norm = maxwellian_norm(values, grid, alpha, beta)
        if op is None:
            op = CollisionOperator(grid, model, quad)
        mesh = TimeMesh(T, Nt)
        F = np.broadcast_to(values, (Nt + 1,) + values.shape)
        gains = SharpCollision(grid, op).gain(F, mesh)
        out = cumulative_trapezoid(np.abs(gains), mesh.dt)[-1]
        method = "discrete"
    return GainEnvelopeReport(out, k * M * norm**2, k, norm, slack, method)
