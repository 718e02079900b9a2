"""Binary collision maps for impact-speed dependent restitution.

All functions broadcast over leading axes; the last axis holds the n
velocity components.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConsistencyError, DomainError


class VelocityPair(NamedTuple):
    xi: np.ndarray
    xi_star: np.ndarray


def _prepare(xi, xi_star, n_hat):
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    n_hat = np.asarray(n_hat, dtype=float)
    if xi.shape[-1] not in (2, 3) or xi.shape[-1] != xi_star.shape[-1] or xi.shape[-1] != n_hat.shape[-1]:
        raise DomainError("velocities and impact direction must share dimension 2 or 3")
    norm = np.linalg.norm(n_hat, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-12):
        raise DomainError("impact direction must be a unit vector")
    return xi, xi_star, n_hat


def impact_component(xi, xi_star, n_hat):
    """u.n with u = xi - xi_star."""
    return np.einsum("...i,...i->...", np.asarray(xi) - np.asarray(xi_star), np.asarray(n_hat))


def post_collide(xi, xi_star, n_hat, model):
    """Velocities after impact: xi' = xi - (1+e)/2 (u.n) n, xi*' = xi* + (1+e)/2 (u.n) n."""
    xi, xi_star, n_hat = _prepare(xi, xi_star, n_hat)
    un = impact_component(xi, xi_star, n_hat)
    e = model.e(np.abs(un))
    kick = (0.5 * (1.0 + e) * un)[..., None] * n_hat
    return VelocityPair(xi - kick, xi_star + kick)


def pre_collide(xi, xi_star, n_hat, model, errors="raise"):
    """Velocities before impact that post_collide maps onto (xi, xi_star).

    Uses 'w = theta^-1(|u.n|) and 'u.n = -sgn(u.n) 'w, with sgn(0) = 0 so that
    grazing pairs are fixed points.
    """
    xi, xi_star, n_hat = _prepare(xi, xi_star, n_hat)
    un = impact_component(xi, xi_star, n_hat)
    w = model.theta_inv(np.abs(un), errors=errors)
    e_pre = model.e(np.nan_to_num(w))
    un_pre = -np.sign(un) * w
    kick = (0.5 * (1.0 + e_pre) * un_pre)[..., None] * n_hat
    return VelocityPair(xi + kick, xi_star - kick)


def energy_deficit(xi, xi_star, n_hat, model, check=True):
    """|xi'|^2 + |xi*'|^2 - |xi|^2 - |xi*|^2, compared against -(1-e^2)/2 (u.n)^2."""
    xi, xi_star, n_hat = _prepare(xi, xi_star, n_hat)
    post = post_collide(xi, xi_star, n_hat, model)
    sq = lambda v: np.einsum("...i,...i->...", v, v)  # noqa: E731
    delta = sq(post.xi) + sq(post.xi_star) - sq(xi) - sq(xi_star)
    if check:
        un = impact_component(xi, xi_star, n_hat)
        e = model.e(np.abs(un))
        closed = -0.5 * (1.0 - e * e) * un * un
        scale = np.maximum(1.0, sq(xi) + sq(xi_star))
        if np.any(np.abs(delta - closed) > 1e-10 * scale):
            raise ConsistencyError("energy deficit disagrees with its closed form")
    return delta
