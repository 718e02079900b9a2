"""Discrete hard-sphere collision operator on a uniform velocity lattice.

Two gain discretisations share one evaluation path (a packed pair tensor or a
streaming numba loop):

``"conservative"``
    Post-collision pairs are split between two lattice node pairs with the
    same centre index, weighted so that the pair energy is matched.  Mass and
    momentum are conserved per collision, energy too in the elastic case, and
    the gain and loss masses agree exactly.
``"interpolated"``
    The strong form: pre-collision velocities are found with the inverse
    collision map and sampled by multilinear interpolation, weighted by
    1/(e J).  Accurate to interpolation order, not conservative.

Both gains are symmetrised in their two arguments; for Q+(f, f) that is the
usual operator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationError
from .grid import VelocityLattice, _mesh
from .restitution import sphere_area

SCHEMES = ("conservative", "interpolated")
_TENSOR_BYTES = 1_200_000_000
_CHUNK_BYTES = 64_000_000


def dimensional_constant(n):
    """C_n = 2/(n-1) |S^(n-2)|, the sphere average of |u.n| for unit u."""
    if n not in (2, 3):
        raise ConfigurationError(f"unsupported dimension {n}")
    return 2.0 / (n - 1) * sphere_area(n - 2)


@dataclass(frozen=True)
class AngularQuadrature:
    """Nodes on S^(n-1), weights summing to |S^(n-1)|, symmetric under n -> -n."""

    n: int
    nodes: np.ndarray
    weights: np.ndarray
    order: tuple = ()

    def hemisphere(self):
        """Half of the nodes with doubled weights; collisions are even in n."""
        keep = _upper_half(self.nodes)
        return self.nodes[keep], 2.0 * self.weights[keep]

    def integrate(self, values):
        return float(np.asarray(values) @ self.weights)


def _upper_half(nodes):
    # first nonzero component positive
    lead = np.where(np.abs(nodes[:, -1]) > 1e-14, nodes[:, -1], nodes[:, 0])
    return lead > 0


def angular_quadrature(n, n_ang=None):
    """Uniform circle rule (n = 2) or Gauss-Legendre in cos(polar) times uniform azimuth (n = 3).

    For n = 3, ``n_ang`` may be an int (azimuth count, polar count half of it)
    or a pair ``(n_polar, n_azimuth)``; the polar rule is split at the equator.
    """
    if n == 2:
        m = 64 if n_ang is None else int(n_ang)
        if m < 4 or m % 2:
            raise ConfigurationError("circle rule needs an even node count >= 4")
        phi = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return AngularQuadrature(2, nodes, np.full(m, 2.0 * math.pi / m), (m,))
    if n == 3:
        if n_ang is None:
            n_pol, n_az = 32, 64
        elif np.ndim(n_ang) == 0:
            n_az = int(n_ang)
            n_pol = max(2, n_az // 2)
        else:
            n_pol, n_az = (int(v) for v in n_ang)
        if n_pol < 2 or n_pol % 2 or n_az < 4 or n_az % 2:
            raise ConfigurationError("sphere rule needs even polar and azimuth counts")
        xg, wg = np.polynomial.legendre.leggauss(n_pol // 2)
        mu = np.concatenate([0.5 * (xg - 1.0), 0.5 * (xg + 1.0)])
        wmu = np.concatenate([0.5 * wg, 0.5 * wg])
        phi = 2.0 * math.pi * (np.arange(n_az) + 0.5) / n_az
        MU, PHI = np.meshgrid(mu, phi, indexing="ij")
        s = np.sqrt(1.0 - MU**2)
        nodes = np.stack([s * np.cos(PHI), s * np.sin(PHI), MU], axis=-1).reshape(-1, 3)
        weights = (wmu[:, None] * np.full(n_az, 2.0 * math.pi / n_az)[None, :]).ravel()
        return AngularQuadrature(3, nodes, weights, (n_pol, n_az))
    raise ConfigurationError(f"unsupported dimension {n}")


def sphere_check(n, quad=None, direction=None):
    """Quadrature value of the integral of |u.n| over the sphere for a unit u."""
    quad = quad or angular_quadrature(n)
    u = np.zeros(n)
    u[-1] = 1.0
    if direction is not None:
        u = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    return quad.integrate(np.abs(quad.nodes @ u))


def difference_lattice(N, n):
    """Index differences d in {-(N-1), ..., N-1}^n, flattened in C order."""
    return _mesh(np.arange(-(N - 1), N), n).astype(np.int64)


@dataclass
class StencilStats:
    scheme: str
    total_weight: float = 0.0
    dropped_weight: float = 0.0
    skipped_weight: float = 0.0
    box_weight: float = 0.0  # part of dropped_weight whose post-collision nodes leave the box

    @property
    def dropped_fraction(self):
        return self.dropped_weight / self.total_weight if self.total_weight else 0.0

    @property
    def skipped_fraction(self):
        return self.skipped_weight / self.total_weight if self.total_weight else 0.0

    @property
    def valid(self):
        """Runs with more than 0.1% skipped weight are not trusted."""
        return self.skipped_fraction <= 1e-3


class CollisionOperator:
    """Loss and gain operators on one velocity lattice for one restitution law.

    Fields are arrays whose last axis runs over the ``NV`` velocity cells.
    """

    def __init__(self, lattice, model, quad=None, scheme="conservative", mode="auto"):
        if isinstance(lattice, VelocityLattice):
            self.lattice = lattice
        else:
            self.lattice = lattice.velocity
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown gain scheme {scheme!r}; expected one of {SCHEMES}")
        if mode not in ("auto", "tensor", "stream"):
            raise ConfigurationError(f"unknown evaluation mode {mode!r}")
        self.model = model
        self.scheme = scheme
        self.n = self.lattice.n
        self.quad = quad or angular_quadrature(self.n)
        if self.quad.n != self.n:
            raise ConfigurationError("angular quadrature dimension does not match the lattice")
        self.Cn = dimensional_constant(self.n)
        NV = self.lattice.NV
        npairs = NV * (NV + 1) // 2
        if mode == "auto":
            mode = "tensor" if npairs * NV * 8 <= _TENSOR_BYTES else "stream"
        self.mode = mode
        pts = self.lattice.points
        self._dist = np.sqrt(np.maximum(0.0, self.lattice.sq[:, None] + self.lattice.sq[None, :] - 2.0 * pts @ pts.T))
        self._tables = self._build_tables()
        self._tensor = None
        self._iu = None
        self.stats = self._count()

    # -- loss ------------------------------------------------------------------

    def loss_rate(self, g):
        """R(g)(xi) = C_n sum_j g_j |xi - xi_j| dv^n."""
        g = np.asarray(g, dtype=float)
        return (self.Cn * self.lattice.cell_volume) * (g @ self._dist)

    def loss(self, f, g=None):
        g = f if g is None else g
        return np.asarray(f, dtype=float) * self.loss_rate(g)

    # -- gain ------------------------------------------------------------------

    def gain(self, f, g=None):
        """Symmetrised Q+(f, g); equals Q+(f, f) when ``g`` is omitted."""
        f = np.asarray(f, dtype=float)
        same = g is None
        g = f if same else np.asarray(g, dtype=float)
        if f.shape != g.shape or f.shape[-1] != self.lattice.NV:
            raise ConfigurationError("gain arguments must share shape (..., NV)")
        lead = f.shape[:-1]
        F = f.reshape(-1, self.lattice.NV)
        G = g.reshape(-1, self.lattice.NV)
        if self.mode == "tensor":
            out = self._gain_tensor(F, G, same)
        else:
            out = self._gain_stream(F, G)
        return out.reshape(lead + (self.lattice.NV,))

    def collide(self, f):
        return self.gain(f) - self.loss(f)

    @property
    def tensor(self):
        if self._tensor is None:
            self._assemble()
        return self._tensor

    def _gain_tensor(self, F, G, same):
        T = self.tensor
        i0, i1 = self._iu
        out = np.empty((F.shape[0], T.shape[1]))
        step = max(1, _CHUNK_BYTES // (8 * i0.size))
        for s in range(0, F.shape[0], step):
            Fs = F[s : s + step]
            if same:
                P = Fs[:, i0] * Fs[:, i1]
            else:
                Gs = G[s : s + step]
                P = 0.5 * (Fs[:, i0] * Gs[:, i1] + Fs[:, i1] * Gs[:, i0])
            out[s : s + step] = P @ T
        return out

    def _gain_stream(self, F, G):
        F = np.ascontiguousarray(F)
        G = np.ascontiguousarray(G)
        out = np.zeros_like(F)
        lat = self.lattice
        t = self._tables
        if self.scheme == "conservative":
            _kernels.conservative_stream(lat.Nv, lat.n, t["d2lo"], t["d2hi"], t["r"], t["K"], F, G, out)
        else:
            _kernels.interpolated_stream(lat.Nv, lat.n, lat.dv, t["shift"], t["W"], F, G, out)
        return out

    def _assemble(self):
        lat = self.lattice
        NV = lat.NV
        Tp = np.zeros((NV * (NV + 1) // 2, NV))
        t = self._tables
        if self.scheme == "conservative":
            _kernels.conservative_assemble(lat.Nv, lat.n, t["d2lo"], t["d2hi"], t["r"], t["K"], Tp)
        else:
            _kernels.interpolated_assemble(lat.Nv, lat.n, lat.dv, t["shift"], t["W"], Tp)
        self._tensor = Tp
        self._iu = np.triu_indices(NV)

    # -- tables ----------------------------------------------------------------

    def _build_tables(self):
        lat = self.lattice
        d = difference_lattice(lat.Nv, lat.n)
        u = lat.dv * d
        nodes, w = self.quad.hemisphere()
        un = u @ nodes.T  # (ND, M)
        if self.scheme == "conservative":
            return _conservative_tables(self.model, d, u, un, nodes, w, lat, self.Cn)
        return _interpolated_tables(self.model, u, un, nodes, w, lat)

    def _count(self):
        """Total, dropped and skipped event weight over all ordered velocity pairs."""
        lat = self.lattice
        d = difference_lattice(lat.Nv, lat.n)
        mult = np.prod(lat.Nv - np.abs(d), axis=1).astype(float)
        t = self._tables
        stats = StencilStats(self.scheme)
        if self.scheme == "conservative":
            K = t["K"]
            stats.total_weight = float(mult @ K.sum(axis=1))
            # events whose bracketing nodes leave the box depend on the pair, not
            # only on d, so they are counted by a dry run of the kernel
            unbracketed = float(mult @ (t["table_drop"] * K[:, None, :]).sum(axis=(1, 2)))
            stats.box_weight = 2.0 * _conservative_box_drops(lat, t)
            stats.dropped_weight = stats.box_weight + unbracketed
        else:
            stats.total_weight = float(mult @ (t["W"] + t["skipped"]).sum(axis=1))
            stats.skipped_weight = float(mult @ t["skipped"].sum(axis=1))
        return stats


def _conservative_box_drops(lat, t):
    NV = lat.NV
    F = np.zeros((1, NV))
    total, dropped = _kernels.conservative_stream(lat.Nv, lat.n, t["d2lo"], t["d2hi"], t["r"], t["K"], F, F, np.zeros((1, NV)))
    return dropped


def _lattice_offsets(n, lo, hi):
    return np.array(list(itertools.product(range(lo, hi + 1), repeat=n)), dtype=float)


def _bracket(target, rho2, parity, offsets):
    """Nearest half-lattice points inside and outside the sphere |delta|^2 = rho2."""
    half = 0.5 * parity
    base = np.floor(target - half) + half
    cand = base[..., None, :] + offsets  # (..., C, n)
    R = np.sum(cand * cand, axis=-1)
    dist = np.sum((cand - target[..., None, :]) ** 2, axis=-1)
    inside = R <= rho2[..., None]
    outside = R >= rho2[..., None]
    d_in = np.where(inside, dist, np.inf)
    d_out = np.where(outside, dist, np.inf)
    k_in = np.argmin(d_in, axis=-1)
    k_out = np.argmin(d_out, axis=-1)
    found = np.isfinite(np.take_along_axis(d_in, k_in[..., None], -1)[..., 0])
    lo = np.take_along_axis(cand, k_in[..., None, None], -2)[..., 0, :]
    hi = np.take_along_axis(cand, k_out[..., None, None], -2)[..., 0, :]
    return lo, hi, found


def _conservative_tables(model, d, u, un, nodes, w, lat, Cn):
    n = lat.n
    e = model.e(np.abs(un))
    kick = (0.5 * (1.0 + e) * un)[..., None] * nodes[None, :, :]  # (ND, M, n)
    target = (u[:, None, :] - 2.0 * kick) / (2.0 * lat.dv)  # post relative velocity / 2, index units
    rho2 = np.sum(target * target, axis=-1)

    base = w[None, :] * np.abs(un)
    norm = base.sum(axis=1, keepdims=True)
    speed = np.linalg.norm(u, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        K = np.where(norm > 0, lat.cell_volume * Cn * speed * base / norm, 0.0)

    ND, M = un.shape
    P = 2**n
    d2lo = np.empty((ND, P, M, n), np.int64)
    d2hi = np.empty((ND, P, M, n), np.int64)
    r = np.ones((ND, P, M))
    table_drop = np.zeros((ND, P, M), bool)
    near = _lattice_offsets(n, -1, 2)
    wide = _lattice_offsets(n, -3, 4)
    for pi, parity in enumerate(itertools.product((0, 1), repeat=n)):
        parity = np.array(parity, dtype=float)
        lo, hi, found = _bracket(target, rho2, parity, near)
        if not found.all():
            lo2, hi2, found2 = _bracket(target[~found], rho2[~found], parity, wide)
            lo[~found], hi[~found] = lo2, hi2
            found[~found] = found2
        R1 = np.sum(lo * lo, axis=-1)
        R2 = np.sum(hi * hi, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            rr = np.where(R2 > R1, (R2 - rho2) / (R2 - R1), 1.0)
        rr = np.clip(rr, 0.0, 1.0)
        # unmatched parity with the pair itself never happens; an unbracketed
        # event is sent back to the colliding pair (no collision)
        ident = np.broadcast_to(0.5 * d[:, None, :], lo.shape)
        drop = ~found & (K > 0)
        lo = np.where(drop[..., None], ident, lo)
        hi = np.where(drop[..., None], ident, hi)
        rr = np.where(drop, 1.0, rr)
        # d and p+q share parity, so only parity-consistent rows are ever read
        d2lo[:, pi] = np.rint(2.0 * lo).astype(np.int64)
        d2hi[:, pi] = np.rint(2.0 * hi).astype(np.int64)
        r[:, pi] = rr
        consistent = np.all((d % 2) == parity.astype(int), axis=1)
        table_drop[:, pi] = drop & consistent[:, None]
    return {"d2lo": d2lo, "d2hi": d2hi, "r": r, "K": K, "table_drop": table_drop}


def _interpolated_tables(model, u, un, nodes, w, lat):
    z = np.abs(un)
    wpre = model.theta_inv(z, errors="nan")
    bad = ~np.isfinite(wpre)
    wsafe = np.where(bad, 0.0, wpre)
    e_pre = model.e(wsafe)
    J = model.jacobian(wsafe)
    un_pre = -np.sign(un) * wsafe
    shift = (0.5 * (1.0 + e_pre) * un_pre)[..., None] * nodes[None, :, :]
    raw = lat.cell_volume * w[None, :] * z
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(bad | (z == 0), 0.0, raw / (e_pre * J))
    skipped = np.where(bad, raw, 0.0)
    return {"shift": np.ascontiguousarray(shift), "W": W, "skipped": skipped}
