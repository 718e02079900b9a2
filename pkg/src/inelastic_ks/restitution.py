"""Restitution laws that depend only on the impact speed z = |u.n|.

Every model exposes ``e(z)``, ``theta(z) = z e(z)``, its inverse and the
collision Jacobian ``d theta / dz``.  All methods are vectorised over numpy
arrays and pure, so models can be shared between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError

# Largest impact speed the generic inverse will bracket before giving up.
Z_MAX = 1.0e12


def sphere_area(m):
    """Surface measure of the unit sphere S^m in R^(m+1)."""
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)


class RestitutionModel:
    """Base class; subclasses define ``e`` and ``de`` (derivative of e)."""

    kind = "abstract"

    def e(self, z):
        raise NotImplementedError

    def de(self, z):
        raise NotImplementedError

    def theta(self, z):
        z = np.asarray(z, dtype=float)
        return z * self.e(z)

    def jacobian(self, z):
        z = np.asarray(z, dtype=float)
        return self.e(z) + z * self.de(z)

    @property
    def theta_sup(self):
        """Supremum of theta over [0, inf); ``inf`` when unbounded."""
        return math.inf

    @property
    def kinks(self):
        """Impact speeds where e fails to be smooth."""
        return ()

    def theta_inv(self, y, errors="raise"):
        return _invert_theta(self, y, errors)

    def to_dict(self):
        raise NotImplementedError

    def __call__(self, z):
        return self.e(z)


@dataclass(frozen=True)
class Elastic(RestitutionModel):
    kind = "elastic"

    def e(self, z):
        return np.ones_like(np.asarray(z, dtype=float))

    def de(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def jacobian(self, z):
        return np.ones_like(np.asarray(z, dtype=float))

    def theta_inv(self, y, errors="raise"):
        y = _check_nonnegative(y)
        return y.copy()

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Constant(RestitutionModel):
    e0: float = 1.0
    kind = "constant"

    def __post_init__(self):
        if not (0.0 < self.e0 <= 1.0):
            raise ConfigurationError(f"constant restitution e0={self.e0} not in (0, 1]")

    def e(self, z):
        return np.full_like(np.asarray(z, dtype=float), self.e0)

    def de(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def jacobian(self, z):
        return np.full_like(np.asarray(z, dtype=float), self.e0)

    def theta_inv(self, y, errors="raise"):
        y = _check_nonnegative(y)
        return y / self.e0

    def to_dict(self):
        return {"kind": self.kind, "e0": self.e0}


@dataclass(frozen=True)
class MonotoneDecreasing(RestitutionModel):
    """e(z) = 1 / (1 + a z^gamma)."""

    a: float = 1.0
    gamma: float = 1.0
    kind = "monotone"

    def __post_init__(self):
        if not self.a > 0.0:
            raise ConfigurationError(f"monotone restitution needs a > 0, got {self.a}")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigurationError(f"monotone restitution needs gamma in (0, 1], got {self.gamma}")

    def e(self, z):
        z = np.asarray(z, dtype=float)
        return 1.0 / (1.0 + self.a * z**self.gamma)

    def de(self, z):
        z = np.asarray(z, dtype=float)
        zg = z**self.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -self.a * self.gamma * zg / z / (1.0 + self.a * zg) ** 2
        if self.gamma == 1.0:
            d = np.where(z == 0.0, -self.a, d)
        else:
            d = np.where(z == 0.0, -np.inf, d)
        return d

    def jacobian(self, z):
        z = np.asarray(z, dtype=float)
        zg = z**self.gamma
        return (1.0 + self.a * (1.0 - self.gamma) * zg) / (1.0 + self.a * zg) ** 2

    @property
    def theta_sup(self):
        return 1.0 / self.a if self.gamma == 1.0 else math.inf

    def theta_inv(self, y, errors="raise"):
        if self.gamma != 1.0:
            return _invert_theta(self, y, errors)
        y = _check_nonnegative(y)
        bad = y >= 1.0 / self.a
        if np.any(bad) and errors == "raise":
            raise DomainError(
                f"theta^-1 undefined for y >= {1.0 / self.a!r} (theta bounded by 1/a)",
                max_value=1.0 / self.a,
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            z = y / (1.0 - self.a * y)
        return np.where(bad, np.nan, z)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "gamma": self.gamma}


@dataclass(frozen=True)
class Viscoelastic(RestitutionModel):
    """Root of e + a z^(1/5) e^(3/5) = 1, found by bisection on e in (0, 1]."""

    a: float = 0.0
    kind = "viscoelastic"
    # halvings of (0, 1]; 2^-47 < 1e-14
    n_bisect: int = field(default=47, repr=False, compare=False)

    def __post_init__(self):
        if not self.a >= 0.0:
            raise ConfigurationError(f"viscoelastic restitution needs a >= 0, got {self.a}")

    def e(self, z):
        z = np.asarray(z, dtype=float)
        if self.a == 0.0:
            return np.ones_like(z)
        return _bisect_unit(lambda e, c: e + c * e**0.6, self.a * z**0.2, self.n_bisect)

    def de(self, z):
        z = np.asarray(z, dtype=float)
        e = self.e(z)
        s = self.a * z**0.2
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -(0.2 * s * e**0.6 / z) / (1.0 + 0.6 * s * e**-0.4)
        return np.where(z == 0.0, -np.inf if self.a > 0 else 0.0, d)

    def jacobian(self, z):
        z = np.asarray(z, dtype=float)
        e = self.e(z)
        s = self.a * z**0.2 * e**-0.4
        return e * (1.0 + 0.4 * s) / (1.0 + 0.6 * s)

    def theta_inv(self, y, errors="raise"):
        # With z = y/e the defining relation becomes e + a y^(1/5) e^(2/5) = 1,
        # again strictly increasing in e.
        y = _check_nonnegative(y)
        if self.a == 0.0:
            return y.copy()
        e = _bisect_unit(lambda e, c: e + c * e**0.4, self.a * y**0.2, 60)
        return y / e

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class PiecewiseElastic(RestitutionModel):
    """Elastic below z0, ``inner`` shifted to start at z0 above it.

    The shift ``e(z) = inner.e(z - z0)`` keeps e continuous whenever the inner
    law starts at 1 (elastic, monotone, viscoelastic).
    """

    z0: float = 1.0
    inner: RestitutionModel = field(default_factory=Elastic)
    kind = "piecewise"

    def __post_init__(self):
        if not self.z0 > 0.0:
            raise ConfigurationError(f"piecewise restitution needs z0 > 0, got {self.z0}")
        if not isinstance(self.inner, RestitutionModel):
            raise ConfigurationError("piecewise restitution needs an inner model")

    def e(self, z):
        z = np.asarray(z, dtype=float)
        w = np.maximum(z - self.z0, 0.0)
        return np.where(z < self.z0, 1.0, self.inner.e(w))

    def de(self, z):
        z = np.asarray(z, dtype=float)
        w = np.maximum(z - self.z0, 0.0)
        return np.where(z < self.z0, 0.0, self.inner.de(w))

    def jacobian(self, z):
        z = np.asarray(z, dtype=float)
        w = np.maximum(z - self.z0, 0.0)
        with np.errstate(invalid="ignore"):
            j = self.inner.e(w) + z * self.inner.de(w)
        return np.where(z < self.z0, 1.0, j)

    @property
    def theta_sup(self):
        if isinstance(self.inner, MonotoneDecreasing) and self.inner.gamma == 1.0:
            # z / (1 + a (z - z0)) -> 1/a
            return max(self.z0, 1.0 / self.inner.a)
        return math.inf

    @property
    def kinks(self):
        return (self.z0,) + tuple(self.z0 + k for k in self.inner.kinks)

    def to_dict(self):
        return {"kind": self.kind, "z0": self.z0, "inner": self.inner.to_dict()}


_KINDS = {
    "elastic": (Elastic, ()),
    "constant": (Constant, ("e0",)),
    "monotone": (MonotoneDecreasing, ("a", "gamma")),
    "viscoelastic": (Viscoelastic, ("a",)),
    "piecewise": (PiecewiseElastic, ("z0", "inner")),
}


def model_from_dict(block):
    """Build a model from a ``{"kind": ..., <params>}`` mapping."""
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigurationError("restitution block must be an object with a 'kind' key")
    kind = str(block["kind"]).lower()
    if kind not in _KINDS:
        raise ConfigurationError(f"unknown restitution kind {block['kind']!r}; expected one of {sorted(_KINDS)}")
    cls, names = _KINDS[kind]
    extra = set(block) - set(names) - {"kind"}
    if extra:
        raise ConfigurationError(f"unexpected parameters for {kind}: {sorted(extra)}")
    kwargs = {}
    for name in names:
        if name not in block:
            raise ConfigurationError(f"restitution kind {kind!r} requires parameter {name!r}")
        value = block[name]
        if name == "inner":
            value = model_from_dict(value)
        else:
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigurationError(f"parameter {name!r} must be a number, got {value!r}") from None
        kwargs[name] = value
    return cls(**kwargs)


# -- functional API ------------------------------------------------------------

def eval_e(model, z):
    z = _check_nonnegative(z)
    return model.e(z)


def theta(model, z):
    return model.theta(_check_nonnegative(z))


def theta_inv(model, y, errors="raise"):
    return model.theta_inv(y, errors=errors)


def jacobian(model, z):
    return model.jacobian(_check_nonnegative(z))


# -- root finders -----------------------------------------------------------------

def _check_nonnegative(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(~np.isfinite(z)):
        raise DomainError("impact speed must be finite and nonnegative")
    return z


def _bisect_unit(lhs, c, n_iter):
    """Solve lhs(e, c) = 1 for e in (0, 1], lhs increasing in e."""
    c = np.asarray(c, dtype=float)
    lo = np.zeros_like(c)
    hi = np.ones_like(c)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        above = lhs(mid, c) >= 1.0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def _invert_theta(model, y, errors="raise", max_iter=200):
    """Safeguarded Newton for theta(z) = y on a geometrically grown bracket."""
    y = _check_nonnegative(y)
    scalar = y.ndim == 0
    y = np.atleast_1d(y).astype(float)
    out = np.zeros_like(y)
    todo = y > 0
    # e <= 1 gives theta(y) <= y, so the root lies at or above y
    lo = y[todo].copy()
    hi = np.maximum(2.0 * lo, 1.0)
    yt = y[todo]
    ok = np.ones_like(yt, dtype=bool)
    while True:
        short = model.theta(hi) < yt
        if not short.any():
            break
        grow = short & (hi < Z_MAX)
        if not grow.any():
            ok &= ~short
            break
        hi = np.where(grow, hi * 2.0, hi)
    if not ok.all():
        if errors == "raise":
            raise DomainError(
                f"theta^-1 undefined for y={yt[~ok].max()!r}; largest representable impact speed "
                f"maps to {float(model.theta(Z_MAX))!r}",
                max_value=float(model.theta(Z_MAX)),
            )
        hi = np.where(ok, hi, lo)
    z = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = model.theta(z) - yt
        lo = np.where(f <= 0, z, lo)
        hi = np.where(f > 0, z, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            zn = z - f / model.jacobian(z)
        reject = ~((zn > lo) & (zn < hi))
        zn = np.where(reject, 0.5 * (lo + hi), zn)
        step = np.abs(zn - z)
        z = zn
        if np.all((step <= 4e-16 * np.maximum(z, 1.0)) | (hi - lo <= 4e-16 * np.maximum(hi, 1.0)) | ~ok):
            break
    else:
        raise NumericalError("theta inversion did not converge")
    out[todo] = np.where(ok, z, np.nan)
    return out[0] if scalar else out


# -- assumption-related integrals ------------------------------------------------------

def psi_beta(model, z, beta):
    """Ratio of z-derivatives of exp(-beta z^2/2) and exp(-beta theta^2/2).

    Written as exp(-beta z^2 (1 - e^2)/2) / (e theta_z) so that z = 0 is regular.
    """
    z = _check_nonnegative(z)
    e = model.e(z)
    j = model.jacobian(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        # a non-increasing theta has no finite ratio
        return np.where(j > 0, np.exp(-0.5 * beta * z * z * (1.0 - e * e)) / (e * j), np.inf)


def psi_beta_display(model, z, beta):
    """The alternative form z / theta_z * exp(...) kept for comparison only."""
    z = _check_nonnegative(z)
    e = model.e(z)
    return z / model.jacobian(z) * np.exp(-0.5 * beta * z * z * (1.0 - e * e))


def adaptive_gauss_legendre(fn, a, b, *, order=20, tol=1e-12, min_panels=2, max_panels=4096):
    """Composite Gauss-Legendre on a batch of intervals with per-entry panel doubling.

    ``a`` and ``b`` are arrays of interval ends.  ``fn(idx, nodes)`` receives
    nodes of shape ``(len(idx), K)`` for the batch entries ``idx`` and returns
    integrand values of the same shape.  Each entry is refined until two
    successive composite rules agree to ``tol`` (relative, floor 1).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    xg, wg = np.polynomial.legendre.leggauss(order)

    def composite(idx, m):
        t = (np.arange(m)[:, None] + 0.5 * (xg[None, :] + 1.0)).ravel() / m
        w = np.tile(wg, m) / (2 * m)
        out = np.empty(idx.size)
        step = max(1, (1 << 21) // t.size)  # bound the node block to ~16 MB
        for c in range(0, idx.size, step):
            sub = idx[c : c + step]
            width = (b[sub] - a[sub])[:, None]
            nodes = a[sub][:, None] + width * t[None, :]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out[c : c + step] = (fn(sub, nodes) * width) @ w
        return out

    idx = np.arange(a.size)
    result = np.empty(a.size)
    m = min_panels
    prev = composite(idx, m)
    while idx.size:
        m *= 2
        cur = composite(idx, m)
        with np.errstate(invalid="ignore"):
            diff = np.abs(cur - prev)
        # a non-finite integrand cannot be refined away; report it as such
        blown = ~np.isfinite(cur) | ~np.isfinite(prev)
        cur = np.where(blown, np.inf, cur)
        done = blown | (diff <= tol * np.maximum(1.0, np.abs(cur)))
        result[idx[done]] = cur[done]
        idx, prev = idx[~done], cur[~done]
        if idx.size and m >= max_panels:
            raise NumericalError(
                f"adaptive quadrature did not converge for {idx.size} entries "
                f"(largest successive difference {diff[~done].max():.3e})"
            )
    return result


def phi_beta(model, x, beta, n):
    """Angular average 2|S^(n-2)| int_0^1 psi(xz) (1-z^2)^((n-3)/2) dz.

    Integration runs in s with z = sin s (n = 2) or z = s (n = 3), split at the
    kinks of e and graded towards the left end of every piece, where power-law
    behaviour such as z^(1/5) sits.
    """
    if n not in (2, 3):
        raise ConfigurationError(f"dimension must be 2 or 3, got {n}")
    if not beta > 0:
        raise ConfigurationError("beta must be positive")
    x = _check_nonnegative(x)
    scalar = x.ndim == 0
    xs = np.atleast_1d(x).ravel()
    to_z = np.sin if n == 2 else (lambda s: s)
    s_end = 0.5 * math.pi if n == 2 else 1.0

    owner, lo, hi = [], [], []
    kinks = np.array(sorted(k for k in model.kinks if k > 0))
    for i, xi in enumerate(xs):
        cuts = kinks / xi if xi > 0 else np.empty(0)
        cuts = cuts[cuts < 1.0]
        if n == 2:
            cuts = np.arcsin(cuts)
        edges = np.concatenate([[0.0], cuts, [s_end]])
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                owner.append(i)
                lo.append(a)
                hi.append(b)
    owner = np.asarray(owner)
    lo = np.asarray(lo)
    hi = np.asarray(hi)

    def fn(idx, t):
        width = (hi[idx] - lo[idx])[:, None]
        s = lo[idx][:, None] + width * t**5
        return psi_beta(model, xs[owner[idx], None] * to_z(s), beta) * 5.0 * width * t**4

    pieces = adaptive_gauss_legendre(fn, np.zeros(lo.size), np.ones(lo.size))
    val = np.zeros(xs.size)
    np.add.at(val, owner, pieces)
    out = 2.0 * sphere_area(n - 2) * val
    return float(out[0]) if scalar else out.reshape(np.shape(x))


def phi_beta_grid(n_points=2000, x_min=1e-3, x_max=1e3):
    return np.concatenate([[0.0], np.geomspace(x_min, x_max, n_points)])


def phi_beta_profile(model, beta, n, n_points=2000):
    """(x, phi) on {0} U geomspace(1e-3, 1e3); x = 0 uses the exact limit."""
    xs = phi_beta_grid(n_points)
    phi = np.empty_like(xs)
    phi[0] = sphere_area(n - 1) * float(psi_beta(model, 0.0, beta))
    phi[1:] = phi_beta(model, xs[1:], beta, n)
    return xs, phi


def phi_beta_sup(model, beta, n, n_points=2000):
    """Supremum of phi_beta over the sample grid."""
    _, phi = phi_beta_profile(model, beta, n, n_points)
    if not np.all(np.isfinite(phi)):
        return math.inf
    return float(phi.max())


# -- assumption report -----------------------------------------------------------------

def impact_samples(z_lin=10.0, n_lin=4001, z_max=1e3, n_log=801):
    return np.unique(np.concatenate([np.linspace(0.0, z_lin, n_lin), np.geomspace(z_lin, z_max, n_log)]))


@dataclass
class AssumptionReport:
    model: dict
    beta: float
    n: int
    range_ok: bool
    continuity_ok: bool
    max_jump: float
    monotone_ok: bool
    min_theta_increment: float
    phi_sup: float
    tail_increasing: bool
    bounded_ok: bool
    decay_ok: bool
    decay_margin: float
    psi_sup: float
    psi_display_sup: float

    @property
    def a1(self):
        return self.range_ok and self.continuity_ok

    @property
    def a2(self):
        return self.monotone_ok

    @property
    def a3(self):
        return self.bounded_ok

    @property
    def passed(self):
        return self.a1 and self.a2 and self.a3 and self.decay_ok

    def lines(self):
        verdict = lambda ok: "PASS" if ok else "FAIL"  # noqa: E731
        return [
            f"model: {self.model}",
            f"beta: {self.beta!r}  n: {self.n}",
            f"(A1) range in (0,1] and sampled continuity: {verdict(self.a1)} (max jump {self.max_jump:.3e})",
            f"(A2) theta strictly increasing: {verdict(self.a2)} (min increment {self.min_theta_increment:.3e})",
            f"(A3) phi_beta bounded: {verdict(self.a3)} (sup {self.phi_sup!r}, tail increasing: {self.tail_increasing})",
            f"decay bound e(z) >= e(1)/z: {verdict(self.decay_ok)} (min margin {self.decay_margin:.3e})",
            f"sup psi_beta (derivative ratio): {self.psi_sup!r}",
            f"sup z/theta_z*exp(...) (alternative display): {self.psi_display_sup!r}",
        ]


def _max_jump(model, z):
    """Follow the largest increment of e down by interval halving.

    Returns the increment at the finest representable width and the one
    twenty halvings earlier.
    """
    e = model.e(z)
    k = int(np.argmax(np.abs(np.diff(e))))
    a, b = z[k], z[k + 1]
    incs = [abs(e[k + 1] - e[k])]
    for _ in range(200):
        m = 0.5 * (a + b)
        if not a < m < b:
            break
        ea, em, eb = model.e(np.array([a, m, b]))
        if abs(em - ea) >= abs(eb - em):
            b = m
            incs.append(abs(em - ea))
        else:
            a = m
            incs.append(abs(eb - em))
    return float(incs[-1]), float(incs[max(0, len(incs) - 21)])


def check_assumptions(model, beta, n, n_points=2000):
    """Sampled checks of (A1)-(A3) and the 1/z decay bound; never raises on failure."""
    z = impact_samples()
    e = model.e(z)
    range_ok = bool(np.all((e > 0) & (e <= 1.0) & np.isfinite(e)))
    jump, coarse = _max_jump(model, z)
    # a genuine jump keeps its size under halving, while Hoelder growth
    # such as z^(1/5) shrinks by 2^(-4) over twenty halvings
    continuity_ok = jump < 1e-6 or jump < 0.5 * coarse
    th = model.theta(z)
    dth = np.diff(th)
    monotone_ok = bool(np.all(dth > 0))

    try:
        xs, phi = phi_beta_profile(model, beta, n, n_points)
    except NumericalError:
        # an integrand the quadrature cannot resolve cannot be certified bounded
        xs = phi_beta_grid(n_points)
        phi = np.full(xs.shape, np.inf)
    finite = bool(np.all(np.isfinite(phi)))
    tail = phi[xs >= xs[-1] / 10.0]
    tail_increasing = bool(finite and tail[-1] > tail[0] * (1 + 1e-9) and np.all(np.diff(tail) >= -1e-12 * np.abs(tail[1:])))
    phi_sup = float(phi.max()) if finite else math.inf
    bounded_ok = finite and not tail_increasing

    zz = z[z >= 1.0]
    e1 = float(model.e(1.0))
    margin = model.e(zz) - e1 / zz
    decay_ok = bool(np.all(margin >= -1e-14))

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ps = psi_beta(model, z, beta)
        pd = psi_beta_display(model, z, beta)
    return AssumptionReport(
        model=model.to_dict(),
        beta=beta,
        n=n,
        range_ok=range_ok,
        continuity_ok=continuity_ok,
        max_jump=jump,
        monotone_ok=monotone_ok,
        min_theta_increment=float(dth.min()),
        phi_sup=phi_sup,
        tail_increasing=tail_increasing,
        bounded_ok=bounded_ok,
        decay_ok=decay_ok,
        decay_margin=float(margin.min()),
        psi_sup=float(np.nanmax(ps)),
        psi_display_sup=float(np.nanmax(pd)),
    )
