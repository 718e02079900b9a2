"""Post-run checks: moments, density decay, weak-form residuals, vanishing of the envelope.

Solutions are time series of sharp fields, shape ``(Nt + 1, NX, NV)``.
Since the trajectory shift preserves phase volume, x-integrated moments are
read directly from the sharp representation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .grid import MaxwellianEnvelope, maxwellian_norm, moments, unsharp_transform
from .solver import SharpCollision, sharp_collision

# -- conservation ---------------------------------------------------------------------

ENERGY_STEP_SLACK = 1e-8
ELASTIC_ENERGY_RTOL = 1e-6
DRIFT_TOL = 1e-3


@dataclass
class ConservationAudit:
    times: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray  # (K, n)
    energy: np.ndarray
    elastic: bool

    @property
    def mass_drift(self):
        m0 = self.mass[0]
        if m0 == 0:
            return 0.0
        return float(np.max(np.abs(self.mass - m0)) / m0)

    @property
    def momentum_drift(self):
        """max_t |p(t) - p(0)| per unit initial mass (a velocity)."""
        m0 = self.mass[0]
        if m0 == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.momentum - self.momentum[0], axis=1)) / m0)

    @property
    def energy_steps(self):
        """Relative per-step energy increments (E_{k+1} - E_k) / E_0."""
        e0 = self.energy[0]
        if e0 == 0:
            return np.zeros(max(0, self.energy.size - 1))
        return np.diff(self.energy) / e0

    @property
    def energy_drift(self):
        e0 = self.energy[0]
        if e0 == 0:
            return 0.0
        return float(np.max(np.abs(self.energy - e0)) / e0)

    @property
    def energy_ok(self):
        if self.elastic:
            return self.energy_drift <= ELASTIC_ENERGY_RTOL
        return bool(np.all(self.energy_steps <= ENERGY_STEP_SLACK))

    @property
    def passed(self):
        return self.mass_drift < DRIFT_TOL and self.momentum_drift < DRIFT_TOL and self.energy_ok

    def rows(self):
        n = self.momentum.shape[1]
        head = ["t", "mass"] + [f"momentum_{i}" for i in range(n)] + ["energy"]
        body = [
            [self.times[k], self.mass[k], *self.momentum[k], self.energy[k]] for k in range(self.times.size)
        ]
        return head, body


def conservation_audit(solution, grid, times, elastic):
    sol = np.asarray(solution)
    mass, mom, energy = [], [], []
    for f in sol:
        m, p, e = moments(f, grid)
        mass.append(m)
        mom.append(p)
        energy.append(e)
    return ConservationAudit(np.asarray(times, float), np.array(mass), np.array(mom), np.array(energy), bool(elastic))


# -- spatial density ------------------------------------------------------------------

def density(f_sharp, grid, t):
    """rho(t, x) on the position cells from a sharp snapshot at time t."""
    lab = grid.flat(unsharp_transform(f_sharp, grid, t))
    return lab.sum(axis=1) * grid.velocity.cell_volume


def envelope_density(env: MaxwellianEnvelope, x, t, n, order=60):
    """int c exp(-alpha |x - t xi|^2 - beta |xi|^2) dxi by Gauss-Hermite.

    The integrand is a product over coordinates, so one 1-D rule per axis
    suffices.  With z = x - t xi it becomes t^-1 exp(-alpha z^2)
    exp(-beta (x-z)^2/t^2) per axis, which Gauss-Hermite in z integrates well
    once t is large; for t < 1 the roles are swapped and xi is the Hermite
    variable.
    """
    x = np.atleast_2d(np.asarray(x, float))
    g, w = np.polynomial.hermite.hermgauss(order)
    a, b, c = env.alpha, env.beta, env.c
    if t >= 1.0:
        d = x[..., None] - g / math.sqrt(a)
        axis = np.exp(-b * d * d / (t * t)) @ w / (t * math.sqrt(a))
    else:
        d = x[..., None] - t * g / math.sqrt(b)
        axis = np.exp(-a * d * d) @ w / math.sqrt(b)
    return c * np.prod(axis, axis=1)


def envelope_density_exact(env: MaxwellianEnvelope, x, t, n):
    """Closed form c (pi/(beta + alpha t^2))^(n/2) exp(-alpha beta |x|^2 / (beta + alpha t^2))."""
    x = np.atleast_2d(np.asarray(x, float))
    s = env.beta + env.alpha * t * t
    return env.c * (math.pi / s) ** (n / 2) * np.exp(-env.alpha * env.beta * np.sum(x * x, axis=1) / s)


@dataclass
class DecayFit:
    times: np.ndarray
    sup_density: np.ndarray
    slope: float
    n: int
    conclusive: bool

    @property
    def passed(self):
        if not self.conclusive:
            return True
        return abs(self.slope + self.n) <= 0.2 * self.n and self.slope <= -self.n + 0.2 * self.n


def density_decay(env: MaxwellianEnvelope, n, t_values=None, x_extent=5.0, nx=None):
    """Fit log sup_x rho(t) against log t over the last decade of ``t_values``."""
    if t_values is None:
        t_values = np.geomspace(1.0, 1.0e3, 25)
    t_values = np.asarray(t_values, float)
    nx = nx or 41
    axis = np.linspace(-x_extent, x_extent, nx)
    xs = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    sup = np.array([float(envelope_density(env, xs, t, n).max()) for t in t_values])
    last = t_values >= t_values[-1] / 10.0
    conclusive = (
        env.c > 0 and np.count_nonzero(last) >= 3 and t_values[-1] / t_values[0] >= 10.0 and np.all(sup[last] > 0)
    )
    slope = float("nan")
    if conclusive:
        slope = float(np.polyfit(np.log(t_values[last]), np.log(sup[last]), 1)[0])
    return DecayFit(t_values, sup, slope, n, bool(conclusive))


# -- weak form -------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakTestFunction:
    """sigma(x, xi) with its transport derivative xi . grad_x sigma; time factor applied separately."""

    name: str
    value: object
    transport: object


def _gauss_x(X, s):
    return np.exp(-np.sum(X * X, axis=-1) / s)


def weak_test_family(n):
    """Versioned family (v1) of five smooth, rapidly decaying test functions."""
    a = np.array([0.5, -0.3, 0.2][:n])
    b = np.array([0.3, 0.2, -0.1][:n])
    R2 = 16.0

    def g1(X, V):
        return _gauss_x(X, 4.0)

    def t1(X, V):
        return -0.5 * np.sum(X * V, axis=-1) * _gauss_x(X, 4.0)

    def g2(X, V):
        return V[..., 0] * _gauss_x(X - a, 4.0)

    def t2(X, V):
        return -0.5 * V[..., 0] * np.sum((X - a) * V, axis=-1) * _gauss_x(X - a, 4.0)

    def g3(X, V):
        return np.sum(V * V, axis=-1) * np.exp(-np.sum(X * X, axis=-1) / 4.0 - np.sum(V * V, axis=-1) / 8.0)

    def t3(X, V):
        return -0.5 * np.sum(X * V, axis=-1) * g3(X, V)

    def g4(X, V):
        return np.exp(-0.5 * np.sum((X - a) ** 2, axis=-1) - 0.5 * np.sum((V - b) ** 2, axis=-1))

    def t4(X, V):
        return -np.sum((X - a) * V, axis=-1) * g4(X, V)

    def g5(X, V):
        q = np.maximum(0.0, 1.0 - np.sum(X * X, axis=-1) / R2)
        return q**3 * np.exp(-0.5 * np.sum(V * V, axis=-1))

    def t5(X, V):
        q = np.maximum(0.0, 1.0 - np.sum(X * X, axis=-1) / R2)
        return -6.0 / R2 * q**2 * np.sum(X * V, axis=-1) * np.exp(-0.5 * np.sum(V * V, axis=-1))

    return [
        WeakTestFunction("gauss_x", g1, t1),
        WeakTestFunction("xi1_shifted_gauss_x", g2, t2),
        WeakTestFunction("energy_gauss", g3, t3),
        WeakTestFunction("shifted_gauss", g4, t4),
        WeakTestFunction("cutoff_poly", g5, t5),
    ]


def time_bump(t, T):
    """rho(t) = t^2 (T - t)^2 / (T/2)^4 and its derivative; vanishes with its slope at both ends."""
    s = (T / 2.0) ** 4
    return t * t * (T - t) ** 2 / s, (2.0 * t * (T - t) ** 2 - 2.0 * t * t * (T - t)) / s


@dataclass
class WeakResidual:
    names: list
    residual: np.ndarray
    scale: np.ndarray

    @property
    def relative(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.scale > 0, self.residual / self.scale, 0.0)

    def rows(self):
        return ["test_function", "residual", "scale"], [
            [nm, r, s] for nm, r, s in zip(self.names, self.residual, self.scale)
        ]


def weak_residual(solution, grid, op, mesh, tests=None, workers=1, collision=None):
    """|int_0^T int int f^# d_t psi^# + Q^#(f, f) psi^#| for psi = rho(t) sigma(x, xi).

    In sharp coordinates psi^#(t, x, xi) = rho(t) sigma(x + t xi, xi), so
    d_t psi^# = rho' sigma^# + rho (xi . grad_x sigma)^#, evaluated in closed
    form at the shifted points.  ``scale`` is the same integral of absolute
    values, for relative reporting.
    """
    sol = np.asarray(solution)
    tests = tests or weak_test_family(grid.n)
    if collision is None:
        collision = sharp_collision(SharpCollision(grid, op, workers), sol, mesh)
    times = mesh.nodes
    dV = grid.cell_volume
    V = grid.v_points[None, :, :]
    acc = np.zeros((len(tests), times.size))
    mag = np.zeros((len(tests), times.size))
    for k, t in enumerate(times):
        X = grid.x_points[:, None, :] + t * V
        r, dr = time_bump(t, mesh.T)
        f = sol[k]
        q = collision[k]
        for j, tf in enumerate(tests):
            s = tf.value(X, V)
            d = tf.transport(X, V)
            terms = (
                dr * np.sum(f * s) * dV,
                r * np.sum(f * d) * dV,
                r * np.sum(q * s) * dV,
            )
            acc[j, k] = sum(terms)
            mag[j, k] = sum(abs(v) for v in terms)
    w = np.full(times.size, mesh.dt)
    w[[0, -1]] *= 0.5
    return WeakResidual([tf.name for tf in tests], np.abs(acc @ w), mag @ w)


def observed_order(coarse, fine, ratio=2.0):
    """log(coarse/fine)/log(ratio) elementwise; inf when the fine residual is zero."""
    coarse = np.asarray(coarse, float)
    fine = np.asarray(fine, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(coarse / fine) / math.log(ratio)


# -- vanishing ------------------------------------------------------------------------

@dataclass
class VanishingCheck:
    times: np.ndarray
    sup: np.ndarray
    pointwise_ok: bool = True

    @property
    def ratio(self):
        if self.sup[0] == 0:
            return 0.0
        return float(self.sup[-1] / self.sup[0])

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.sup) <= 1e-14 * max(self.sup[0], 1e-300)))

    @property
    def passed(self):
        return self.monotone and self.pointwise_ok and (self.sup[0] == 0 or self.ratio <= 1.0)


def vanishing_check(env: MaxwellianEnvelope, grid, t_values, snapshots=None, slack=1e-9):
    """sup of the lab-frame envelope c exp(-alpha|x - t xi|^2 - beta|xi|^2) per time.

    The sup runs over velocity cells and over all x in the position box, so
    it is exp(-alpha dist(t xi, box)^2) per velocity; a sup over x cell
    centres alone is not monotone in t because of sampling.  ``snapshots``
    are optional sharp fields checked pointwise against the sharp envelope.
    """
    t_values = np.asarray(t_values, float)
    V = grid.v_points
    vw = np.exp(-env.beta * grid.v_sq)
    sup = []
    for t in t_values:
        excess = np.maximum(0.0, np.abs(t * V) - grid.Lx)
        sup.append(float(env.c * np.max(vw * np.exp(-env.alpha * np.sum(excess * excess, axis=1)))))
    ok = True
    if snapshots is not None:
        M = env.sample(grid)
        ok = all(bool(np.all(grid.flat(s) <= M + slack)) for s in snapshots)
    return VanishingCheck(t_values, np.array(sup), ok)


# -- report ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


@dataclass
class RunReport:
    audit: ConservationAudit
    density_times: list = field(default_factory=list)
    density_values: list = field(default_factory=list)
    certificates: list = field(default_factory=list)  # (t, alpha, beta, c)
    decay: DecayFit | None = None
    weak: WeakResidual | None = None
    vanishing: VanishingCheck | None = None
    constants: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.audit.mass < 0):
            raise ValueError("mass series must be nonnegative")
        if not np.all(np.isfinite(self.audit.energy)):
            raise ValueError("energy series must be finite")

    @property
    def passed(self):
        return all(self.verdicts.values())

    def text(self):
        out = ["[constants]"]
        out += [f"{k} = {_fmt(v)}" for k, v in self.constants.items()]
        a = self.audit
        out += [
            "[conservation]",
            f"mass_drift = {_fmt(a.mass_drift)}",
            f"momentum_drift = {_fmt(a.momentum_drift)}",
            f"energy_drift = {_fmt(a.energy_drift)}",
            f"energy_ok = {a.energy_ok}",
        ]
        if self.certificates:
            out.append("[envelope certificates]")
            out += [f"t = {_fmt(t)} alpha = {_fmt(al)} beta = {_fmt(be)} c = {_fmt(c)}" for t, al, be, c in self.certificates]
        if self.decay is not None:
            out += ["[density decay]", f"slope = {_fmt(self.decay.slope)}", f"conclusive = {self.decay.conclusive}"]
        if self.weak is not None:
            out.append("[weak residual]")
            out += [f"{nm} = {_fmt(r)}" for nm, r in zip(self.weak.names, self.weak.residual)]
        if self.vanishing is not None:
            out += ["[vanishing]", f"ratio = {_fmt(self.vanishing.ratio)}", f"monotone = {self.vanishing.monotone}"]
        out.append("[verdicts]")
        out += [f"{k} = {'PASS' if v else 'FAIL'}" for k, v in self.verdicts.items()]
        return "\n".join(out) + "\n"

    def write(self, directory):
        os.makedirs(directory, exist_ok=True)
        write_csv(os.path.join(directory, "moments.csv"), *self.audit.rows())
        if self.density_values:
            nx = len(self.density_values[0])
            header = ["t"] + [f"x{i}" for i in range(nx)]
            write_csv(
                os.path.join(directory, "density.csv"),
                header,
                [[t, *rho] for t, rho in zip(self.density_times, self.density_values)],
            )
        if self.weak is not None:
            write_csv(os.path.join(directory, "weak_residual.csv"), *self.weak.rows())
        with open(os.path.join(directory, "report.txt"), "w") as fh:
            fh.write(self.text())


def build_report(result, f0, op, model_elastic, density_every=8, weak=True, workers=1):
    """Assemble a :class:`RunReport` for a converged :class:`KSResult`."""
    grid, mesh = result.grid, result.mesh
    sol = result.solution
    audit = conservation_audit(sol, grid, mesh.nodes, model_elastic)
    idx = sorted(set(range(0, mesh.Nt + 1, max(1, density_every))) | {mesh.Nt})
    dens_t = [float(mesh.nodes[k]) for k in idx]
    dens = [density(sol[k], grid, mesh.nodes[k]) for k in idx]
    certs = [(t, result.alpha, result.beta, maxwellian_norm(sol[k], grid, result.alpha, result.beta)) for t, k in zip(dens_t, idx)]
    env = MaxwellianEnvelope(result.alpha, result.beta, result.state.C * result.state.envelope_lift)
    decay = density_decay(env, grid.n)
    van = vanishing_check(env, grid, np.linspace(0.0, 2.0 * mesh.T, 9), snapshots=[sol[k] for k in idx])
    wr = weak_residual(sol, grid, op, mesh, workers=workers) if weak else None
    verdicts = {
        "mass_drift": audit.mass_drift < DRIFT_TOL,
        "momentum_drift": audit.momentum_drift < DRIFT_TOL,
        "energy": audit.energy_ok,
        "density_decay": decay.passed,
        "vanishing": van.passed,
    }
    if wr is not None:
        verdicts["weak_residual"] = bool(np.all(wr.residual < 1e-3))
    constants = {
        "n": grid.n,
        "C_n": op.Cn,
        "k": result.k,
        "C": result.state.C,
        "norm0": result.norm0,
        "certified": result.certified,
        "iterations": result.state.iteration,
        "repair_sweeps": result.state.repair_sweeps,
        "envelope_lift": result.state.envelope_lift,
        "dropped_fraction": op.stats.dropped_fraction,
        "skipped_fraction": op.stats.skipped_fraction,
    }
    return RunReport(audit, dens_t, dens, certs, decay, wr, van, constants, verdicts)
