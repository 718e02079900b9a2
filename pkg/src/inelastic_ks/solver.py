"""Linear mild solves and the monotone lower/upper iteration.

Time series of fields are arrays of shape ``(Nt + 1, NX, NV)`` holding the
sharp (trajectory) representation at the mesh nodes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionOperator, dimensional_constant
from .errors import ConfigurationError, ConsistencyError, ConvergenceError, ThresholdError
from .grid import MaxwellianEnvelope, l1_norm, maxwellian_norm, sharp_transform, unsharp_transform
from .restitution import check_assumptions, phi_beta_sup

log = logging.getLogger(__name__)

ORDER_SLACK = 1e-9


@dataclass(frozen=True)
class TimeMesh:
    T: float
    Nt: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError("time horizon must be positive")
        if self.Nt < 2:
            raise ConfigurationError("need at least 2 time steps")

    @property
    def dt(self):
        return self.T / self.Nt

    @property
    def nodes(self):
        return self.dt * np.arange(self.Nt + 1)


# -- constants --------------------------------------------------------------------------

def envelope_constant(alpha, beta, model, n, phi_sup=None):
    """k = pi^((n+1)/2) ||phi_beta||_inf / (alpha^(1/2) beta^(n/2))."""
    if not (alpha > 0 and beta > 0):
        raise ConfigurationError("alpha and beta must be positive")
    if phi_sup is None:
        report = check_assumptions(model, beta, n)
        if not report.a3:
            raise ConfigurationError(
                f"phi_beta is not certified bounded for {model.to_dict()} (sup {report.phi_sup!r}); "
                "no envelope constant"
            )
        phi_sup = report.phi_sup
    return math.pi ** ((n + 1) / 2) * phi_sup / (math.sqrt(alpha) * beta ** (n / 2))


def beginning_envelope(norm0, k):
    """Smaller root of norm0 + k C^2 = C; requires norm0 <= 1/(4k)."""
    if norm0 < 0:
        raise ConfigurationError("norm must be nonnegative")
    admissible = 1.0 / (4.0 * k)
    if norm0 > admissible:
        raise ThresholdError(
            f"initial datum norm {norm0!r} exceeds the admissible maximum 1/(4k) = {admissible!r}",
            norm=norm0,
            admissible=admissible,
        )
    # 2N / (1 + sqrt(1 - 4kN)) avoids cancellation for small N
    return 2.0 * norm0 / (1.0 + math.sqrt(max(0.0, 1.0 - 4.0 * k * norm0)))


# -- collision terms in trajectory coordinates -------------------------------------------

class SharpCollision:
    """Evaluates R^#(g) and Q+^#(f, f) on a time mesh via lab-frame collisions."""

    def __init__(self, grid, op: CollisionOperator, workers=1):
        self.grid = grid
        self.op = op
        self.workers = max(1, int(workers))

    def _map(self, fn, items):
        if self.workers == 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(fn, items))

    def _node(self, kind, F, t):
        g = self.grid
        lab = g.flat(unsharp_transform(F, g, t))
        if kind == "gain":
            out = self.op.gain(lab)
        elif kind == "rate":
            out = self.op.loss_rate(lab)
        else:
            raise ValueError(kind)
        return g.flat(sharp_transform(out, g, t))

    def series(self, kind, F, mesh):
        times = mesh.nodes
        res = self._map(lambda k: self._node(kind, F[k], times[k]), range(len(times)))
        return np.stack(res)

    def gain(self, F, mesh):
        return self.series("gain", F, mesh)

    def loss_rate(self, G, mesh):
        return self.series("rate", G, mesh)



def sharp_collision(sc, F, mesh):
    """Q^#(f, f) = Q+^#(f, f) - f^# R^#(f) on the mesh."""
    return sc.gain(F, mesh) - F * sc.loss_rate(F, mesh)


def cumulative_trapezoid(Y, dt):
    out = np.zeros_like(Y)
    out[1:] = np.cumsum(0.5 * dt * (Y[1:] + Y[:-1]), axis=0)
    return out


def linear_mild_solve(f0, rate, source, mesh):
    """Trapezoid discretisation of f(t) = f0 e^{-int_0^t R} + int_0^t h(s) e^{-int_s^t R} ds.

    ``rate`` and ``source`` are the node values of R^#(g) and h^#.  The
    recursion only multiplies and adds nonnegative numbers, so the discrete
    solution is monotone in h and antitone in R.
    """
    f0 = np.asarray(f0, dtype=float)
    dt = mesh.dt
    K = mesh.Nt + 1
    out = np.empty((K,) + f0.shape)
    out[0] = f0
    lam = np.zeros_like(f0)
    acc = np.zeros_like(f0)
    for k in range(1, K):
        step = 0.5 * dt * (rate[k - 1] + rate[k])
        decay = np.exp(-step)
        lam += step
        acc = decay * (acc + 0.5 * dt * source[k - 1]) + 0.5 * dt * source[k]
        out[k] = f0 * np.exp(-lam) + acc
    return out


# -- the iteration ---------------------------------------------------------------------

@dataclass
class IterationState:
    C: float
    iteration: int = 0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    gaps: list = field(default_factory=list)
    ordered: list = field(default_factory=list)
    order_defect: list = field(default_factory=list)
    source_norms: list = field(default_factory=list)
    converged: bool = False
    repair_sweeps: int = 0
    envelope_lift: float = 1.0

    @property
    def max_gaps(self):
        return [float(np.max(g)) for g in self.gaps]

    def rates(self):
        """Successive ratios of the maximal gap."""
        m = self.max_gaps
        return [b / a if a > 0 else 0.0 for a, b in zip(m, m[1:])]


@dataclass
class KSResult:
    solution: np.ndarray
    state: IterationState
    mesh: TimeMesh
    grid: object
    alpha: float
    beta: float
    k: float
    norm0: float
    certified: bool
    stats: object = None

    @property
    def bracket(self):
        return self.state.upper - self.state.lower


def _gap(U, L, grid):
    return np.abs(U - L).reshape(U.shape[0], -1).sum(axis=1) * grid.cell_volume


def _supersolution(f0, upper, sc, mesh, max_sweeps=60):
    """Smallest discrete supersolution above the sampled envelope.

    The first upper iterate is u1 = f0 + int Q+^#(u0, u0).  The discrete gain
    can exceed the continuous envelope bound in far tails, so u1 <= u0 may
    fail there; u0 is raised to max(u0, u1) until the step is ordered.
    Returns (u0, u1, Q+^#(u0), sweeps).
    """
    zero = np.zeros_like(upper)
    for sweep in range(max_sweeps):
        gain = sc.gain(upper, mesh)
        nxt = linear_mild_solve(f0, zero, gain, mesh)
        if float(np.max(nxt - upper)) <= 1e-3 * ORDER_SLACK:
            return upper, nxt, gain, sweep
        upper = np.maximum(upper, nxt)
    raise ConsistencyError("no discrete supersolution above the initial envelope (datum too large?)")


def ks_iterate(
    f0,
    grid,
    op,
    mesh,
    alpha,
    beta,
    tol=1e-6,
    max_iter=30,
    k=None,
    override_threshold=False,
    workers=1,
    callback=None,
):
    """Monotone squeeze from l0 = 0 and u0 = C M_{alpha,beta}.

    Returns a :class:`KSResult` holding the bracket midpoint.  Raises
    :class:`ConvergenceError` (with the state attached) when ``max_iter`` is
    reached and :class:`ConsistencyError` when the ordering breaks.
    """
    f0 = grid.flat(np.asarray(f0, dtype=float))
    if np.any(f0 < 0):
        raise ConfigurationError("initial datum must be nonnegative")
    if k is None:
        k = envelope_constant(alpha, beta, op.model, grid.n)
    norm0 = maxwellian_norm(f0, grid, alpha, beta)
    certified = True
    try:
        C = beginning_envelope(norm0, k)
    except ThresholdError:
        if not override_threshold:
            raise
        # beyond the theory: start from twice the datum norm and say so
        C = 2.0 * norm0
        certified = False
        log.warning("threshold override: norm %r > 1/(4k) = %r; run is not certified", norm0, 1 / (4 * k))

    sc = SharpCollision(grid, op, workers)
    K = mesh.Nt + 1
    envelope = np.broadcast_to(MaxwellianEnvelope(alpha, beta, C).sample(grid), (K, grid.NX, grid.NV))
    upper, first_upper, gain_u, sweeps = _supersolution(f0, envelope.copy(), sc, mesh)
    lower = np.zeros_like(upper)
    state = IterationState(C=C, lower=lower, upper=upper)
    state.repair_sweeps = sweeps
    with np.errstate(divide="ignore", invalid="ignore"):
        lift = np.where(envelope > 0, upper / envelope, 1.0)
    state.envelope_lift = float(np.max(lift)) if lift.size else 1.0

    rmax = 0.0
    for it in range(1, max_iter + 1):
        rate_u = sc.loss_rate(upper, mesh)
        rate_l = sc.loss_rate(lower, mesh) if it > 1 else np.zeros_like(upper)
        gain_l = sc.gain(lower, mesh) if it > 1 else np.zeros_like(upper)
        if it > 1:
            gain_u = sc.gain(upper, mesh)
        rmax = max(rmax, float(rate_u.max()))
        new_lower = linear_mild_solve(f0, rate_u, gain_l, mesh)
        new_upper = first_upper if it == 1 else linear_mild_solve(f0, rate_l, gain_u, mesh)

        defect = max(
            float(np.max(lower - new_lower)),
            float(np.max(new_lower - new_upper)),
            float(np.max(new_upper - upper)),
            0.0,
        )
        state.order_defect.append(defect)
        state.ordered.append(defect <= ORDER_SLACK)
        state.source_norms.append(
            maxwellian_norm(cumulative_trapezoid(gain_u, mesh.dt)[-1], grid, alpha, beta)
        )
        lower, upper = new_lower, new_upper
        state.lower, state.upper, state.iteration = lower, upper, it
        gaps = _gap(upper, lower, grid)
        state.gaps.append(gaps)
        log.info("iteration %d: max gap %.3e, ordering defect %.2e", it, gaps.max(), defect)
        if callback is not None:
            callback(state)
        if defect > ORDER_SLACK:
            raise ConsistencyError(f"monotone ordering violated by {defect:.3e} at iteration {it}")
        if gaps.max() < tol:
            state.converged = True
            break
    if mesh.dt * rmax > 0.1:
        log.warning("dt * max R = %.3f exceeds 0.1; refine the time mesh for accuracy", mesh.dt * rmax)
    result = KSResult(
        solution=0.5 * (lower + upper),
        state=state,
        mesh=mesh,
        grid=grid,
        alpha=alpha,
        beta=beta,
        k=k,
        norm0=norm0,
        certified=certified,
        stats=op.stats,
    )
    if not state.converged:
        raise ConvergenceError(
            f"gap {state.max_gaps[-1]:.3e} still above tol {tol:.1e} after {max_iter} iterations", state=result
        )
    return result


def mild_residual(solution, f0, grid, op, mesh, workers=1):
    """L1 norm per node of f(t) - f0 - int_0^t Q^#(f, f), trapezoid in time.

    The loss is taken as f^# R^#(f), exactly as in the linear solves.
    """
    sc = SharpCollision(grid, op, workers)
    Q = sharp_collision(sc, solution, mesh)
    integral = cumulative_trapezoid(Q, mesh.dt)
    defect = solution - grid.flat(f0)[None] - integral
    return np.abs(defect).reshape(defect.shape[0], -1).sum(axis=1) * grid.cell_volume


def stability_probe(f0_a, f0_b, grid, op, mesh, alpha, beta, tol=1e-8, max_iter=30, k=None, workers=1):
    """Run both data and compare ||f_a(t) - f_b(t)||_L1 with a Gronwall bound.

    The rate uses kappa = 4 C_n max_i ||f_i^#||_{alpha,beta} ((pi/beta)^(n/2) sqrt(n) Lv + M1)
    where M1 bounds the first velocity moment of the Maxwellian weight on the box.
    """
    ra = ks_iterate(f0_a, grid, op, mesh, alpha, beta, tol=tol, max_iter=max_iter, k=k, workers=workers)
    rb = ks_iterate(f0_b, grid, op, mesh, alpha, beta, tol=tol, max_iter=max_iter, k=ra.k, workers=workers)
    dist = _gap(ra.solution, rb.solution, grid)
    n = grid.n
    Cn = dimensional_constant(n)
    amp = max(
        max(maxwellian_norm(s, grid, alpha, beta) for s in ra.solution),
        max(maxwellian_norm(s, grid, alpha, beta) for s in rb.solution),
    )
    weight = np.exp(-beta * grid.v_sq)
    m0 = weight.sum() * grid.velocity.cell_volume
    m1 = (weight * np.sqrt(grid.v_sq)).sum() * grid.velocity.cell_volume
    kappa = 4.0 * Cn * amp * (m0 * math.sqrt(n) * grid.Lv + m1)
    bound = np.exp(kappa * mesh.nodes) * l1_norm(np.asarray(f0_a) - np.asarray(f0_b), grid)
    return {"times": mesh.nodes, "distance": dist, "bound": bound, "kappa": kappa, "runs": (ra, rb)}
