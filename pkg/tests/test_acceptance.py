"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
Tolerances and runtime limits are the pinned acceptance values.
"""

import io
import math
import re
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from inelastic_ks import cli
from inelastic_ks.bounds import random_time_samples, verify_gain_envelope, verify_time_gaussian_bound
from inelastic_ks.collision import CollisionOperator, angular_quadrature, dimensional_constant, sphere_check
from inelastic_ks.config import reference_scenario_path
from inelastic_ks.diagnostics import conservation_audit, density_decay, observed_order, weak_residual
from inelastic_ks.grid import MaxwellianEnvelope, PhaseGrid, VelocityLattice
from inelastic_ks.kinematics import energy_deficit, impact_component, post_collide, pre_collide
from inelastic_ks.restitution import (
    Constant,
    Elastic,
    MonotoneDecreasing,
    Viscoelastic,
    phi_beta,
    phi_beta_grid,
    sphere_area,
)
from inelastic_ks.solver import TimeMesh, envelope_constant, ks_iterate, mild_residual

RESULTS = {}


def report(number, ok, detail):
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return ok


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# -- shared reference runs ----------------------------------------------------------------

REF_GRID = PhaseGrid(2, 5.0, 5.0, 16, 16)


def _reference_run(model, Nt, tol):
    op = CollisionOperator(REF_GRID, model, angular_quadrature(2, 64))
    k = envelope_constant(1.0, 1.0, model, 2)
    f0 = MaxwellianEnvelope(1.0, 1.0, 0.5 / (4.0 * k)).sample(REF_GRID)
    mesh = TimeMesh(1.0, Nt)
    result = ks_iterate(f0, REF_GRID, op, mesh, 1.0, 1.0, tol=tol, max_iter=30, k=k)
    return {"op": op, "f0": f0, "mesh": mesh, "result": result}


@pytest.fixture(scope="module")
def reference_runs():
    runs = {}
    t0 = time.perf_counter()
    for name, model in (("elastic", Elastic()), ("constant0.8", Constant(0.8))):
        run = _reference_run(model, 32, 1e-6)
        run["residual"] = mild_residual(run["result"].solution, run["f0"], REF_GRID, run["op"], run["mesh"])
        runs[name] = run
    runs["seconds"] = time.perf_counter() - t0
    return runs


# -- criteria -----------------------------------------------------------------------------

def test_criterion_01_dimensional_constant():
    (c3, num), dt = _timed(lambda: (dimensional_constant(3), sphere_check(3)))
    ok = c3 == 2 * math.pi and abs(num - c3) <= 1e-8 and dt < 1.0
    assert report(1, ok, f"C_3 = {c3!r}, sphere quadrature error {abs(num - c3):.2e}, {dt:.2f} s")


def test_criterion_02_elastic_phi():
    xs = phi_beta_grid()

    def run():
        return max(float(np.max(np.abs(phi_beta(Elastic(), xs, 1.0, n) - sphere_area(n - 1)))) for n in (2, 3))

    err, dt = _timed(run)
    ok = err <= 1e-8 and dt < 5.0
    assert report(2, ok, f"max |phi - |S^(n-1)|| = {err:.2e} over {xs.size} x per n, {dt:.2f} s")


def test_criterion_03_micro_identities():
    rng = np.random.default_rng(12345)
    models = {"elastic": Elastic(), "constant0.5": Constant(0.5), "monotone": MonotoneDecreasing(1.0, 1.0),
              "visco0.5": Viscoelastic(0.5)}

    def run():
        worst = dict(momentum=0.0, reflection=0.0, roundtrip=0.0, energy=0.0)
        for model in models.values():
            n = 3
            xi = rng.normal(scale=2.0, size=(10_000, n))
            xs = rng.normal(scale=2.0, size=(10_000, n))
            nh = rng.normal(size=(10_000, n))
            nh /= np.linalg.norm(nh, axis=1, keepdims=True)
            post = post_collide(xi, xs, nh, model)
            worst["momentum"] = max(worst["momentum"], float(np.max(np.abs(post.xi + post.xi_star - xi - xs))))
            un = impact_component(xi, xs, nh)
            refl = impact_component(post.xi, post.xi_star, nh) + model.e(np.abs(un)) * un
            worst["reflection"] = max(worst["reflection"], float(np.max(np.abs(refl))))
            back = pre_collide(post.xi, post.xi_star, nh, model)
            rt = np.max(np.abs(np.concatenate([back.xi - xi, back.xi_star - xs])) / np.maximum(1.0, np.abs(np.concatenate([xi, xs]))))
            worst["roundtrip"] = max(worst["roundtrip"], float(rt))
            delta = energy_deficit(xi, xs, nh, model, check=False)
            closed = -0.5 * (1.0 - model.e(np.abs(un)) ** 2) * un**2
            worst["energy"] = max(worst["energy"], float(np.max(np.abs(delta - closed))))
        return worst

    w, dt = _timed(run)
    ok = w["momentum"] <= 1e-12 and w["reflection"] <= 1e-12 and w["roundtrip"] <= 1e-8 and w["energy"] <= 1e-10 and dt < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in w.items())
    assert report(3, ok, f"{detail} (4 models x 1e4 samples), {dt:.2f} s")


def test_criterion_04_time_gaussian_bound():
    models = [Elastic(), Constant(0.5), MonotoneDecreasing(1.0, 1.0), Viscoelastic(0.5)]
    rep, dt = _timed(lambda: verify_time_gaussian_bound(random_time_samples(models, 1000, rng=2024), steps=10_000))
    ok = rep.violations == 0 and dt < 30
    assert report(4, ok, f"{rep.lhs.size} samples, {rep.violations} violations, max LHS/RHS {rep.ratio.max():.4f}, {dt:.1f} s")


def test_criterion_05_gain_envelope():
    k = envelope_constant(1.0, 1.0, Elastic(), 2)
    env = MaxwellianEnvelope(1.0, 1.0, 0.1)
    rep, dt = _timed(lambda: verify_gain_envelope(env, REF_GRID, 1.0, 1.0, 1.0, Elastic(), k, slack=1.1))
    ok = rep.passed and dt < 300
    assert report(5, ok, f"max integral/(k M ||f||^2) = {rep.max_ratio:.4f} (slack 1.1), {rep.violations} violations, {dt:.1f} s")


def test_criterion_06_operator_properties():
    lat = VelocityLattice(2, 32, 5.0)
    quad = angular_quadrature(2, 64)
    v = lat.points
    f = np.exp(-np.sum((v - [0.5, 0.0]) ** 2, axis=1))
    g = np.exp(-2.0 * np.sum((v + [0.3, 0.2]) ** 2, axis=1))

    def run():
        out = {}
        for name, model in (("elastic", Elastic()), ("constant0.5", Constant(0.5))):
            op = CollisionOperator(lat, model, quad)
            Qp, Qm = op.gain(f), op.loss(f)
            Q = Qp - Qm
            out[name] = dict(
                p2=abs(op.gain(f, g).sum() - op.loss(f, g).sum()) / op.loss(f, g).sum(),
                p3=abs(op.loss(f, g).sum() - op.loss(g, f).sum()) / op.loss(f, g).sum(),
                mass=abs(Q.sum()) / Qm.sum(),
                mom=float(np.max(np.abs(Q @ v)) / (Qm @ np.sqrt(lat.sq))),
                energy=float(Q @ lat.sq) / float(Qm @ lat.sq),
            )
        return out

    m, dt = _timed(run)
    ok = dt < 120
    for r in m.values():
        ok &= r["p2"] <= 0.02 and r["p3"] <= 1e-10 and r["mass"] <= 1e-3 and r["mom"] <= 1e-3 and r["energy"] <= 1e-8
    detail = "; ".join(
        f"{nm}: P2 {r['p2']:.1e} P3 {r['p3']:.1e} mass {r['mass']:.1e} mom {r['mom']:.1e} energy {r['energy']:+.2e}"
        for nm, r in m.items()
    )
    assert report(6, ok, f"{detail}; {dt:.1f} s")


def test_criterion_07_squeeze(reference_runs):
    ok = reference_runs["seconds"] < 900
    parts = []
    for name in ("elastic", "constant0.8"):
        run = reference_runs[name]
        st = run["result"].state
        gaps = st.max_gaps
        mono = all(b < a for a, b in zip(gaps, gaps[1:]))
        res = float(run["residual"].max())
        ok &= all(st.ordered) and mono and st.converged and gaps[-1] < 1e-6 and st.iteration <= 30 and res < 1e-4
        parts.append(
            f"{name}: {st.iteration} it, gaps {' '.join(f'{x:.1e}' for x in gaps)}, "
            f"max order defect {max(st.order_defect):.1e}, residual {res:.1e}"
        )
    assert report(7, ok, "; ".join(parts) + f"; {reference_runs['seconds']:.0f} s")


def test_criterion_08_conservation(reference_runs):
    ok = True
    parts = []
    for name, elastic in (("elastic", True), ("constant0.8", False)):
        run = reference_runs[name]
        a = conservation_audit(run["result"].solution, REF_GRID, run["mesh"].nodes, elastic)
        ok &= a.mass_drift < 1e-3 and a.momentum_drift < 1e-3 and a.energy_ok
        energy = f"drift {a.energy_drift:.1e}" if elastic else f"max step {a.energy_steps.max():+.1e}"
        parts.append(f"{name}: mass {a.mass_drift:.1e}, momentum {a.momentum_drift:.1e}, energy {energy}")
    assert report(8, ok, "; ".join(parts))


def test_criterion_09_weak_residual():
    model = Constant(0.8)
    res = {}
    for Nt in (32, 64):
        run = _reference_run(model, Nt, 1e-9)
        res[Nt] = weak_residual(run["result"].solution, REF_GRID, run["op"], run["mesh"])
    order = observed_order(res[32].residual, res[64].residual)
    ok = bool(np.all(res[32].residual < 1e-3) and np.all(order >= 1.5))
    detail = ", ".join(f"{nm} {r:.1e} (order {o:.2f})" for nm, r, o in zip(res[32].names, res[32].residual, order))
    assert report(9, ok, detail)


def test_criterion_10_density_decay():
    env = MaxwellianEnvelope(1.0, 1.0, 1.0)
    fits, dt = _timed(lambda: {n: density_decay(env, n) for n in (2, 3)})
    ok = dt < 10 and all(f.conclusive and abs(f.slope + n) <= 0.2 * n for n, f in fits.items())
    assert report(10, ok, ", ".join(f"n={n} slope {f.slope:.4f}" for n, f in fits.items()) + f", {dt:.1f} s")


def test_criterion_11_threshold_cli():
    path = reference_scenario_path("reference")
    with redirect_stdout(io.StringIO()):
        code_hi = cli.main(["threshold", "--config", path, "--fraction", "2.0"])
    buf = io.StringIO()
    with redirect_stdout(buf):
        code_lo = cli.main(["threshold", "--config", path, "--fraction", "0.5"])
    nums = dict(re.findall(r"^(k|C|norm0): (\S+)$", buf.getvalue(), re.M))
    k, C, N = (float(nums[x]) for x in ("k", "C", "norm0"))
    defect = abs(N + k * C * C - C)
    ok = code_hi == 1 and code_lo == 0 and defect <= 1e-14
    assert report(11, ok, f"exit {code_hi} at 2x, exit {code_lo} at 0.5x, |norm0 + k C^2 - C| = {defect:.1e}")


def test_summary(capsys):
    with capsys.disabled():
        print()
        for key in sorted(RESULTS):
            print(RESULTS[key])


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
