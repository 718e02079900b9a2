"""Command line entry point: ``inelastic-ks {check,threshold,run}``.

Exit codes: 0 success, 1 threshold or verdict failure, 2 configuration
error, 3 non-converged iteration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import diagnostics
from .collision import CollisionOperator, angular_quadrature
from .config import load_scenario
from .errors import ConfigurationError, ConvergenceError, DomainError, ThresholdError
from .grid import maxwellian_norm, write_snapshot
from .restitution import Elastic, check_assumptions, model_from_dict
from .solver import TimeMesh, beginning_envelope, envelope_constant, ks_iterate, mild_residual

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3

log = logging.getLogger("inelastic_ks")


def _print(*lines):
    for line in lines:
        print(line)


def cmd_check(args):
    if args.config:
        sc = load_scenario(args.config)
        block, beta, n = sc.model_block, sc.beta, sc.n
    else:
        try:
            block = json.loads(args.model)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"--model: malformed JSON ({err.msg} at column {err.colno})") from None
        beta, n = args.beta, args.n
    if n not in (2, 3):
        raise ConfigurationError(f"dimension must be 2 or 3, got {n}")
    if not beta > 0:
        raise ConfigurationError("beta must be positive")
    model = model_from_dict(block)
    report = check_assumptions(model, beta, n)
    _print(*report.lines())
    _print(f"phi_beta sup: {report.phi_sup!r}", f"verdict: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _threshold_numbers(sc):
    model = sc.model
    k = envelope_constant(sc.alpha, sc.beta, model, sc.n)
    f0 = sc.initial_datum(k)
    norm = maxwellian_norm(f0, sc.grid, sc.alpha, sc.beta)
    return model, k, f0, norm


def cmd_threshold(args):
    sc = load_scenario(args.config)
    if args.fraction is not None:
        sc.initial = {key: v for key, v in sc.initial.items() if key != "amplitude"}
        sc.initial["threshold_fraction"] = args.fraction
    _model, k, _f0, norm = _threshold_numbers(sc)
    admissible = 1.0 / (4.0 * k)
    _print(f"k: {k!r}", f"admissible (1/(4k)): {admissible!r}", f"norm0: {norm!r}")
    try:
        C = beginning_envelope(norm, k)
    except ThresholdError:
        _print("verdict: FAIL (datum above threshold)")
        return EXIT_FAIL
    _print(f"C: {C!r}", f"check norm0 + k C^2 - C: {norm + k * C * C - C!r}", "verdict: PASS")
    return EXIT_OK


def _write_gaps(path, state):
    K = state.gaps[0].size if state.gaps else 0
    header = ["n", "max_gap"] + [f"gap_t{j}" for j in range(K)]
    rows = [[i + 1, float(g.max()), *map(float, g)] for i, g in enumerate(state.gaps)]
    diagnostics.write_csv(path, header, rows)


def cmd_run(args):
    sc = load_scenario(args.config)
    if args.tol is not None:
        sc.tol = args.tol
    if args.max_iter is not None:
        sc.max_iter = args.max_iter
    if args.workers is not None:
        sc.workers = args.workers
    override = args.override_threshold or sc.override_threshold
    out = args.out or sc.out_dir
    os.makedirs(out, exist_ok=True)

    model, k, f0, norm = _threshold_numbers(sc)
    quad = angular_quadrature(sc.n, sc.n_ang)
    op = CollisionOperator(sc.grid, model, quad, scheme=sc.scheme)
    if not op.stats.valid:
        log.warning("skipped event weight %.2e exceeds 0.1%%; run flagged invalid", op.stats.skipped_fraction)
    mesh = TimeMesh(sc.T, sc.Nt)
    try:
        result = ks_iterate(
            f0, sc.grid, op, mesh, sc.alpha, sc.beta,
            tol=sc.tol, max_iter=sc.max_iter, k=k, override_threshold=override, workers=sc.workers,
        )
    except ThresholdError as err:
        _print(f"threshold: norm0 {err.norm!r} > admissible {err.admissible!r}; use --override-threshold")
        return EXIT_FAIL
    except ConvergenceError as err:
        _write_gaps(os.path.join(out, "gaps.csv"), err.state.state)
        _print(f"not converged: {err}")
        return EXIT_NOT_CONVERGED
    _write_gaps(os.path.join(out, "gaps.csv"), result.state)

    for t in sc.snapshots:
        kk = int(round(min(t, sc.T) / mesh.dt))
        tt = float(mesh.nodes[kk])
        ext = "bin" if sc.snapshot_format == "bin" else "csv"
        write_snapshot(os.path.join(out, f"snapshot_{kk:04d}.{ext}"), result.solution[kk], sc.grid, tt, fmt=sc.snapshot_format)

    elastic = isinstance(model, Elastic)
    report = diagnostics.build_report(result, f0, op, elastic, weak=sc.weak_residual, workers=sc.workers)
    res = mild_residual(result.solution, f0, sc.grid, op, mesh, sc.workers)
    report.constants["max_mild_residual"] = float(res.max())
    report.constants["certified"] = result.certified
    report.verdicts["mild_residual"] = bool(res.max() <= 10 * sc.tol + 1e-9)
    report.write(out)
    _print(
        f"converged in {result.state.iteration} iterations, final gap {result.state.max_gaps[-1]!r}",
        f"k: {k!r}  C: {result.state.C!r}  norm0: {norm!r}  certified: {result.certified}",
        f"report: {os.path.join(out, 'report.txt')}",
    )
    for key, ok in report.verdicts.items():
        _print(f"{key}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="inelastic-ks", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log iteration progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="sampled restitution assumption checks")
    c.add_argument("--config", help="scenario file; its model block, beta and n are used")
    c.add_argument("--model", default='{"kind": "elastic"}', help="restitution block as JSON")
    c.add_argument("--beta", type=float, default=1.0)
    c.add_argument("--n", type=int, default=3)
    c.set_defaults(fn=cmd_check)

    t = sub.add_parser("threshold", help="envelope constant and small-data verdict")
    t.add_argument("--config", required=True)
    t.add_argument("--fraction", type=float, help="override the datum norm as a fraction of 1/(4k)")
    t.set_defaults(fn=cmd_threshold)

    r = sub.add_parser("run", help="monotone iteration plus diagnostics")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (default from the scenario)")
    r.add_argument("--workers", type=int)
    r.add_argument("--override-threshold", action="store_true", help="run above the threshold, uncertified")
    r.add_argument("--tol", type=float)
    r.add_argument("--max-iter", type=int)
    r.set_defaults(fn=cmd_run)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigurationError, DomainError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
