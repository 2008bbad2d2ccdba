"""Command line entry point: bochner-recover {run, calibrate, index-set, density-check, selftest}."""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time

import numpy as np
from scipy.integrate import quad

from .harness import CalibrationError, ExperimentConfig, calibrate_alpha, load_config, run_experiment
from .hermite import interpolate_1d, tensor_hermite_matrix
from .leastsq import build_density, draw_batch
from .multiindex import MultiIndex, WeightSystem, enumerate_threshold_set, first_by_weight, is_downward_closed
from .sparsegrid import delta_tensor, delta_tensor_sequential, interpolation_level_set, interpolate_set
from .spatial import ParametricField, SpatialHierarchy, assemble_and_solve

log = logging.getLogger("bochner_recover")


def _config(path) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig()


def cmd_run(args) -> int:
    cfg = _config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.method:
        cfg.method = args.method
    report = run_experiment(cfg, log=log.info)
    for n, e, se in zip(report.budgets, report.median_error, report.median_stderr):
        print(f"n={n:6d}  error={e:.4e}  stderr={se:.1e}")
    lo, hi = report.slope_ci
    print(f"slope {report.slope:.3f} (95% CI {lo:.3f}..{hi:.3f}); predicted {report.predicted_rate:.3f} [{report.regime}]")
    print(f"{'PASS' if report.passed else 'FAIL'} in {report.runtime:.1f}s")
    return 0 if report.passed else 1


def cmd_calibrate(args) -> int:
    cfg = _config(args.config)
    try:
        alpha = calibrate_alpha(cfg, draws=args.draws)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 2
    print(f"alpha = {alpha:.4f}")
    return 0


def cmd_index_set(args) -> int:
    cfg = _config(args.config)
    ws1, ws2 = cfg.weights.systems(cfg.problem)
    q1, q2 = cfg.weights.q1, cfg.weights.q2
    if args.level is None:
        lam = enumerate_threshold_set(ws1, q1, args.xi ** (1.0 / q1))
        text = lam.to_text(ws1)
    else:
        alpha = cfg.alpha if cfg.alpha is not None else 1.0
        lam = interpolation_level_set(args.level, args.xi, ws1, ws2, q1, q2, alpha)
        text = lam.to_text(ws2)
    if args.dump:
        if args.dump == "-":
            sys.stdout.write(text)
        else:
            with open(args.dump, "w") as fh:
                fh.write(text)
    print(f"{len(lam)} indices, kind {lam.kind}, downward closed: {lam.is_downward_closed()}, digest {lam.digest}")
    return 0


def cmd_density_check(args) -> int:
    """Mass, histogram and weight-identity checks for a 1-D density."""
    cfg = _config(args.config)
    ws1, _ = cfg.weights.systems(cfg.problem)
    m = args.m
    # the first coordinate only, so the density can be integrated directly
    ws = WeightSystem.from_sequence([ws1.rho(1)], ws1.eta)
    ordered, logw = first_by_weight([(ws, 1.0)], 8 * m)
    spec = build_density(ordered, m, 8 * m, log_weights=logw)

    def pdf(y):
        return float(spec.density(np.array([[y]]))[0] * math.exp(-0.5 * y * y) / math.sqrt(2 * math.pi))

    mass = sum(quad(pdf, a, b, limit=200)[0] for a, b in ((-np.inf, -10), (-10, 0), (0, 10), (10, np.inf)))
    batch = draw_batch(spec, args.draws, args.seed)
    edges = np.linspace(-7, 7, 57)
    counts, _ = np.histogram(batch.points[:, 0], bins=edges)
    probs = np.array([quad(pdf, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    l1 = float(np.abs(counts / args.draws - probs).sum())
    ulp = float(np.max(np.abs(batch.weights * spec.density(batch.points) - 1.0)) / np.finfo(float).eps)
    print(f"mass {mass:.12f}  histogram L1 {l1:.4f}  max |w rho - 1| {ulp:.1f} ulp")
    ok = abs(mass - 1) < 1e-8 and l1 < 0.01 and ulp <= 1.0
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _selftest_checks():
    rng = np.random.default_rng(0)
    y = rng.uniform(-3, 3, 50)

    def hermite_small():
        worst = 0.0
        for m in range(0, 11):
            for d in range(m + 1):
                p = interpolate_1d(m, lambda t, d=d: t**d)
                worst = max(worst, float(np.max(np.abs(p(y) - y**d) / np.maximum(1, np.abs(y) ** d))))
        return worst < 1e-9, f"max relative error {worst:.1e}"

    def combination():
        f = lambda Y: np.exp(0.3 * Y[:, 0] - 0.2 * Y[:, 1])  # noqa: E731
        Y = rng.standard_normal((20, 2))
        s = MultiIndex.from_dense([2, 1])
        gap = float(np.max(np.abs(delta_tensor(s, f, 2)(Y) - delta_tensor_sequential(s, f, 2)(Y))))
        return gap < 1e-10, f"gap {gap:.1e}"

    def gpc():
        members = [MultiIndex.from_dense(v) for v in ([0, 0], [1, 0], [0, 1], [2, 0], [1, 1])]
        assert is_downward_closed(members)
        coef = rng.standard_normal(len(members))
        f = lambda Y: tensor_hermite_matrix(members, Y) @ coef  # noqa: E731
        interp = interpolate_set(members, f, dim=2, record_points=False)
        got = np.array([interp.coefficient_of(s) for s in members]).ravel()
        gap = float(np.max(np.abs(got - coef)))
        return gap < 1e-9, f"coefficient error {gap:.1e}"

    def fem():
        hier = SpatialHierarchy(6)
        sol = assemble_and_solve(ParametricField(scale=0.0), hier, 6, np.zeros(1))
        x = hier.interior_nodes(6)
        gap = float(np.max(np.abs(sol.coefficients - x * (1 - x) / 2)))
        return gap < 1e-12, f"nodal error {gap:.1e}"

    return {"hermite": hermite_small, "combination": combination, "gpc": gpc, "fem": fem}


def cmd_selftest(args) -> int:
    failed = 0
    for name, check in _selftest_checks().items():
        t0 = time.time()
        ok, detail = check()
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<12} {detail}  ({time.time() - t0:.2f}s)")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bochner-recover", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a convergence experiment")
    p.add_argument("--config")
    p.add_argument("--output-dir")
    p.add_argument("--method")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="measure the spatial rate alpha")
    p.add_argument("--config")
    p.add_argument("--draws", type=int, default=5)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("index-set", help="enumerate an index set")
    p.add_argument("--config")
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--level", type=int, help="multi-level interpolation set of this level")
    p.add_argument("--dump", nargs="?", const="-", help="write the set as text (stdout by default)")
    p.set_defaults(func=cmd_index_set)

    p = sub.add_parser("density-check", help="check a 1-D sampling density")
    p.add_argument("--config")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_density_check)

    p = sub.add_parser("selftest", help="quick correctness checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
