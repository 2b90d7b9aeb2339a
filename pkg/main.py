#!/usr/bin/env python3
"""
Command line entry point of the forced-map workbench
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

from analysis import CurveRole, SplitMix64, capture_experiment, fractal_scan, lyapunov_curve
from checks import check_suite
from cohomology import coefficient_decay_report, critical_b, critical_b_bisect, mu_residual, solve_bold_mu
from curves import CURVE_NAMES
from errors import InvalidParameterError, WorkbenchError
from forcing import TWO_PI, parse_forcing
from maps import GOLDEN_OMEGA, MapParams, SystemKind
from solver_config import solver_config
from workbench import export_curves, load_sweep_config, run_sweep, sweep_summary, verify_manifest, write_frame, \
    write_manifest

logger = logging.getLogger(__name__)

SYSTEMS = [k.value for k in SystemKind]


def _omega(text: str) -> float:
    if text.strip().lower() == 'golden':
        return GOLDEN_OMEGA
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"omega must be 'golden' or a number, got '{text}'")


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got '{text}'")


def _add_selectors(p: argparse.ArgumentParser, with_b: bool = True):
    p.add_argument('--system', choices=SYSTEMS, required=True)
    p.add_argument('--a', type=float, required=True)
    p.add_argument('--delta', type=float, default=1.0)
    p.add_argument('--omega', type=_omega, default=GOLDEN_OMEGA)
    p.add_argument('--g', default='default', help="forcing, e.g. 'cos:1,1' or 'default'")
    if with_b:
        group = p.add_mutually_exclusive_group()
        group.add_argument('--b', type=float)
        group.add_argument('--b-rel', type=float, help='b as a multiple of b*')


def _params(args) -> MapParams:
    kind = SystemKind(args.system)
    g = parse_forcing(args.g)
    b = getattr(args, 'b', None)
    b_rel = getattr(args, 'b_rel', None)
    if b_rel is not None:
        b = b_rel * critical_b(kind, args.a, args.omega, g, args.delta).b_star
    return MapParams(kind, args.a, b or 0.0, args.delta, args.omega, g)


def cmd_solve(args) -> int:
    params = _params(args)
    sol = solve_bold_mu(params.kind, params.a, params.omega, params.g, delta=params.delta)
    print(f'constant term: {sol.shape.constant_term + sol.affine_b0:.17g}')
    if sol.affine_const:
        print(f'affine constant: {sol.affine_const:.17g}')
    for k in range(1, sol.shape.degree + 1):
        print(f'k={k}  a~={sol.shape.sin_coeffs[k]:.17g}  b~={sol.shape.cos_coeffs[k]:.17g}')
    print(coefficient_decay_report(sol, params.g).to_string(index=False))
    residual = mu_residual(sol, params.a, params.b, params.omega, params.g, solver_config.get_grid('diagnostic'))
    print(f'residual at b={params.b:.17g}: {residual:.3e}')
    return 0


def cmd_critical_b(args) -> int:
    kind, g = SystemKind(args.system), parse_forcing(args.g)
    finder = critical_b_bisect if args.bisect else critical_b
    crit = finder(kind, args.a, args.omega, g, delta=args.delta)
    print(f'b* = {crit.b_star:.17g}')
    print(f'theta* = {crit.theta_star:.17g}')
    print(f'colliding = {crit.colliding.value}')
    print(f'method = {crit.method.value}')
    return 0


def cmd_curves(args) -> int:
    written = export_curves(_params(args), args.n, args.grid, args.which.split(','), args.out)
    for name, path in written.items():
        print(f'{name}: {path}')
    return 0


def cmd_lyapunov(args) -> int:
    params = _params(args)
    theta_seed = TWO_PI * SplitMix64(args.seed).uniform()
    report = lyapunov_curve(params, CurveRole(args.which), args.steps, args.burn_in, theta_seed)
    print(f'exponent = {report.value:.17g}')
    print(f'flat fraction = {report.flat_fraction:.6f}')
    return 0


def cmd_fractal_scan(args) -> int:
    params = _params(args)
    b_star = critical_b(params.kind, params.a, params.omega, params.g, params.delta).b_star
    bounds = _float_list(args.interval)
    if len(bounds) != 2:
        raise InvalidParameterError(f"interval must be 'lo,hi', got '{args.interval}'")
    lo, hi = bounds
    frame = fractal_scan(params, [r * b_star for r in args.b_rel_list], (lo, hi), args.n_converge, args.grid)
    print(frame.to_string(index=False))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = write_frame(frame, out / 'fractal_scan.csv')
        parameters = params.describe()
        parameters.update({'b_rel_list': ','.join(f'{r:.17g}' for r in args.b_rel_list),
                           'interval': f'{lo:.17g},{hi:.17g}', 'b_star': f'{b_star:.17g}'})
        write_manifest(out, 'fractal-scan', parameters, [csv_path], params.omega)
    return 0


def cmd_capture(args) -> int:
    stats = capture_experiment(_params(args), args.trials, args.max_iters, args.seed, args.workers)
    print(f'captured {stats.captured}/{stats.trials} ({stats.fraction:.4f}) within {stats.max_iters} iterations')
    return 0


def cmd_sweep(args) -> int:
    overrides = {'output_dir': args.out, 'workers': args.workers, 'persist': True if args.persist else None}
    cfg = load_sweep_config(args.config, overrides)
    result = run_sweep(cfg, args.out)
    print(f'{len(result.frame)} rows written to {result.csv_path}; status {sweep_summary(result.frame)}')
    return 0


def cmd_check(args) -> int:
    report = check_suite(args.level)
    report.print_report()
    return 0 if report.passed else 2


def cmd_verify(args) -> int:
    problems = verify_manifest(args.manifest)
    for problem in problems:
        print(problem)
    if problems:
        return 3
    print('all outputs match')
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='sna-workbench', description='Quasiperiodically forced map workbench')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('solve', help='solve for the repelling curve and print its coefficients')
    _add_selectors(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser('critical-b', help='bifurcation value b*')
    _add_selectors(p, with_b=False)
    p.add_argument('--bisect', action='store_true', help='use bisection on the fiber gap')
    p.set_defaults(func=cmd_critical_b)

    p = sub.add_parser('curves', help='export curves as CSV')
    _add_selectors(p)
    p.add_argument('--n', type=int, default=40)
    p.add_argument('--grid', type=int, default=solver_config.get_grid('export'))
    p.add_argument('--which', default='phi_n,mu', help=f"comma separated subset of {','.join(CURVE_NAMES)}")
    p.add_argument('--out', default=solver_config.output_dir)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser('lyapunov', help='Lyapunov exponent along a curve')
    _add_selectors(p)
    p.add_argument('--which', choices=[r.value for r in CurveRole], default=CurveRole.ATTRACTING.value)
    p.add_argument('--steps', type=int, default=100_000)
    p.add_argument('--burn-in', type=int, default=1000)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser('fractal-scan', help='Lipschitz growth of converged curves as b approaches b*')
    _add_selectors(p, with_b=False)
    p.add_argument('--b-rel-list', type=_float_list, default=[0.5, 0.9, 0.99, 0.999])
    p.add_argument('--interval', default=f'0,{math.pi / 4!r}')
    p.add_argument('--n-converge', type=int, default=200)
    p.add_argument('--grid', type=int, default=solver_config.get_grid('scan'))
    p.add_argument('--out')
    p.set_defaults(func=cmd_fractal_scan)

    p = sub.add_parser('capture', help='random orbits falling onto the flat branch')
    _add_selectors(p)
    p.add_argument('--trials', type=int, default=1000)
    p.add_argument('--max-iters', type=int, default=10_000)
    p.add_argument('--seed', type=int, default=1)
    p.add_argument('--workers', type=int, default=solver_config.workers)
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser('sweep', help='diagnostics over an (a, b) grid')
    p.add_argument('--config', required=True)
    p.add_argument('--out')
    p.add_argument('--workers', type=int)
    p.add_argument('--persist', action='store_true', help='also store the rows in the database')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('check', help='run the self-check battery')
    p.add_argument('--level', choices=['quick', 'full'], default='quick')
    p.set_defaults(func=cmd_check)

    p = sub.add_parser('verify', help='compare output files against their manifest checksums')
    p.add_argument('--manifest', required=True)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=getattr(logging, solver_config.log_level, logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WorkbenchError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f'error: {e}', file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f'error: {e}', file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
