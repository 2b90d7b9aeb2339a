#!/usr/bin/env python3
"""
Self-check battery over all numerical modules
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from analysis import (CurveRole, SplitMix64, area_estimate, capture_experiment, log_psi_integral, lyapunov_curve,
                      uniform_contraction_solve)
from cohomology import critical_b, critical_b_bisect, fiber_gap, mu_residual, solve_bold_mu
from curves import CurveEvaluator, convergence_report, eval_lambda_n, eval_psi_n, lambda_scale, zero_count
from errors import WorkbenchError
from forcing import TWO_PI, parse_forcing, project_samples, trig_derivative, trig_eval, uniform_grid
from maps import GOLDEN_OMEGA, MapParams, SystemKind, breakpoints, h_value

logger = logging.getLogger(__name__)

LEVELS = {
    'quick': {'grid': 4096, 'n_max': 10, 'n_converge': 40, 'trials': 200, 'psi_n': 5},
    'full': {'grid': 2 ** 15, 'n_max': 40, 'n_converge': 80, 'trials': 1000, 'psi_n': 10},
}

SAMPLE_SLOPES = {
    SystemKind.PITCHFORK_SUPER: 2.0,
    SystemKind.PITCHFORK_SUB: 2.0,
    SystemKind.SADDLE_NODE: 2.0,
    SystemKind.PERIOD_DOUBLING: -3.0,
}

HFunction = Callable[[MapParams, np.ndarray], np.ndarray]


@dataclass
class CheckResult:
    section: str
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class CheckReport:
    level: str
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.results],
                            columns=['section', 'name', 'passed', 'detail', 'seconds'])

    def print_report(self):
        section = None
        for r in self.results:
            if r.section != section:
                section = r.section
                print(f'\n=== {section.upper()} ===')
            mark = 'PASS' if r.passed else 'FAIL'
            print(f'{mark} {r.name}: {r.detail} ({r.seconds:.2f}s)')
        failed = sum(1 for r in self.results if not r.passed)
        print(f'\n=== {len(self.results) - failed}/{len(self.results)} checks passed ({self.level}) ===')


def _reference(kind: SystemKind = SystemKind.PERIOD_DOUBLING, g: str = 'default', rel: float = 1.0) -> MapParams:
    a = SAMPLE_SLOPES[kind]
    forcing = parse_forcing(g)
    crit = critical_b(kind, a, GOLDEN_OMEGA, forcing)
    return MapParams(kind, a, rel * crit.b_star, g=forcing)


def check_projection(settings, h: HFunction):
    p = parse_forcing('cos:0.3,1,-0.5;sin:0.2,0.7')
    back = project_samples(np.asarray(trig_eval(p, uniform_grid(64))), p.degree)
    coeff_err = float(max(np.abs(back.cos_coeffs - p.cos_coeffs).max(), np.abs(back.sin_coeffs - p.sin_coeffs).max()))
    theta = uniform_grid(256)
    step = 1e-5
    numeric = (np.asarray(trig_eval(p, theta + step)) - np.asarray(trig_eval(p, theta - step))) / (2 * step)
    deriv_err = float(np.max(np.abs(numeric - np.asarray(trig_eval(trig_derivative(p), theta)))))
    return coeff_err <= 1e-12 and deriv_err <= 1e-8, f'projection error {coeff_err:.1e}, derivative error {deriv_err:.1e}'


def check_continuity(settings, h: HFunction):
    eps = 1e-9
    worst = 0.0
    for kind, a in SAMPLE_SLOPES.items():
        params = MapParams(kind, a)
        for x in breakpoints(params):
            jump = abs(float(h(params, x + eps)) - float(h(params, x - eps))) - 2 * abs(a) * eps
            worst = max(worst, jump)
    return worst <= 1e-12, f'largest jump across a breakpoint {worst:.1e}'


def check_residuals(settings, h: HFunction):
    worst = 0.0
    for kind, a in SAMPLE_SLOPES.items():
        for spec in ('default', 'sin:1'):
            g = parse_forcing(spec)
            b = 0.5 * critical_b(kind, a, GOLDEN_OMEGA, g).b_star
            sol = solve_bold_mu(kind, a, GOLDEN_OMEGA, g)
            worst = max(worst, mu_residual(sol, a, b, GOLDEN_OMEGA, g, settings['grid']))
    return worst <= 1e-10, f'max residual {worst:.1e} at b = b*/2'


def check_critical_cross(settings, h: HFunction):
    g = parse_forcing('default')
    worst = 0.0
    for kind in (SystemKind.PITCHFORK_SUPER, SystemKind.SADDLE_NODE, SystemKind.PERIOD_DOUBLING):
        a = SAMPLE_SLOPES[kind]
        closed = critical_b(kind, a, GOLDEN_OMEGA, g).b_star
        bisected = critical_b_bisect(kind, a, GOLDEN_OMEGA, g).b_star
        worst = max(worst, abs(closed - bisected) / closed)
    return worst <= 1e-9, f'closed form vs bisection, relative {worst:.1e}'


def check_fiber_gap(settings, h: HFunction):
    kind, a, g = SystemKind.PERIOD_DOUBLING, -3.0, parse_forcing('default')
    b_star = critical_b(kind, a, GOLDEN_OMEGA, g).b_star
    worst = 0.0
    for rel in (0.3, 0.8, 1.0):
        dist = fiber_gap(kind, a, rel * b_star, GOLDEN_OMEGA, g)
        worst = max(worst, abs(dist.direct - dist.identity))
    return worst <= 1e-9, f'direct vs one-step identity {worst:.1e}'


def check_monotone(settings, h: HFunction):
    params = _reference()
    theta = uniform_grid(min(settings['grid'], 4096))
    previous = None
    lowest, rise = math.inf, -math.inf
    for n in range(settings['n_max'] + 1):
        lam = np.asarray(eval_lambda_n(CurveEvaluator(params, n), theta))
        lowest = min(lowest, float(lam.min()))
        if previous is not None:
            rise = max(rise, float(np.max(lam - previous)))
        previous = lam
    return lowest >= -1e-10 and rise <= 1e-10, f'min lambda {lowest:.1e}, max increase {rise:.1e}'


def check_psi(settings, h: HFunction):
    params = _reference()
    rng = SplitMix64(7)
    theta = TWO_PI * np.array([rng.uniform() for _ in range(1024)])
    ceiling = params.a ** 2 + 1e-9
    previous = None
    ok = True
    for n in range(settings['psi_n'] + 1):
        ev = CurveEvaluator(params, n)
        psi = np.asarray(eval_psi_n(ev, theta, scale=lambda_scale(ev)))
        ok &= bool(np.all(psi >= 0) and np.all(psi <= ceiling))
        if previous is not None:
            ok &= bool(np.all(previous <= psi + 1e-9))
        previous = psi
    return ok, f'bounds and monotonicity for n <= {settings["psi_n"]}'


def check_zeros(settings, h: HFunction):
    params = _reference()
    counts = {n: zero_count(CurveEvaluator(params, n)).count for n in (0, 3)}
    return all(c == n + 1 for n, c in counts.items()), f'zero counts {counts}'


def check_convergence(settings, h: HFunction):
    before = convergence_report(CurveEvaluator(_reference(rel=0.9)), settings['n_converge'])
    at = convergence_report(CurveEvaluator(_reference()), settings['n_converge'])
    return before.cauchy_uniform and not at.cauchy_uniform, \
        f'uniform at 0.9b*: {before.cauchy_uniform}, at b*: {at.cauchy_uniform}'


def check_lyapunov(settings, h: HFunction):
    repelling = lyapunov_curve(_reference(rel=0.5), CurveRole.REPELLING, steps=10_000)
    attracting = lyapunov_curve(_reference(), CurveRole.ATTRACTING, steps=20_000)
    ok = abs(repelling.value - math.log(3.0)) <= 1e-6 and attracting.neg_infinity and attracting.flat_fraction > 0.1
    return ok, f'repelling {repelling.value:.9f}, attracting flat fraction {attracting.flat_fraction:.3f}'


def check_capture(settings, h: HFunction):
    stats = capture_experiment(_reference(), trials=settings['trials'], max_iters=10_000, seed=1)
    return stats.fraction >= 0.99, f'{stats.captured}/{stats.trials} captured'


def check_uniform(settings, h: HFunction):
    params = MapParams(SystemKind.SADDLE_NODE, 0.5, 0.3)
    first = uniform_contraction_solve(params, grid_size=256, seed_curve=0.0)
    second = uniform_contraction_solve(params, grid_size=256, seed_curve=10.0)
    gap = float(np.max(np.abs(first.values - second.values)))
    return gap <= 2e-10, f'seed independence {gap:.1e}'


def check_area(settings, h: HFunction):
    area = area_estimate(_reference(), 40, settings['grid'])
    return area >= 0.05, f'mean lambda_40 {area:.4f}'


def check_log_psi(settings, h: HFunction):
    value = log_psi_integral(_reference(), 5, grid_size=settings['grid'])
    return value <= 0.05, f'log psi integral {value:.4f}'


QUICK_CHECKS = [
    ('forcing', 'projection and derivative', check_projection),
    ('maps', 'continuity at breakpoints', check_continuity),
    ('cohomology', 'mu residual', check_residuals),
    ('cohomology', 'b* cross validation', check_critical_cross),
    ('cohomology', 'fiber gap identity', check_fiber_gap),
    ('curves', 'lambda monotone at b*', check_monotone),
    ('curves', 'psi battery', check_psi),
    ('curves', 'predicted zeros', check_zeros),
    ('curves', 'regime convergence', check_convergence),
    ('analysis', 'lyapunov exponents', check_lyapunov),
    ('analysis', 'orbit capture', check_capture),
    ('analysis', 'uniform contraction', check_uniform),
]
FULL_CHECKS = [
    ('analysis', 'attractor area', check_area),
    ('analysis', 'log psi integral', check_log_psi),
]


def check_suite(level: str = 'quick', h_override: Optional[HFunction] = None) -> CheckReport:
    """Run the battery; failures and library errors become report content"""
    if level not in LEVELS:
        raise ValueError(f"unknown check level '{level}'")
    settings = LEVELS[level]
    h = h_override or h_value
    checks = QUICK_CHECKS + (FULL_CHECKS if level == 'full' else [])
    report = CheckReport(level=level)
    for section, name, check in checks:
        start = time.perf_counter()
        try:
            passed, detail = check(settings, h)
        except WorkbenchError as e:
            passed, detail = False, f'{type(e).__name__}: {e}'
        elapsed = time.perf_counter() - start
        if not passed:
            logger.warning(f"check '{name}' failed: {detail}")
        report.results.append(CheckResult(section, name, bool(passed), detail, elapsed))
    return report


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    check_suite('quick').print_report()
