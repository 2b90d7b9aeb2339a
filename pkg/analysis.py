"""
Scalar diagnostics of the forced maps
Log-psi integral, Lyapunov exponents, orbit capture, attractor area, fractalization scans,
regime inventory, symmetry checks and the uniform-contraction solver
"""

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from cohomology import (CollidingPair, collision_candidates, critical_b, exact_critical_b, fiber_gap,
                        solve_bold_mu)
from curves import (CurveEvaluator, CurveSample, SeedCurve, at_critical, converged_curve, count_flat_hits,
                    eval_lambda_n, eval_psi_n, in_invariant_region, lambda_scale, lipschitz_estimate,
                    refined_lipschitz, sample_curve, seed_value)
from errors import InvalidParameterError, NumericalFailureError
from forcing import TWO_PI, TrigPoly, classify_forcing, project_samples, trig_eval, uniform_grid
from maps import MapParams, SystemKind, forcing_term, h_prime, h_value, is_flat, scalar_map
from solver_config import solver_config

logger = logging.getLogger(__name__)

NEG_INFINITY = -math.inf
MASK64 = (1 << 64) - 1
UNIT_SCALE = 2.0 ** -53
CAPTURE_MARGIN = 0.01


class SplitMix64:
    """splitmix64 stream; every draw consumes one 64-bit output"""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Top 53 bits scaled to [0, 1)"""
        return (self.next_u64() >> 11) * UNIT_SCALE


class CurveRole(Enum):
    REPELLING = "repelling"
    ATTRACTING = "attracting"


@dataclass(frozen=True)
class LyapunovReport:
    value: float
    flat_fraction: float
    orbit_length: int
    burn_in: int
    which: CurveRole

    def __post_init__(self):
        if (self.value == NEG_INFINITY) != (self.flat_fraction > 0):
            raise NumericalFailureError(
                f"exponent {self.value} inconsistent with flat fraction {self.flat_fraction}"
            )

    @property
    def neg_infinity(self) -> bool:
        return self.value == NEG_INFINITY


def _exponent(log_sum: float, flats: int, length: int) -> Tuple[float, float]:
    flat_fraction = flats / length
    return (NEG_INFINITY if flats else log_sum / length), flat_fraction


def lyapunov_curve(params: MapParams, which: CurveRole = CurveRole.ATTRACTING, steps: int = 100_000,
                   burn_in: int = 1000, theta_seed: float = 0.0) -> LyapunovReport:
    """Average of log|h'| along an orbit on the repelling curve or on the attractor

    Derivatives at breakpoints count as a; any visit to a constant branch makes the exponent -inf.
    """
    if steps < 1 or burn_in < 0:
        raise InvalidParameterError(f"need steps >= 1 and burn_in >= 0, got {steps}, {burn_in}")
    omega = params.omega

    if which is CurveRole.REPELLING:
        if not (params.kind.is_piecewise and abs(params.a) > 1):
            raise InvalidParameterError("the repelling curve needs a piecewise map with |a| > 1")
        crit = critical_b(params.kind, params.a, omega, params.g, params.delta)
        if params.b >= crit.b_star:
            raise InvalidParameterError(f"mu touches the breakpoint for b >= b* = {crit.b_star:.12g}")
        mu = solve_bold_mu(params.kind, params.a, omega, params.g, delta=params.delta)
        theta = np.mod(theta_seed + np.arange(burn_in, burn_in + steps) * omega, TWO_PI)
        multipliers = np.abs(np.asarray(h_prime(params, mu.evaluate(params.b, theta))))
        flats = int(np.count_nonzero(multipliers == 0))
        with np.errstate(divide='ignore'):
            log_sum = float(np.sum(np.log(multipliers[multipliers > 0])))
        value, flat_fraction = _exponent(log_sum, flats, steps)
        return LyapunovReport(value, flat_fraction, steps, burn_in, which)

    h, dh = scalar_map(params)
    total = burn_in + steps
    forcing = np.asarray(forcing_term(params, theta_seed + np.arange(total) * omega), dtype=float).tolist()
    x = float(seed_value(params, SeedCurve.PHI, theta_seed))
    for k in range(burn_in):
        x = h(x) + forcing[k]
    log_sum, flats = 0.0, 0
    for k in range(burn_in, total):
        d = dh(x)
        if d == 0.0:
            flats += 1
        else:
            log_sum += math.log(abs(d))
        x = h(x) + forcing[k]
    value, flat_fraction = _exponent(log_sum, flats, steps)
    logger.debug(f"attracting exponent {params.kind.label} b={params.b}: {value} (flat {flat_fraction:.4f})")
    return LyapunovReport(value, flat_fraction, steps, burn_in, which)


@dataclass(frozen=True)
class CaptureStats:
    trials: int
    captured: int
    iteration_histogram: Dict[int, int]
    max_iters: int
    seed: int

    def __post_init__(self):
        if self.captured > self.trials:
            raise NumericalFailureError("more captures than trials")
        if sum(self.iteration_histogram.values()) != self.captured:
            raise NumericalFailureError("capture histogram does not add up")

    @property
    def fraction(self) -> float:
        return self.captured / self.trials


def capture_steps(params: MapParams, x0, theta0, max_iters: int) -> np.ndarray:
    """First step at which each orbit sits strictly inside a constant branch, -1 if none within max_iters"""
    x = np.array(x0, dtype=float, ndmin=1)
    theta0 = np.array(theta0, dtype=float, ndmin=1)
    steps = np.full(x.shape, -1, dtype=np.int64)
    active = np.arange(x.size)
    for k in range(max_iters + 1):
        flat = np.asarray(is_flat(params, x[active]), dtype=bool)
        steps[active[flat]] = k
        active = active[~flat]
        if k == max_iters or active.size == 0:
            break
        x[active] = np.asarray(h_value(params, x[active])) + \
            np.asarray(forcing_term(params, theta0[active] + k * params.omega))
    return steps


def capture_experiment(params: MapParams, trials: int = 1000, max_iters: int = 10_000, seed: int = 1,
                       workers: int = 1, pair: CollidingPair = CollidingPair.PHI_MU) -> CaptureStats:
    """Random starts between mu and the seed curve, iterated until they fall onto a flat branch

    Draw order per trial: θ0 then the position in the band, each one splitmix64 output.
    The band stays a 1% margin away from mu.
    """
    if trials < 1 or max_iters < 0:
        raise InvalidParameterError(f"need trials >= 1 and max_iters >= 0, got {trials}, {max_iters}")
    if not (params.kind.is_piecewise and abs(params.a) > 1):
        raise InvalidParameterError("the capture band needs a piecewise map with |a| > 1")
    ev = CurveEvaluator.for_pair(params, 0, pair)

    rng = SplitMix64(seed)
    draws = np.empty((trials, 2))
    for i in range(trials):
        draws[i, 0] = rng.uniform()
        draws[i, 1] = rng.uniform()
    theta0 = TWO_PI * draws[:, 0]
    mu = np.asarray(ev.mu.evaluate(params.b, theta0))
    top = np.asarray(seed_value(params, ev.seed, theta0))
    near = mu + CAPTURE_MARGIN * (top - mu)
    x0 = near + draws[:, 1] * (top - near)

    if workers <= 1:
        steps = capture_steps(params, x0, theta0, max_iters)
    else:
        chunks = np.array_split(np.arange(trials), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(lambda idx: capture_steps(params, x0[idx], theta0[idx], max_iters), chunks)
            steps = np.concatenate(list(parts))

    hits = steps[steps >= 0]
    histogram = {int(k): int(v) for k, v in sorted(Counter(hits.tolist()).items())}
    stats = CaptureStats(trials=trials, captured=int(hits.size), iteration_histogram=histogram,
                         max_iters=max_iters, seed=seed)
    logger.info(f"capture {params.kind.label} b={params.b:.12g}: {stats.captured}/{trials}")
    return stats


def area_estimate(params: MapParams, n: int, grid_size: Optional[int] = None,
                  pair: CollidingPair = CollidingPair.PHI_MU) -> float:
    """Mean of lambda_n over the circle: the area between mu and phi_n divided by 2π"""
    grid_size = grid_size or solver_config.get_grid('diagnostic')
    ev = CurveEvaluator.for_pair(params, n, pair)
    return float(np.mean(np.asarray(eval_lambda_n(ev, uniform_grid(grid_size)))))


def capture_set_fraction(params: MapParams, n: int, grid_size: Optional[int] = None,
                         pair: CollidingPair = CollidingPair.PHI_MU) -> float:
    """Grid fraction of θ where one operator step from phi_n visits a constant branch"""
    grid_size = grid_size or solver_config.get_grid('diagnostic')
    ev = CurveEvaluator.for_pair(params, n, pair)
    return float(np.mean(count_flat_hits(ev, uniform_grid(grid_size))))


def log_psi_integral(params: MapParams, n: int, grid_size: int = 2 ** 15, exclusion_radius: float = 1e-3,
                     pair: CollidingPair = CollidingPair.PHI_MU) -> float:
    """(1/2π)∫ log psi_n over the circle minus windows around the zeros of lambda_n and lambda_{n+1}"""
    if n < 0:
        raise InvalidParameterError(f"n must be nonnegative, got {n}")
    exact = exact_critical_b(params.kind, params.a, params.omega, params.g, pair, params.delta)
    b_star = float(exact.b_star)
    if not at_critical(params.b, b_star):
        raise InvalidParameterError(f"the psi integral is taken at b = b* = {b_star:.12g}, got b = {params.b}")

    ev = CurveEvaluator.for_pair(params, n, pair)
    s = ev.period
    theta = uniform_grid(grid_size)
    theta0 = float(exact.lambda_zero) % TWO_PI
    centers = np.mod(theta0 + np.arange(-1, n + 1) * s * params.omega, TWO_PI)
    diff = np.abs(theta[:, None] - centers[None, :]) % TWO_PI
    keep = np.minimum(diff, TWO_PI - diff).min(axis=1) >= exclusion_radius

    psi = np.asarray(eval_psi_n(ev, theta[keep], scale=lambda_scale(ev)))
    with np.errstate(divide='ignore', invalid='ignore'):
        integrand = np.log(psi)
    bad = ~np.isfinite(integrand)
    if np.any(bad):
        worst = float(theta[keep][np.flatnonzero(bad)[0]])
        raise NumericalFailureError(f"log psi_{n} is not finite at theta={worst:.17g}")
    value = float(integrand.sum()) / grid_size
    logger.debug(f"log psi integral {params.kind.label} n={n} M={grid_size}: {value:.6g}")
    return value


def fractal_scan(params: MapParams, b_values: Sequence[float],
                 interval: Tuple[float, float] = (0.0, math.pi / 4), n_converge: int = 200,
                 grid_size: Optional[int] = None, family_grid: int = 1024,
                 pair: CollidingPair = CollidingPair.PHI_MU) -> pd.DataFrame:
    """Converged attracting curves along b -> b*, with their local Lipschitz estimates

    L_estimate reads the uniform grid only; L_refined adds windows around the collision orbit.

    Each row also records whether the curve stays in the invariant region and how many grid
    points break the monotone ordering in b against the previous row.
    """
    if not classify_forcing(params.g, solver_config.get_grid('diagnostic')).nonnegative:
        raise InvalidParameterError("fractalization scans need a nonnegative forcing")
    b_values = [float(b) for b in b_values]
    if not b_values or any(later <= earlier for earlier, later in zip(b_values, b_values[1:])):
        raise InvalidParameterError("b values must be nonempty and strictly ascending")
    crit = critical_b(params.kind, params.a, params.omega, params.g, params.delta)
    if b_values[-1] >= crit.b_star or b_values[0] < 0:
        raise InvalidParameterError(f"scan values must lie in [0, b* = {crit.b_star:.12g})")
    grid_size = grid_size or solver_config.get_grid('scan')
    family_theta = uniform_grid(family_grid)
    direction = -params.kind.forcing_sign
    exact = exact_critical_b(params.kind, params.a, params.omega, params.g, pair, params.delta) \
        if params.kind.is_piecewise and abs(params.a) > 1 else None

    rows = []
    previous = None
    for b in b_values:
        ev = CurveEvaluator.for_pair(params.with_b(b), 0, pair)
        ev_n, report = converged_curve(ev, n_converge, grid_size)
        sample = sample_curve(ev_n, grid_size, label='phi_n')
        family = np.asarray(ev_n.curve('phi_n')(family_theta))
        last_gap = float(report.sup_gaps[-1])
        violations = 0
        if previous is not None:
            prev_family, prev_gap = previous
            tol = 1e-9 + prev_gap + last_gap
            violations = int(np.count_nonzero(direction * (family - prev_family) > tol))
        previous = (family, last_gap)
        in_region = bool(np.all(in_invariant_region(ev_n, sample.values, sample.thetas, tol=1e-9)))
        lipschitz = lipschitz_estimate(sample, interval)
        refined = refined_lipschitz(ev_n, interval, grid_size, exact=exact)
        rows.append({
            'b': b,
            'b_rel': b / crit.b_star,
            'n_used': ev_n.n,
            'converged': report.cauchy_uniform,
            'L_estimate': lipschitz,
            'L_refined': refined,
            'sup_norm': sample.sup_norm,
            'fractalization': lipschitz / sample.sup_norm if sample.sup_norm else 0.0,
            'monotone_violations': violations,
            'in_region': in_region,
        })
        if not report.cauchy_uniform:
            logger.warning(f"fractal scan: no uniform convergence at b={b:.12g} within {n_converge} steps")
    return pd.DataFrame(rows)


class Regime(Enum):
    BEFORE = "before"
    AT = "at"
    AFTER = "after"


CURVE_INVENTORY = {
    (SystemKind.PITCHFORK_SUPER, Regime.BEFORE): "2 attracting + 1 repelling invariant",
    (SystemKind.PITCHFORK_SUB, Regime.BEFORE): "1 attracting + 2 repelling invariant",
    (SystemKind.SADDLE_NODE, Regime.BEFORE): "1 attracting + 1 repelling invariant",
    (SystemKind.PERIOD_DOUBLING, Regime.BEFORE): "2 attracting two-periodic + 1 repelling invariant",
    (SystemKind.PITCHFORK_SUPER, Regime.AFTER): "unique continuous attracting invariant curve",
    (SystemKind.PITCHFORK_SUB, Regime.AFTER): "unique continuous attracting invariant curve",
    (SystemKind.SADDLE_NODE, Regime.AFTER): "no continuous invariant curve",
    (SystemKind.PERIOD_DOUBLING, Regime.AFTER): "unique continuous attracting invariant curve",
}
AT_COLLISION = "semicontinuous attracting curve meets the repelling curve (strange nonchaotic attractor)"


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    expected_curves: str
    b_star: float


def regime_classify(kind: SystemKind, a: float, b: float, omega: float, g: TrigPoly,
                    delta: float = 1.0) -> RegimeReport:
    if not (kind.is_piecewise and abs(a) > 1):
        raise InvalidParameterError("regimes are defined for the piecewise maps with |a| > 1")
    crit = critical_b(kind, a, omega, g, delta)
    b_star = crit.b_star
    if at_critical(b, b_star, 'collision'):
        return RegimeReport(Regime.AT, AT_COLLISION, b_star)
    regime = Regime.BEFORE if b < b_star else Regime.AFTER
    return RegimeReport(regime, CURVE_INVENTORY[(kind, regime)], b_star)


def uniform_contraction_solve(params: MapParams, tol: float = 1e-10, grid_size: Optional[int] = None,
                              seed_curve: Union[None, float, TrigPoly, np.ndarray] = None) -> CurveSample:
    """Fixed curve of the transfer operator when |a| < 1

    Each sweep projects the current samples onto trigonometric polynomials of degree M/4 and
    applies one operator step at θ - ω.
    """
    a = params.a
    if abs(a) >= 1:
        raise InvalidParameterError(f"uniform contraction needs |a| < 1, got {a}")
    grid_size = grid_size or solver_config.get_grid('diagnostic')
    theta = uniform_grid(grid_size)
    if seed_curve is None:
        values = np.zeros(grid_size)
    elif isinstance(seed_curve, TrigPoly):
        values = np.asarray(trig_eval(seed_curve, theta), dtype=float)
    elif np.ndim(seed_curve) == 0:
        values = np.full(grid_size, float(seed_curve))
    else:
        values = np.asarray(seed_curve, dtype=float)
        if values.shape != (grid_size,):
            raise InvalidParameterError(f"seed curve must have {grid_size} samples")

    max_sweeps = int(math.ceil(10 * math.log(tol) / math.log(abs(a))))
    back = theta - params.omega
    forcing = np.asarray(forcing_term(params, back))
    changes: List[float] = []
    for sweep in range(1, max_sweeps + 1):
        previous = np.asarray(trig_eval(project_samples(values, grid_size // 4), back))
        updated = np.asarray(h_value(params, previous)) + forcing
        change = float(np.max(np.abs(updated - values)))
        changes.append(change)
        values = updated
        if change < tol:
            logger.debug(f"uniform solve converged after {sweep} sweeps (change {change:.3e})")
            return CurveSample(grid_size=grid_size, values=values,
                               meta={**params.describe(), 'label': 'invariant', 'sweeps': sweep,
                                     'sweep_changes': changes})
    raise NumericalFailureError(f"no convergence within {max_sweeps} sweeps (last change {changes[-1]:.3e})")


class SymmetryCase(Enum):
    ANTISYMMETRIC = "antisymmetric"
    NONNEGATIVE = "nonnegative"
    NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class SymmetryReport:
    case: SymmetryCase
    passed: Optional[bool]
    details: Dict[str, float] = field(default_factory=dict)


def symmetry_check(params: MapParams) -> SymmetryReport:
    """The two forcing cases of the supercritical pitchfork

    Antisymmetric g: mu is odd under θ -> θ+π and both bounding curves collide at the same b.
    Nonnegative g: the lower curve stays away from mu up to the upper collision.
    """
    kind, a, omega, g = params.kind, params.a, params.omega, params.g
    if kind is not SystemKind.PITCHFORK_SUPER or a <= 1:
        raise InvalidParameterError("symmetry checks apply to the supercritical pitchfork with a > 1")
    grid_size = solver_config.get_grid('diagnostic')
    fc = classify_forcing(g, grid_size)
    candidates = {c.target.pair: c.b for c in collision_candidates(kind, a, omega, g, params.delta)}

    if fc.pi_antisymmetric:
        theta = uniform_grid(grid_size)
        sol = solve_bold_mu(kind, a, omega, g)
        b = params.b if params.b > 0 else 1.0
        odd = float(np.max(np.abs(sol.evaluate(b, theta + math.pi) + sol.evaluate(b, theta))))
        b_phi = candidates.get(CollidingPair.PHI_MU, math.inf)
        b_gamma = candidates.get(CollidingPair.GAMMA_MU, math.inf)
        spread = abs(b_phi - b_gamma) / min(b_phi, b_gamma)
        passed = odd <= 1e-12 and spread <= solver_config.get_tolerance('collision')
        return SymmetryReport(SymmetryCase.ANTISYMMETRIC, passed,
                              {'odd_residual': odd, 'b_phi': b_phi, 'b_gamma': b_gamma, 'relative_spread': spread})

    if fc.nonnegative:
        b_phi = candidates[CollidingPair.PHI_MU]
        check_b = 0.99 * b_phi
        margin = fiber_gap(kind, a, check_b, omega, g, CollidingPair.GAMMA_MU, params.delta).direct
        passed = margin > 1e-3 * math.pi
        return SymmetryReport(SymmetryCase.NONNEGATIVE, passed,
                              {'b_phi': b_phi, 'check_b': check_b, 'gamma_margin': margin})

    return SymmetryReport(SymmetryCase.NOT_APPLICABLE, None)
