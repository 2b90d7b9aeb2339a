"""
Linear-branch invariant curves mu from the cohomological equation
mu(θ+ω) = a·mu(θ) ± b·g(θ) + c, solved harmonic by harmonic, and the bifurcation value b*(a)
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, NamedTuple, Optional

import mpmath
import numpy as np
import pandas as pd

from errors import (BracketFailureError, BranchViolationError, DegenerateForcingError,
                    InvalidParameterError, NumericalFailureError)
from forcing import TWO_PI, TrigPoly, trig_eval, uniform_grid
from maps import SystemKind, flat_value
from solver_config import solver_config

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2

MAX_BRACKET_DOUBLINGS = 60


class MuVariant(Enum):
    MAIN = "main"
    HAT = "hat"


class CollidingPair(Enum):
    PHI_MU = "phi-mu"
    GAMMA_MU = "gamma-mu"
    PHI_MU_HAT = "phi-mu-hat"
    BOTH = "both"


class CriticalMethod(Enum):
    CLOSED_FORM = "closed-form"
    BISECTION = "bisection"


@dataclass(frozen=True, eq=False)
class MuSolution:
    """mu(θ) = b·(shape(θ) + affine_b0) + affine_const"""

    kind: SystemKind
    a: float
    omega: float
    shape: TrigPoly
    affine_b0: float
    affine_const: float
    variant: MuVariant = MuVariant.MAIN
    delta: float = 1.0

    def bold(self, theta):
        return np.asarray(trig_eval(self.shape, theta)) + self.affine_b0

    def evaluate(self, b: float, theta):
        value = b * self.bold(theta) + self.affine_const
        return float(value) if np.ndim(value) == 0 else value

    @property
    def branch_shift(self) -> float:
        """The linear branch of mu is x -> a·(x - shift)"""
        if self.kind is not SystemKind.PITCHFORK_SUB:
            return 0.0
        return self.delta if self.variant is MuVariant.MAIN else -self.delta

    def branch_bounds(self):
        """Closed interval of x on which mu's linear branch applies"""
        a = self.a
        if self.kind is SystemKind.PITCHFORK_SUPER:
            edge = math.pi / (2 * a)
            return -edge, edge
        if self.kind is SystemKind.PITCHFORK_SUB:
            if self.variant is MuVariant.MAIN:
                return self.delta, math.inf
            return -math.inf, -self.delta
        if self.kind is SystemKind.SADDLE_NODE:
            return -1.0 / a, math.inf
        return 1.0 / a, math.inf

    def in_branch(self, x):
        lo, hi = self.branch_bounds()
        x = np.asarray(x, dtype=float)
        inside = (x >= lo) & (x <= hi)
        return bool(inside) if np.ndim(inside) == 0 else inside


def _check_slope(kind: SystemKind, a: float):
    if not kind.is_piecewise:
        raise InvalidParameterError("no linear-branch curve is defined for the smooth comparison map")
    if abs(a) <= 1:
        raise InvalidParameterError(f"the repelling curve needs |a| > 1, got a = {a}")
    if (kind is SystemKind.PERIOD_DOUBLING) != (a < 0):
        raise InvalidParameterError(f"slope sign of a = {a} does not match {kind.value}")


def _affine_const(kind: SystemKind, variant: MuVariant, a: float, delta: float) -> float:
    if kind is not SystemKind.PITCHFORK_SUB:
        return 0.0
    value = a * delta / (a - 1)
    return value if variant is MuVariant.MAIN else -value


def solve_bold_mu(kind: SystemKind, a: float, omega: float, g: TrigPoly,
                  variant: MuVariant = MuVariant.MAIN, delta: float = 1.0) -> MuSolution:
    _check_slope(kind, a)
    if variant is MuVariant.HAT and kind is not SystemKind.PITCHFORK_SUB:
        raise InvalidParameterError("the hat variant exists only for the subcritical pitchfork")

    sigma = kind.forcing_sign
    n = np.arange(1, g.degree + 1, dtype=float)
    c, s = np.cos(n * omega), np.sin(n * omega)
    det = 1.0 - 2.0 * a * c + a * a
    if det.size and det.min() < solver_config.get_tolerance('determinant'):
        # D(n) > (|a|-1)^2 whenever |a| > 1
        raise NumericalFailureError(f"singular harmonic system, min determinant {det.min():.3e}")

    g1, g2 = g.sin_coeffs[1:], g.cos_coeffs[1:]
    sin_out = np.zeros(g.degree + 1)
    cos_out = np.zeros(g.degree + 1)
    sin_out[1:] = sigma * (g1 * (c - a) + s * g2) / det
    cos_out[1:] = sigma * ((c - a) * g2 - s * g1) / det
    constant = sigma * g.constant_term / (1.0 - a)

    if kind is SystemKind.PITCHFORK_SUB:
        affine_b0 = constant
    else:
        cos_out[0] = constant
        affine_b0 = 0.0

    sol = MuSolution(kind=kind, a=a, omega=omega, shape=TrigPoly(cos_out, sin_out),
                     affine_b0=affine_b0, affine_const=_affine_const(kind, variant, a, delta),
                     variant=variant, delta=delta)
    logger.debug(f"solved mu for {kind.label} a={a} variant={variant.value} degree={g.degree}")
    return sol


def mu_residual(sol: MuSolution, a: float, b: float, omega: float, g: TrigPoly,
                grid_size: int = 4096) -> float:
    """Max grid residual of mu(θ+ω) = a·(mu(θ) - shift) ± b·g(θ)"""
    theta = uniform_grid(grid_size)
    mu = sol.evaluate(b, theta)
    lo, hi = sol.branch_bounds()
    overshoot = np.maximum(lo - mu, mu - hi)
    if np.any(overshoot > 0):
        worst = int(np.argmax(overshoot))
        raise BranchViolationError(float(theta[worst]), float(overshoot[worst]))
    image = a * (mu - sol.branch_shift) + sol.kind.forcing_sign * b * np.asarray(trig_eval(g, theta))
    return float(np.max(np.abs(sol.evaluate(b, theta + omega) - image)))


@dataclass(frozen=True)
class Extremum:
    theta_min: float
    val_min: float
    theta_max: float
    val_max: float


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Minimizer of a unimodal f on [lo, hi] to within tol"""
    lo, hi = min(lo, hi), max(lo, hi)
    h = hi - lo
    if h <= tol:
        return 0.5 * (lo + hi)

    # Required steps to achieve tolerance
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = lo + INV_PHI_SQUARE * h
    d = lo + INV_PHI * h
    yc = f(c)
    yd = f(d)
    for _ in range(n - 1):
        if yc < yd:
            hi = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = lo + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            lo = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = lo + INV_PHI * h
            yd = f(d)

    if yc < yd:
        return 0.5 * (lo + d)
    return 0.5 * (c + hi)


def locate_extremum(func: Callable, refine_tol: Optional[float] = None,
                    grid_size: int = 4096) -> Extremum:
    """Global min and max of a 2π-periodic vectorized func: dense scan, then golden-section"""
    if refine_tol is None:
        refine_tol = solver_config.get_tolerance('refine')
    theta = uniform_grid(grid_size)
    values = np.asarray(func(theta), dtype=float)
    spacing = TWO_PI / grid_size
    spread = float(values.max() - values.min())
    if spread <= 4 * np.finfo(float).eps * max(1.0, float(np.abs(values).max())):
        value = float(values[0])
        return Extremum(0.0, value, 0.0, value)

    def refine(index: int, sign: float):
        center = float(theta[index])

        def scalar(t):
            return sign * float(func(np.asarray(t)))
        best = golden_section(scalar, center - spacing, center + spacing, refine_tol)
        best_value = scalar(best)
        if best_value > sign * values[index]:
            return center, float(values[index])
        return math.fmod(best + TWO_PI, TWO_PI), sign * best_value

    theta_min, val_min = refine(int(np.argmin(values)), 1.0)
    theta_max, val_max = refine(int(np.argmax(values)), -1.0)
    return Extremum(theta_min, val_min, theta_max, val_max)


def extremum(sol: MuSolution, refine_tol: Optional[float] = None) -> Extremum:
    return locate_extremum(sol.bold, refine_tol, 4096)


@dataclass(frozen=True)
class CollisionTarget:
    """One bounding curve of the sequences and the branch boundary where it meets mu"""

    pair: CollidingPair
    variant: MuVariant
    boundary: float
    use_max: bool
    seed_above: bool
    lower_seed: bool = False


def collision_targets(kind: SystemKind, a: float, delta: float = 1.0) -> List[CollisionTarget]:
    if kind is SystemKind.PITCHFORK_SUPER:
        edge = math.pi / (2 * a)
        return [
            CollisionTarget(CollidingPair.PHI_MU, MuVariant.MAIN, edge, use_max=True, seed_above=True),
            CollisionTarget(CollidingPair.GAMMA_MU, MuVariant.MAIN, -edge, use_max=False,
                            seed_above=False, lower_seed=True),
        ]
    if kind is SystemKind.PITCHFORK_SUB:
        return [
            CollisionTarget(CollidingPair.PHI_MU, MuVariant.MAIN, delta, use_max=False, seed_above=False),
            CollisionTarget(CollidingPair.PHI_MU_HAT, MuVariant.HAT, -delta, use_max=True, seed_above=True),
        ]
    if kind is SystemKind.SADDLE_NODE:
        return [CollisionTarget(CollidingPair.PHI_MU, MuVariant.MAIN, -1.0 / a, use_max=False, seed_above=False)]
    if kind is SystemKind.PERIOD_DOUBLING:
        return [CollisionTarget(CollidingPair.PHI_MU, MuVariant.MAIN, 1.0 / a, use_max=False, seed_above=True)]
    raise InvalidParameterError("no collision is defined for the smooth comparison map")


def target_for_pair(kind: SystemKind, a: float, pair: CollidingPair, delta: float = 1.0) -> CollisionTarget:
    targets = collision_targets(kind, a, delta)
    if pair is CollidingPair.BOTH:
        return targets[0]
    for target in targets:
        if target.pair is pair:
            return target
    raise InvalidParameterError(f"{pair.value} is not a colliding pair of {kind.value}")


@dataclass(frozen=True)
class CriticalB:
    b_star: float
    theta_star: float
    colliding: CollidingPair
    method: CriticalMethod
    lambda_zero: float
    extremum_value: float

    def __post_init__(self):
        if not self.b_star > 0:
            raise NumericalFailureError(f"b* must be positive, got {self.b_star}")


class Candidate(NamedTuple):
    b: float
    theta: float
    value: float
    target: CollisionTarget


def collision_candidates(kind: SystemKind, a: float, omega: float, g: TrigPoly,
                         delta: float = 1.0, refine_tol: Optional[float] = None) -> List[Candidate]:
    """Closed-form collision value of every bounding curve, smallest b first"""
    degenerate = solver_config.get_tolerance('degenerate')
    candidates = []
    for target in collision_targets(kind, a, delta):
        sol = solve_bold_mu(kind, a, omega, g, target.variant, delta)
        ext = extremum(sol, refine_tol)
        value = ext.val_max if target.use_max else ext.val_min
        theta = ext.theta_max if target.use_max else ext.theta_min
        numerator = target.boundary - sol.affine_const
        if abs(value) < degenerate or value * numerator <= 0:
            continue
        candidates.append(Candidate(numerator / value, theta, value, target))
    candidates.sort(key=lambda item: item.b)
    return candidates


def critical_b(kind: SystemKind, a: float, omega: float, g: TrigPoly,
               delta: float = 1.0, refine_tol: Optional[float] = None) -> CriticalB:
    """b* from b*·extremum(boldmu) = boundary - affine_const; F2 goes through bisection"""
    _check_slope(kind, a)
    if g.is_zero():
        raise DegenerateForcingError("zero forcing never moves mu onto a breakpoint")
    if kind is SystemKind.PITCHFORK_SUB:
        return critical_b_bisect(kind, a, omega, g, delta=delta)

    candidates = collision_candidates(kind, a, omega, g, delta, refine_tol)
    if not candidates:
        raise DegenerateForcingError(f"{kind.label} at a={a}: the relevant extremum of boldmu vanishes")
    b_star, theta, value, target = candidates[0]
    pair = target.pair
    if len(candidates) > 1:
        other = candidates[1].b
        if abs(other - b_star) <= solver_config.get_tolerance('collision') * b_star:
            pair = CollidingPair.BOTH
            b_star, theta, value, target = next(c for c in candidates if c.target.pair is CollidingPair.PHI_MU)

    logger.info(f"critical b for {kind.label} a={a}: b*={b_star:.12g} pair={pair.value}")
    return CriticalB(b_star=b_star, theta_star=theta, colliding=pair, method=CriticalMethod.CLOSED_FORM,
                     lambda_zero=math.fmod(theta + omega, TWO_PI), extremum_value=value)


def _gap_function(kind: SystemKind, a: float, b: float, omega: float, g: TrigPoly,
                  target: CollisionTarget, delta: float):
    sol = solve_bold_mu(kind, a, omega, g, target.variant, delta)
    base = flat_value(kind, target.lower_seed)
    sigma = kind.forcing_sign

    def gap(theta):
        seed = base + sigma * b * np.asarray(trig_eval(g, np.asarray(theta) - omega))
        mu = sol.evaluate(b, theta)
        return seed - mu if target.seed_above else mu - seed
    return gap, sol


def critical_b_bisect(kind: SystemKind, a: float, omega: float, g: TrigPoly,
                      tol: Optional[float] = None, delta: float = 1.0,
                      grid_size: Optional[int] = None) -> CriticalB:
    """Bisection on b of the smallest refined fiber gap between a seed curve and mu"""
    _check_slope(kind, a)
    if g.is_zero():
        raise DegenerateForcingError("zero forcing never moves mu onto a breakpoint")
    tol = tol if tol is not None else solver_config.get_tolerance('bisect')
    grid_size = grid_size or solver_config.get_grid('bisection')
    targets = collision_targets(kind, a, delta)

    def target_gap(target: CollisionTarget, b: float) -> Extremum:
        gap, _ = _gap_function(kind, a, b, omega, g, target, delta)
        return locate_extremum(gap, grid_size=grid_size)

    def objective(b: float) -> float:
        return min(target_gap(t, b).val_min for t in targets)

    b_lo, b_hi = 0.0, 1.0
    doublings = 0
    while objective(b_hi) > 0:
        if doublings >= MAX_BRACKET_DOUBLINGS:
            raise BracketFailureError(f"no collision for {kind.label} a={a} below b={b_hi:.3e}")
        b_lo, b_hi = b_hi, 2.0 * b_hi
        doublings += 1
    while b_hi - b_lo >= tol:
        mid = 0.5 * (b_lo + b_hi)
        if objective(mid) > 0:
            b_lo = mid
        else:
            b_hi = mid
    b_star = 0.5 * (b_lo + b_hi)

    gaps = [(target_gap(t, b_star), t) for t in targets]
    gaps.sort(key=lambda item: item[0].val_min)
    best, target = gaps[0]
    pair = target.pair
    if len(gaps) > 1 and gaps[1][0].val_min <= solver_config.get_tolerance('collision'):
        pair = CollidingPair.BOTH
    theta_star = math.fmod(best.theta_min - omega + 2 * TWO_PI, TWO_PI)
    sol = solve_bold_mu(kind, a, omega, g, target.variant, delta)
    logger.info(f"bisected critical b for {kind.label} a={a}: b*={b_star:.12g} pair={pair.value}")
    return CriticalB(b_star=b_star, theta_star=theta_star, colliding=pair, method=CriticalMethod.BISECTION,
                     lambda_zero=best.theta_min, extremum_value=float(sol.bold(theta_star)))


@dataclass(frozen=True)
class FiberGap:
    direct: float
    identity: float
    theta: float


def fiber_gap(kind: SystemKind, a: float, b: float, omega: float, g: TrigPoly,
                   pair: CollidingPair = CollidingPair.PHI_MU, delta: float = 1.0) -> FiberGap:
    """Smallest fiber gap, directly and through mu one step back

    The gap at θ equals a·s·(boundary - mu(θ-ω)) with s = +1 when the seed lies above mu.
    Its minimum is a times the min of s·(boundary - mu) for a > 0 and a times the max for a < 0.
    """
    target = target_for_pair(kind, a, pair, delta)
    gap, sol = _gap_function(kind, a, b, omega, g, target, delta)
    direct = locate_extremum(gap, grid_size=solver_config.get_grid('bisection'))
    s = 1.0 if target.seed_above else -1.0
    inner = locate_extremum(lambda t: s * (target.boundary - sol.evaluate(b, t)),
                            grid_size=solver_config.get_grid('bisection'))
    identity = a * (inner.val_max if a < 0 else inner.val_min)
    return FiberGap(direct=direct.val_min, identity=identity, theta=direct.theta_min)


def fiber_distance_constant(kind: SystemKind, a: float, delta: float = 1.0) -> float:
    """phi~1 - gamma~1 for F1, mu2 - mu^2 for F2"""
    if kind is SystemKind.PITCHFORK_SUPER:
        return math.pi
    if kind is SystemKind.PITCHFORK_SUB:
        return 2.0 * a * delta / (a - 1)
    raise InvalidParameterError(f"no fiber-distance constant for {kind.value}")


def coefficient_decay_report(sol: MuSolution, g: TrigPoly) -> pd.DataFrame:
    """Per-harmonic magnitudes of mu against g with the determinant bound"""
    columns = ['n', 'g_magnitude', 'mu_magnitude', 'ratio', 'bound', 'within_bound']
    degree = min(sol.shape.degree, g.degree)
    rows = []
    a = sol.a
    for n in range(1, degree + 1):
        g_mag = math.hypot(g.sin_coeffs[n], g.cos_coeffs[n])
        mu_mag = math.hypot(sol.shape.sin_coeffs[n], sol.shape.cos_coeffs[n])
        bound = (abs(math.cos(n * sol.omega)) + abs(a) + 1) / (abs(a) - 1) ** 2
        ratio = mu_mag / g_mag if g_mag > 0 else math.nan
        within = ratio <= bound if g_mag > 0 else mu_mag <= solver_config.get_tolerance('degenerate')
        rows.append([n, g_mag, mu_mag, ratio, bound, bool(within)])
    table = pd.DataFrame(rows, columns=columns)
    table.attrs['note'] = "constant forcing term taken as cos_coeffs[0] (the g1(0) term of the closed forms)"
    return table


# High-precision collision data

def _boundary_mp(kind: SystemKind, target: CollisionTarget, a, delta):
    if kind is SystemKind.PITCHFORK_SUPER:
        edge = mpmath.pi / (2 * a)
        return edge if target.use_max else -edge
    if kind is SystemKind.PITCHFORK_SUB:
        return delta if target.variant is MuVariant.MAIN else -delta
    if kind is SystemKind.SADDLE_NODE:
        return -1 / a
    return 1 / a


def _bold_mp(cos_coeffs, sin_coeffs, affine_b0, theta):
    total = cos_coeffs[0] + affine_b0
    for n in range(1, len(cos_coeffs)):
        total += sin_coeffs[n] * mpmath.sin(n * theta) + cos_coeffs[n] * mpmath.cos(n * theta)
    return total


@dataclass(frozen=True, eq=False)
class ExactCollision:
    """mu, b* and the collision angle carried in mpmath precision"""

    kind: SystemKind
    target: CollisionTarget
    dps: int
    cos_coeffs: list
    sin_coeffs: list
    affine_b0: object
    affine_const: object
    b_star: object
    theta_ext: object
    lambda_zero: object

    def bold(self, theta):
        return _bold_mp(self.cos_coeffs, self.sin_coeffs, self.affine_b0, theta)

    def mu(self, theta):
        return self.b_star * self.bold(theta) + self.affine_const


def exact_critical_b(kind: SystemKind, a: float, omega: float, g: TrigPoly,
                     pair: CollidingPair = CollidingPair.PHI_MU, delta: float = 1.0,
                     dps: int = 60) -> ExactCollision:
    """Re-solve mu and b* for one colliding pair in dps digits, seeded by the double-precision extremum"""
    _check_slope(kind, a)
    if g.is_zero():
        raise DegenerateForcingError("zero forcing never moves mu onto a breakpoint")
    target = target_for_pair(kind, a, pair, delta)
    ext = extremum(solve_bold_mu(kind, a, omega, g, target.variant, delta))
    seed_theta = ext.theta_max if target.use_max else ext.theta_min
    sigma = kind.forcing_sign
    with mpmath.workdps(dps):
        a_mp, w = mpmath.mpf(a), mpmath.mpf(omega)
        cos_out = [mpmath.mpf(0)] * (g.degree + 1)
        sin_out = [mpmath.mpf(0)] * (g.degree + 1)
        for n in range(1, g.degree + 1):
            c, s = mpmath.cos(n * w), mpmath.sin(n * w)
            det = 1 - 2 * a_mp * c + a_mp ** 2
            g1, g2 = mpmath.mpf(g.sin_coeffs[n]), mpmath.mpf(g.cos_coeffs[n])
            sin_out[n] = sigma * (g1 * (c - a_mp) + s * g2) / det
            cos_out[n] = sigma * ((c - a_mp) * g2 - s * g1) / det
        constant = sigma * mpmath.mpf(g.constant_term) / (1 - a_mp)
        delta_mp = mpmath.mpf(delta)
        if kind is SystemKind.PITCHFORK_SUB:
            affine_b0 = constant
            affine_const = a_mp * delta_mp / (a_mp - 1)
            if target.variant is MuVariant.HAT:
                affine_const = -affine_const
        else:
            cos_out[0] = constant
            affine_b0 = mpmath.mpf(0)
            affine_const = mpmath.mpf(0)

        def derivative(t):
            return sum(n * (sin_out[n] * mpmath.cos(n * t) - cos_out[n] * mpmath.sin(n * t))
                       for n in range(1, g.degree + 1))

        theta_ext = mpmath.findroot(derivative, mpmath.mpf(seed_theta))
        bold_ext = _bold_mp(cos_out, sin_out, affine_b0, theta_ext)
        if abs(bold_ext) < solver_config.get_tolerance('degenerate'):
            raise DegenerateForcingError(f"{kind.label} at a={a}: boldmu vanishes at its extremum")
        b_star = (_boundary_mp(kind, target, a_mp, delta_mp) - affine_const) / bold_ext
    logger.debug(f"exact b* for {kind.label} a={a}: {mpmath.nstr(b_star, 20)}")
    return ExactCollision(kind, target, dps, cos_out, sin_out, affine_b0, affine_const,
                          b_star, theta_ext, theta_ext + w)
