"""
Monotone curve sequences phi_n, their gaps lambda_n to the repelling curve and the ratios psi_n

Every curve is evaluated by exact pullback: phi_n(θ) starts from the closed-form seed at
θ - n·s·ω and is pushed forward n·s steps, each intermediate angle recomputed from its integer index.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Optional, Tuple, Union

import mpmath
import numpy as np
import pandas as pd

from cohomology import (CollidingPair, ExactCollision, MuSolution, MuVariant, exact_critical_b,
                        solve_bold_mu, target_for_pair)
from errors import DegenerateForcingError, InvalidParameterError, UnexpectedZeroError
from forcing import TWO_PI, _as_output, trig_eval_mp, uniform_grid
from maps import MapParams, SystemKind, flat_value, forcing_term, h_value, is_flat, step_mp
from solver_config import solver_config

logger = logging.getLogger(__name__)

MIN_SAMPLE_SIZE = 16
CURVE_NAMES = ('phi_n', 'phi_image', 'mu', 'lambda_n', 'envelope')
GUARD_DIGITS = 30
GAP_ROUNDING = 1e-14
# log-spaced window offsets around a collision-orbit point, in units of |a|^(-k·s/2)
WINDOW_OFFSETS = np.geomspace(1e-3, 2.0, 54)
MIN_WINDOW_OFFSET = 1e-12

ArrayLike = Union[float, np.ndarray]


class SeedCurve(Enum):
    PHI = "phi"
    GAMMA = "gamma"


class Envelope(Enum):
    DOWN = "down"
    UP = "up"


@dataclass(frozen=True, eq=False)
class CurveEvaluator:
    """phi_n of one system: n applications of the transfer operator to the seed curve

    One application is a single map step for F1-F3 and two steps for F4, whose attracting
    objects are two-periodic. mu is solved on construction whenever a repelling curve exists.
    """

    params: MapParams
    n: int = 0
    mu: Optional[MuSolution] = None
    seed: SeedCurve = SeedCurve.PHI

    def __post_init__(self):
        if self.n < 0:
            raise InvalidParameterError(f"iteration count must be nonnegative, got {self.n}")
        if self.seed is SeedCurve.GAMMA and self.params.kind is not SystemKind.PITCHFORK_SUPER:
            raise InvalidParameterError("the lower seed curve exists only for the supercritical pitchfork")
        if self.mu is None and self.has_repeller:
            p = self.params
            object.__setattr__(self, 'mu', solve_bold_mu(p.kind, p.a, p.omega, p.g, MuVariant.MAIN, p.delta))

    @classmethod
    def for_pair(cls, params: MapParams, n: int, pair: CollidingPair) -> "CurveEvaluator":
        target = target_for_pair(params.kind, params.a, pair, params.delta)
        mu = solve_bold_mu(params.kind, params.a, params.omega, params.g, target.variant, params.delta)
        seed = SeedCurve.GAMMA if target.lower_seed else SeedCurve.PHI
        return cls(params=params, n=n, mu=mu, seed=seed)

    @property
    def has_repeller(self) -> bool:
        return self.params.kind.is_piecewise and abs(self.params.a) > 1

    @property
    def period(self) -> int:
        return self.params.kind.period

    @property
    def pair(self) -> CollidingPair:
        if self.seed is SeedCurve.GAMMA:
            return CollidingPair.GAMMA_MU
        if self.mu is not None and self.mu.variant is MuVariant.HAT:
            return CollidingPair.PHI_MU_HAT
        return CollidingPair.PHI_MU

    @property
    def orientation(self) -> float:
        """+1 where the seed curve lies above mu, -1 where it lies below"""
        kind = self.params.kind
        if kind is SystemKind.PITCHFORK_SUPER:
            return 1.0 if self.seed is SeedCurve.PHI else -1.0
        if kind is SystemKind.PITCHFORK_SUB:
            return 1.0 if self.mu is not None and self.mu.variant is MuVariant.HAT else -1.0
        if kind is SystemKind.SADDLE_NODE:
            return -1.0
        return 1.0

    def with_n(self, n: int) -> "CurveEvaluator":
        return replace(self, n=n)

    def with_b(self, b: float) -> "CurveEvaluator":
        return replace(self, params=self.params.with_b(b))

    def curve(self, which: str) -> Callable[[ArrayLike], ArrayLike]:
        """Vectorized evaluator of one named curve"""
        curves = {
            'phi_n': lambda t: eval_phi_n(self, t),
            'phi_image': lambda t: eval_phi_image(self, t),
            'mu': lambda t: eval_mu(self, t),
            'lambda_n': lambda t: eval_lambda_n(self, t),
            'envelope': lambda t: envelope_eval(self, self.n, t),
        }
        if which not in curves:
            raise InvalidParameterError(f"unknown curve '{which}' (choose from {', '.join(curves)})")
        return curves[which]

    def describe(self) -> Dict[str, str]:
        info = self.params.describe()
        info.update({'n': str(self.n), 'seed': self.seed.value})
        if self.mu is not None:
            info['variant'] = self.mu.variant.value
        return info


def _require_mu(ev: CurveEvaluator) -> MuSolution:
    if ev.mu is None:
        raise InvalidParameterError(
            f"{ev.params.kind.value} with a = {ev.params.a} has no repelling curve (need a piecewise map with |a| > 1)"
        )
    return ev.mu


def seed_value(params: MapParams, seed: SeedCurve, theta: ArrayLike) -> ArrayLike:
    """phi_0(θ): image of the flat branch, flat value ± b·g(θ - ω)"""
    base = flat_value(params.kind, lower=seed is SeedCurve.GAMMA)
    theta = np.asarray(theta, dtype=float)
    return _as_output(base + np.asarray(forcing_term(params, theta - params.omega)))


def _pullback(params: MapParams, seed: SeedCurve, theta: ArrayLike, steps: int) -> ArrayLike:
    theta = np.asarray(theta, dtype=float)
    omega = params.omega
    x = np.asarray(seed_value(params, seed, theta - steps * omega))
    for k in range(steps, 0, -1):
        x = np.asarray(h_value(params, x)) + np.asarray(forcing_term(params, theta - k * omega))
    return _as_output(x)


def eval_phi_n(ev: CurveEvaluator, theta: ArrayLike) -> ArrayLike:
    return _pullback(ev.params, ev.seed, theta, ev.n * ev.period)


def eval_phi_image(ev: CurveEvaluator, theta: ArrayLike) -> ArrayLike:
    """The two-periodic partner h4(phi_n(θ-ω)) - b·g(θ-ω)"""
    if ev.params.kind is not SystemKind.PERIOD_DOUBLING:
        raise InvalidParameterError("the partner curve is defined only for the period-doubling system")
    return _pullback(ev.params, ev.seed, theta, 2 * ev.n + 1)


def eval_mu(ev: CurveEvaluator, theta: ArrayLike) -> ArrayLike:
    return _require_mu(ev).evaluate(ev.params.b, theta)


def eval_lambda_n(ev: CurveEvaluator, theta: ArrayLike) -> ArrayLike:
    """Signed gap between phi_n and mu, oriented so it is nonnegative up to b*"""
    mu = _require_mu(ev)
    gap = np.asarray(eval_phi_n(ev, theta)) - np.asarray(mu.evaluate(ev.params.b, theta))
    return _as_output(ev.orientation * gap)


def lambda_scale(ev: CurveEvaluator, grid_size: Optional[int] = None) -> float:
    """max(1, max lambda_0) over the diagnostic grid"""
    grid_size = grid_size or solver_config.get_grid('diagnostic')
    lam0 = np.asarray(eval_lambda_n(ev.with_n(0), uniform_grid(grid_size)))
    return max(1.0, float(lam0.max()))


@dataclass(frozen=True)
class LambdaStep:
    current: np.ndarray
    advanced: np.ndarray
    linear: np.ndarray


def lambda_step(ev: CurveEvaluator, theta: ArrayLike) -> LambdaStep:
    """lambda_n(θ) and lambda_{n+1}(θ + s·ω)

    While the orbit of phi_n(θ) stays in the linear branch of mu the advanced gap is a^s·lambda_n
    exactly; elsewhere it is measured on the stepped point.
    """
    mu = _require_mu(ev)
    params = ev.params
    s = ev.period
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(eval_phi_n(ev, theta))
    current = ev.orientation * (x - np.asarray(mu.evaluate(params.b, theta)))
    linear = np.ones(x.shape, dtype=bool)
    for k in range(s):
        linear &= np.asarray(mu.in_branch(x))
        x = np.asarray(h_value(params, x)) + np.asarray(forcing_term(params, theta + k * params.omega))
    stepped = ev.orientation * (x - np.asarray(mu.evaluate(params.b, theta + s * params.omega)))
    advanced = np.where(linear, params.a ** s * current, stepped)
    return LambdaStep(current=current, advanced=advanced, linear=linear)


def eval_psi_n(ev: CurveEvaluator, theta: ArrayLike, scale: Optional[float] = None) -> ArrayLike:
    """lambda_{n+1}(θ + s·ω) / lambda_n(θ), equal to a^s where lambda_n vanishes"""
    zero_value = ev.params.a ** ev.period
    scale = scale if scale is not None else lambda_scale(ev)
    threshold = solver_config.get_tolerance('psi_zero') * scale
    lam = lambda_step(ev, theta)
    vanishing = lam.current < threshold
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = lam.advanced / np.where(vanishing, 1.0, lam.current)
    return _as_output(np.where(vanishing | lam.linear, zero_value, ratio))


@dataclass(frozen=True, eq=False)
class CurveSample:
    """A curve on the uniform grid θ_j = 2πj/M"""

    grid_size: int
    values: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if self.grid_size < MIN_SAMPLE_SIZE:
            raise InvalidParameterError(f"grid size must be at least {MIN_SAMPLE_SIZE}, got {self.grid_size}")
        if values.shape != (self.grid_size,):
            raise InvalidParameterError(f"expected {self.grid_size} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise InvalidParameterError(f"non-finite curve value at grid index {bad}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def thetas(self) -> np.ndarray:
        return uniform_grid(self.grid_size)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'theta': self.thetas, 'value': self.values})


def sample_curve(source: Union[CurveEvaluator, Callable[[np.ndarray], ArrayLike]], grid_size: int,
                 label: str = "phi_n", workers: int = 1,
                 meta: Optional[Dict[str, object]] = None) -> CurveSample:
    """Evaluate a curve on the grid; chunks may run on worker threads, output stays index ordered"""
    if grid_size < MIN_SAMPLE_SIZE:
        raise InvalidParameterError(f"grid size must be at least {MIN_SAMPLE_SIZE}, got {grid_size}")
    info: Dict[str, object] = {}
    if isinstance(source, CurveEvaluator):
        info.update(source.describe())
        func = source.curve(label if label in CURVE_NAMES else 'phi_n')
    else:
        func = source
    info['label'] = label
    info.update(meta or {})

    theta = uniform_grid(grid_size)
    if workers <= 1:
        values = np.asarray(func(theta), dtype=float)
    else:
        chunks = np.array_split(theta, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.concatenate([np.asarray(v, dtype=float) for v in pool.map(func, chunks)])
    return CurveSample(grid_size=grid_size, values=values, meta=info)


def _interval(interval: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = float(interval[0]), float(interval[1])
    if not (0.0 <= lo < hi <= TWO_PI):
        raise InvalidParameterError(f"interval [{lo}, {hi}) must lie in [0, 2π]")
    return lo, hi


def _node_lipschitz(thetas: np.ndarray, values: np.ndarray, wrap: bool) -> float:
    order = np.argsort(thetas, kind='stable')
    thetas, values = thetas[order], values[order]
    keep = np.append(True, np.diff(thetas) > 0.0)
    thetas, values = thetas[keep], values[keep]
    if wrap:
        thetas = np.append(thetas, thetas[0] + TWO_PI)
        values = np.append(values, values[0])
    if thetas.size < 2:
        raise InvalidParameterError("a Lipschitz estimate needs at least two nodes")
    return float(np.max(np.abs(np.diff(values)) / np.diff(thetas)))


def lipschitz_estimate(sample: CurveSample, interval: Tuple[float, float] = (0.0, TWO_PI)) -> float:
    """Largest difference quotient between adjacent nodes of [lo, hi); a lower bound for the true constant"""
    lo, hi = _interval(interval)
    if hi - lo >= TWO_PI:
        return _node_lipschitz(sample.thetas, sample.values, wrap=True)

    thetas = sample.thetas
    inside = np.flatnonzero((thetas >= lo) & (thetas < hi))
    if inside.size < 2:
        raise InvalidParameterError(f"interval [{lo}, {hi}) holds fewer than two grid nodes")
    return _node_lipschitz(thetas[inside], sample.values[inside], wrap=False)


def _orbit_windows(ev: CurveEvaluator, exact: ExactCollision, lo: float, hi: float,
                   orbit_count: int) -> np.ndarray:
    """Log-spaced nodes around θ0 + k·s·ω, shrinking like |a|^(-k·s/2) as the dips of phi_n narrow"""
    params, s = ev.params, ev.period
    offsets = np.concatenate([[0.0], WINDOW_OFFSETS, -WINDOW_OFFSETS])
    nodes = []
    with mpmath.workdps(exact.dps):
        w = mpmath.mpf(params.omega)
        for k in range(orbit_count):
            scale = abs(params.a) ** (-k * s / 2)
            if scale * WINDOW_OFFSETS[0] < MIN_WINDOW_OFFSET:
                break
            center = float(mpmath.fmod(exact.lambda_zero + k * s * w, 2 * mpmath.pi)) % TWO_PI
            window = center + scale * offsets
            nodes.append(window[(window >= lo) & (window < hi)])
    return np.concatenate(nodes) if nodes else np.empty(0)


def refined_lipschitz(ev: CurveEvaluator, interval: Tuple[float, float] = (0.0, TWO_PI),
                      grid_size: Optional[int] = None, orbit_count: Optional[int] = None,
                      exact: Optional[ExactCollision] = None) -> float:
    """Lipschitz lower bound of phi_n on [lo, hi) from the uniform grid plus windows around the collision orbit

    Every node is evaluated in high precision. The windows sit where lambda_n dips near b*.
    """
    lo, hi = _interval(interval)
    params, s, n = ev.params, ev.period, ev.n
    grid_size = grid_size or solver_config.get_grid('scan')
    theta = uniform_grid(grid_size)
    nodes = [theta[(theta >= lo) & (theta < hi)]]

    if exact is None and ev.has_repeller and params.b > 0:
        try:
            exact = exact_critical_b(params.kind, params.a, params.omega, params.g, ev.pair, params.delta)
        except DegenerateForcingError:
            exact = None
    if exact is not None and params.b > 0:
        count = n + 1 if orbit_count is None else min(orbit_count, n + 1)
        nodes.append(_orbit_windows(ev, exact, lo, hi, count))
    thetas = np.concatenate(nodes)

    dps = _orbit_dps((n + 1) * s, params.a)
    values = np.empty(thetas.size)
    with mpmath.workdps(max(dps, exact.dps) if exact is not None else dps):
        b = exact.b_star if exact is not None and at_critical(params.b, float(exact.b_star)) \
            else mpmath.mpf(params.b)
        for i, t in enumerate(thetas):
            values[i] = float(_pullback_mp(params, ev.seed, mpmath.mpf(float(t)), n * s, b))
    estimate = _node_lipschitz(thetas, values, wrap=hi - lo >= TWO_PI)
    logger.debug(f"refined Lipschitz {params.kind.label} n={n} on [{lo:.4f}, {hi:.4f}): "
                 f"{estimate:.4e} from {thetas.size} nodes")
    return estimate


def fractalization_ratio(sample: CurveSample, interval: Tuple[float, float] = (0.0, TWO_PI)) -> float:
    """Local Lipschitz estimate relative to the sup norm of the curve"""
    norm = sample.sup_norm
    if norm == 0.0:
        return 0.0
    return lipschitz_estimate(sample, interval) / norm


def _monotone_toward(ev: CurveEvaluator, direction: Envelope) -> bool:
    """True when phi_n moves monotonically in the given direction, i.e. up to and including b*"""
    params = ev.params
    if not ev.has_repeller or params.b <= 0:
        return False
    if direction is not (Envelope.DOWN if ev.orientation > 0 else Envelope.UP):
        return False
    try:
        exact = exact_critical_b(params.kind, params.a, params.omega, params.g, ev.pair, params.delta)
    except DegenerateForcingError:
        return False
    b_star = float(exact.b_star)
    return params.b <= b_star or at_critical(params.b, b_star)


def envelope_eval(ev: CurveEvaluator, m: int, theta: ArrayLike,
                  direction: Envelope = Envelope.DOWN) -> ArrayLike:
    """Running inf (down) or sup (up) of phi_0..phi_m

    Where the sequence is monotone in that direction the envelope is phi_m itself and is returned as is.
    """
    if m < 0:
        raise InvalidParameterError(f"envelope depth must be nonnegative, got {m}")
    if _monotone_toward(ev, direction):
        return eval_phi_n(ev.with_n(m), theta)
    combine = np.minimum if direction is Envelope.DOWN else np.maximum
    result = np.asarray(eval_phi_n(ev.with_n(0), theta))
    for k in range(1, m + 1):
        result = combine(result, np.asarray(eval_phi_n(ev.with_n(k), theta)))
    return _as_output(result)


def in_invariant_region(ev: CurveEvaluator, x: ArrayLike, theta: ArrayLike, tol: float = 1e-12) -> ArrayLike:
    """Membership in the compact region between mu and the seed curve"""
    mu = np.asarray(eval_mu(ev, theta))
    seed = np.asarray(seed_value(ev.params, ev.seed, theta))
    lo, hi = np.minimum(mu, seed), np.maximum(mu, seed)
    x = np.asarray(x, dtype=float)
    inside = (x >= lo - tol) & (x <= hi + tol)
    return bool(inside) if np.ndim(inside) == 0 else inside


def at_critical(b: float, b_star: float, tolerance: str = 'critical_snap') -> bool:
    return abs(b - b_star) <= solver_config.get_tolerance(tolerance) * b_star


def _orbit_dps(steps: int, a: float) -> int:
    return GUARD_DIGITS + int(math.ceil(steps * math.log10(abs(a))))


def _seed_value_mp(params: MapParams, seed: SeedCurve, theta, b):
    if params.kind is SystemKind.PITCHFORK_SUPER:
        base = -mpmath.pi / 2 if seed is SeedCurve.GAMMA else mpmath.pi / 2
    else:
        base = mpmath.mpf(flat_value(params.kind))
    return base + params.kind.forcing_sign * b * trig_eval_mp(params.g, theta - mpmath.mpf(params.omega))


def _pullback_mp(params: MapParams, seed: SeedCurve, theta, steps: int, b):
    w = mpmath.mpf(params.omega)
    x = _seed_value_mp(params, seed, theta - steps * w, b)
    for k in range(steps, 0, -1):
        x, _ = step_mp(params, x, theta - k * w, b)
    return x


@dataclass(frozen=True)
class ZeroReport:
    count: int
    predicted: np.ndarray
    values: np.ndarray
    locations: np.ndarray
    floor: float


def _circular_distance(theta: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = np.abs(theta[:, None] - centers[None, :]) % TWO_PI
    return np.minimum(diff, TWO_PI - diff).min(axis=1)


def zero_count(ev: CurveEvaluator, eps_zero: Optional[float] = None, eps_floor: Optional[float] = None,
               grid_size: Optional[int] = None, window: float = 1e-3,
               exact: Optional[ExactCollision] = None) -> ZeroReport:
    """Check lambda_n at its n+1 predicted zeros θ0 + k·s·ω and bound it from below elsewhere

    The predicted zeros are evaluated in high precision at the exact bifurcation value; the floor is
    checked on the double-precision grid outside windows of the given radius.
    """
    params = ev.params
    kind, s, n = params.kind, ev.period, ev.n
    _require_mu(ev)
    eps_zero = eps_zero if eps_zero is not None else solver_config.get_tolerance('zero')
    eps_floor = eps_floor if eps_floor is not None else solver_config.get_tolerance('zero')
    grid_size = grid_size or solver_config.get_grid('diagnostic')
    dps = _orbit_dps((n + 2) * s, params.a)
    if exact is None:
        exact = exact_critical_b(kind, params.a, params.omega, params.g, ev.pair, params.delta, dps=dps)
    if not at_critical(params.b, float(exact.b_star), 'collision'):
        raise InvalidParameterError(f"zero counting needs b = b* = {float(exact.b_star):.12g}, got {params.b}")

    scale = lambda_scale(ev)
    values = []
    predicted = []
    with mpmath.workdps(max(dps, exact.dps)):
        w = mpmath.mpf(params.omega)
        for k in range(n + 1):
            theta_k = exact.lambda_zero + k * s * w
            x = _pullback_mp(params, ev.seed, theta_k, n * s, exact.b_star)
            values.append(float(ev.orientation * (x - exact.mu(theta_k))))
            predicted.append(float(theta_k))
    values = np.array(values)
    predicted = np.mod(np.array(predicted), TWO_PI)
    is_zero = np.abs(values) < eps_zero * scale

    theta = uniform_grid(grid_size)
    lam = np.asarray(eval_lambda_n(ev, theta))
    outside = _circular_distance(theta, predicted) >= window
    floor = float(lam[outside].min()) if np.any(outside) else math.inf
    if floor < eps_floor:
        worst = int(np.flatnonzero(outside)[np.argmin(lam[outside])])
        raise UnexpectedZeroError(float(theta[worst]), float(lam[worst]))

    logger.debug(f"zero count {kind.label} n={n}: {int(is_zero.sum())} of {n + 1} predicted, floor {floor:.3e}")
    return ZeroReport(count=int(is_zero.sum()), predicted=predicted, values=values,
                      locations=predicted[is_zero], floor=floor)


def fill_distance(theta0: float, spacing: float, count: int) -> float:
    """Largest circular gap of {θ0 + k·spacing mod 2π : k < count}"""
    if count < 2:
        raise InvalidParameterError("fill distance needs at least two points")
    points = np.sort(np.mod(theta0 + np.arange(count) * spacing, TWO_PI))
    gaps = np.diff(np.append(points, points[0] + TWO_PI))
    return float(gaps.max())


@dataclass(frozen=True)
class ConvergenceReport:
    sup_gaps: np.ndarray
    grid_gaps: np.ndarray
    orbit_gaps: Optional[np.ndarray]
    cauchy_uniform: bool
    converged_at: Optional[int]


def cauchy_tail(sup_gaps: np.ndarray, tol: float) -> Optional[int]:
    """First n from which the gaps stay below tol and never increase again (up to rounding)"""
    gaps = np.asarray(sup_gaps, dtype=float)
    for n in range(gaps.size - 1):
        tail = gaps[n:]
        if np.all(tail < tol) and np.all(np.diff(tail) <= GAP_ROUNDING):
            return n
    return None


def _orbit_gaps(ev: CurveEvaluator, n_max: int, exact: ExactCollision) -> np.ndarray:
    """|phi_{n+1} - phi_n| at θ0 + (n+1)·s·ω, where phi_{n+1} has just acquired a zero"""
    params, s = ev.params, ev.period
    gaps = np.empty(n_max)
    with mpmath.workdps(_orbit_dps((n_max + 2) * s, params.a)):
        w = mpmath.mpf(params.omega)
        for n in range(n_max):
            theta = exact.lambda_zero + (n + 1) * s * w
            later = _pullback_mp(params, ev.seed, theta, (n + 1) * s, exact.b_star)
            earlier = _pullback_mp(params, ev.seed, theta, n * s, exact.b_star)
            gaps[n] = float(abs(later - earlier))
    return gaps


def convergence_report(ev: CurveEvaluator, n_max: int, grid_size: Optional[int] = None,
                       tol: Optional[float] = None) -> ConvergenceReport:
    """Sup gaps |phi_{n+1} - phi_n| for n < n_max

    Both sequences are pushed forward from the grid, so at step n they sit on the grid rotated by
    n·s·ω. At the bifurcation value the collision orbit is also evaluated in high precision.
    """
    if n_max < 2:
        raise InvalidParameterError(f"n_max must be at least 2, got {n_max}")
    params = ev.params
    s = ev.period
    grid_size = grid_size or solver_config.get_grid('diagnostic')
    tol = tol if tol is not None else solver_config.get_tolerance('uniform')

    theta = uniform_grid(grid_size)
    track = np.asarray(seed_value(params, ev.seed, theta))
    ahead = np.asarray(_pullback(params, ev.seed, theta, s))
    grid_gaps = np.empty(n_max)
    for n in range(n_max):
        grid_gaps[n] = np.max(np.abs(ahead - track))
        for i in range(s):
            forcing = np.asarray(forcing_term(params, theta + (n * s + i) * params.omega))
            track = np.asarray(h_value(params, track)) + forcing
            ahead = np.asarray(h_value(params, ahead)) + forcing

    orbit_gaps = None
    if ev.has_repeller and params.b > 0:
        try:
            exact = exact_critical_b(params.kind, params.a, params.omega, params.g, ev.pair, params.delta)
        except DegenerateForcingError:
            exact = None
        if exact is not None and at_critical(params.b, float(exact.b_star)):
            orbit_gaps = _orbit_gaps(ev, n_max, exact)
            logger.info(f"collision orbit of {params.kind.label} at b*: last gap {orbit_gaps[-1]:.3e}")

    sup_gaps = grid_gaps if orbit_gaps is None else np.maximum(grid_gaps, orbit_gaps)
    converged_at = cauchy_tail(sup_gaps, tol)
    return ConvergenceReport(sup_gaps=sup_gaps, grid_gaps=grid_gaps, orbit_gaps=orbit_gaps,
                             cauchy_uniform=converged_at is not None, converged_at=converged_at)


def converged_curve(ev: CurveEvaluator, n_max: int, grid_size: Optional[int] = None,
                    tol: Optional[float] = None) -> Tuple[CurveEvaluator, ConvergenceReport]:
    """Evaluator advanced to the first n at which the sequence is certified uniform (or n_max)"""
    report = convergence_report(ev, n_max, grid_size, tol)
    n = report.converged_at + 1 if report.converged_at is not None else n_max
    return ev.with_n(n), report


def count_flat_hits(ev: CurveEvaluator, theta: ArrayLike) -> np.ndarray:
    """True where one operator application from phi_n(θ) visits a constant branch"""
    params = ev.params
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(eval_phi_n(ev, theta))
    hits = np.zeros(x.shape, dtype=bool)
    for k in range(ev.period):
        hits |= np.asarray(is_flat(params, x))
        x = np.asarray(h_value(params, x)) + np.asarray(forcing_term(params, theta + k * params.omega))
    return hits

