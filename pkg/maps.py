"""
The piecewise-linear maps h1..h4, the smooth comparison map and the forced skew products
(x, θ) -> (h(x) ± b g(θ), θ + ω) with their two-step composition
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, NamedTuple, Tuple, Union

import mpmath
import numpy as np

from errors import InvalidParameterError
from forcing import TWO_PI, TrigPoly, _as_output, default_forcing, format_forcing, trig_eval, trig_eval_mp

logger = logging.getLogger(__name__)

GOLDEN_OMEGA = math.pi * (math.sqrt(5.0) - 1.0)
MAX_RATIONAL_DENOMINATOR = 1000

ArrayLike = Union[float, np.ndarray]


class SystemKind(Enum):
    PITCHFORK_SUPER = "pitchfork-super"
    PITCHFORK_SUB = "pitchfork-sub"
    SADDLE_NODE = "saddle-node"
    PERIOD_DOUBLING = "period-doubling"
    SMOOTH_PD = "smooth-pd"

    @property
    def forcing_sign(self) -> float:
        """Sign in front of b·g(θ)"""
        if self in (SystemKind.PITCHFORK_SUB, SystemKind.SADDLE_NODE):
            return 1.0
        return -1.0

    @property
    def period(self) -> int:
        """Number of map steps per operator application of the curve sequence"""
        return 2 if self in (SystemKind.PERIOD_DOUBLING, SystemKind.SMOOTH_PD) else 1

    @property
    def is_piecewise(self) -> bool:
        return self is not SystemKind.SMOOTH_PD

    @property
    def label(self) -> str:
        return {
            SystemKind.PITCHFORK_SUPER: "F1",
            SystemKind.PITCHFORK_SUB: "F2",
            SystemKind.SADDLE_NODE: "F3",
            SystemKind.PERIOD_DOUBLING: "F4",
            SystemKind.SMOOTH_PD: "smooth",
        }[self]


class Branch(Enum):
    LINEAR = "linear"
    CONST_UPPER = "const-upper"
    CONST_LOWER = "const-lower"
    PLATEAU = "plateau"


class ContractionMode(Enum):
    NONUNIFORM = "nonuniform"
    UNIFORM = "uniform"


def rotation_is_rational(omega: float) -> bool:
    """True when ω is p/q·2π in double precision with q ≤ 1000"""
    ratio = Fraction(omega / TWO_PI).limit_denominator(MAX_RATIONAL_DENOMINATOR)
    return abs(omega - TWO_PI * ratio.numerator / ratio.denominator) <= 4.0 * math.ulp(TWO_PI)


@dataclass(frozen=True, eq=False)
class MapParams:
    kind: SystemKind
    a: float
    b: float = 0.0
    delta: float = 1.0
    omega: float = GOLDEN_OMEGA
    g: TrigPoly = field(default_factory=default_forcing)
    forcing_negated: bool = False

    def __post_init__(self):
        kind = self.kind
        if not isinstance(kind, SystemKind):
            try:
                kind = SystemKind(kind)
            except ValueError:
                raise InvalidParameterError(f"unknown system kind '{self.kind}'")
            object.__setattr__(self, 'kind', kind)

        a, b, delta, omega = float(self.a), float(self.b), float(self.delta), float(self.omega)
        for name, value in (('a', a), ('b', b), ('delta', delta), ('omega', omega)):
            if not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite, got {value}")
        if a == 0.0 or abs(a) == 1.0:
            raise InvalidParameterError(f"slope a = {a} is excluded (need |a| != 1 and a != 0)")
        if kind is SystemKind.PERIOD_DOUBLING and a > 0:
            raise InvalidParameterError(f"{kind.value} requires a < 0, got {a}")
        if kind is not SystemKind.PERIOD_DOUBLING and a < 0:
            raise InvalidParameterError(f"{kind.value} requires a > 0, got {a}")
        if delta <= 0:
            raise InvalidParameterError(f"delta must be positive, got {delta}")

        omega = math.fmod(omega, TWO_PI)
        if omega < 0:
            omega += TWO_PI
        if omega >= TWO_PI:
            omega = 0.0
        if rotation_is_rational(omega):
            raise InvalidParameterError(f"omega = {omega!r} is a rational rotation")

        g = self.g
        negated = self.forcing_negated
        if b < 0 and kind in (SystemKind.PITCHFORK_SUPER, SystemKind.PITCHFORK_SUB, SystemKind.PERIOD_DOUBLING):
            # b·g is unchanged by (b, g) -> (-b, -g)
            b, g, negated = -b, -g, not negated
            logger.debug(f"normalized negative b for {kind.value}: b={b}, forcing negated")

        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', b)
        object.__setattr__(self, 'delta', delta)
        object.__setattr__(self, 'omega', omega)
        object.__setattr__(self, 'g', g)
        object.__setattr__(self, 'forcing_negated', negated)

    @property
    def mode(self) -> ContractionMode:
        return ContractionMode.NONUNIFORM if abs(self.a) > 1 else ContractionMode.UNIFORM

    def with_b(self, b: float) -> "MapParams":
        return replace(self, b=b)

    def describe(self) -> Dict[str, str]:
        return {
            'kind': self.kind.value,
            'a': f"{self.a:.17g}",
            'b': f"{self.b:.17g}",
            'delta': f"{self.delta:.17g}",
            'omega': f"{self.omega:.17g}",
            'g': format_forcing(self.g),
            'forcing_negated': str(self.forcing_negated).lower(),
            'mode': self.mode.value,
        }


class HEval(NamedTuple):
    value: float
    branch: Branch


def breakpoints(params: MapParams) -> List[float]:
    a, kind = params.a, params.kind
    if kind is SystemKind.PITCHFORK_SUPER:
        return [-math.pi / (2 * a), math.pi / (2 * a)]
    if kind is SystemKind.PITCHFORK_SUB:
        return [-params.delta, params.delta]
    if kind is SystemKind.SADDLE_NODE:
        return [-1.0 / a]
    if kind is SystemKind.PERIOD_DOUBLING:
        return [1.0 / a]
    return []


def flat_value(kind: SystemKind, lower: bool = False) -> float:
    """Constant branch value; the image of the flat piece seeds the curve sequences"""
    if kind is SystemKind.PITCHFORK_SUPER:
        return -math.pi / 2 if lower else math.pi / 2
    if kind is SystemKind.PITCHFORK_SUB:
        return 0.0
    if kind is SystemKind.SADDLE_NODE:
        return -1.0
    return 1.0


def h_value(params: MapParams, x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=float)
    a, kind = params.a, params.kind
    if kind is SystemKind.PITCHFORK_SUPER:
        edge = math.pi / (2 * a)
        value = np.where(x > edge, math.pi / 2, np.where(x < -edge, -math.pi / 2, a * x))
    elif kind is SystemKind.PITCHFORK_SUB:
        d = params.delta
        value = np.where(x > d, a * (x - d), np.where(x < -d, a * (x + d), 0.0))
    elif kind is SystemKind.SADDLE_NODE:
        value = np.where(x >= -1.0 / a, a * x, -1.0)
    elif kind is SystemKind.PERIOD_DOUBLING:
        value = np.where(x >= 1.0 / a, a * x, 1.0)
    else:
        with np.errstate(over='ignore'):
            value = 1.0 - np.exp(a * x)
    return _as_output(value)


def is_flat(params: MapParams, x: ArrayLike) -> ArrayLike:
    """True where x lies strictly inside a constant branch"""
    x = np.asarray(x, dtype=float)
    a, kind = params.a, params.kind
    if kind is SystemKind.PITCHFORK_SUPER:
        edge = math.pi / (2 * a)
        flat = (x > edge) | (x < -edge)
    elif kind is SystemKind.PITCHFORK_SUB:
        flat = np.abs(x) < params.delta
    elif kind is SystemKind.SADDLE_NODE:
        flat = x < -1.0 / a
    elif kind is SystemKind.PERIOD_DOUBLING:
        flat = x < 1.0 / a
    else:
        flat = np.zeros_like(x, dtype=bool)
    return bool(flat) if np.ndim(flat) == 0 else flat


def classify_branch(params: MapParams, x: float) -> Branch:
    if not is_flat(params, x):
        return Branch.LINEAR
    kind = params.kind
    if kind is SystemKind.PITCHFORK_SUB:
        return Branch.PLATEAU
    if kind is SystemKind.PITCHFORK_SUPER and x > 0:
        return Branch.CONST_UPPER
    return Branch.CONST_LOWER


def h_eval(params: MapParams, x: float) -> HEval:
    return HEval(float(h_value(params, x)), classify_branch(params, float(x)))


def h_prime(params: MapParams, x: ArrayLike) -> ArrayLike:
    """a on linear branches and at breakpoints, 0 on constant branches"""
    x = np.asarray(x, dtype=float)
    if params.kind is SystemKind.SMOOTH_PD:
        with np.errstate(over='ignore'):
            return _as_output(-params.a * np.exp(params.a * x))
    return _as_output(np.where(is_flat(params, x), 0.0, params.a))


def rotate(theta: ArrayLike, omega: float) -> ArrayLike:
    rotated = np.mod(np.asarray(theta, dtype=float) + omega, TWO_PI)
    rotated = np.where(rotated >= TWO_PI, 0.0, rotated)
    return _as_output(rotated)


def forcing_term(params: MapParams, theta: ArrayLike) -> ArrayLike:
    """± b·g(θ) with the sign of the system"""
    return _as_output(params.kind.forcing_sign * params.b * np.asarray(trig_eval(params.g, theta)))


def step(params: MapParams, x: ArrayLike, theta: ArrayLike):
    x_bar = np.asarray(h_value(params, x)) + np.asarray(forcing_term(params, theta))
    return _as_output(x_bar), rotate(theta, params.omega)


def step2(params: MapParams, x: ArrayLike, theta: ArrayLike):
    x1, theta1 = step(params, x, theta)
    return step(params, x1, theta1)


# High-precision variants for evaluations that run through many expanding steps

def h_value_mp(params: MapParams, x):
    a = mpmath.mpf(params.a)
    kind = params.kind
    if kind is SystemKind.PITCHFORK_SUPER:
        edge = mpmath.pi / (2 * a)
        if x > edge:
            return mpmath.pi / 2
        if x < -edge:
            return -mpmath.pi / 2
        return a * x
    if kind is SystemKind.PITCHFORK_SUB:
        d = mpmath.mpf(params.delta)
        if x > d:
            return a * (x - d)
        if x < -d:
            return a * (x + d)
        return mpmath.mpf(0)
    if kind is SystemKind.SADDLE_NODE:
        return a * x if x >= -1 / a else mpmath.mpf(-1)
    if kind is SystemKind.PERIOD_DOUBLING:
        return a * x if x >= 1 / a else mpmath.mpf(1)
    return 1 - mpmath.exp(a * x)


def step_mp(params: MapParams, x, theta, b):
    """One step in mpmath arithmetic; the caller supplies b (possibly refined beyond double)"""
    value = h_value_mp(params, x) + params.kind.forcing_sign * b * trig_eval_mp(params.g, theta)
    return value, theta + mpmath.mpf(params.omega)


def scalar_map(params: MapParams) -> Tuple[Callable[[float], float], Callable[[float], float]]:
    """Plain-float h and h' for long sequential orbits, branch for branch the same as h_value"""
    a, kind = params.a, params.kind
    if kind is SystemKind.PITCHFORK_SUPER:
        edge, top = math.pi / (2 * a), math.pi / 2

        def h(x):
            return top if x > edge else (-top if x < -edge else a * x)

        def dh(x):
            return 0.0 if (x > edge or x < -edge) else a
    elif kind is SystemKind.PITCHFORK_SUB:
        d = params.delta

        def h(x):
            return a * (x - d) if x > d else (a * (x + d) if x < -d else 0.0)

        def dh(x):
            return 0.0 if abs(x) < d else a
    elif kind is SystemKind.SMOOTH_PD:
        def h(x):
            return 1.0 - math.exp(a * x)

        def dh(x):
            return -a * math.exp(a * x)
    else:
        edge = -1.0 / a if kind is SystemKind.SADDLE_NODE else 1.0 / a
        flat = flat_value(kind)

        def h(x):
            return a * x if x >= edge else flat

        def dh(x):
            return a if x >= edge else 0.0
    return h, dh
