"""
Trigonometric polynomials for the forcing term g and the linear-branch curves
Evaluation, derivative, classification, sample projection and the CLI coefficient format
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Union

import mpmath
import numpy as np

from errors import InvalidParameterError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
EVEN_HARMONIC_TOL = 1e-12
NONNEGATIVE_TOL = 1e-12

ArrayLike = Union[float, np.ndarray]


def uniform_grid(grid_size: int) -> np.ndarray:
    """θ_j = 2πj/M, computed so that a grid of 2M shares the M nodes bit for bit"""
    return TWO_PI * np.arange(grid_size) / grid_size


def _as_output(values: np.ndarray) -> ArrayLike:
    return float(values) if np.ndim(values) == 0 else values


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Σ sin_coeffs[n]·sin(nθ) + cos_coeffs[n]·cos(nθ) for n = 0..N"""

    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    def __post_init__(self):
        cos = np.array(self.cos_coeffs, dtype=float).ravel()
        sin = np.array(self.sin_coeffs, dtype=float).ravel()
        if cos.size == 0:
            raise InvalidParameterError("a trigonometric polynomial needs at least the constant coefficient")
        if sin.size != cos.size:
            raise InvalidParameterError(
                f"cos and sin coefficient arrays differ in length ({cos.size} vs {sin.size})"
            )
        if not (np.all(np.isfinite(cos)) and np.all(np.isfinite(sin))):
            raise InvalidParameterError("coefficients must be finite")
        sin[0] = 0.0
        cos.setflags(write=False)
        sin.setflags(write=False)
        object.__setattr__(self, 'cos_coeffs', cos)
        object.__setattr__(self, 'sin_coeffs', sin)

    @classmethod
    def constant(cls, value: float, degree: int = 0) -> "TrigPoly":
        cos = np.zeros(degree + 1)
        cos[0] = value
        return cls(cos, np.zeros(degree + 1))

    @classmethod
    def zero(cls, degree: int = 0) -> "TrigPoly":
        return cls.constant(0.0, degree)

    @classmethod
    def from_harmonics(cls, cos: List[float], sin: List[float]) -> "TrigPoly":
        """cos holds c0..cN, sin holds s1..sN (either may be shorter)"""
        degree = max(len(cos) - 1, len(sin), 0)
        cos_coeffs = np.zeros(degree + 1)
        sin_coeffs = np.zeros(degree + 1)
        cos_coeffs[:len(cos)] = cos
        sin_coeffs[1:len(sin) + 1] = sin
        return cls(cos_coeffs, sin_coeffs)

    @property
    def degree(self) -> int:
        return self.cos_coeffs.size - 1

    @property
    def constant_term(self) -> float:
        return float(self.cos_coeffs[0])

    def padded(self, degree: int) -> "TrigPoly":
        if degree < self.degree:
            raise InvalidParameterError(f"cannot pad degree {self.degree} down to {degree}")
        cos = np.zeros(degree + 1)
        sin = np.zeros(degree + 1)
        cos[:self.degree + 1] = self.cos_coeffs
        sin[:self.degree + 1] = self.sin_coeffs
        return TrigPoly(cos, sin)

    def is_zero(self) -> bool:
        return not (np.any(self.cos_coeffs) or np.any(self.sin_coeffs))

    def __call__(self, theta: ArrayLike) -> ArrayLike:
        return trig_eval(self, theta)

    def __add__(self, other: "TrigPoly") -> "TrigPoly":
        degree = max(self.degree, other.degree)
        left, right = self.padded(degree), other.padded(degree)
        return TrigPoly(left.cos_coeffs + right.cos_coeffs, left.sin_coeffs + right.sin_coeffs)

    def __mul__(self, factor: float) -> "TrigPoly":
        return TrigPoly(self.cos_coeffs * factor, self.sin_coeffs * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "TrigPoly":
        return self * -1.0

    def __repr__(self) -> str:
        return f"TrigPoly({format_forcing(self)})"


def default_forcing() -> TrigPoly:
    """g(θ) = 1 + cos θ"""
    return TrigPoly([1.0, 1.0], [0.0, 0.0])


def trig_eval(p: TrigPoly, theta: ArrayLike) -> ArrayLike:
    """Evaluate p at θ (scalar or array), summing harmonics in ascending order"""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidParameterError("theta must be finite")
    total = np.zeros_like(theta)
    cos, sin = p.cos_coeffs, p.sin_coeffs
    for n in range(p.degree + 1):
        if n == 0:
            total = total + cos[0]
        else:
            total = total + sin[n] * np.sin(n * theta) + cos[n] * np.cos(n * theta)
    return _as_output(total)


def trig_eval_mp(p: TrigPoly, theta) -> mpmath.mpf:
    """Same sum in the current mpmath precision; coefficients are taken as exact binary values"""
    total = mpmath.mpf(p.cos_coeffs[0])
    for n in range(1, p.degree + 1):
        total += mpmath.mpf(p.sin_coeffs[n]) * mpmath.sin(n * theta)
        total += mpmath.mpf(p.cos_coeffs[n]) * mpmath.cos(n * theta)
    return total


def trig_derivative(p: TrigPoly) -> TrigPoly:
    n = np.arange(p.degree + 1, dtype=float)
    return TrigPoly(n * p.sin_coeffs, -n * p.cos_coeffs)


@dataclass(frozen=True)
class ForcingClass:
    nonnegative: bool
    pi_antisymmetric: bool


def classify_forcing(p: TrigPoly, grid_size: int) -> ForcingClass:
    """Which of the two symmetry hypotheses on g hold"""
    if grid_size < 2 * p.degree + 2:
        raise InvalidParameterError(
            f"grid_size {grid_size} too small for degree {p.degree} (need {2 * p.degree + 2})"
        )
    values = np.asarray(trig_eval(p, uniform_grid(grid_size)))
    nonnegative = bool(values.min() >= -NONNEGATIVE_TOL)
    even = np.concatenate([p.cos_coeffs[0::2], p.sin_coeffs[0::2]])
    pi_antisymmetric = bool(np.all(np.abs(even) <= EVEN_HARMONIC_TOL))
    return ForcingClass(nonnegative=nonnegative, pi_antisymmetric=pi_antisymmetric)


def project_samples(samples: np.ndarray, target_degree: int) -> TrigPoly:
    """Degree-N discrete Fourier projection of samples taken on the uniform grid"""
    samples = np.asarray(samples, dtype=float)
    grid_size = samples.size
    if target_degree < 0:
        raise InvalidParameterError("target degree must be nonnegative")
    if grid_size < 2 * target_degree + 2:
        raise InvalidParameterError(
            f"{grid_size} samples cannot resolve degree {target_degree} (need {2 * target_degree + 2})"
        )
    spectrum = np.fft.rfft(samples)
    cos = np.zeros(target_degree + 1)
    sin = np.zeros(target_degree + 1)
    cos[0] = spectrum[0].real / grid_size
    cos[1:] = 2.0 * spectrum[1:target_degree + 1].real / grid_size
    sin[1:] = -2.0 * spectrum[1:target_degree + 1].imag / grid_size
    return TrigPoly(cos, sin)


def parse_forcing(spec: str) -> TrigPoly:
    """Parse "cos:c0,c1,...;sin:s1,s2,..." or "default" """
    text = spec.strip()
    if text.lower() == 'default':
        return default_forcing()
    cos: List[float] = []
    sin: List[float] = []
    seen = set()
    for part in filter(None, (chunk.strip() for chunk in text.split(';'))):
        key, sep, body = part.partition(':')
        key = key.strip().lower()
        if not sep or key not in ('cos', 'sin') or key in seen:
            raise InvalidParameterError(f"malformed forcing spec '{spec}'")
        seen.add(key)
        try:
            values = [float(item) for item in body.split(',') if item.strip()]
        except ValueError as e:
            raise InvalidParameterError(f"malformed forcing spec '{spec}': {e}")
        if key == 'cos':
            cos = values
        else:
            sin = values
    if not seen:
        raise InvalidParameterError(f"empty forcing spec '{spec}'")
    return TrigPoly.from_harmonics(cos or [0.0], sin)


def format_forcing(p: TrigPoly) -> str:
    cos = ','.join(f"{c:.17g}" for c in p.cos_coeffs)
    text = f"cos:{cos}"
    if p.degree > 0 and np.any(p.sin_coeffs[1:]):
        text += ";sin:" + ','.join(f"{s:.17g}" for s in p.sin_coeffs[1:])
    return text
