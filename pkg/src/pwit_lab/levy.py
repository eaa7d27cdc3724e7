"""Lévy measures of driftless subordinators and Poisson-arrival sampling.

Three parametric families are supported, all with infinite total mass:

* ``Stable(c, alpha)``            density ``c x^(-1-alpha)``
* ``TemperedStable(c, alpha, p)`` density ``c x^(-1-alpha) exp(-x^p)``
* ``GammaType(a, b)``             density ``a x^(-1) exp(-b x)``

Arrivals of a Poisson process with intensity ``scale * Pi`` are generated
largest first through the series representation ``x_k = Pi^{-1}(G_k / scale)``
where ``G_k`` are partial sums of unit exponentials. Points below ``cutoff``
are dropped and replaced by their mean mass.
"""
from __future__ import annotations

import enum
import math
import re
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import integrate, optimize, special

from ._backend import USE_NUMBA, njit
from .errors import DomainError, NumericalError, ResourceError

DEFAULT_CUTOFF = 1e-6
MAX_ARRIVALS = 10**7
TABLE_SIZE = 2048

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _check_positive(name, value):
    value = float(value)
    if not (value > 0.0) or not math.isfinite(value):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Stable:
    c: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "c", _check_positive("c", self.c))
        if not 0.0 < float(self.alpha) < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "alpha", float(self.alpha))

    def density(self, x):
        return self.c * np.power(x, -1.0 - self.alpha)

    def _tail(self, x):
        return self.c * x ** (-self.alpha) / self.alpha

    def _small_jump_mean(self, eps):
        return self.c * eps ** (1.0 - self.alpha) / (1.0 - self.alpha)

    def _mean(self):
        return math.inf

    def _x_hi(self):
        return None


@dataclass(frozen=True)
class TemperedStable:
    c: float = 1.0
    alpha: float = 0.5
    p: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "c", _check_positive("c", self.c))
        object.__setattr__(self, "p", _check_positive("p", self.p))
        if not 0.0 < float(self.alpha) < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "alpha", float(self.alpha))

    def density(self, x):
        return self.c * np.power(x, -1.0 - self.alpha) * np.exp(-np.power(x, self.p))

    def _tail(self, x):
        c, a, p = self.c, self.alpha, self.p

        # in s = log t the integrand c t^-alpha exp(-t^p) is smooth and bounded on bounded sets
        def f(s):
            return c * math.exp(-a * s - math.exp(p * s))

        lo = math.log(x)
        hi = math.log(x**p + 745.0) / p
        cuts = [lo] + ([0.0] if lo < 0.0 < hi else []) + [hi]
        return sum(_quad(f, u, v) for u, v in zip(cuts[:-1], cuts[1:]))

    def _small_jump_mean(self, eps):
        s = (1.0 - self.alpha) / self.p
        return self.c / self.p * special.gamma(s) * special.gammainc(s, eps**self.p)

    def _mean(self):
        return self.c / self.p * special.gamma((1.0 - self.alpha) / self.p)

    def _x_hi(self):
        return max(600.0 ** (1.0 / self.p), 10.0)


@dataclass(frozen=True)
class GammaType:
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", _check_positive("a", self.a))
        object.__setattr__(self, "b", _check_positive("b", self.b))

    def density(self, x):
        return self.a * np.exp(-self.b * np.asarray(x, dtype=float)) / x

    def _tail(self, x):
        return self.a * float(special.exp1(self.b * x))

    def _small_jump_mean(self, eps):
        return -self.a * math.expm1(-self.b * eps) / self.b

    def _mean(self):
        return self.a / self.b

    def _x_hi(self):
        return max(600.0 / self.b, 10.0)


LevyMeasureSpec = Union[Stable, TemperedStable, GammaType]


class MomentClass(enum.Enum):
    FiniteMean = "FiniteMean"
    InfiniteMean = "InfiniteMean"


def _quad(f, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"quadrature on [{a}, {b}] failed: {exc}") from None
    if not math.isfinite(val) or err > 1e-10 * abs(val) + 1e-300:
        raise NumericalError(f"quadrature on [{a}, {b}] error estimate {err:g} for value {val:g}")
    return val


# --------------------------------------------------------------------------- text form

_SPEC_FIELDS = {
    "stable": (Stable, ("c", "alpha")),
    "tempered": (TemperedStable, ("c", "alpha", "p")),
    "gamma": (GammaType, ("a", "b")),
}


def parse_spec(text: str) -> LevyMeasureSpec:
    """Parse ``stable:c=1,alpha=0.5``-style encodings."""
    m = re.fullmatch(r"\s*(\w+)\s*:(.*)", text)
    if m is None or m.group(1) not in _SPEC_FIELDS:
        raise DomainError(f"cannot parse Lévy spec {text!r}")
    cls, names = _SPEC_FIELDS[m.group(1)]
    values = {}
    for item in filter(None, (s.strip() for s in m.group(2).split(","))):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in names or key in values:
            raise DomainError(f"bad field {item!r} in Lévy spec {text!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise DomainError(f"bad number {val!r} in Lévy spec {text!r}") from None
    missing = set(names) - set(values)
    if missing:
        raise DomainError(f"Lévy spec {text!r} lacks {sorted(missing)}")
    return cls(**values)


def format_spec(spec: LevyMeasureSpec) -> str:
    for tag, (cls, names) in _SPEC_FIELDS.items():
        if type(spec) is cls:
            return tag + ":" + ",".join(f"{n}={getattr(spec, n)!r}" for n in names)
    raise DomainError(f"unknown Lévy spec {spec!r}")


# --------------------------------------------------------------------------- measure functionals


def tail_mass(spec: LevyMeasureSpec, x: float) -> float:
    """Pi((x, inf))."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"tail_mass needs x > 0, got {x!r}")
    if math.isinf(x):
        return 0.0
    return float(spec._tail(x))


def small_jump_mean(spec: LevyMeasureSpec, eps: float) -> float:
    """Integral of x Pi(dx) over (0, eps]."""
    eps = float(eps)
    if not eps > 0.0:
        raise DomainError(f"small_jump_mean needs eps > 0, got {eps!r}")
    val = float(spec._small_jump_mean(eps))
    if not math.isfinite(val):
        raise NumericalError(f"small-jump integral diverges for {spec!r}")
    return val


def mean(spec: LevyMeasureSpec) -> float:
    """Integral of x Pi(dx) over (0, inf); ``inf`` for stable measures."""
    return float(spec._mean())


def first_moment_class(spec: LevyMeasureSpec) -> MomentClass:
    if isinstance(spec, Stable):
        return MomentClass.InfiniteMean
    return MomentClass.FiniteMean


def median_max_conductance(spec: LevyMeasureSpec) -> float:
    """Median of the largest arrival, the solution of exp(-Pi(x, inf)) = 1/2."""
    return inverse_tail(spec, math.log(2.0))


def inverse_tail(spec: LevyMeasureSpec, u: float) -> float:
    """The x with Pi((x, inf)) = u."""
    u = float(u)
    if not u > 0.0:
        raise DomainError(f"inverse_tail needs u > 0, got {u!r}")
    if isinstance(spec, Stable):
        return (spec.alpha * u / spec.c) ** (-1.0 / spec.alpha)
    target = math.log(u)

    def g(s):
        t = spec._tail(math.exp(s))
        return (math.log(t) if t > 0.0 else -math.inf) - target

    lo, hi = -2.0, 2.0
    for _ in range(200):
        if g(lo) >= 0.0:
            break
        lo = 2.0 * lo - 1.0
        if lo < -690.0:
            raise NumericalError(f"cannot bracket inverse_tail({u!r}): tail({math.exp(lo):g}) < u")
    for _ in range(200):
        if g(hi) <= 0.0:
            break
        hi = 1.5 * hi + 1.0
        if hi > 700.0:
            raise NumericalError(f"cannot bracket inverse_tail({u!r}): tail({math.exp(hi):g}) > u")
    s = optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(s)


def levy_exponent(spec: LevyMeasureSpec, theta: float) -> complex:
    """Psi(theta) = integral of (exp(i theta x) - 1) Pi(dx)."""
    theta = float(theta)
    if theta == 0.0:
        return 0j
    w = abs(theta)
    dens = spec.density

    def near_re(x):
        # cos(wx) - 1 written without cancellation
        return -2.0 * math.sin(0.5 * w * x) ** 2 * dens(x)

    def near_im(x):
        return math.sin(w * x) * dens(x)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            re0, e1 = integrate.quad(near_re, 0.0, 1.0, epsabs=1e-11, epsrel=1e-11, limit=400)
            im0, e2 = integrate.quad(near_im, 0.0, 1.0, epsabs=1e-11, epsrel=1e-11, limit=400)
            re1, e3 = integrate.quad(dens, 1.0, np.inf, weight="cos", wvar=w, epsabs=1e-11, limlst=100)
            im1, e4 = integrate.quad(dens, 1.0, np.inf, weight="sin", wvar=w, epsabs=1e-11, limlst=100)
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"levy_exponent({theta}) quadrature failed: {exc}") from None
    if e1 + e2 + e3 + e4 > 1e-8:
        raise NumericalError(f"levy_exponent({theta}) error estimate {e1 + e2 + e3 + e4:g}")
    val = complex(re0 + re1 - tail_mass(spec, 1.0), im0 + im1)
    return val if theta > 0 else val.conjugate()


# --------------------------------------------------------------------------- inverse-tail table


@dataclass(frozen=True)
class InverseMap:
    """Hot-path inverse of the tail, ``log x`` as a function of ``log u``.

    ``mode`` 0 is the closed stable form; mode 1 is a cubic Hermite table on
    2048 knots with exact derivatives.
    """

    mode: int
    c: float
    alpha: float
    knots: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    x_lo: float


@lru_cache(maxsize=64)
def _build_inverse_map(spec: LevyMeasureSpec, x_lo: float) -> InverseMap:
    if isinstance(spec, Stable):
        dummy = np.zeros(2)
        return InverseMap(0, spec.c, spec.alpha, dummy, dummy, dummy, 0.0)
    x_hi = spec._x_hi()
    s = np.linspace(math.log(x_lo), math.log(x_hi), TABLE_SIZE)

    def g(sv):
        x = np.exp(sv)
        return x * spec.density(x)

    mid = 0.5 * (s[1:] + s[:-1])
    half = 0.5 * np.diff(s)
    pieces = (g(mid[:, None] + half[:, None] * _GL_NODES[None, :]) @ _GL_WEIGHTS) * half
    top = spec._tail(x_hi)
    tails = top + np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    logu = np.log(tails)
    dlogx_dlogu = -tails / g(s)
    # ascending in log u
    return InverseMap(
        1,
        0.0,
        0.0,
        np.ascontiguousarray(logu[::-1]),
        np.ascontiguousarray(s[::-1]),
        np.ascontiguousarray(dlogx_dlogu[::-1]),
        x_lo,
    )


def inverse_map(spec: LevyMeasureSpec, cutoff: float) -> InverseMap:
    """Inverse table covering every x down to below ``cutoff``."""
    x_lo = 1e-12
    while x_lo > 0.25 * cutoff:
        x_lo *= 1e-3
    return _build_inverse_map(spec, x_lo)


@njit
def inverse_log(y, mode, c, alpha, knots, values, slopes):
    """log x with Pi((x, inf)) = exp(y), scalar kernel."""
    if mode == 0:
        return -(math.log(alpha) + y - math.log(c)) / alpha
    n = knots.shape[0]
    if y <= knots[0]:
        return values[0] + slopes[0] * (y - knots[0])
    if y >= knots[n - 1]:
        return values[n - 1] + slopes[n - 1] * (y - knots[n - 1])
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if knots[mid] <= y:
            lo = mid
        else:
            hi = mid
    h = knots[hi] - knots[lo]
    t = (y - knots[lo]) / h
    t2 = t * t
    t3 = t2 * t
    return (
        (2.0 * t3 - 3.0 * t2 + 1.0) * values[lo]
        + (t3 - 2.0 * t2 + t) * h * slopes[lo]
        + (-2.0 * t3 + 3.0 * t2) * values[hi]
        + (t3 - t2) * h * slopes[hi]
    )


@njit
def _inverse_log_many(y, mode, c, alpha, knots, values, slopes):
    out = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        out[i] = inverse_log(y[i], mode, c, alpha, knots, values, slopes)
    return out


def _inverse_log_numpy(y, m: InverseMap):
    if m.mode == 0:
        return -(math.log(m.alpha) + y - math.log(m.c)) / m.alpha
    k, v, d = m.knots, m.values, m.slopes
    hi = np.clip(np.searchsorted(k, y, side="right"), 1, k.size - 1)
    lo = hi - 1
    h = k[hi] - k[lo]
    t = (y - k[lo]) / h
    t2 = t * t
    t3 = t2 * t
    out = (
        (2.0 * t3 - 3.0 * t2 + 1.0) * v[lo]
        + (t3 - 2.0 * t2 + t) * h * d[lo]
        + (-2.0 * t3 + 3.0 * t2) * v[hi]
        + (t3 - t2) * h * d[hi]
    )
    below = y <= k[0]
    above = y >= k[-1]
    out[below] = v[0] + d[0] * (y[below] - k[0])
    out[above] = v[-1] + d[-1] * (y[above] - k[-1])
    return out


def inverse_tail_fast(spec: LevyMeasureSpec, u, cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    """Vectorized table inverse of the tail for ``u`` values whose preimage is above ``cutoff``."""
    m = inverse_map(spec, cutoff)
    y = np.log(np.asarray(u, dtype=float).ravel())
    if USE_NUMBA:
        lx = _inverse_log_many(y, m.mode, m.c, m.alpha, m.knots, m.values, m.slopes)
    else:
        lx = _inverse_log_numpy(y, m)
    return np.exp(lx)


# --------------------------------------------------------------------------- sampling


@dataclass(frozen=True)
class ArrivalBatch:
    conductances: np.ndarray
    residual_mean: float
    cutoff: float
    scale: float

    @property
    def total(self) -> float:
        return float(self.conductances.sum()) + self.residual_mean


def _check_budget(spec, scale, cutoff, max_count):
    expected = scale * tail_mass(spec, cutoff)
    if expected > max_count:
        raise ResourceError(
            f"expected {expected:.3g} arrivals above cutoff {cutoff:g} exceeds limit {max_count:g}"
        )
    return expected


def sample_arrivals_desc(
    spec: LevyMeasureSpec,
    scale: float,
    cutoff: float,
    rng,
    max_count: int = MAX_ARRIVALS,
) -> ArrivalBatch:
    """Arrivals above ``cutoff`` of a Poisson process with intensity ``scale * Pi``, largest first.

    ``rng`` needs a ``standard_exponential(size)`` method: a numpy Generator
    or a :class:`~pwit_lab._rng.HashStream`.
    """
    scale = _check_positive("scale", scale)
    cutoff = _check_positive("cutoff", cutoff)
    expected = _check_budget(spec, scale, cutoff, max_count)
    m = inverse_map(spec, cutoff)
    log_scale = math.log(scale)
    chunk = int(expected + 6.0 * math.sqrt(expected) + 16)
    parts = []
    last = 0.0
    while True:
        g = np.cumsum(np.concatenate(([last], rng.standard_exponential(chunk))))[1:]
        y = np.log(g) - log_scale
        if USE_NUMBA:
            x = np.exp(_inverse_log_many(y, m.mode, m.c, m.alpha, m.knots, m.values, m.slopes))
        else:
            x = np.exp(_inverse_log_numpy(y, m))
        stop = np.flatnonzero(x < cutoff)
        if stop.size:
            parts.append(x[: stop[0]])
            break
        parts.append(x)
        last = g[-1]
        if sum(p.size for p in parts) > max_count:
            raise ResourceError(f"arrival count exceeded limit {max_count}")
    return ArrivalBatch(np.concatenate(parts), scale * small_jump_mean(spec, cutoff), cutoff, scale)


def sample_id(spec: LevyMeasureSpec, scale: float, cutoff: float, rng, max_count: int = MAX_ARRIVALS) -> float:
    """One draw from ID(scale * Pi) with sub-cutoff jumps replaced by their mean."""
    return sample_arrivals_desc(spec, scale, cutoff, rng, max_count).total


def sample_id_many(
    spec: LevyMeasureSpec,
    scale: float,
    cutoff: float,
    rng: np.random.Generator,
    size: int,
    max_count: int = MAX_ARRIVALS,
) -> np.ndarray:
    """``size`` independent draws of :func:`sample_id`.

    One arrival batch at intensity ``size * scale`` is coloured uniformly over
    the draws; by Poisson colouring each draw gets an independent batch at
    intensity ``scale``.
    """
    size = int(size)
    if size < 1:
        raise DomainError("size must be at least 1")
    batch = sample_arrivals_desc(spec, scale * size, cutoff, rng, max_count)
    owner = rng.integers(0, size, batch.conductances.size)
    out = np.bincount(owner, weights=batch.conductances, minlength=size)
    return out + scale * small_jump_mean(spec, cutoff)
