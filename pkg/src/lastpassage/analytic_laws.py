"""Closed-form laws of first and last passage times.

Throughout, ``N`` is a standard normal variable, ``B`` a standard Brownian
motion and ``G_K = sup{t : M_t = K}`` the last passage time of a continuous
local martingale ``M`` at level ``K`` (zero if the level is never reached).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .quadrature import QuadratureError, integrate, integrate_to_infinity

__all__ = [
    "DomainError",
    "NonConvergenceError",
    "QuadratureError",
    "std_normal_cdf",
    "std_normal_pdf",
    "first_passage_density",
    "last_passage_density",
    "four_nsq_cdf",
    "LastPassageLaw",
    "gbm_gk_law",
    "killed_bm_gk_law",
    "inv_bes3_gk_law",
    "cosh_gk_law",
    "killed_bm_gk_cdf",
    "inv_bes3_gk_cdf",
    "cosh_gk_density",
    "bessel_iv",
    "bessel_transition_density",
    "bessel_last_passage_density",
    "sup_tail_from_phi",
    "ui_class",
    "ScalarLaw",
    "uniform_law",
    "exponential_law",
    "gamma_law",
    "four_nsq_law",
    "first_passage_law",
    "last_passage_law",
    "reciprocal_gamma_law",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """An argument lies outside the domain of a law or formula."""


class NonConvergenceError(ArithmeticError):
    """A limit could not be stabilised to the requested accuracy."""


def _positive_times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("time must be positive")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def std_normal_cdf(x):
    """Standard normal distribution function (scalar or array)."""
    return _out(special.ndtr(np.asarray(x, dtype=float)))


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x) / _SQRT2PI)


def first_passage_density(a: float, nu: float, t):
    """Density of ``T_a = inf{t : B_t + nu t = a}`` for ``a > 0``.

    ``a / sqrt(2 pi t^3) * exp(-(a - nu t)^2 / 2t)``; it has total mass
    ``exp(nu a - |nu a|)`` and is a proper law when ``nu >= 0``.
    """
    if not a > 0:
        raise DomainError("level must be positive")
    t = _positive_times(t)
    return _out(a / np.sqrt(2 * np.pi * t**3) * np.exp(-((a - nu * t) ** 2) / (2 * t)))


def last_passage_density(a: float, nu: float, t):
    """Density of ``G_a = sup{t : B_t + nu t = a}`` on ``t > 0``.

    ``|nu| / sqrt(2 pi t) * exp(-(a - nu t)^2 / 2t)``.  When ``a nu < 0``
    the remaining mass ``1 - exp(-2 |a nu|)`` sits at ``G = 0``.
    """
    if nu == 0:
        raise DomainError("drift must be non-zero")
    t = _positive_times(t)
    return _out(abs(nu) / np.sqrt(2 * np.pi * t) * np.exp(-((a - nu * t) ** 2) / (2 * t)))


def last_passage_atom(a: float, nu: float) -> float:
    """Mass of ``G_a = 0`` for Brownian motion with drift ``nu``."""
    if nu == 0:
        raise DomainError("drift must be non-zero")
    return 1.0 - math.exp(-2.0 * abs(a * nu)) if a * nu < 0 else 0.0


def four_nsq_cdf(t):
    """Distribution function of ``4 N^2``: ``2 N(sqrt(t) / 2) - 1``."""
    t = np.asarray(t, dtype=float)
    out = 2.0 * special.ndtr(0.5 * np.sqrt(np.maximum(t, 0.0))) - 1.0
    return _out(np.where(t > 0, out, 0.0))


@dataclass(frozen=True)
class LastPassageLaw:
    """Law of ``G_K``: an atom at zero plus a density on ``(0, inf)``.

    Attributes
    ----------
    atom_at_zero : float
        ``P(G_K = 0) = (1 - M_0 / K)^+``.
    density : callable
        ``t -> gamma_K(t)``, the density of ``G_K`` on ``t > 0``.
    """

    atom_at_zero: float
    density: Callable[[float], float]
    level: float = float("nan")
    # support starts here (the cosh model has no mass before 2 log(1/K))
    start: float = 0.0

    def _integrand(self):
        # t = s^2 removes the 1/sqrt(t) singularity at the origin
        def f(s):
            t = s * s
            return 2.0 * s * self.density(t) if t > 0 else 0.0

        return f

    def cdf(self, t: float, tol: float = 1e-10) -> float:
        """``P(G_K <= t)`` by quadrature of the density."""
        if t < 0:
            return 0.0
        return float(self.cdf_grid(np.array([t]), tol)[0])

    def cdf_grid(self, ts, tol: float = 1e-10) -> np.ndarray:
        """``P(G_K <= t)`` on an increasing grid of times."""
        ts = np.asarray(ts, dtype=float)
        if np.any(np.diff(ts) < 0):
            raise ValueError("times must be increasing")
        f = self._integrand()
        out = np.empty(ts.size)
        acc = self.atom_at_zero
        prev = math.sqrt(self.start)
        for j, t in enumerate(ts):
            s = math.sqrt(max(t, 0.0))
            if s > prev:
                acc += integrate(f, prev, s, tol)
                prev = s
            out[j] = acc
        return out

    def mass(self, tol: float = 1e-10) -> float:
        """Atom plus the integral of the density over ``(0, inf)``."""
        f = self._integrand()
        s0 = math.sqrt(self.start)
        return self.atom_at_zero + integrate_to_infinity(lambda s: f(s + s0), 0.0, tol)


def _lognormal_density(level, initial, t):
    t = _positive_times(t)
    sd = np.sqrt(t)
    z = (np.log(level / initial) + 0.5 * t) / sd
    return np.exp(-0.5 * z * z) / (_SQRT2PI * level * sd)


def gbm_gk_law(level: float, initial: float = 1.0) -> LastPassageLaw:
    """Law of ``G_K`` for ``M_t = M_0 exp(B_t - t/2)``.

    The density is ``(K / 2) m_t(K)`` with ``m_t`` the log-normal density
    of ``M_t``; the atom is ``(1 - M_0 / K)^+``.
    """
    if not (level > 0 and initial > 0):
        raise DomainError("level and initial value must be positive")
    atom = max(1.0 - initial / level, 0.0)
    return LastPassageLaw(atom, lambda t: _out(0.5 * level * _lognormal_density(level, initial, t)), level)


def _heat(x, t):
    return np.exp(-x * x / (2 * t)) / np.sqrt(2 * np.pi * t)


def _image_pair(x, x0, t):
    # heat(x - x0) - heat(x + x0) without cancellation at large t
    return _heat(x - x0, t) * -np.expm1(-2.0 * x * x0 / t)


def killed_bm_gk_law(level: float, initial: float = 1.0) -> LastPassageLaw:
    """Law of ``G_K`` for Brownian motion started at ``M_0`` and killed at 0.

    The density is ``m_t(K) / (2K)``, where ``m_t`` is the sub-probability
    density of the killed motion (method of images).
    """
    if not (level > 0 and initial > 0):
        raise DomainError("level and initial value must be positive")
    atom = max(1.0 - initial / level, 0.0)

    def dens(t):
        t = _positive_times(t)
        return _out(_image_pair(level, initial, t) / (2 * level))

    return LastPassageLaw(atom, dens, level)


def inv_bes3_gk_law(level: float, initial: float = 1.0) -> LastPassageLaw:
    """Law of ``G_K`` for ``M = 1 / R`` with ``R`` a 3-d Bessel process.

    Here ``sigma(x) = x^2`` and the density is ``(K / 2) p_t(1/M_0, 1/K)``
    with ``p_t(r0, r)`` the transition density of ``R``.
    """
    if not (level > 0 and initial > 0):
        raise DomainError("level and initial value must be positive")
    atom = max(1.0 - initial / level, 0.0)
    r0, r = 1.0 / initial, 1.0 / level

    def dens(t):
        t = _positive_times(t)
        p = (r / r0) * _image_pair(r, r0, t)
        return _out(0.5 * level * p)

    return LastPassageLaw(atom, dens, level)


def cosh_gk_density(level: float, t, initial: float = 1.0):
    """Density of ``G_K`` for ``M_t = M_0 cosh(B_t) exp(-t/2)``.

    ``(K^2 - M_0^2 e^{-t}) m_t(K) / 2K`` where ``m_t`` sums the two branches
    ``B_t = +-arccosh(K e^{t/2} / M_0)``; zero while ``K e^{t/2} < M_0``.
    """
    if not (level > 0 and initial > 0):
        raise DomainError("level and initial value must be positive")
    t = _positive_times(t)
    floor = initial * initial * np.exp(-t)
    ok = level * level > floor
    # s = M_0 sinh(b) e^{-t/2} at the level, so theta = s^2 and dM/db = s
    s = np.sqrt(np.where(ok, level * level - floor, 1.0))
    b = np.log((level + s) / initial) + 0.5 * t  # guarded arccosh(K e^{t/2} / M_0)
    # two branches b and -b, each with weight heat(b) / s
    out = np.where(ok, s * _heat(b, t) / level, 0.0)
    return _out(out)


def cosh_gk_law(level: float, initial: float = 1.0) -> LastPassageLaw:
    """Law of ``G_K`` for the cosh martingale (see :func:`cosh_gk_density`)."""
    if not (level > 0 and initial > 0):
        raise DomainError("level and initial value must be positive")
    atom = max(1.0 - initial / level, 0.0)
    start = max(2.0 * math.log(initial / level), 0.0)
    return LastPassageLaw(atom, lambda t: cosh_gk_density(level, t, initial), level, start)


def _uniform_mixture_cdf(lo: float, hi: float, t: float, tol: float) -> float:
    # P(U^2 / N^2 <= t) with U uniform on [lo, hi]
    if t <= 0:
        return 0.0
    st = math.sqrt(t)
    val = integrate(lambda u: 2.0 * special.ndtr(-u / st), lo, hi, tol)
    return val / (hi - lo)


def killed_bm_gk_cdf(level: float, t: float, tol: float = 1e-10) -> float:
    """``P(G_K <= t)`` for Brownian motion from 1 killed at 0, ``0 < K <= 1``.

    ``G_K`` has the law of ``U^2 / N^2`` with ``U`` uniform on
    ``[1 - K, 1 + K]`` independent of ``N``.
    """
    if not 0 < level <= 1:
        raise DomainError("level must lie in (0, 1]")
    return _uniform_mixture_cdf(1.0 - level, 1.0 + level, t, tol)


def inv_bes3_gk_cdf(level: float, t: float, tol: float = 1e-10) -> float:
    """``P(G_K <= t)`` for ``1 / R`` (3-d Bessel from 1), ``0 < K < 1``.

    ``G_K`` has the law of ``U^2 / N^2`` with ``U`` uniform on
    ``[1/K - 1, 1/K + 1]``.
    """
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    return _uniform_mixture_cdf(1.0 / level - 1.0, 1.0 / level + 1.0, t, tol)


def bessel_iv(nu: float, z: float, scaled: bool = False, rtol: float = 1e-14) -> float:
    """Modified Bessel function ``I_nu(z)`` by its ascending series.

    Terms are summed in scaled form ``e^{-z} I_nu(z)`` and the sum stops once
    a term past the peak falls below ``rtol`` relative to the partial sum.
    """
    if z < 0 or nu < 0:
        raise DomainError("need z >= 0 and nu >= 0")
    if z == 0:
        val = 1.0 if nu == 0 else 0.0
        return val
    half = 0.5 * z
    log_term = nu * math.log(half) - math.lgamma(nu + 1.0) - z
    term = math.exp(log_term)
    total = term
    q = half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + nu))
        total += term
        if k > half and term <= rtol * total:
            break
        if k > 100000:
            raise NonConvergenceError("Bessel series did not converge")
    return total if scaled else total * math.exp(z)


def bessel_transition_density(delta: float, x: float, y: float, t: float) -> float:
    """Transition density ``p_t(x, y)`` of a Bessel process of dimension delta."""
    if not (delta > 0 and y > 0 and t > 0 and x >= 0):
        raise DomainError("need delta > 0, y > 0, t > 0, x >= 0")
    nu = 0.5 * delta - 1.0
    if x == 0:
        log_p = (-nu * math.log(2.0) - (nu + 1.0) * math.log(t) + (2 * nu + 1) * math.log(y)
                 - y * y / (2 * t) - math.lgamma(nu + 1.0))
        return math.exp(log_p)
    z = x * y / t
    scaled = bessel_iv(abs(nu), z, scaled=True) if nu >= 0 else bessel_iv(abs(nu), z, scaled=True)
    if nu < 0:
        # I_{-nu} = I_nu + (2/pi) sin(nu pi) K_nu; only nu >= 0 is used here
        raise DomainError("dimension must be at least 2")
    return (y / t) * (y / x) ** nu * math.exp(-((x - y) ** 2) / (2 * t)) * scaled


def bessel_last_passage_density(delta: float, x: float, a: float, t):
    """Density of the last passage time at ``a`` of a transient Bessel process.

    ``(delta - 2) / (2a) * p_t(x, a)`` for ``delta > 2``.  From ``x = 0`` this
    is the density of ``a^2 / (2 gamma_nu)`` with ``nu = delta/2 - 1``.
    """
    if not delta > 2:
        raise DomainError("dimension must exceed 2")
    if not (a > 0 and x >= 0):
        raise DomainError("need a > 0 and x >= 0")
    ts = _positive_times(t)
    out = np.array([0.5 * (delta - 2.0) / a * bessel_transition_density(delta, x, a, float(s))
                    for s in np.atleast_1d(ts)])
    return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


def _check_phi(phi, x):
    v = phi(x)
    if not v < x:
        raise DomainError(f"need phi(x) < x, got phi({x}) = {v}")
    return v


def _log_tail_increment(phi, lo: float, hi: float, tol: float) -> float:
    # integral of dx / (x - phi(x)) over [lo, hi] with x = lo * e^u
    def f(u):
        x = lo * math.exp(u)
        return x / (x - _check_phi(phi, x))

    return integrate(f, 0.0, math.log(hi / lo), tol)


def sup_tail_from_phi(phi: Callable[[float], float], a: float, b: float, tol: float = 1e-8) -> float:
    """``P(S_inf >= b)`` for ``M`` stopped when ``M = phi(S)``.

    ``exp(-int_a^b dx / (x - phi(x)))``; ``phi(x) < x`` is required on the
    range.  Equals 1 at ``b = a``.
    """
    if not a > 0:
        raise DomainError("initial value must be positive")
    if b < a:
        raise DomainError("need b >= a")
    _check_phi(phi, a)
    if b == a:
        return 1.0
    return math.exp(-_log_tail_increment(phi, a, b, tol))


def ui_class(phi: Callable[[float], float], a: float, max_doublings: int = 40,
             tol: float = 1e-4) -> float:
    """Constant ``c = 1 - lim_b b P(S_inf >= b) / a`` (clamped to ``[0, 1]``).

    The limit runs along ``b = a 2^k``, ``k <= max_doublings``, and is
    accelerated with Aitken's delta-squared process.  ``c = 1`` means
    ``E[M_inf] = M_0``; ``c = 0`` means ``M_inf = 0``.
    """
    if not a > 0:
        raise DomainError("initial value must be positive")
    _check_phi(phi, a)
    log_tail = 0.0
    values = [1.0]
    b = a
    for _ in range(max_doublings):
        log_tail += _log_tail_increment(phi, b, 2.0 * b, 1e-10)
        b *= 2.0
        values.append(b * math.exp(-log_tail) / a)
        if values[-1] < 1e-300:
            break
    accel = []
    for k in range(2, len(values)):
        v0, v1, v2 = values[k - 2], values[k - 1], values[k]
        den = v2 - 2.0 * v1 + v0
        accel.append(v2 - (v2 - v1) ** 2 / den if abs(den) > 1e-300 else v2)
    if not accel:
        accel = values[-1:]
    if len(accel) >= 2 and abs(accel[-1] - accel[-2]) > tol:
        raise NonConvergenceError(
            f"tail product not stabilised: last estimates {accel[-2]:.6g}, {accel[-1]:.6g}")
    return min(max(1.0 - accel[-1], 0.0), 1.0)


@dataclass(frozen=True)
class ScalarLaw:
    """A law on the half-line given by density, distribution function and
    sampler.  ``sampler(rng, size)`` takes an explicit ``numpy`` generator.
    """

    name: str
    support: tuple[float, float]
    density: Callable
    cdf: Callable
    sampler: Callable[[np.random.Generator, int], np.ndarray]

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        return self.sampler(rng, size)


def uniform_law(lo: float = 0.0, hi: float = 1.0) -> ScalarLaw:
    if not hi > lo:
        raise DomainError("need hi > lo")
    w = hi - lo
    return ScalarLaw(
        f"uniform({lo}, {hi})", (lo, hi),
        lambda x: _out(np.where((np.asarray(x) >= lo) & (np.asarray(x) <= hi), 1.0 / w, 0.0)),
        lambda x: _out(np.clip((np.asarray(x, dtype=float) - lo) / w, 0.0, 1.0)),
        lambda rng, n: rng.uniform(lo, hi, n),
    )


def exponential_law(rate: float = 1.0) -> ScalarLaw:
    if not rate > 0:
        raise DomainError("rate must be positive")
    return ScalarLaw(
        f"exponential({rate})", (0.0, math.inf),
        lambda x: _out(np.where(np.asarray(x) >= 0, rate * np.exp(-rate * np.asarray(x, float)), 0.0)),
        lambda x: _out(np.where(np.asarray(x) > 0, -np.expm1(-rate * np.asarray(x, float)), 0.0)),
        lambda rng, n: rng.exponential(1.0 / rate, n),
    )


def gamma_law(shape: float) -> ScalarLaw:
    """Law of ``gamma_shape`` (unit scale)."""
    if not shape > 0:
        raise DomainError("shape must be positive")

    def dens(x):
        x = np.asarray(x, float)
        xs = np.where(x > 0, x, 1.0)
        return _out(np.where(x > 0, np.exp((shape - 1) * np.log(xs) - xs - math.lgamma(shape)), 0.0))

    return ScalarLaw(
        f"gamma({shape})", (0.0, math.inf), dens,
        lambda x: _out(special.gammainc(shape, np.maximum(np.asarray(x, float), 0.0))),
        lambda rng, n: rng.gamma(shape, 1.0, n),
    )


def reciprocal_gamma_law(shape: float, scale: float = 1.0) -> ScalarLaw:
    """Law of ``scale^2 / (2 gamma_shape)``."""
    if not (shape > 0 and scale > 0):
        raise DomainError("shape and scale must be positive")
    c = 0.5 * scale * scale

    def dens(t):
        t = np.asarray(t, float)
        ts = np.where(t > 0, t, 1.0)
        log_d = shape * math.log(c) - (shape + 1) * np.log(ts) - c / ts - math.lgamma(shape)
        return _out(np.where(t > 0, np.exp(log_d), 0.0))

    def cdf(t):
        t = np.asarray(t, float)
        ts = np.where(t > 0, t, 1.0)
        return _out(np.where(t > 0, special.gammaincc(shape, c / ts), 0.0))

    return ScalarLaw(f"{scale}^2/(2 gamma({shape}))", (0.0, math.inf), dens, cdf,
                     lambda rng, n: c / rng.gamma(shape, 1.0, n))


def four_nsq_law() -> ScalarLaw:
    """Law of ``4 N^2``."""

    def dens(t):
        t = np.asarray(t, float)
        ts = np.where(t > 0, t, 1.0)
        return _out(np.where(t > 0, np.exp(-ts / 8) / (2 * np.sqrt(2 * np.pi * ts)), 0.0))

    return ScalarLaw("4N^2", (0.0, math.inf), dens, four_nsq_cdf,
                     lambda rng, n: 4.0 * rng.standard_normal(n) ** 2)


def first_passage_law(a: float, nu: float = 0.0) -> ScalarLaw:
    """Law of ``T_a`` for Brownian motion with drift ``nu >= 0``, ``a > 0``."""
    if not (a > 0 and nu >= 0):
        raise DomainError("need a > 0 and nu >= 0")

    def cdf(t):
        t = np.asarray(t, float)
        ts = np.where(t > 0, t, 1.0)
        sq = np.sqrt(ts)
        out = special.ndtr((nu * ts - a) / sq) + np.exp(2 * a * nu) * special.ndtr(-(nu * ts + a) / sq)
        return _out(np.where(t > 0, out, 0.0))

    def sampler(rng, n):
        if nu == 0:
            return a * a / rng.standard_normal(n) ** 2
        return rng.wald(a / nu, a * a, n)

    def dens(t):
        t = np.asarray(t, float)
        ts = np.where(t > 0, t, 1.0)
        return _out(np.where(t > 0, first_passage_density(a, nu, ts), 0.0))

    return ScalarLaw(f"T({a}, {nu})", (0.0, math.inf), dens, cdf, sampler)


def last_passage_law(a: float, nu: float) -> ScalarLaw:
    """Law of ``G_a`` for Brownian motion with drift ``nu != 0``.

    Includes the atom at zero when ``a nu < 0``.  The distribution function
    and the sampler use time inversion: for ``a nu > 0``, ``G_a`` has the law
    of ``1 / T_nu`` for drift ``a``.
    """
    if nu == 0:
        raise DomainError("drift must be non-zero")
    atom = last_passage_atom(a, nu)

    def dens(t):
        t = np.asarray(t, float)
        ts = np.where(t > 0, t, 1.0)
        return _out(np.where(t > 0, last_passage_density(a, nu, ts), 0.0))

    aa, vv = abs(a), abs(nu)
    crossing = first_passage_law(vv, aa).cdf if aa > 0 else None

    def cdf(t):
        # given a crossing, G_a has the law of G_|a|, i.e. of 1 / T_|nu| for drift |a|
        t = np.asarray(t, float)
        ts = np.where(t > 0, t, 1.0)
        if aa == 0:
            inner = special.gammainc(0.5, 0.5 * vv * vv * ts)
        else:
            inner = 1.0 - crossing(1.0 / ts)
        out = np.where(t > 0, atom + (1.0 - atom) * inner, np.where(t == 0, atom, 0.0))
        return _out(out)

    def sampler(rng, n):
        out = np.empty(n)
        if aa == 0:
            out[:] = rng.standard_normal(n) ** 2 / (vv * vv)
            return out
        draws = 1.0 / rng.wald(vv / aa, vv * vv, n)
        if atom > 0:
            draws = np.where(rng.random(n) < atom, 0.0, draws)
        return draws

    return ScalarLaw(f"G({a}, {nu})", (0.0, math.inf), dens, cdf, sampler)
