"""Option prices on the exponential martingale ``E_t = exp(B_t - t/2)``.

Prices are for unit spot, unit volatility and zero rates.  General spot,
volatility and drift reduce to this case by rescaling (see
:func:`rescale_inputs`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .analytic_laws import (
    DomainError,
    gbm_gk_law,
    last_passage_atom,
    last_passage_density,
    std_normal_cdf,
)
from .quadrature import integrate, integrate_to_infinity

__all__ = [
    "PriceQuote",
    "bs_price",
    "alt_price",
    "qian_weighted",
    "DupireResidual",
    "dupire_residual",
    "global_price_identity",
    "rescale_inputs",
]

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PriceQuote:
    """Call and put on ``E_t`` with maturity ``t`` and strike ``K``."""

    call: float
    put: float
    t: float
    K: float


def _check(t: float, K: float) -> None:
    if not t >= 0:
        raise DomainError("maturity must be non-negative")
    if not K > 0:
        raise DomainError("strike must be positive")


def bs_price(t: float, K: float) -> PriceQuote:
    """Black-Scholes prices ``E[(E_t - K)^+]`` and ``E[(K - E_t)^+]``.

    The call is ``N(-log K / sqrt t + sqrt t / 2) - K N(-log K / sqrt t - sqrt t / 2)``
    and the put follows from parity ``call - put = 1 - K``.  At ``t = 0``
    the intrinsic values are returned.
    """
    _check(t, K)
    if t == 0:
        call = max(1.0 - K, 0.0)
    else:
        st = math.sqrt(t)
        lk = math.log(K)
        call = std_normal_cdf(-lk / st + 0.5 * st) - K * std_normal_cdf(-lk / st - 0.5 * st)
        call = max(call, max(1.0 - K, 0.0))
    return PriceQuote(call, call - (1.0 - K), t, K)


def alt_price(t: float, K: float, side: str = "call", tol: float = 1e-11) -> float:
    """Price from the law of ``G_1``: ``(1-K)^+- + sqrt(K) E[1{4N^2 <= t} f_K(N)]``.

    ``f_K(x) = exp(-(log K)^2 / 8x^2)``.  The expectation is an integral
    against the Gaussian density, computed by adaptive quadrature; it does
    not use the normal distribution function.
    """
    _check(t, K)
    if side not in ("call", "put"):
        raise ValueError("side must be 'call' or 'put'")
    intrinsic = max(1.0 - K, 0.0) if side == "call" else max(K - 1.0, 0.0)
    if t == 0:
        return intrinsic
    c = math.log(K) ** 2 / 8.0

    def f(x):
        if x == 0.0:
            return 0.0 if c > 0 else _INV_SQRT2PI
        return math.exp(-0.5 * x * x - c / (x * x)) * _INV_SQRT2PI

    # 2 * int_0^{sqrt(t)/2} phi(x) f_K(x) dx
    expect = 2.0 * integrate(f, 0.0, 0.5 * math.sqrt(t), tol)
    return intrinsic + math.sqrt(K) * expect


def qian_weighted(mu_bar: Callable[[float], float], tol: float = 1e-11) -> float:
    """``E[mu_bar(4 N^2)]`` for a non-increasing tail function ``mu_bar``.

    Equals ``int E[(E_t - 1)^+] mu(dt)`` when ``mu_bar(t) = mu((t, inf))``.
    The expectation is taken against the Gaussian density; a ``ValueError``
    is raised if ``mu_bar`` increases anywhere on the quadrature nodes.
    """
    nodes: dict[float, float] = {}

    def f(x):
        v = float(mu_bar(4.0 * x * x))
        nodes[x] = v
        return 2.0 * v * math.exp(-0.5 * x * x) * _INV_SQRT2PI

    value = integrate_to_infinity(f, 0.0, tol)
    xs = sorted(nodes)
    vals = [nodes[x] for x in xs]
    for prev, cur, x in zip(vals, vals[1:], xs[1:]):
        if cur > prev + 1e-12 * max(1.0, abs(prev)):
            raise ValueError(f"mu_bar is not non-increasing (near t = {4 * x * x:.6g})")
    return value


@dataclass(frozen=True)
class DupireResidual:
    """Finite-difference check of the maturity derivative of the put.

    Attributes
    ----------
    d_maturity, d2_strike : float
        Central differences of the put in maturity and (twice) in strike.
    residual_half : float
        ``d_maturity - K^2 d2_strike / 2``, the diffusion-equation form.
    residual_density : float
        ``d_maturity - K gamma_K(T)`` with ``gamma_K`` the density of ``G_K``.
    residual_unhalved : float
        ``d_maturity - K^2 d2_strike``; non-zero, kept for comparison.
    """

    T: float
    K: float
    d_maturity: float
    d2_strike: float
    residual_half: float
    residual_density: float
    residual_unhalved: float


def dupire_residual(T: float, K: float) -> DupireResidual:
    """Central differences with ``h_T = 1e-4 max(T, 1)``, ``h_K = 1e-4 max(K, 1)``."""
    _check(T, K)
    hT = 1e-4 * max(T, 1.0)
    hK = 1e-4 * max(K, 1.0)
    if T <= hT:
        raise DomainError("maturity too small for a central difference")
    put = lambda t, k: bs_price(t, k).put
    dT = (put(T + hT, K) - put(T - hT, K)) / (2 * hT)
    dKK = (put(T, K + hK) - 2 * put(T, K) + put(T, K - hK)) / (hK * hK)
    theta = K * K
    gamma = gbm_gk_law(K).density(T)
    return DupireResidual(T, K, dT, dKK, dT - 0.5 * theta * dKK, dT - K * gamma, dT - theta * dKK)


def global_price_identity(t: float, K: float, tol: float = 1e-11) -> tuple[float, float]:
    """The call ``E[(E_t - K)^+]`` and ``P(G <= t)`` for ``G`` the last passage
    at ``log K`` of ``B_s + s/2``.

    The probability includes the mass ``1 - K`` at ``G = 0`` when ``K < 1``.
    """
    _check(t, K)
    a = math.log(K)
    atom = last_passage_atom(a, 0.5)
    if t == 0:
        return bs_price(t, K).call, atom
    # s = u^2 removes the 1/sqrt(s) singularity
    f = lambda u: 2.0 * u * last_passage_density(a, 0.5, u * u) if u > 0 else (
        2.0 * 0.5 / math.sqrt(2 * math.pi) if a == 0 else 0.0)
    return bs_price(t, K).call, atom + integrate(f, 0.0, math.sqrt(t), tol)


def rescale_inputs(t: float, K: float, spot: float = 1.0, sigma: float = 1.0,
                   nu: float | None = None) -> tuple[float, float, float]:
    """Map ``E[(S_0 exp(sigma B_t + nu t) - K)^+]`` onto unit prices.

    Returns ``(t', K', factor)`` with price ``factor * bs_price(t', K').call``.
    ``nu`` defaults to ``-sigma^2 / 2`` (the martingale case).
    """
    if not (spot > 0 and sigma > 0):
        raise DomainError("spot and volatility must be positive")
    if nu is None:
        nu = -0.5 * sigma * sigma
    growth = math.exp((nu + 0.5 * sigma * sigma) * t)
    factor = spot * growth
    return sigma * sigma * t, K / factor, factor
