"""Compiled path kernels.

One routine, :func:`simulate_one`, draws a path on a fixed grid and records,
per node, the driving coordinate and the martingale value, and per step an
upper bound of the martingale over the step.  For models that are monotone
functions of a Brownian motion the step maximum is drawn exactly from the
Brownian-bridge law, and crossings of levels between nodes are resolved with
bridge hitting probabilities.  The functionals below are shared by the
path-level API and by the batch checks.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .models import ALPHA_STOPPED, BROWNIAN, COSH_EXP, GBM, INV_BES3, KILLED_BM
from .rng import (
    STREAM_ABSORB,
    STREAM_HIT,
    STREAM_LOCAL_TIME,
    STREAM_MAX,
    STREAM_NORMAL,
    STREAM_NORMAL_EXTRA,
    normal_pair,
    uniform_pair,
)

RUNNING, ABSORBED, RETIRED = 0, 1, 2

_jit = nb.njit(cache=True, nogil=True)


@_jit
def bridge_max(x, y, h, u):
    """Maximum of a Brownian bridge from ``x`` to ``y`` over time ``h``."""
    d = y - x
    return 0.5 * (x + y + math.sqrt(d * d - 2.0 * h * math.log(u)))


@_jit
def bridge_local_time(x, y, h, c, u):
    """Local time at ``c`` of a Brownian bridge from ``x`` to ``y``.

    Uses the inverse of ``P(L > l) = exp(-((l + |x-c| + |y-c|)^2 - (y-x)^2) / 2h)``.
    """
    a = abs(x - c) + abs(y - c)
    d2 = (y - x) * (y - x)
    if (a * a - d2) > 120.0 * h:
        return 0.0
    l = math.sqrt(d2 - 2.0 * h * math.log(u)) - a
    return l if l > 0.0 else 0.0


@_jit
def bridge_local_time_needed(x, y, h, c):
    """False when the bridge local time at ``c`` is zero up to ``exp(-60)``."""
    a = abs(x - c) + abs(y - c)
    return (a * a - (y - x) * (y - x)) <= 120.0 * h


@_jit
def simulate_one(kind, a, alpha, times, k0, k1, path, retire, xs, ms, smax):
    """Draw one path.

    Returns ``(last, status, t_end)``: the last valid node, the status
    (running to the horizon, absorbed or stopped, retired) and the time at
    which the path ended (absorption time, or ``times[last]``).
    """
    n = times.size - 1
    w1 = 0.0
    w2 = 0.0
    s = a
    if kind == GBM:
        x = math.log(a)
        m = a
    elif kind == INV_BES3:
        x = 1.0 / a
        m = a
    elif kind == COSH_EXP:
        x = 0.0
        m = a
    elif kind == BROWNIAN:
        x = 0.0
        m = 0.0
        s = 0.0
    else:
        x = a
        m = a
    xs[0] = x
    ms[0] = m
    z_spare = 0.0
    u_spare = 0.0
    for i in range(n):
        t0 = times[i]
        t1 = times[i + 1]
        h = t1 - t0
        sh = math.sqrt(h)
        if kind == INV_BES3:
            za, zb = normal_pair(k0, k1, i, STREAM_NORMAL, path)
            zc, _ = normal_pair(k0, k1, i, STREAM_NORMAL_EXTRA, path)
            w0 = x + sh * za
            w1 = w1 + sh * zb
            w2 = w2 + sh * zc
            # keep the first axis carrying the radius: rotate the frame
            r = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
            y = r
            my = 1.0 / r
            smax[i] = m if m > my else my
            xs[i + 1] = y
            ms[i + 1] = my
            # rotation invariance: continue from (r, 0, 0)
            w1 = 0.0
            w2 = 0.0
            x = y
            m = my
            if my <= retire:
                return i + 1, RETIRED, t1
            continue
        if (i & 1) == 0:
            z, z_spare = normal_pair(k0, k1, i >> 1, STREAM_NORMAL, path)
            u, u_spare = uniform_pair(k0, k1, i >> 1, STREAM_MAX, path)
        else:
            z = z_spare
            u = u_spare
        if kind == GBM:
            y = x - 0.5 * h + sh * z
            smax[i] = math.exp(bridge_max(x, y, h, u))
            my = math.exp(y)
            xs[i + 1] = y
            ms[i + 1] = my
            x = y
            m = my
            if my <= retire:
                return i + 1, RETIRED, t1
        elif kind == COSH_EXP:
            y = x + sh * z
            my = a * math.cosh(y) * math.exp(-0.5 * t1)
            smax[i] = m if m > my else my
            xs[i + 1] = y
            ms[i + 1] = my
            x = y
            m = my
            if my <= retire:
                return i + 1, RETIRED, t1
        elif kind == BROWNIAN:
            y = x + sh * z
            smax[i] = bridge_max(x, y, h, u)
            xs[i + 1] = y
            ms[i + 1] = y
            x = y
        else:
            # killed or alpha-stopped Brownian motion
            y = x + sh * z
            bx = bridge_max(x, y, h, u)
            smax[i] = bx
            if bx > s:
                s = bx
            barrier = alpha * s if kind == ALPHA_STOPPED else 0.0
            if y <= barrier:
                d0 = x - barrier
                frac = d0 / (d0 - (y - barrier)) if d0 > 0.0 else 0.0
                xs[i + 1] = barrier
                ms[i + 1] = barrier
                return i + 1, ABSORBED, t0 + frac * h
            d0 = x - barrier
            if d0 < 0.0:
                d0 = 0.0
            e = 2.0 * d0 * (y - barrier) / h
            if e < 40.0 and uniform_pair(k0, k1, i, STREAM_ABSORB, path)[0] < math.exp(-e):
                xs[i + 1] = barrier
                ms[i + 1] = barrier
                return i + 1, ABSORBED, t0 + 0.5 * h
            xs[i + 1] = y
            ms[i + 1] = y
            x = y
    return n, RUNNING, times[n]


@_jit
def level_coordinate(kind, a, level, t):
    """Level ``M = level`` expressed in the driving coordinate at time ``t``.

    For the cosh model the level is a pair of moving barriers ``+-c``; the
    routine returns ``c`` or ``-1`` when ``M > level`` everywhere at time t.
    """
    if kind == GBM:
        return math.log(level)
    if kind == INV_BES3:
        return 1.0 / level
    if kind == COSH_EXP:
        q = level * math.exp(0.5 * t) / a
        if q < 1.0:
            return -1.0
        return math.log(q + math.sqrt((q - 1.0) * (q + 1.0)))
    return level


@_jit
def _one_sided(d0, d1, h):
    # crossing probability and location for a bridge relative to a barrier
    if d0 == 0.0 or d1 == 0.0 or (d0 < 0.0) != (d1 < 0.0):
        if d0 == d1:
            return 1.0, 1.0
        return 1.0, d0 / (d0 - d1)
    return math.exp(-2.0 * d0 * d1 / h), 0.5


@_jit
def hit_avoiding_zero(x, y, c, h):
    """Chance that a Brownian bridge from ``x`` to ``y`` conditioned to stay
    positive meets ``c > 0``.

    This is the exact law for the killed motion given survival, and for the
    radius of a three-dimensional Brownian motion.
    """
    if (x - c) * (y - c) <= 0.0:
        return 1.0
    den = -math.expm1(-2.0 * x * y / h)
    if den <= 0.0:
        return 1.0
    if x > c:
        return math.exp(-2.0 * (x - c) * (y - c) / h) * (-math.expm1(-2.0 * c * (x + y - c) / h)) / den
    # both below c: survival inside (0, c) relative to survival above 0
    if c * c > 0.5 * h:
        # image series of the strip (0, c)
        tot = 0.0
        for k in range(-8, 9):
            tot += math.exp(-(x - y + 2.0 * k * c) ** 2 / (2.0 * h)) - math.exp(-(x + y + 2.0 * k * c) ** 2 / (2.0 * h))
        stay = tot / (math.exp(-(x - y) ** 2 / (2.0 * h)) * den)
    else:
        # eigenfunction series of the strip
        tot = 0.0
        for n in range(1, 40):
            w = n * math.pi / c
            term = math.sin(w * x) * math.sin(w * y) * math.exp(-0.5 * w * w * h)
            tot += term
            if abs(term) < 1e-18:
                break
        free = math.exp(-(x - y) ** 2 / (2.0 * h)) * den / math.sqrt(2.0 * math.pi * h)
        stay = (2.0 / c) * tot / free if free > 0.0 else 0.0
    if stay < 0.0:
        stay = 0.0
    return 1.0 - stay if stay < 1.0 else 0.0


@_jit
def step_hit(kind, a, level, t0, t1, x0, x1):
    """Probability that the path meets ``level`` during a step, and where.

    Returns ``(p, frac)``: ``p = 1`` for a sign change on the grid, otherwise
    the Brownian-bridge hitting probability; ``frac`` is the crossing
    location as a fraction of the step (linear interpolation for sign
    changes, the midpoint for bridge excursions).
    """
    h = t1 - t0
    if kind == COSH_EXP:
        c0 = level_coordinate(kind, a, level, t0)
        c1 = level_coordinate(kind, a, level, t1)
        if c1 < 0.0:
            return 0.0, 0.5
        if c0 < 0.0:
            c0 = 0.0
        pu, fu = _one_sided(x0 - c0, x1 - c1, h)
        pl, fl = _one_sided(x0 + c0, x1 + c1, h)
        if pu == 1.0 and pl == 1.0:
            return 1.0, fu if fu > fl else fl
        if pu == 1.0:
            return 1.0, fu
        if pl == 1.0:
            return 1.0, fl
        return 1.0 - (1.0 - pu) * (1.0 - pl), 0.5
    c = level_coordinate(kind, a, level, t0)
    if (kind == KILLED_BM or kind == INV_BES3) and x0 > 0.0 and x1 > 0.0 and c > 0.0:
        p = hit_avoiding_zero(x0, x1, c, h)
        return p, (0.5 if p < 1.0 else _one_sided(x0 - c, x1 - c, h)[1])
    return _one_sided(x0 - c, x1 - c, h)


@_jit
def last_hit(kind, a, level, times, xs, last, k0, k1, path, stream, first):
    """Last time the path meets ``level`` on steps ``first .. last-1``.

    Returns ``-1.0`` when no crossing is found.  Steps are scanned backwards
    and each bridge excursion is accepted with its hitting probability, so
    the returned step has the exact conditional law given the skeleton.
    """
    for i in range(last - 1, first - 1, -1):
        p, frac = step_hit(kind, a, level, times[i], times[i + 1], xs[i], xs[i + 1])
        if p >= 1.0:
            return times[i] + frac * (times[i + 1] - times[i])
        if p > 0.0:
            u, _ = uniform_pair(k0, k1, i, stream, path)
            if u < p:
                return times[i] + frac * (times[i + 1] - times[i])
    return -1.0


@_jit
def max_over(ms, smax, i0, last):
    """Maximum of the path over nodes ``i0 .. last`` including the steps."""
    out = ms[i0]
    for i in range(i0, last):
        if smax[i] > out:
            out = smax[i]
    if ms[last] > out:
        out = ms[last]
    return out


@_jit
def local_time_step(kind, a, level, times, xs, ms, i, k0, k1, path, stream, eps, n_fine):
    """Local time of ``M`` at ``level`` accumulated over step ``i``.

    Fine steps use the kernel occupation estimate with half-width ``eps``
    (``eps <= 0`` selects the bridge sampler on every step); coarse steps
    always use the exact Brownian-bridge local time of the driving motion.
    """
    h = times[i + 1] - times[i]
    if eps > 0.0 and i < n_fine:
        m = ms[i]
        if abs(m - level) <= eps:
            if kind == GBM:
                q = m * m
            else:
                q = 1.0
            return q * h / (2.0 * eps)
        return 0.0
    if kind == GBM:
        c = math.log(level)
        scale = level
    else:
        c = level
        scale = 1.0
    if not bridge_local_time_needed(xs[i], xs[i + 1], h, c):
        return 0.0
    u, _ = uniform_pair(k0, k1, i, stream, path)
    return scale * bridge_local_time(xs[i], xs[i + 1], h, c, u)
