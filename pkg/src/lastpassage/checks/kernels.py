"""Compiled per-path functionals used by the identity checks.

Each ``*_chunk`` routine simulates paths ``p0 .. p1-1`` and writes one row
of results per path into arrays indexed from zero.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from ..engine.kernels import (
    ABSORBED,
    RUNNING,
    bridge_local_time,
    bridge_local_time_needed,
    last_hit,
    local_time_step,
    max_over,
    simulate_one,
)
from ..engine.rng import (
    STREAM_ABSORB,
    STREAM_AUX,
    STREAM_HIT,
    STREAM_LOCAL_TIME,
    STREAM_NORMAL,
    STREAM_TAIL,
    normal_pair,
    uniform_pair,
)

_jit = nb.njit(cache=True, nogil=True)


@_jit
def _buffers(n):
    return np.empty(n), np.empty(n), np.empty(n - 1)


@_jit
def _end_value(ms, last, status):
    # value that bounds later excursions; zero once absorbed
    return 0.0 if status == ABSORBED else ms[last]


@_jit
def _tail_sup(k0, k1, p, end_value, doob_tail):
    # sup after the horizon: drawn as end/U in doob mode, else ignored
    if doob_tail and end_value > 0.0:
        u, _ = uniform_pair(k0, k1, 0, STREAM_TAIL, p)
        return end_value / u
    return 0.0


@_jit
def sup_chunk(kind, a, alpha, times, k0, k1, p0, p1, retire, out_sup, out_end):
    xs, ms, sm = _buffers(times.size)
    for p in range(p0, p1):
        last, status, _ = simulate_one(kind, a, alpha, times, k0, k1, p, retire, xs, ms, sm)
        out_sup[p - p0] = max_over(ms, sm, 0, last)
        out_end[p - p0] = _end_value(ms, last, status)


@_jit
def passage_chunk(kind, a, alpha, times, k0, k1, p0, p1, retire, levels, i_t, out_mt, out_none, out_end):
    """For each level: ``M_t`` and whether no crossing occurs on ``[t, end]``."""
    xs, ms, sm = _buffers(times.size)
    for p in range(p0, p1):
        last, status, _ = simulate_one(kind, a, alpha, times, k0, k1, p, retire, xs, ms, sm)
        j = p - p0
        it = i_t if i_t < last else last
        out_mt[j] = ms[it]
        out_end[j] = _end_value(ms, last, status)
        for q in range(levels.size):
            g = last_hit(kind, a, levels[q], times, xs, last, k0, k1, p, STREAM_HIT + q, it)
            out_none[j, q] = 1.0 if g < 0.0 else 0.0


@_jit
def last_passage_chunk(kind, a, alpha, times, k0, k1, p0, p1, retire, level, out_g, out_end):
    """Sampled last passage time (``0`` if never, before censoring)."""
    xs, ms, sm = _buffers(times.size)
    for p in range(p0, p1):
        last, status, _ = simulate_one(kind, a, alpha, times, k0, k1, p, retire, xs, ms, sm)
        g = last_hit(kind, a, level, times, xs, last, k0, k1, p, STREAM_HIT, 0)
        out_g[p - p0] = g if g > 0.0 else 0.0
        out_end[p - p0] = _end_value(ms, last, status)


@_jit
def sup_after_chunk(kind, a, alpha, times, k0, k1, p0, p1, retire, idx, doob_tail,
                    out_m, out_before, out_after, out_end):
    """Per observation node: ``M_t``, ``sup_{s<=t} M``, ``sup_{s>=t} M``."""
    xs, ms, sm = _buffers(times.size)
    for p in range(p0, p1):
        last, status, _ = simulate_one(kind, a, alpha, times, k0, k1, p, retire, xs, ms, sm)
        j = p - p0
        end = _end_value(ms, last, status)
        out_end[j] = end
        tail = _tail_sup(k0, k1, p, end, doob_tail)
        for q in range(idx.size):
            it = idx[q] if idx[q] < last else last
            out_m[j, q] = ms[it]
            out_before[j, q] = max_over(ms, sm, 0, it)
            after = max_over(ms, sm, it, last)
            out_after[j, q] = after if after > tail else tail


@_jit
def local_time_chunk(kind, a, alpha, times, k0, k1, p0, p1, retire, levels, eps, n_fine,
                     out_lt, out_end):
    """Local time at each level for each bandwidth (GBM or Brownian models).

    ``eps[q, e]`` is the kernel half-width for level ``q``; a value ``<= 0``
    selects the Brownian-bridge sampler on every step.  Steps past
    ``n_fine`` always use the bridge sampler.  ``out_lt[j, q, e]`` receives
    the local time.
    """
    xs, ms, sm = _buffers(times.size)
    nl = levels.size
    ne = eps.shape[1]
    coord = np.empty(nl)
    scale = np.empty(nl)
    for q in range(nl):
        # GBM is simulated in log space: L^K(M) = K L^{log K}(log M)
        coord[q] = math.log(levels[q]) if kind == 0 else levels[q]
        scale[q] = levels[q] if kind == 0 else 1.0
    acc = np.zeros((nl, ne))
    for p in range(p0, p1):
        last, status, _ = simulate_one(kind, a, alpha, times, k0, k1, p, retire, xs, ms, sm)
        acc[:, :] = 0.0
        for i in range(last):
            h = times[i + 1] - times[i]
            x = xs[i]
            y = xs[i + 1]
            fine = i < n_fine
            m = ms[i]
            qv = m * m * h if kind == 0 else h
            for q in range(nl):
                bridge = -1.0
                for e in range(ne):
                    w = eps[q, e]
                    if fine and w > 0.0:
                        if abs(m - levels[q]) <= w:
                            acc[q, e] += qv / (2.0 * w)
                    else:
                        if bridge < 0.0:
                            bridge = 0.0
                            c = coord[q]
                            if bridge_local_time_needed(x, y, h, c):
                                u, _ = uniform_pair(k0, k1, i, STREAM_LOCAL_TIME + q, p)
                                bridge = scale[q] * bridge_local_time(x, y, h, c, u)
                        acc[q, e] += bridge
        j = p - p0
        out_lt[j, :, :] = acc
        out_end[j] = _end_value(ms, last, status)


@_jit
def azema_chunk(times, k0, k1, p0, p1, retire, level, idx, out_n, out_gap, out_ltinf, out_end):
    """Azema supermartingale representation for GBM at ``level <= M_0``."""
    xs, ms, sm = _buffers(times.size)
    for p in range(p0, p1):
        last, status, _ = simulate_one(0, 1.0, 0.0, times, k0, k1, p, retire, xs, ms, sm)
        j = p - p0
        lt = 0.0
        smax_n = min(ms[0] / level, 1.0)
        q = 0
        for i in range(last + 1):
            while q < idx.size and idx[q] == i:
                z = min(ms[i] / level, 1.0)
                nval = z * math.exp(lt / (2.0 * level))
                out_n[j, q] = nval
                out_gap[j, q] = abs(nval / smax_n - z)
                q += 1
            if i == last:
                break
            lt += local_time_step(0, 1.0, level, times, xs, ms, i, k0, k1, p, STREAM_LOCAL_TIME, -1.0, 0)
            nxt = min(ms[i + 1] / level, 1.0) * math.exp(lt / (2.0 * level))
            if nxt > smax_n:
                smax_n = nxt
        while q < idx.size:
            # path retired before the node: frozen value, no further local time
            z = min(ms[last] / level, 1.0)
            nval = z * math.exp(lt / (2.0 * level))
            out_n[j, q] = nval
            out_gap[j, q] = abs(nval / smax_n - z)
            q += 1
        out_ltinf[j] = lt
        out_end[j] = ms[last]


@_jit
def power_chunk(times, k0, k1, p0, p1, out_t0, out_int2, out_alive):
    """Absorption time and ``int_0^T0 beta^2 ds`` for killed Brownian motion from 1."""
    xs, ms, sm = _buffers(times.size)
    for p in range(p0, p1):
        last, status, t_end = simulate_one(1, 1.0, 0.0, times, k0, k1, p, 0.0, xs, ms, sm)
        j = p - p0
        acc = 0.0
        for i in range(last):
            x = xs[i]
            y = xs[i + 1]
            h = times[i + 1] - times[i]
            if status == ABSORBED and i == last - 1:
                h = t_end - times[i]
                y = 0.0
            if h <= 0.0:
                continue
            z, _ = normal_pair(k0, k1, i, STREAM_AUX, p)
            # bridge integral of beta^2: mean plus the leading Gaussian term
            inc = h * (x * x + x * y + y * y) / 3.0 + h * h / 6.0 + (x + y) * math.sqrt(h * h * h / 12.0) * z
            acc += inc if inc > 0.0 else 0.0
        out_int2[j] = acc
        out_t0[j] = t_end
        out_alive[j] = 1.0 if status != ABSORBED else 0.0


@_jit
def stopped_chunk(alpha, times, k0, k1, p0, p1, level, i_t, out):
    """Functionals of the alpha-stopped motion from 1.

    Columns: M_t, M_inf (or M at horizon), S_inf, S on [t, inf), stopped
    flag, stopping time, no crossing of ``level`` on [t, end].
    """
    xs, ms, sm = _buffers(times.size)
    for p in range(p0, p1):
        last, status, t_end = simulate_one(4, 1.0, alpha, times, k0, k1, p, 0.0, xs, ms, sm)
        j = p - p0
        it = i_t if i_t < last else last
        out[j, 0] = ms[it]
        out[j, 1] = ms[last]
        out[j, 2] = max_over(ms, sm, 0, last)
        out[j, 3] = max_over(ms, sm, it, last)
        out[j, 4] = 1.0 if status == ABSORBED else 0.0
        out[j, 5] = t_end
        if level > 0.0:
            g = last_hit(4, 1.0, level, times, xs, last, k0, k1, p, STREAM_HIT, it)
            out[j, 6] = 1.0 if g < 0.0 else 0.0
        else:
            out[j, 6] = 0.0


@_jit
def killed_profile_chunk(dt, cap, ceiling, k0, k1, p0, p1, levels, eps, out_lt, out_bridge, out_rest):
    """Local times below ``ceiling`` of Brownian motion from 1 killed at 0.

    An excursion above ``ceiling`` adds nothing at the levels and always
    comes back, so the walk restarts at ``ceiling`` whenever it passes it:
    only time spent below the ceiling is simulated.  ``out_lt[j, q, e]`` is
    the kernel estimate with half-width ``eps[e]``, ``out_bridge[j, q]`` the
    Brownian-bridge estimate.  ``out_rest`` holds the position of paths still
    alive after ``cap`` steps, else 0.
    """
    nl = levels.size
    ne = eps.size
    sh = math.sqrt(dt)
    for p in range(p0, p1):
        j = p - p0
        for q in range(nl):
            out_bridge[j, q] = 0.0
            for e in range(ne):
                out_lt[j, q, e] = 0.0
        x = 1.0
        z_spare = 0.0
        alive = True
        for i in range(cap):
            if (i & 1) == 0:
                z, z_spare = normal_pair(k0, k1, i >> 1, STREAM_NORMAL, p)
            else:
                z = z_spare
            y = x + sh * z
            for q in range(nl):
                c = levels[q]
                for e in range(ne):
                    if abs(x - c) <= eps[e]:
                        out_lt[j, q, e] += dt / (2.0 * eps[e])
                if bridge_local_time_needed(x, y, dt, c):
                    u, _ = uniform_pair(k0, k1, i, STREAM_LOCAL_TIME + q, p)
                    out_bridge[j, q] += bridge_local_time(x, y, dt, c, u)
            if y <= 0.0:
                alive = False
                break
            e2 = 2.0 * x * y / dt
            if e2 < 40.0 and uniform_pair(k0, k1, i, STREAM_ABSORB, p)[0] < math.exp(-e2):
                alive = False
                break
            x = y if y < ceiling else ceiling
        out_rest[j] = x if alive else 0.0
