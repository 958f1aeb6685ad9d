"""Azema-Yor embedding of a centred law in Brownian motion.

For a centred law ``nu`` the barycentre ``psi(x) = E_nu[Y | Y >= x]`` defines
the stopping time ``T = inf{t : S_t >= psi(B_t)}``; ``B_T`` then has law
``nu``.  Paths are simulated on the engine grid; the running maximum over
each step comes from the Brownian-bridge law, and a stop is resolved in
continuous time: upwards at the top of the support, downwards at
``b(S) = sup{x : psi(x) <= S}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .engine.batch import run_chunks
from .engine.kernels import bridge_max
from .engine.models import SimConfig
from .engine.rng import STREAM_ABSORB, STREAM_MAX, STREAM_NORMAL, normal_pair, stream_key, uniform_pair

__all__ = ["TargetMeasure", "barycentre_psi", "azema_yor_stop", "EmbeddingResult", "parse_measure"]

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class TargetMeasure:
    """A centred probability law made of atoms and uniform segments.

    Parameters
    ----------
    atoms : sequence of (location, mass)
    segments : sequence of (lo, hi, mass)
        Mass spread uniformly on ``[lo, hi]``.
    """

    atoms: tuple = ()
    segments: tuple = ()

    def __post_init__(self):
        atoms = tuple(sorted((float(x), float(m)) for x, m in self.atoms))
        segs = tuple(sorted((float(a), float(b), float(m)) for a, b, m in self.segments))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "segments", segs)
        if not atoms and not segs:
            raise ValueError("measure has no mass")
        values = [x for x, _ in atoms] + [v for s in segs for v in s]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("non-finite location or mass")
        if any(m <= 0 for _, m in atoms) or any(m <= 0 for *_, m in segs):
            raise ValueError("masses must be positive")
        if any(not b > a for a, b, _ in segs):
            raise ValueError("segments need lo < hi")
        total = math.fsum([m for _, m in atoms] + [m for *_, m in segs])
        if abs(total - 1.0) > _MASS_TOL:
            raise ValueError(f"masses sum to {total!r}, not 1")
        if abs(self.mean) > _MASS_TOL * max(1.0, self.scale):
            raise ValueError(f"measure is not centred (mean {self.mean!r})")

    @classmethod
    def from_atoms(cls, pairs) -> "TargetMeasure":
        return cls(atoms=tuple(pairs))

    @property
    def mean(self) -> float:
        return math.fsum([x * m for x, m in self.atoms] + [0.5 * (a + b) * m for a, b, m in self.segments])

    @property
    def scale(self) -> float:
        return max([abs(x) for x, _ in self.atoms] + [max(abs(a), abs(b)) for a, b, _ in self.segments])

    @property
    def support(self) -> tuple[float, float]:
        lo = min([x for x, _ in self.atoms] + [a for a, _, _ in self.segments])
        hi = max([x for x, _ in self.atoms] + [b for _, b, _ in self.segments])
        return lo, hi

    def arrays(self):
        a = np.array(self.atoms, dtype=float).reshape(-1, 2)
        s = np.array(self.segments, dtype=float).reshape(-1, 3)
        return a[:, 0].copy(), a[:, 1].copy(), s[:, 0].copy(), s[:, 1].copy(), s[:, 2].copy()

    def to_text(self) -> str:
        lines = [f"atom {x!r} {m!r}" for x, m in self.atoms]
        lines += [f"segment {a!r} {b!r} {m!r}" for a, b, m in self.segments]
        return "\n".join(lines) + "\n"


def parse_measure(text: str) -> TargetMeasure:
    """Parse lines ``atom <location> <mass>`` or ``segment <lo> <hi> <mass>``.

    Blank lines and ``#`` comments are ignored.
    """
    atoms, segs = [], []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "atom" and len(parts) == 3:
                atoms.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "segment" and len(parts) == 4:
                segs.append((float(parts[1]), float(parts[2]), float(parts[3])))
            else:
                raise ValueError
        except ValueError:
            raise ValueError(f"line {n}: expected 'atom <x> <mass>' or 'segment <lo> <hi> <mass>'") from None
    return TargetMeasure(tuple(atoms), tuple(segs))


@nb.njit(cache=True, nogil=True)
def _psi(x, al, am, sl, sh, sm):
    mass = 0.0
    moment = 0.0
    for k in range(al.size):
        if al[k] >= x:
            mass += am[k]
            moment += am[k] * al[k]
    for k in range(sl.size):
        lo = sl[k] if sl[k] > x else x
        if lo < sh[k]:
            w = sm[k] * (sh[k] - lo) / (sh[k] - sl[k])
            mass += w
            moment += w * 0.5 * (lo + sh[k])
    if mass <= 0.0:
        return x
    return moment / mass


@nb.njit(cache=True, nogil=True)
def _stop_level(s, al, am, sl, sh, sm, lo_supp, table_x, table_psi):
    # b(s) = sup{x : psi(x) <= s}
    if table_x.size > 0:
        out = table_x[0]
        for k in range(table_x.size):
            if table_psi[k] <= s:
                out = table_x[k]
        return out
    lo = lo_supp
    hi = s + 1e-12 * (1.0 + abs(s))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _psi(mid, al, am, sl, sh, sm) <= s:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * (1.0 + abs(lo)):
            break
    return lo


@nb.njit(cache=True, nogil=True)
def _ay_chunk(times, k0, k1, p0, p1, al, am, sl, sh, sm, lo_supp, top, table_x, table_psi,
              values, stop_times):
    n = times.size - 1
    for p in range(p0, p1):
        x = 0.0
        s = 0.0
        b = _stop_level(s, al, am, sl, sh, sm, lo_supp, table_x, table_psi)
        values[p - p0] = np.nan
        stop_times[p - p0] = np.inf
        if s >= top or x <= b:
            values[p - p0] = top if s >= top else b
            stop_times[p - p0] = 0.0
            continue
        zs = 0.0
        us = 0.0
        for i in range(n):
            h = times[i + 1] - times[i]
            if (i & 1) == 0:
                z, zs = normal_pair(k0, k1, i >> 1, STREAM_NORMAL, p)
                u, us = uniform_pair(k0, k1, i >> 1, STREAM_MAX, p)
            else:
                z = zs
                u = us
            y = x + math.sqrt(h) * z
            mx = bridge_max(x, y, h, u)
            if mx >= top:
                values[p - p0] = top
                stop_times[p - p0] = times[i + 1]
                break
            if mx > s:
                s = mx
                b = _stop_level(s, al, am, sl, sh, sm, lo_supp, table_x, table_psi)
            stop = y <= b
            if not stop and x > b:
                e = 2.0 * (x - b) * (y - b) / h
                if e < 40.0:
                    w, _ = uniform_pair(k0, k1, i, STREAM_ABSORB, p)
                    stop = w < math.exp(-e)
            elif not stop:
                stop = True
            if stop:
                values[p - p0] = b
                stop_times[p - p0] = times[i + 1]
                break
            x = y


def barycentre_psi(nu: TargetMeasure, x):
    """``psi(x) = E_nu[Y | Y >= x]`` (closed half-line); ``x`` where the tail is empty."""
    arrs = nu.arrays()
    xs = np.asarray(x, dtype=float)
    out = np.array([_psi(float(v), *arrs) for v in xs.ravel()]).reshape(xs.shape)
    return float(out) if out.ndim == 0 else out


@dataclass
class EmbeddingResult:
    """Stopped values ``B_T`` (``nan`` when censored) and stopping times."""

    values: np.ndarray
    stop_times: np.ndarray
    measure: TargetMeasure = field(repr=False)

    @property
    def censored(self) -> int:
        return int(np.isnan(self.values).sum())

    @property
    def n_paths(self) -> int:
        return int(self.values.size)

    def atom_frequencies(self) -> list[tuple[float, float, float]]:
        """For each atom: location, empirical frequency, target mass."""
        locs = np.array([x for x, _ in self.measure.atoms])
        done = self.values[~np.isnan(self.values)]
        out = []
        for x, m in self.measure.atoms:
            hits = np.isclose(done, x, rtol=0, atol=1e-9 * max(1.0, abs(x)))
            out.append((x, float(hits.sum()) / self.n_paths, m))
        return out


def azema_yor_stop(nu: TargetMeasure, config: SimConfig) -> EmbeddingResult:
    """Run ``config.n_paths`` Brownian paths until the Azema-Yor time.

    Paths not stopped by the horizon are reported as censored.
    """
    times = config.grid()
    al, am, sl, sh, sm = nu.arrays()
    lo_supp, top = nu.support
    if sl.size == 0:
        table_x = al.copy()
        table_psi = np.array([_psi(v, al, am, sl, sh, sm) for v in al])
    else:
        table_x = np.empty(0)
        table_psi = np.empty(0)
    k0, k1 = stream_key(config.seed, "azema-yor")
    values = np.empty(config.n_paths)
    stop_times = np.empty(config.n_paths)

    def work(p0, p1):
        _ay_chunk(times, k0, k1, p0, p1, al, am, sl, sh, sm, lo_supp, top, table_x, table_psi,
                  values[p0:p1], stop_times[p0:p1])

    run_chunks(work, config.n_paths)
    return EmbeddingResult(values, stop_times, nu)
