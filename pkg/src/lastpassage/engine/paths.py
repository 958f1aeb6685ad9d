"""Single-path simulation and path-level functionals."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .kernels import ABSORBED, RETIRED, simulate_one
from .models import MODEL_IDS, MartingaleModel, SimConfig, node_index
from .rng import stream_key

__all__ = [
    "PathSample",
    "simulate_path",
    "sup_after",
    "last_passage_on_path",
    "local_time_estimate",
    "default_bandwidth",
    "tail_bias_bound",
    "dump_paths",
    "load_paths",
]


@dataclass
class PathSample:
    """One simulated path on the grid.

    Attributes
    ----------
    times, values : ndarray
        Grid nodes and the martingale value at each node.
    qv_increments : ndarray
        ``sigma(t_i, M_i)^2 (t_{i+1} - t_i)``, one per step.
    running_max : ndarray
        Running maximum at each node, including within-step bridge maxima
        where the model allows them.
    absorbed_at : float or None
        Absorption (or stopping) time, if it happened before the horizon.
    terminal_value : float
        Value at the last node.
    step_max : ndarray
        Maximum over each step (bridge draw, or the larger endpoint).
    driver : ndarray
        Driving coordinate at each node (``log M`` for GBM, the Brownian
        coordinate for Brownian models, the radius for the Bessel model).
    """

    times: np.ndarray
    values: np.ndarray
    qv_increments: np.ndarray
    running_max: np.ndarray
    absorbed_at: float | None
    terminal_value: float
    model: MartingaleModel
    dt: float
    step_max: np.ndarray = field(repr=False)
    driver: np.ndarray = field(repr=False)
    retired: bool = False

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def simulate_path(model: MartingaleModel, config: SimConfig, path_index: int) -> PathSample:
    """Simulate path ``path_index`` of the stream defined by ``config.seed``.

    The result depends only on the model, the grid, the seed and the path
    index.  After absorption or retirement the path is held constant.
    """
    if path_index < 0:
        raise ValueError("path_index must be non-negative")
    times = config.grid()
    n = times.size
    xs = np.empty(n)
    ms = np.empty(n)
    smax = np.empty(n - 1)
    k0, k1 = stream_key(config.seed)
    last, status, t_end = simulate_one(
        model.kind_id, float(model.initial), float(model.alpha), times, k0, k1,
        int(path_index), float(config.retire_below), xs, ms, smax,
    )
    xs[last + 1:] = xs[last]
    ms[last + 1:] = ms[last]
    smax[last:] = ms[last]
    h = np.diff(times)
    sigma = np.asarray(model.diffusion(times[:-1], ms[:-1]), dtype=float)
    qv = sigma * sigma * h
    if status == ABSORBED:
        # partial step up to the absorption time, nothing afterwards
        qv[last - 1] = sigma[last - 1] ** 2 * (t_end - times[last - 1])
        qv[last:] = 0.0
    elif status == RETIRED:
        qv[last:] = 0.0
    running = np.empty(n)
    running[0] = ms[0]
    running[1:] = np.maximum.accumulate(np.maximum(smax, ms[1:]))
    running[1:] = np.maximum(running[1:], ms[0])
    return PathSample(
        times=times,
        values=ms,
        qv_increments=qv,
        running_max=running,
        absorbed_at=float(t_end) if status == ABSORBED else None,
        terminal_value=float(ms[-1]),
        model=model,
        dt=config.dt,
        step_max=smax,
        driver=xs,
        retired=status == RETIRED,
    )


def sup_after(path: PathSample, t: float) -> float:
    """Maximum of the path on ``[t, horizon]``; ``t`` must be a grid node."""
    i = node_index(path.times, t)
    out = path.values[i:].max()
    if i < path.step_max.size:
        out = max(out, path.step_max[i:].max())
    return float(out)


def last_passage_on_path(path: PathSample, level: float, tail_mode: str = "censor",
                         rng: np.random.Generator | None = None) -> tuple[float, bool]:
    """Last grid crossing of ``level``.

    The crossing is the last sign change of ``M - level`` between nodes,
    located by linear interpolation; a node exactly at the level counts
    as the later crossing.  With no crossing the time is 0.

    Returns
    -------
    (g, censored) : tuple
        ``censored`` is true when a crossing after the horizon is certain
        (``M_T >= level``) or, in ``doob_exact`` mode, when a Bernoulli draw
        with success probability ``min(M_T / level, 1)`` succeeds.
    """
    if not level > 0:
        raise ValueError("level must be positive")
    if tail_mode not in ("censor", "doob_exact"):
        raise ValueError("tail_mode must be 'censor' or 'doob_exact'")
    if tail_mode == "doob_exact" and path.model.terminal_kind != "vanishing":
        raise ValueError("doob_exact tail sampling needs a vanishing model")
    d = path.values - level
    cross = np.nonzero((d[:-1] * d[1:] <= 0.0) & ~((d[:-1] == 0.0) & (d[1:] == 0.0)))[0]
    g = 0.0
    if cross.size:
        i = int(cross[-1])
        if d[i + 1] == 0.0:
            g = float(path.times[i + 1])
        else:
            frac = d[i] / (d[i] - d[i + 1])
            g = float(path.times[i] + frac * (path.times[i + 1] - path.times[i]))
    elif d[0] == 0.0:
        g = 0.0
    absorbed = path.absorbed_at is not None
    m_end = path.terminal_value
    if absorbed or path.model.terminal_kind != "vanishing":
        return g, False
    if tail_mode == "censor":
        return g, bool(m_end >= level)
    if rng is None:
        raise ValueError("doob_exact tail sampling needs a random generator")
    return g, bool(rng.random() < min(m_end / level, 1.0))


def default_bandwidth(model: MartingaleModel, t, level: float, dt: float):
    """Kernel half-width ``2 sigma(t, level) sqrt(dt)``."""
    return 2.0 * np.asarray(model.diffusion(t, level)) * math.sqrt(dt)


def local_time_estimate(path: PathSample, level: float, epsilon: float | None = None) -> np.ndarray:
    """Cumulative kernel estimate of the local time at ``level``.

    ``L_t = (1 / 2 eps) * sum_{t_i < t} 1{|M_{t_i} - level| <= eps} * qv_i``.
    With ``epsilon=None`` the half-width is ``2 sigma(t_i, level) sqrt(dt)``
    at each node.
    """
    t = path.times[:-1]
    if epsilon is None:
        eps = np.broadcast_to(default_bandwidth(path.model, t, level, path.dt), t.shape)
    else:
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        eps = np.full(t.shape, float(epsilon))
    inside = (np.abs(path.values[:-1] - level) <= eps) & (eps > 0)
    inc = np.zeros_like(t)
    inc[inside] = path.qv_increments[inside] / (2.0 * eps[inside])
    out = np.empty(path.times.size)
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def tail_bias_bound(paths, level: float) -> float:
    """Mean of ``min(M_T / level, 1)``: bounds the chance of an unseen crossing."""
    ends = np.array([0.0 if p.absorbed_at is not None else p.terminal_value for p in paths])
    return float(np.mean(np.minimum(ends / level, 1.0)))


_MAGIC = b"LPK1"
_HEADER = struct.Struct("<4sIQQd")


def dump_paths(paths, fh) -> None:
    """Write paths in the little-endian ``LPK1`` layout.

    Header: magic, model id (u32), path count (u64), grid size (u64), dt
    (f64); then the grid times; then, per path, values, running maximum
    and quadratic-variation increments (padded with a trailing zero), all
    float64.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("nothing to dump")
    times = paths[0].times
    fh.write(_HEADER.pack(_MAGIC, paths[0].model.kind_id, len(paths), times.size, paths[0].dt))
    fh.write(np.ascontiguousarray(times, dtype="<f8").tobytes())
    for p in paths:
        if p.times.size != times.size:
            raise ValueError("all paths must share one grid")
        qv = np.append(p.qv_increments, 0.0)
        for arr in (p.values, p.running_max, qv):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_paths(fh) -> dict:
    """Read an ``LPK1`` file into a dict of arrays."""
    raw = fh.read(_HEADER.size)
    magic, model_id, n_paths, size, dt = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise ValueError("not an LPK1 file")
    times = np.frombuffer(fh.read(8 * size), dtype="<f8")
    body = np.frombuffer(fh.read(8 * size * 3 * n_paths), dtype="<f8").reshape(n_paths, 3, size)
    kinds = {v: k for k, v in MODEL_IDS.items()}
    return {
        "model": kinds[model_id],
        "dt": dt,
        "times": times,
        "values": body[:, 0],
        "running_max": body[:, 1],
        "qv_increments": body[:, 2, :-1],
    }
