"""Martingale models and simulation configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "MartingaleModel",
    "SimConfig",
    "make_grid",
    "fine_steps",
    "node_index",
    "MODEL_IDS",
    "parse_model",
]

# Integer ids shared with the compiled kernels and the binary dump header.
GBM, KILLED_BM, INV_BES3, COSH_EXP, ALPHA_STOPPED, BROWNIAN = 0, 1, 2, 3, 4, 5

MODEL_IDS = {
    "gbm": GBM,
    "killed-bm": KILLED_BM,
    "inv-bes3": INV_BES3,
    "cosh-exp": COSH_EXP,
    "alpha-stopped-bm": ALPHA_STOPPED,
    "bm": BROWNIAN,
}

_DISPLAY = {
    "gbm": "GBM",
    "killed-bm": "KilledBM",
    "inv-bes3": "InvBes3",
    "cosh-exp": "CoshExp",
    "alpha-stopped-bm": "AlphaStoppedBM",
    "bm": "BM",
}


@dataclass(frozen=True)
class MartingaleModel:
    """A continuous local martingale driven by Brownian motion.

    Parameters
    ----------
    kind : str
        One of ``gbm``, ``killed-bm``, ``inv-bes3``, ``cosh-exp``,
        ``alpha-stopped-bm`` or ``bm``.
    initial : float
        Starting value ``M_0``.  ``bm`` always starts at 0.
    alpha : float
        Stopping fraction for ``alpha-stopped-bm``: the path is frozen the
        first time it falls to ``alpha`` times its running maximum.
    """

    kind: str
    initial: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in MODEL_IDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "bm":
            if self.initial != 0.0:
                object.__setattr__(self, "initial", 0.0)
        elif not self.initial > 0:
            raise ValueError("initial value must be positive")
        if self.kind == "alpha-stopped-bm" and not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    # convenience constructors
    @classmethod
    def gbm(cls, initial: float = 1.0) -> "MartingaleModel":
        return cls("gbm", initial)

    @classmethod
    def killed_bm(cls, initial: float = 1.0) -> "MartingaleModel":
        return cls("killed-bm", initial)

    @classmethod
    def inv_bes3(cls, initial: float = 1.0) -> "MartingaleModel":
        return cls("inv-bes3", initial)

    @classmethod
    def cosh_exp(cls, initial: float = 1.0) -> "MartingaleModel":
        return cls("cosh-exp", initial)

    @classmethod
    def alpha_stopped(cls, alpha: float, initial: float = 1.0) -> "MartingaleModel":
        return cls("alpha-stopped-bm", initial, alpha)

    @classmethod
    def brownian(cls) -> "MartingaleModel":
        return cls("bm", 0.0)

    @property
    def kind_id(self) -> int:
        return MODEL_IDS[self.kind]

    @property
    def display_name(self) -> str:
        return _DISPLAY[self.kind]

    @property
    def terminal_kind(self) -> str:
        """``vanishing`` if ``M_t -> 0`` a.s., else ``nonzero_limit``."""
        if self.kind in ("alpha-stopped-bm", "bm"):
            return "nonzero_limit"
        return "vanishing"

    def diffusion(self, t, x):
        """Volatility ``sigma(t, x)`` with ``d<M>_t = sigma^2 dt``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gbm":
            out = np.abs(x)
        elif self.kind in ("killed-bm", "alpha-stopped-bm", "bm"):
            out = np.ones_like(x)
        elif self.kind == "inv-bes3":
            out = x * x
        else:
            floor = self.initial**2 * np.exp(-np.asarray(t, dtype=float))
            out = np.sqrt(np.maximum(x * x - floor, 0.0))
        return out if out.ndim else float(out)


def parse_model(text: str) -> MartingaleModel:
    """Parse ``kind`` or ``kind:alpha`` (for the stopped model)."""
    name, _, arg = text.partition(":")
    name = name.strip().lower().replace("_", "-")
    aliases = {"killedbm": "killed-bm", "invbes3": "inv-bes3", "coshexp": "cosh-exp",
               "alphastoppedbm": "alpha-stopped-bm", "alphastopped": "alpha-stopped-bm"}
    name = aliases.get(name.replace("-", ""), name)
    if name not in MODEL_IDS:
        raise ValueError(f"unknown model {text!r}; choose from {', '.join(MODEL_IDS)}")
    if name == "alpha-stopped-bm":
        return MartingaleModel(name, 1.0, float(arg) if arg else 0.5)
    if arg:
        raise ValueError(f"model {name} takes no argument")
    return MartingaleModel(name)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    The time grid is uniform with step ``dt`` up to ``fine_until`` (the whole
    horizon by default).  Beyond it steps grow geometrically, each step being
    ``growth`` times the current time, up to ``horizon``.  The grid is fixed
    before any path is drawn.

    Parameters
    ----------
    n_paths, dt, horizon, seed
        Path count, fine step, final time and 64-bit seed.
    bandwidth : float or None
        Kernel half-width for local-time estimates; ``None`` selects
        ``2 * sigma(t, K) * sqrt(dt)``.
    tail_mode : {"censor", "doob_exact"}
        How level crossings after the horizon are handled.
    fine_until, growth
        Two-scale grid controls.
    retire_below : float
        Vanishing-model paths are stopped once ``M`` falls to this level.
        Zero disables retirement.
    """

    n_paths: int = 100_000
    dt: float = 1e-3
    horizon: float = 64.0
    seed: int = 42
    bandwidth: float | None = None
    tail_mode: str = "censor"
    fine_until: float | None = None
    growth: float = 0.01
    retire_below: float = 0.0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("dt and horizon must be positive")
        if self.tail_mode not in ("censor", "doob_exact"):
            raise ValueError("tail_mode must be 'censor' or 'doob_exact'")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.growth > 0:
            raise ValueError("growth must be positive")

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def grid(self) -> np.ndarray:
        return make_grid(self.dt, self.horizon, self.fine_until, self.growth)

    def n_fine(self) -> int:
        """Number of uniform steps at the start of the grid."""
        return fine_steps(self.grid(), self.dt)


def make_grid(dt: float, horizon: float, fine_until: float | None = None,
              growth: float = 0.01) -> np.ndarray:
    """Deterministic time grid: uniform up to ``fine_until``, geometric after."""
    end = horizon if fine_until is None else min(fine_until, horizon)
    n_fine = int(math.ceil(end / dt - 1e-9))
    fine = np.arange(n_fine + 1, dtype=float) * dt
    fine[-1] = min(fine[-1], horizon)
    if fine[-1] >= horizon:
        fine[-1] = horizon
        return fine
    t = fine[-1]
    tail = []
    while t < horizon:
        t = t * (1.0 + growth)
        if t > horizon * (1 - 1e-12):
            t = horizon
        tail.append(t)
    return np.concatenate([fine, np.asarray(tail)])


def fine_steps(times: np.ndarray, dt: float) -> int:
    """Count of leading steps of size ``dt`` (the last one may be shorter)."""
    h = np.diff(times)
    coarse = np.nonzero(h > dt * (1 + 1e-9))[0]
    return int(coarse[0]) if coarse.size else int(h.size)


def node_index(times: np.ndarray, t: float) -> int:
    """Index of grid node ``t``; raises ``ValueError`` if ``t`` is off-grid."""
    i = int(np.searchsorted(times, t))
    for j in (i - 1, i):
        if 0 <= j < times.size and abs(times[j] - t) <= 1e-9 * max(1.0, abs(t)):
            return j
    raise ValueError(f"time {t} is not a grid node")
