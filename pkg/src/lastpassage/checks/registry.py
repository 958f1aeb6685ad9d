"""Registry of Monte Carlo identity checks."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import analytic_laws as laws
from ..engine.batch import run_chunks
from ..engine.models import MartingaleModel, SimConfig, fine_steps, node_index
from ..engine.rng import stream_key
from . import kernels as kern
from .report import CheckReport, Part, ks_distance, mean_and_stderr

__all__ = ["CheckSpec", "list_checks", "run_check", "run_all", "check_function", "model_gk_law",
           "DEFAULT_CONFIG", "KS_LEVEL"]

DEFAULT_CONFIG = SimConfig()
# one-sided 1% critical value of the Kolmogorov statistic times sqrt(n)
KS_LEVEL = 1.63
# vanishing paths are retired below this value; the bias bounds cover it
RETIRE = 1e-4
LONG_HORIZON = 1e6


@dataclass(frozen=True)
class CheckSpec:
    name: str
    func: Callable
    anchor: str
    censor_only: bool = False
    models: tuple = ()
    multi: bool = False


_REGISTRY: dict[str, CheckSpec] = {}


def _register(name, anchor, censor_only=False, models=(), multi=False):
    def deco(fn):
        _REGISTRY[name] = CheckSpec(name, fn, anchor, censor_only, models, multi)
        return fn
    return deco


def check_function(name: str) -> Callable:
    """The function behind a check (its keyword arguments are the check's parameters)."""
    return _REGISTRY[name].func


def list_checks() -> list[tuple[str, str]]:
    """``(name, anchor)`` for every registered check, in run order."""
    return [(spec.name, spec.anchor) for spec in _REGISTRY.values()]


class _Ctx:
    """Per-check context: configuration, key and the path runner."""

    def __init__(self, name: str, config: SimConfig):
        self.name = name
        self.config = config
        self.key = stream_key(config.seed, name)

    @property
    def n(self) -> int:
        return self.config.n_paths

    def grid(self, **over):
        cfg = self.config.with_(**over)
        return cfg.grid(), cfg

    def run(self, chunk, model: MartingaleModel, times, retire, *args, outputs):
        k0, k1 = self.key

        def work(p0, p1):
            chunk(model.kind_id, float(model.initial), float(model.alpha), times, k0, k1, p0, p1,
                  float(retire), *args, *[o[p0:p1] for o in outputs])

        run_chunks(work, self.n)

    def run_raw(self, chunk, lead, *args, outputs):
        """Call ``chunk(*lead, k0, k1, p0, p1, *args, *outputs)`` over path ranges."""
        k0, k1 = self.key

        def work(p0, p1):
            chunk(*lead, k0, k1, p0, p1, *args, *[o[p0:p1] for o in outputs])

        run_chunks(work, self.n)


def _ks_threshold(n: int, dt: float | None = None) -> float:
    out = KS_LEVEL / math.sqrt(n)
    if dt is not None:
        out += 2.0 * math.sqrt(dt)
    return out


def _ks_part(label, d, n, dt=None, bias=0.0) -> Part:
    return Part(label, d, 0.0, 0.0, bias, _ks_threshold(n, dt), 0.0)


def _prop_part(label, ind, reference, bias=0.0) -> Part:
    m, se = mean_and_stderr(ind)
    return Part(label, m, reference, se, bias)


def _check_model(spec: CheckSpec, model):
    if model is None:
        # checks covering several models run them all when none is named
        return None if spec.multi else spec.models[0]
    if spec.models and model.kind not in {m.kind for m in spec.models}:
        allowed = ", ".join(m.kind for m in spec.models)
        raise ValueError(f"check {spec.name} does not accept model {model.kind} (use {allowed})")
    return model


def run_check(name: str, model: MartingaleModel | None = None, config: SimConfig | None = None,
              **params) -> CheckReport:
    """Run one check by name.

    Parameters
    ----------
    name : str
        A name from :func:`list_checks`.
    model : MartingaleModel, optional
        Override of the check's model, where the check supports one.
    config : SimConfig, optional
        Path count, fine step, seed, bandwidth and tail mode.  Each check
        fixes its own grid layout (how far the fine grid and the horizon
        extend) and its retirement level.
    **params
        Check-specific settings such as ``K`` or ``t``.
    """
    if name not in _REGISTRY:
        raise KeyError(f"unknown check {name!r}; see list_checks()")
    spec = _REGISTRY[name]
    config = config or DEFAULT_CONFIG
    if spec.censor_only and config.tail_mode != "censor":
        config = config.with_(tail_mode="censor")
    model = _check_model(spec, model)
    if config.tail_mode == "doob_exact":
        for m in (model,) if model is not None else spec.models:
            if m.terminal_kind == "nonzero_limit":
                raise ValueError(f"doob_exact tail sampling is invalid for {m.display_name}: M_inf is not 0")
    ctx = _Ctx(name, config)
    start = time.perf_counter()
    parts, details, n_paths = spec.func(ctx, model, **params)
    report = CheckReport(name, parts, n_paths, spec.anchor, details=details)
    report.wall_time = time.perf_counter() - start
    return report


def run_all(config: SimConfig | None = None, names=None, progress=None) -> list[CheckReport]:
    """Run checks in registry order and return their reports."""
    out = []
    for name in names or [n for n, _ in list_checks()]:
        rep = run_check(name, config=config)
        if progress:
            progress(rep)
        out.append(rep)
    return out


# ---------------------------------------------------------------- helpers

def _vanishing_retire(model: MartingaleModel) -> float:
    return RETIRE if model.kind in ("gbm", "cosh-exp") else 0.0


def _passage_grid(ctx, model, fine_until):
    # the Bessel model needs a long horizon: unseen crossings have chance M_T / K
    horizon = LONG_HORIZON if model.kind == "inv-bes3" else max(ctx.config.horizon, fine_until)
    return ctx.grid(fine_until=fine_until, horizon=horizon)


def model_gk_law(model: MartingaleModel, level: float) -> laws.LastPassageLaw:
    a = model.initial
    if model.kind == "gbm":
        return laws.gbm_gk_law(level, a)
    if model.kind == "killed-bm":
        return laws.killed_bm_gk_law(level, a)
    if model.kind == "inv-bes3":
        return laws.inv_bes3_gk_law(level, a)
    if model.kind == "cosh-exp":
        return laws.cosh_gk_law(level, a)
    raise ValueError(f"no last passage law for {model.kind}")


# ----------------------------------------------------------------- checks

@_register("doob_maximal", "Doob maximal identity: sup_t M_t has the law of M_0 / U",
           censor_only=True,
           models=(MartingaleModel.gbm(), MartingaleModel.killed_bm(), MartingaleModel.inv_bes3(),
                   MartingaleModel.cosh_exp()))
def _doob(ctx, model, b=(2.0, 5.0, 10.0)):
    times, cfg = _passage_grid(ctx, model, 1.0)
    sup = np.empty(ctx.n)
    end = np.empty(ctx.n)
    ctx.run(kern.sup_chunk, model, times, _vanishing_retire(model), outputs=(sup, end))
    parts = []
    for level in np.atleast_1d(b):
        below = sup < level
        bias = float(np.mean(np.minimum(end / level, 1.0) * below))
        parts.append(_prop_part(f"P(sup >= {level:g})", (~below).astype(float),
                                min(model.initial / level, 1.0), bias))
    return parts, {"model": model.display_name, "horizon": float(times[-1])}, ctx.n


_T1_MODELS = (MartingaleModel.gbm(), MartingaleModel.killed_bm(), MartingaleModel.inv_bes3())


@_register("theorem1_cdf", "P(G_K <= t | F_t) = (1 - M_t / K)^+", censor_only=True, multi=True,
           models=_T1_MODELS + (MartingaleModel.cosh_exp(),))
def _cdf_identity(ctx, model, K=None, t=1.0, pairs=((1.0, 1.0), (2.0, 1.0))):
    models = (model,) if model is not None else _T1_MODELS
    if K is not None:
        pairs = ((float(K), float(t)),)
    parts = []
    details = {}
    for mdl in models:
        by_time: dict[float, list[float]] = {}
        for lv, tt in pairs:
            by_time.setdefault(float(tt), []).append(float(lv))
        for tt, levels in by_time.items():
            times, cfg = _passage_grid(ctx, mdl, max(2.0, tt))
            it = node_index(times, tt)
            lv_arr = np.asarray(levels)
            mt = np.empty(ctx.n)
            none = np.empty((ctx.n, lv_arr.size))
            end = np.empty(ctx.n)
            ctx.run(kern.passage_chunk, mdl, times, _vanishing_retire(mdl), lv_arr, it, outputs=(mt, none, end))
            for q, lv in enumerate(levels):
                ind = none[:, q] * (end < lv)
                lhs = np.maximum(1.0 - mt / lv, 0.0)
                bias = float(np.mean(np.minimum(end / lv, 1.0) * ind))
                tag = f"{mdl.display_name} K={lv:g} t={tt:g}"
                m_ind, _ = mean_and_stderr(ind)
                m_lhs, _ = mean_and_stderr(lhs)
                _, se_d = mean_and_stderr(lhs - ind)
                parts.append(Part(f"{tag}: P(G<=t) vs E[(1-M_t/K)^+]", m_ind, m_lhs, se_d, bias))
                exact = model_gk_law(mdl, lv).cdf(tt)
                _, se = mean_and_stderr(ind)
                parts.append(Part(f"{tag}: P(G<=t) vs law", m_ind, exact, se, bias))
                if mdl.kind == "killed-bm" and lv <= 1 and mdl.initial == 1.0:
                    parts.append(Part(f"{tag}: E[(1-M_t/K)^+] vs uniform mixture", m_lhs,
                                      laws.killed_bm_gk_cdf(lv, tt), mean_and_stderr(lhs)[1], 0.0))
                details[tag] = {"horizon": float(times[-1]), "tail_bias": bias}
    return parts, details, ctx.n


@_register("g1_is_4nsq", "G_1 of exp(B_t - t/2) has the law of 4 N^2", censor_only=True,
           models=(MartingaleModel.gbm(),))
def _g1(ctx, model):
    times, cfg = ctx.grid(fine_until=4.0)
    g = np.empty(ctx.n)
    end = np.empty(ctx.n)
    ctx.run(kern.last_passage_chunk, model, times, RETIRE, 1.0, outputs=(g, end))
    censored = end >= 1.0
    g[censored] = np.inf
    bias = float(np.mean(np.minimum(end, 1.0) * ~censored))
    d = ks_distance(g, laws.four_nsq_cdf, upper=float(times[-1]))
    part = _ks_part("KS distance to 4N^2", d, ctx.n, cfg.dt, bias)
    details = {"censored": int(censored.sum()), "horizon": float(times[-1]),
               "cdf_at_1": float(np.mean(g <= 1.0)), "reference_cdf_at_1": float(laws.four_nsq_cdf(1.0))}
    return [part], details, ctx.n


@_register("lambda_stationary", "M_t / sup_{s>=t} M_s is uniform for each t",
           models=(MartingaleModel.gbm(),))
def _lambda(ctx, model, ts=(0.5, 1.0, 2.0)):
    times, cfg = ctx.grid(fine_until=2.0)
    idx = np.array([node_index(times, t) for t in ts])
    q = idx.size
    m, before, after = (np.empty((ctx.n, q)) for _ in range(3))
    end = np.empty(ctx.n)
    doob = cfg.tail_mode == "doob_exact"
    ctx.run(kern.sup_after_chunk, model, times, RETIRE, idx, doob, outputs=(m, before, after, end))
    parts = []
    for j, t in enumerate(ts):
        lam = m[:, j] / after[:, j]
        bias = 0.0 if doob else float(np.mean(np.minimum(end / after[:, j], 1.0)))
        d = ks_distance(lam, lambda x: np.clip(x, 0.0, 1.0))
        parts.append(_ks_part(f"KS of lambda_{t:g} vs U(0,1)", d, ctx.n, None, bias))
    return parts, {"horizon": float(times[-1])}, ctx.n


@_register("ray_knight_profile", "Killed BM local times: E[L_T0^x] = 2 (x ^ 1), L_T0^1 ~ 2 Exp(1)",
           models=(MartingaleModel.killed_bm(),))
def _ray_knight(ctx, model, levels=tuple(0.1 * j for j in range(1, 21)), max_time=2000.0):
    # local times do not depend on the clock, so only time spent near the
    # levels is simulated (see killed_profile_chunk)
    dt = ctx.config.dt
    eps = ctx.config.bandwidth if ctx.config.bandwidth is not None else 2.0 * math.sqrt(dt)
    lv = np.asarray(levels, dtype=float)
    ceiling = float(lv.max()) + eps + 10.0 * math.sqrt(dt)
    cap = int(round(max_time / dt))
    lt = np.empty((ctx.n, lv.size, 2))
    bridge = np.empty((ctx.n, lv.size))
    rest = np.empty(ctx.n)
    ctx.run_raw(kern.killed_profile_chunk, (dt, cap, ceiling), lv, np.array([eps, 0.5 * eps]),
                outputs=(lt, bridge, rest))
    parts = []
    profile = []
    for q, x in enumerate(lv):
        rich = 2.0 * lt[:, q, 1] - lt[:, q, 0]
        est, se = mean_and_stderr(rich)
        eps_bias = abs(lt[:, q, 1].mean() - lt[:, q, 0].mean())
        # expected local time still to come for capped paths
        tail = float(np.mean(2.0 * np.minimum(x, rest)))
        ref = 2.0 * min(x, 1.0)
        parts.append(Part(f"E[L^{x:.1f}]", est, ref, se, tail, max(0.0, eps_bias - 3.0 * se)))
        profile.append({"level": round(float(x), 10), "kernel": est, "kernel_eps": float(lt[:, q, 0].mean()),
                        "kernel_half_eps": float(lt[:, q, 1].mean()), "bridge": float(bridge[:, q].mean()),
                        "reference": ref})
    q1 = int(np.argmin(np.abs(lv - 1.0)))
    z_eps, z_half = lt[:, q1, 0], lt[:, q1, 1]
    capped = float(np.mean(rest > 0))
    est, se = mean_and_stderr(2.0 * z_half - z_eps)
    parts.append(Part("E[Z_1]", est, 2.0, se, float(np.mean(2.0 * np.minimum(1.0, rest)))))
    tail_ind = 2.0 * (z_half > 2.0) - 1.0 * (z_eps > 2.0)
    est, se = mean_and_stderr(tail_ind)
    eps_bias = abs(np.mean(z_half > 2.0) - np.mean(z_eps > 2.0))
    parts.append(Part("P(Z_1 > 2)", est, math.exp(-1.0), se, capped, max(0.0, eps_bias - 3.0 * se)))
    details = {"epsilon": eps, "ceiling": ceiling, "capped_paths": int(np.sum(rest > 0)),
               "second_moment_Z1": float(np.mean(z_half**2)), "profile": profile}
    return parts, details, ctx.n


@_register("power_functional", "a^2 int_0^T0 beta^(2a-2) ds has the law of 1 / (2 gamma_{1/2a})",
           models=(MartingaleModel.killed_bm(),))
def _power(ctx, model):
    times, cfg = ctx.grid(fine_until=4.0, horizon=LONG_HORIZON)
    t0, int2, alive = np.empty(ctx.n), np.empty(ctx.n), np.empty(ctx.n)
    ctx.run_raw(kern.power_chunk, (times,), outputs=(t0, int2, alive))
    cens = alive > 0
    parts = []
    law1 = laws.reciprocal_gamma_law(0.5)
    d1 = ks_distance(np.where(cens, np.inf, t0), law1.cdf, upper=float(times[-1]))
    parts.append(_ks_part("alpha=1: KS of T0", d1, ctx.n, cfg.dt))
    a2 = 4.0 * int2
    upper = float(a2[cens].min()) if cens.any() else None
    law2 = laws.reciprocal_gamma_law(0.25)
    d2 = ks_distance(np.where(cens, np.inf, a2), law2.cdf, upper=upper)
    parts.append(_ks_part("alpha=2: KS of 4 int beta^2", d2, ctx.n))
    return parts, {"censored": int(cens.sum())}, ctx.n


_GK_CASES = {
    "gbm": 2.0,
    "killed-bm": 0.5,
    "inv-bes3": 0.5,
    "cosh-exp": 1.5,
}


@_register("gk_density_histogram", "law of G_K: atom (1 - M_0/K)^+ and density theta_t(K) m_t(K) / 2K",
           censor_only=True, multi=True,
           models=(MartingaleModel.gbm(), MartingaleModel.killed_bm(), MartingaleModel.inv_bes3(),
                   MartingaleModel.cosh_exp()))
def _gk_hist(ctx, model, K=None, bins=20):
    models = (model,) if model is not None else tuple(MartingaleModel(k) for k in _GK_CASES)
    parts = []
    details = {}
    for mdl in models:
        level = float(K) if K is not None else _GK_CASES[mdl.kind]
        times, cfg = _passage_grid(ctx, mdl, 1.0)
        g = np.empty(ctx.n)
        end = np.empty(ctx.n)
        ctx.run(kern.last_passage_chunk, mdl, times, _vanishing_retire(mdl), level, outputs=(g, end))
        censored = end >= level
        g[censored] = np.inf
        bias = float(np.mean(np.minimum(end / level, 1.0) * ~censored))
        law = model_gk_law(mdl, level)
        horizon = float(times[-1])
        grid = _cdf_grid_points(horizon)
        fgrid = law.cdf_grid(grid, tol=1e-9)
        cdf = lambda x: np.interp(x, grid, fgrid)
        cdf_left = lambda x: np.where(np.asarray(x) <= 0.0, 0.0, cdf(x))
        d = ks_distance(g, cdf, upper=horizon, cdf_left=cdf_left)
        tag = f"{mdl.display_name} K={level:g}"
        parts.append(_ks_part(f"{tag}: KS distance to law", d, ctx.n, cfg.dt, bias))
        parts.append(_prop_part(f"{tag}: atom P(G=0)", (g == 0).astype(float), law.atom_at_zero, 0.0))
        edges = np.quantile(g[np.isfinite(g) & (g > 0)], np.linspace(0, 1, bins + 1))
        fe = np.interp(edges, grid, fgrid)
        counts = np.histogram(g[np.isfinite(g) & (g > 0)], edges)[0] / ctx.n
        details[tag] = {
            "censored": int(censored.sum()),
            "horizon": horizon,
            "histogram": [[float(lo), float(hi), float(c), float(p)]
                          for lo, hi, c, p in zip(edges[:-1], edges[1:], counts, np.diff(fe))],
        }
    return parts, details, ctx.n


def _cdf_grid_points(horizon: float) -> np.ndarray:
    # dense near zero, where last passage densities may blow up like t^-1/2
    u = np.linspace(0.0, 1.0, 4001)
    return np.unique(np.concatenate([horizon * u**4, np.linspace(0.0, min(horizon, 20.0), 2001)]))


@_register("azema_representation", "Z_t = (M_t/K ^ 1) = N_t / S_t with N_t = Z_t exp(L_t^K / 2K)",
           models=(MartingaleModel.gbm(),))
def _azema(ctx, model, K=1.0, ts=(0.5, 1.0, 2.0, 4.0)):
    times, cfg = ctx.grid(fine_until=max(ts))
    idx = np.array([node_index(times, t) for t in ts])
    nval, gap = np.empty((ctx.n, idx.size)), np.empty((ctx.n, idx.size))
    ltinf, end = np.empty(ctx.n), np.empty(ctx.n)
    ctx.run_raw(kern.azema_chunk, (times,), RETIRE, float(K), idx, outputs=(nval, gap, ltinf, end))
    parts = []
    for j, t in enumerate(ts):
        parts.append(Part(f"mean |N_t/S_t - Z_t| at t={t:g}", float(gap[:, j].mean()), 0.0, 0.0, 0.0,
                          2.0 * math.sqrt(cfg.dt), 0.0))
    # average increment of N over the coarse grid 0 < ts[0] < ... < ts[-1]
    steps = np.diff(np.concatenate([np.ones((ctx.n, 1)), nval], axis=1), axis=1)
    est, se = mean_and_stderr(steps.mean(axis=1))
    parts.append(Part(f"grid-average increment of N on [0, {ts[-1]:g}]", est, 0.0, se))
    bias = float(np.mean(np.minimum(end / K, 1.0)))
    d = ks_distance(ltinf / (2.0 * K), lambda x: -np.expm1(-np.maximum(x, 0.0)))
    parts.append(_ks_part("KS of log sup N vs Exp(1)", d, ctx.n, None, bias))
    means = {f"t={t:g}": list(mean_and_stderr(nval[:, j])) for j, t in enumerate(ts)}
    return parts, {"mean_N_and_stderr": means}, ctx.n


@_register("max_martingale", "f(S_t)(S_t - M_t) - int_0^S_t f is a local martingale",
           models=(MartingaleModel.gbm(),))
def _max_mart(ctx, model, ts=(0.5, 1.0, 2.0)):
    times, cfg = ctx.grid(fine_until=None, horizon=max(ts))
    idx = np.array([node_index(times, t) for t in ts])
    m, before, after = (np.empty((ctx.n, idx.size)) for _ in range(3))
    end = np.empty(ctx.n)
    ctx.run(kern.sup_after_chunk, model, times, 0.0, idx, False, outputs=(m, before, after, end))
    parts = []
    for j, t in enumerate(ts):
        s, x = before[:, j], m[:, j]
        est, se = mean_and_stderr(s * (s - x) - 0.5 * s * s)
        parts.append(Part(f"f(x)=x, t={t:g}", est, -0.5, se))
        est, se = mean_and_stderr((s - x) / (1.0 + s) - np.log1p(s))
        parts.append(Part(f"f(x)=1/(1+x), t={t:g}", est, -math.log(2.0), se))
    return parts, {}, ctx.n


@_register("case2_sigma_finite", "E[Gamma_t (S_t - N_t)] = E[Gamma_t S_inf 1{G <= t}]",
           models=(MartingaleModel.gbm(),))
def _case2(ctx, model, ts=(0.5, 1.0, 2.0)):
    times, cfg = ctx.grid(fine_until=2.0)
    idx = np.array([node_index(times, t) for t in ts])
    m, before, after = (np.empty((ctx.n, idx.size)) for _ in range(3))
    end = np.empty(ctx.n)
    doob = cfg.tail_mode == "doob_exact"
    ctx.run(kern.sup_after_chunk, model, times, RETIRE, idx, doob, outputs=(m, before, after, end))
    parts = []
    for j, t in enumerate(ts):
        s, x = before[:, j], m[:, j]
        ind = after[:, j] <= s
        bias = 0.0 if doob else float(np.mean(np.minimum(end, s) * ind))
        for label, gam in (("Gamma=1", np.ones_like(x)), ("Gamma=1{N_t<1}", (x < 1.0).astype(float))):
            lhs = gam * (s - x)
            rhs = gam * s * ind
            _, se = mean_and_stderr(lhs - rhs)
            parts.append(Part(f"{label}, t={t:g}", float(rhs.mean()), float(lhs.mean()), se, bias))
    return parts, {}, ctx.n


def _stopped_run(ctx, alpha, level, t, fine_until, horizon):
    times, cfg = ctx.grid(fine_until=fine_until, horizon=horizon)
    it = node_index(times, t)
    out = np.empty((ctx.n, 7))
    ctx.run_raw(kern.stopped_chunk, (float(alpha), times), float(level), it, outputs=(out,))
    return out, times


@_register("prop41_tail", "P(S_inf >= b) = exp(-int_a^b dx / (x - phi(x))) for M stopped at phi(S)",
           models=(MartingaleModel.alpha_stopped(0.5),))
def _prop41(ctx, model, b=2.0):
    alpha = model.alpha
    horizon = max(ctx.config.horizon, 64.0)
    out, times = _stopped_run(ctx, alpha, 0.0, 1.0, horizon, horizon)
    stopped = out[:, 4] > 0
    cens = ~stopped
    s_inf = out[:, 2]
    m_inf = out[:, 1]
    phi = lambda x: alpha * x
    ref = laws.sup_tail_from_phi(phi, 1.0, b)
    hit = (s_inf >= b).astype(float)
    parts = [_prop_part(f"alpha={alpha:g}: P(S_inf >= {b:g})", hit, ref, float(np.mean(cens & (s_inf < b))))]
    c = laws.ui_class(phi, 1.0)
    est, se = mean_and_stderr(m_inf)
    # unstopped paths: M_inf lies in [alpha S_T, inf); their contribution is bounded by
    # the chance of running past the horizon times the observed spread
    bias = float(np.mean(np.where(cens, np.abs(m_inf - alpha * s_inf), 0.0)))
    parts.append(Part(f"alpha={alpha:g}: E[M_inf] vs c * M_0", est, c, se, bias))
    out0, _ = _stopped_run(ctx, 0.0, 0.0, 1.0, horizon, horizon)
    done0 = out0[:, 4] > 0
    val0 = float(out0[done0, 1].sum() / max(done0.sum(), 1))
    parts.append(Part("alpha=0: E[M_inf | absorbed] vs c * M_0", val0, laws.ui_class(lambda x: 0.0, 1.0),
                      0.0, 0.0, 0.0, 0.0))
    details = {"censored": int(cens.sum()), "censored_alpha0": int((~done0).sum()), "ui_class": c}
    return parts, details, ctx.n


@_register("eq6e_identity", "E[1{G_K <= t} (K - M_inf)^+] = E[(K - M_t)^+]",
           models=(MartingaleModel.alpha_stopped(0.75),))
def _eq6e(ctx, model, K=1.2, t=1.0):
    alpha = model.alpha
    out, _ = _stopped_run(ctx, alpha, K, t, max(2.0, t), max(ctx.config.horizon, 2.0))
    cens = out[:, 4] == 0
    lhs = out[:, 6] * np.maximum(K - out[:, 1], 0.0) * ~cens
    rhs = np.maximum(K - out[:, 0], 0.0)
    _, se = mean_and_stderr(lhs - rhs)
    part = Part(f"alpha={alpha:g} K={K:g} t={t:g}", float(lhs.mean()), float(rhs.mean()), se,
                float(K * cens.mean()))
    return [part], {"censored": int(cens.sum())}, ctx.n


@_register("pdp_atom", "dual predictable projection of 1{0 < G_K <= t} is L_t^K / 2K",
           models=(MartingaleModel.gbm(),))
def _pdp_atom(ctx, model, levels=(1.0, 2.0)):
    times, cfg = ctx.grid(fine_until=4.0)
    n_fine = fine_steps(times, cfg.dt)
    lv = np.asarray(levels, dtype=float)
    # kernel half-width 2 sigma(K) sqrt(dt), sigma(K) = K for this model
    base = cfg.bandwidth if cfg.bandwidth is not None else 2.0 * math.sqrt(cfg.dt)
    eps = np.array([[base * (x if cfg.bandwidth is None else 1.0), 0.0, -1.0] for x in lv])
    eps[:, 1] = 0.5 * eps[:, 0]
    lt = np.empty((ctx.n, lv.size, 3))
    end = np.empty(ctx.n)
    ctx.run(kern.local_time_chunk, model, times, RETIRE, lv, eps, n_fine, outputs=(lt, end))
    parts = []
    details = {}
    for q, x in enumerate(lv):
        ref = min(model.initial / x, 1.0)
        scale = 1.0 / (2.0 * x)
        rich = (2.0 * lt[:, q, 1] - lt[:, q, 0]) * scale
        est, se = mean_and_stderr(rich)
        # local time still to come after the horizon or retirement: E = 2 min(M_end, K)
        bias = float(np.mean(2.0 * np.minimum(end, x))) * scale
        parts.append(Part(f"K={x:g}: E[L^K]/2K (kernel, extrapolated)", est, ref, se, bias, 0.02 * ref, 0.0))
        est_b, se_b = mean_and_stderr(lt[:, q, 2] * scale)
        parts.append(Part(f"K={x:g}: E[L^K]/2K (bridge)", est_b, ref, se_b, bias))
        details[f"K={x:g}"] = {"epsilon": float(eps[q, 0]), "kernel_eps": float(lt[:, q, 0].mean() * scale),
                               "kernel_half_eps": float(lt[:, q, 1].mean() * scale)}
    return parts, details, ctx.n


@_register("pdp_sup", "E[S_inf - S_(t,inf)] = E[int_0^t d<M>/2M] = E[M_t log M_t]",
           models=(MartingaleModel.gbm(),))
def _pdp_sup(ctx, model, t=1.0):
    times, cfg = ctx.grid(fine_until=max(1.0, t))
    idx = np.array([node_index(times, t)])
    m, before, after = (np.empty((ctx.n, 1)) for _ in range(3))
    end = np.empty(ctx.n)
    doob = cfg.tail_mode == "doob_exact"
    ctx.run(kern.sup_after_chunk, model, times, RETIRE, idx, doob, outputs=(m, before, after, end))
    sprime = np.maximum(before[:, 0] - after[:, 0], 0.0)
    bias = 0.0 if doob else float(np.mean(sprime * np.minimum(end / after[:, 0], 1.0)))
    est, se = mean_and_stderr(sprime)
    parts = [Part(f"E[S'_{t:g}] vs t/2", est, 0.5 * t, se, bias)]
    mlogm = m[:, 0] * np.log(m[:, 0])
    _, se_d = mean_and_stderr(sprime - mlogm)
    parts.append(Part(f"E[S'_{t:g}] vs E[M_t log M_t]", est, float(mlogm.mean()), se_d, bias))
    return parts, {}, ctx.n


@_register("st_log_martingale", "S_t - M_t log S_t is a martingale", models=(MartingaleModel.gbm(),))
def _st_log(ctx, model, ts=(0.5, 1.0, 2.0)):
    times, cfg = ctx.grid(fine_until=None, horizon=max(ts))
    idx = np.array([node_index(times, t) for t in ts])
    m, before, after = (np.empty((ctx.n, idx.size)) for _ in range(3))
    end = np.empty(ctx.n)
    ctx.run(kern.sup_after_chunk, model, times, 0.0, idx, False, outputs=(m, before, after, end))
    parts = []
    for j, t in enumerate(ts):
        est, se = mean_and_stderr(before[:, j] - m[:, j] * np.log(before[:, j]))
        parts.append(Part(f"E[S_t - M_t log S_t], t={t:g}", est, 1.0, se))
    return parts, {}, ctx.n


@_register("it_pdp", "I_t = (S_inf - M_inf)^2 - (S_(t,inf) - M_inf)^2 has dual projection <M>_t",
           models=(MartingaleModel.alpha_stopped(0.75),))
def _it_pdp(ctx, model, t=1.0):
    alpha = model.alpha
    out, _ = _stopped_run(ctx, alpha, 0.0, t, max(2.0, t), max(ctx.config.horizon, 2.0))
    cens = out[:, 4] == 0
    m_inf, s_inf, s_after = out[:, 1], out[:, 2], out[:, 3]
    i_t = (s_inf - m_inf) ** 2 - (s_after - m_inf) ** 2
    qv = np.minimum(out[:, 5], t)
    _, se = mean_and_stderr(i_t - qv)
    bias = float(np.mean(np.where(cens, s_inf * s_inf, 0.0)))
    part = Part(f"alpha={alpha:g}: E[I_{t:g}] vs E[<M>_{t:g}]", float(i_t.mean()), float(qv.mean()), se, bias)
    return [part], {"censored": int(cens.sum())}, ctx.n
