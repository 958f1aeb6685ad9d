import io
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lastpassage.engine.models import MartingaleModel, SimConfig, make_grid, node_index, parse_model
from lastpassage.engine.paths import (
    PathSample,
    dump_paths,
    last_passage_on_path,
    load_paths,
    local_time_estimate,
    simulate_path,
    sup_after,
    tail_bias_bound,
)

SMALL = SimConfig(n_paths=10, dt=0.01, horizon=5.0, seed=7)
MODELS = [MartingaleModel.gbm(), MartingaleModel.killed_bm(), MartingaleModel.inv_bes3(),
          MartingaleModel.cosh_exp(), MartingaleModel.alpha_stopped(0.5), MartingaleModel.alpha_stopped(0.0)]


def _norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _manual(values, times=None, absorbed_at=None, model=None):
    values = np.asarray(values, float)
    times = np.arange(values.size, dtype=float) if times is None else np.asarray(times, float)
    smax = np.maximum(values[:-1], values[1:])
    return PathSample(times=times, values=values, qv_increments=np.ones(values.size - 1),
                      running_max=np.maximum.accumulate(values), absorbed_at=absorbed_at,
                      terminal_value=float(values[-1]), model=model or MartingaleModel.killed_bm(),
                      dt=1.0, step_max=smax, driver=values.copy())


class TestConfig:
    def test_defaults(self):
        c = SimConfig()
        assert (c.n_paths, c.dt, c.horizon, c.seed, c.tail_mode) == (100_000, 1e-3, 64.0, 42, "censor")

    @pytest.mark.parametrize("kw", [dict(n_paths=0), dict(dt=0.0), dict(horizon=-1.0), dict(bandwidth=0.0),
                                    dict(tail_mode="exact")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)

    def test_models(self):
        assert parse_model("GBM").kind == "gbm"
        assert parse_model("killedbm").kind == "killed-bm"
        assert parse_model("alpha-stopped:0.25").alpha == 0.25
        with pytest.raises(ValueError):
            parse_model("heston")
        with pytest.raises(ValueError):
            MartingaleModel.alpha_stopped(1.0)
        with pytest.raises(ValueError):
            MartingaleModel.gbm(0.0)
        assert MartingaleModel.gbm().terminal_kind == "vanishing"
        assert MartingaleModel.alpha_stopped(0.5).terminal_kind == "nonzero_limit"

    def test_diffusion_coefficients(self):
        x = np.array([0.5, 2.0])
        assert np.allclose(MartingaleModel.gbm().diffusion(0.0, x), x)
        assert np.allclose(MartingaleModel.killed_bm().diffusion(0.0, x), 1.0)
        assert np.allclose(MartingaleModel.inv_bes3().diffusion(0.0, x), x * x)
        assert np.allclose(MartingaleModel.cosh_exp().diffusion(1.0, x), np.sqrt(np.maximum(x * x - math.exp(-1), 0)))

    def test_two_scale_grid(self):
        g = make_grid(0.1, 2.0, fine_until=1.0)
        h = np.diff(g)
        n_fine = int(round(1.0 / 0.1))
        assert np.allclose(h[:n_fine], 0.1)
        assert np.allclose(h[n_fine:-1] / g[n_fine:-2], 0.01)
        assert g[-1] == 2.0
        assert node_index(g, 0.5) == 5
        with pytest.raises(ValueError):
            node_index(g, 0.55)


class TestSimulation:
    @pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}{m.alpha or ''}")
    def test_deterministic(self, model):
        a = simulate_path(model, SMALL, 3)
        b = simulate_path(model, SMALL, 3)
        c = simulate_path(model, SMALL, 4)
        assert np.array_equal(a.values, b.values) and np.array_equal(a.running_max, b.running_max)
        assert not np.array_equal(a.values, c.values)

    @settings(max_examples=30)
    @given(st.sampled_from(MODELS), st.integers(0, 10_000))
    def test_path_invariants(self, model, index):
        p = simulate_path(model, SMALL, index)
        assert np.all(np.diff(p.running_max) >= 0)
        assert np.all(p.running_max >= p.values)
        assert np.all(p.qv_increments >= 0)
        if model.kind != "bm":
            assert np.all(p.values >= 0)
        if p.absorbed_at is not None:
            i = np.searchsorted(p.times, p.absorbed_at)
            assert np.all(p.values[i:] == p.values[-1])
        assert p.terminal_value == p.values[-1]

    def test_negative_index(self):
        with pytest.raises(ValueError):
            simulate_path(MartingaleModel.gbm(), SMALL, -1)

    def test_gbm_mean_one(self):
        cfg = SimConfig(dt=0.01, horizon=1.0, seed=3)
        ends = np.array([simulate_path(MartingaleModel.gbm(), cfg, i).terminal_value for i in range(4000)])
        assert abs(ends.mean() - 1.0) < 3 * ends.std() / math.sqrt(ends.size)

    def test_killed_absorption_probability(self):
        # reflection principle: P(T_0 <= 100) = 2 (1 - N(1/10))
        cfg = SimConfig(dt=0.02, horizon=100.0, seed=11)
        hit = np.array([simulate_path(MartingaleModel.killed_bm(), cfg, i).absorbed_at is not None
                        for i in range(3000)])
        ref = 2.0 * (1.0 - _norm_cdf(0.1))
        assert abs(hit.mean() - ref) < 3 * math.sqrt(ref * (1 - ref) / hit.size)


class TestFunctionals:
    @settings(max_examples=20)
    @given(st.integers(0, 1000))
    def test_sup_after_monotone(self, index):
        p = simulate_path(MartingaleModel.gbm(), SMALL, index)
        sups = [sup_after(p, t) for t in p.times[::25]]
        assert np.all(np.diff(sups) <= 0)
        assert sup_after(p, 0.0) == pytest.approx(max(p.values.max(), p.step_max.max()))
        assert sup_after(p, p.horizon) == p.terminal_value

    def test_sup_after_off_grid(self):
        p = simulate_path(MartingaleModel.gbm(), SMALL, 0)
        with pytest.raises(ValueError):
            sup_after(p, 0.015)

    def test_no_crossing_is_zero(self):
        p = _manual([1.0, 0.5, 0.0, 0.0], absorbed_at=2.0)
        assert last_passage_on_path(p, 2.0) == (0.0, False)

    def test_crossing_before_absorption(self):
        p = _manual([1.0, 1.5, 0.7, 0.0, 0.0], absorbed_at=3.0)
        g, censored = last_passage_on_path(p, 1.0)
        assert g == pytest.approx(1.0 + 0.5 / 0.8)
        assert not censored

    def test_ties_go_to_later_time(self):
        p = _manual([0.5, 1.0, 1.0, 0.5, 0.0], absorbed_at=4.0)
        assert last_passage_on_path(p, 1.0)[0] == 2.0

    def test_censoring(self):
        p = _manual([1.0, 1.5, 2.0], model=MartingaleModel.gbm())
        assert last_passage_on_path(p, 1.2) == (pytest.approx(0.4), True)
        assert last_passage_on_path(p, 3.0) == (0.0, False)
        rng = np.random.default_rng(0)
        flags = [last_passage_on_path(p, 4.0, "doob_exact", rng)[1] for _ in range(4000)]
        assert abs(np.mean(flags) - 0.5) < 3 * math.sqrt(0.25 / 4000)

    def test_doob_exact_needs_vanishing_model(self):
        p = simulate_path(MartingaleModel.alpha_stopped(0.5), SMALL, 0)
        with pytest.raises(ValueError):
            last_passage_on_path(p, 1.0, "doob_exact", np.random.default_rng(0))
        q = simulate_path(MartingaleModel.gbm(), SMALL, 0)
        with pytest.raises(ValueError):
            last_passage_on_path(q, 1.0, "doob_exact")
        with pytest.raises(ValueError):
            last_passage_on_path(q, 0.0)

    def test_local_time_zero_and_monotone(self):
        p = _manual([1.0, 1.5, 0.7, 0.0, 0.0], absorbed_at=3.0)
        assert np.all(local_time_estimate(p, 5.0, 0.1) == 0.0)
        q = simulate_path(MartingaleModel.gbm(), SMALL, 1)
        lt = local_time_estimate(q, 1.0)
        assert lt[0] == 0.0 and np.all(np.diff(lt) >= 0)
        with pytest.raises(ValueError):
            local_time_estimate(q, 1.0, 0.0)

    def test_occupation_consistency(self):
        # sum over a level grid of L^K dK recovers the quadratic variation spent in the band
        cfg = SimConfig(dt=1e-3, horizon=2.0, seed=5)
        levels = np.arange(0.505, 1.5, 0.01)
        lhs = rhs = 0.0
        for i in range(40):
            p = simulate_path(MartingaleModel.gbm(), cfg, i)
            lhs += sum(local_time_estimate(p, k, 0.005)[-1] for k in levels) * 0.01
            inside = (p.values[:-1] >= 0.5) & (p.values[:-1] <= 1.5)
            rhs += p.qv_increments[inside].sum()
        assert lhs == pytest.approx(rhs, rel=0.05)

    def test_tail_bias_bound(self):
        zero = [SimpleNamespace(absorbed_at=None, terminal_value=0.0)] * 3
        half = [SimpleNamespace(absorbed_at=None, terminal_value=1.0)] * 3
        assert tail_bias_bound(zero, 2.0) == 0.0
        assert tail_bias_bound(half, 2.0) == 0.5

    def test_gbm_tail_bias_small(self):
        # E[min(M_64, 1)] = 2 N(-4) for M = exp(B - t/2)
        assert 2 * _norm_cdf(-4.0) < 1e-3
        cfg = SimConfig(dt=0.5, horizon=64.0, seed=9)
        paths = [simulate_path(MartingaleModel.gbm(), cfg, i) for i in range(2000)]
        assert tail_bias_bound(paths, 1.0) < 1e-3


def test_dump_round_trip():
    paths = [simulate_path(MartingaleModel.killed_bm(), SMALL, i) for i in range(3)]
    buf = io.BytesIO()
    dump_paths(paths, buf)
    raw = buf.getvalue()
    assert raw[:4] == b"LPK1"
    out = load_paths(io.BytesIO(raw))
    assert out["model"] == "killed-bm" and out["dt"] == SMALL.dt
    assert np.array_equal(out["times"], paths[0].times)
    for k, p in enumerate(paths):
        assert np.array_equal(out["values"][k], p.values)
        assert np.array_equal(out["running_max"][k], p.running_max)
        assert np.array_equal(out["qv_increments"][k], p.qv_increments)
    with pytest.raises(ValueError):
        load_paths(io.BytesIO(b"XXXX" + raw[4:]))


def test_worker_count_independence(monkeypatch):
    from lastpassage.checks import run_check, reports_to_json

    cfg = SimConfig(n_paths=9000, dt=1e-2, horizon=4.0)
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("LPK_THREADS", threads)
        outs.append(reports_to_json([run_check("doob_maximal", config=cfg)]))
    assert outs[0] == outs[1]
