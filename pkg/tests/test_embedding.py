import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lastpassage.checks.report import ks_distance
from lastpassage.embedding import TargetMeasure, azema_yor_stop, barycentre_psi, parse_measure
from lastpassage.engine.models import SimConfig

TWO_ATOMS = TargetMeasure.from_atoms([(-1.0, 2 / 3), (2.0, 1 / 3)])
THREE_ATOMS = TargetMeasure.from_atoms([(-1.0, 0.5), (0.5, 0.3), (1.75, 0.2)])
UNIFORM = TargetMeasure(segments=((-1.0, 1.0, 1.0),))


@st.composite
def centred_measures(draw):
    n = draw(st.integers(2, 5))
    xs = draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n, unique=True))
    ws = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    ws = ws / ws.sum()
    xs = np.array(xs) - np.dot(ws, xs)
    if len(set(np.round(xs, 9))) < n:
        xs = xs + np.arange(n) * 1e-3
        xs = xs - np.dot(ws, xs)
    ws[-1] = 1.0 - ws[:-1].sum()
    shift = math.fsum(w * x for w, x in zip(ws, xs))
    return TargetMeasure.from_atoms([(x - shift, w) for x, w in zip(xs, ws)])


class TestPsi:
    def test_dirac(self):
        nu = TargetMeasure.from_atoms([(0.0, 1.0)])
        assert barycentre_psi(nu, -3.0) == 0.0
        assert barycentre_psi(nu, 0.0) == 0.0
        assert barycentre_psi(nu, 1.5) == 1.5

    def test_two_atoms(self):
        assert barycentre_psi(TWO_ATOMS, -2.0) == pytest.approx(0.0, abs=1e-15)
        assert barycentre_psi(TWO_ATOMS, -1.0) == pytest.approx(0.0, abs=1e-15)
        assert barycentre_psi(TWO_ATOMS, -0.999) == 2.0
        assert barycentre_psi(TWO_ATOMS, 2.0) == 2.0
        assert barycentre_psi(TWO_ATOMS, 3.0) == 3.0

    def test_segment(self):
        # uniform on [-1, 1]: psi(x) = (x + 1) / 2 inside
        xs = np.linspace(-1, 1, 9)
        assert np.allclose(barycentre_psi(UNIFORM, xs), (xs + 1) / 2)

    @given(centred_measures())
    def test_monotone_and_above_identity(self, nu):
        lo, hi = nu.support
        xs = np.linspace(lo - 1, hi + 1, 101)
        psi = barycentre_psi(nu, xs)
        assert np.all(np.diff(psi) >= -1e-12)
        assert np.all(psi >= xs - 1e-12)
        below = xs < hi
        assert np.all(psi[below] >= np.maximum(xs[below], 0.0) - 1e-9)


class TestMeasure:
    def test_parse(self):
        nu = parse_measure("# two atoms\natom -1 0.6666666666666666\n\natom 2 0.3333333333333334\n")
        assert nu.atoms == ((-1.0, 0.6666666666666666), (2.0, 0.3333333333333334))
        assert parse_measure(nu.to_text()) == nu
        seg = parse_measure("segment -1 1 1.0")
        assert seg.segments == ((-1.0, 1.0, 1.0),)

    @pytest.mark.parametrize("text", ["atom 1", "point 0 1", "atom x 1", "segment 0 1"])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError, match="line 1"):
            parse_measure(text)

    @pytest.mark.parametrize("kw", [
        dict(atoms=((0.0, 0.5),)),
        dict(atoms=((1.0, 1.0),)),
        dict(atoms=((0.0, -1.0), (0.0, 2.0))),
        dict(segments=((1.0, 1.0, 1.0),)),
        dict(),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TargetMeasure(**kw)


class TestStopping:
    def test_dirac_stops_at_once(self):
        res = azema_yor_stop(TargetMeasure.from_atoms([(0.0, 1.0)]), SimConfig(n_paths=50))
        assert np.all(res.values == 0.0) and np.all(res.stop_times == 0.0)

    def test_two_atoms(self):
        res = azema_yor_stop(TWO_ATOMS, SimConfig(n_paths=20_000, seed=3))
        freq = {x: f for x, f, _ in res.atom_frequencies()}
        assert res.censored == 0
        assert abs(freq[2.0] - 1 / 3) < 3 * math.sqrt(2 / 9 / 20_000)
        assert abs(freq[-1.0] + freq[2.0] - 1.0) < 1e-12
        assert np.all(res.stop_times > 0)

    def test_three_atoms_full_size(self):
        n = 100_000
        res = azema_yor_stop(THREE_ATOMS, SimConfig(n_paths=n))
        assert res.censored == 0
        for x, f, m in res.atom_frequencies():
            assert abs(f - m) < 3 * math.sqrt(m * (1 - m) / n), x
        assert abs(res.values.mean()) < 3 * res.values.std() / math.sqrt(n)

    def test_uniform_segment(self):
        n = 20_000
        cfg = SimConfig(n_paths=n, seed=5)
        res = azema_yor_stop(UNIFORM, cfg)
        d = ks_distance(res.values, lambda v: np.clip((v + 1) / 2, 0, 1))
        assert d < 1.63 / math.sqrt(n) + 2 * math.sqrt(cfg.dt)

    def test_censoring_reported(self):
        res = azema_yor_stop(TargetMeasure.from_atoms([(-50.0, 0.5), (50.0, 0.5)]),
                             SimConfig(n_paths=200, horizon=1.0, dt=0.01))
        assert res.censored > 150
        assert np.isnan(res.values).sum() == res.censored
