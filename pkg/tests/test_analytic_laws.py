"""Closed-form laws against independently computed values.

Frozen numbers were produced once with ``mpmath`` at 30 digits: the normal
distribution from the Taylor series of ``erf``, Bessel functions from
``mpmath.besseli`` and the uniform-mixture integrals from the antiderivative
``u (1 - N(u)) - phi(u)``.
"""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sint
from scipy import special

from lastpassage import analytic_laws as L
from lastpassage.checks.report import ks_distance

N_HALF = 0.691462461274013103637704610608
N_1_3 = 0.90319951541438967445828443926
N_M2_7 = 0.00346697380304066664481194382892
FOUR_NSQ_1 = 0.382924922548026207275409221217
LPD_0_HALF_1 = 0.176032663382149738887340220798
KILLED_1_1 = 0.390451577784603040389947133858
KILLED_HALF_2 = 0.48851280478475  # quadrature of E[(1 - M_t/K)^+] against the killed density
INVBES_HALF_1 = 0.0829333162706385747874158301824
INVBES_HALF_2 = 0.191018364049464889522262137022
GBM_GK_2_15 = 0.0813460613381537165884613753996
COSH = {(1.5, 1.0): 0.108916029911611594983027997648, (1.5, 0.3): 0.064881758464910671272182554443,
        (1.5, 3.0): 0.0742683646528716581178540068787, (0.5, 2.0): 0.161220502407081162291697055027}


class TestNormal:
    def test_frozen_values(self):
        assert L.std_normal_cdf(0.0) == 0.5
        assert abs(L.std_normal_cdf(0.5) - N_HALF) < 1e-13
        assert abs(L.std_normal_cdf(1.3) - N_1_3) < 1e-13
        assert abs(L.std_normal_cdf(-2.7) - N_M2_7) < 1e-13

    @given(st.floats(-30, 30))
    def test_symmetry(self, x):
        assert abs(L.std_normal_cdf(x) + L.std_normal_cdf(-x) - 1.0) < 1e-15

    def test_pdf(self):
        assert L.std_normal_pdf(1.0) == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi), rel=1e-15)


class TestPassageDensities:
    def test_first_passage_value(self):
        assert L.first_passage_density(1.0, 0.0, 1.0) == pytest.approx(0.24197072451914337, abs=1e-15)

    @given(st.floats(-2, 2), st.floats(0.05, 20))
    def test_drift_reflection(self, nu, t):
        # the exponent differs by 2 nu a between nu and -nu
        lhs = L.first_passage_density(1.0, nu, t)
        rhs = L.first_passage_density(1.0, -nu, t) * math.exp(2 * nu)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-300)

    def test_first_passage_mass(self):
        val, _ = sint.quad(lambda t: L.first_passage_density(1.0, 1.0, t), 0, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_last_passage_value_and_mass(self):
        assert abs(L.last_passage_density(0.0, 0.5, 1.0) - LPD_0_HALF_1) < 1e-15
        val, _ = sint.quad(lambda t: L.last_passage_density(1.0, 1.0, t), 0, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_last_passage_is_four_nsq(self):
        ts = np.linspace(0.05, 30, 100)
        dens = L.four_nsq_law().density(ts)
        assert np.allclose(L.last_passage_density(0.0, 0.5, ts), dens, rtol=1e-12, atol=0)

    @pytest.mark.parametrize("a,nu", [(1.0, 0.7), (-0.5, 1.0), (0.0, 2.0), (2.0, -0.3)])
    def test_law_cdf_is_integrated_density(self, a, nu):
        law = L.last_passage_law(a, nu)
        for t in (0.2, 1.0, 5.0):
            val, _ = sint.quad(lambda s: 2 * s * L.last_passage_density(a, nu, s * s), 0, math.sqrt(t))
            assert float(law.cdf(t)) == pytest.approx(L.last_passage_atom(a, nu) + val, abs=1e-9)

    def test_domain(self):
        with pytest.raises(L.DomainError):
            L.first_passage_density(0.0, 0.0, 1.0)
        with pytest.raises(L.DomainError):
            L.first_passage_density(1.0, 0.0, 0.0)
        with pytest.raises(L.DomainError):
            L.last_passage_density(0.0, 0.0, 1.0)


def test_four_nsq_cdf():
    assert L.four_nsq_cdf(0.0) == 0.0
    assert abs(L.four_nsq_cdf(1.0) - FOUR_NSQ_1) < 1e-14
    assert L.four_nsq_cdf(1e6) == pytest.approx(1.0, abs=1e-14)


class TestGkLaws:
    @pytest.mark.parametrize("K", [0.5, 1.0, 2.0])
    def test_gbm_mass(self, K):
        law = L.gbm_gk_law(K)
        assert law.atom_at_zero == max(1 - 1 / K, 0)
        assert law.mass() == pytest.approx(1.0, abs=1e-6)

    def test_gbm_values(self):
        assert abs(L.gbm_gk_law(1.0).density(1.0) - LPD_0_HALF_1) < 1e-14
        assert abs(L.gbm_gk_law(2.0).density(1.5) - GBM_GK_2_15) < 1e-14
        assert L.gbm_gk_law(2.0).atom_at_zero == 0.5

    def test_time_inversion_consistency(self):
        ts = np.linspace(0.01, 25, 100)
        a = L.gbm_gk_law(1.0).density(ts)
        b = L.last_passage_density(0.0, 0.5, ts)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_killed_cdf(self):
        assert abs(L.killed_bm_gk_cdf(1.0, 1.0) - KILLED_1_1) < 1e-9
        assert abs(L.killed_bm_gk_cdf(0.5, 2.0) - KILLED_HALF_2) < 1e-11
        assert L.killed_bm_gk_law(1.0).cdf(1.0) == pytest.approx(KILLED_1_1, abs=1e-9)
        assert L.killed_bm_gk_cdf(0.7, 1e-8) < 1e-12
        assert L.killed_bm_gk_cdf(0.7, 1e9) == pytest.approx(1.0, abs=1e-4)

    def test_inv_bes3_cdf(self):
        assert abs(L.inv_bes3_gk_cdf(0.5, 1.0) - INVBES_HALF_1) < 1e-9
        assert abs(L.inv_bes3_gk_cdf(0.5, 2.0) - INVBES_HALF_2) < 1e-9
        assert L.inv_bes3_gk_law(0.5).cdf(2.0) == pytest.approx(INVBES_HALF_2, abs=1e-9)
        assert L.inv_bes3_gk_cdf(0.5, 1e10) == pytest.approx(1.0, abs=1e-4)

    def test_mixture_cdfs_monotone(self):
        ts = np.geomspace(0.01, 100, 25)
        for K in (0.2, 0.5, 1.0):
            v = [L.killed_bm_gk_cdf(K, t) for t in ts]
            assert np.all(np.diff(v) >= -1e-12)
        for K in (0.2, 0.5, 0.9):
            v = [L.inv_bes3_gk_cdf(K, t) for t in ts]
            assert np.all(np.diff(v) >= -1e-12)
        # (1 - m/K)^+ grows with K
        for t in (0.5, 2.0):
            v = [L.killed_bm_gk_cdf(K, t) for K in (0.25, 0.5, 0.75, 1.0)]
            assert np.all(np.diff(v) >= -1e-12)

    def test_mixture_domains(self):
        for bad in (0.0, 1.5):
            with pytest.raises(L.DomainError):
                L.killed_bm_gk_cdf(bad, 1.0)
        for bad in (0.0, 1.0):
            with pytest.raises(L.DomainError):
                L.inv_bes3_gk_cdf(bad, 1.0)

    @pytest.mark.parametrize("K", [0.3, 0.5, 1.0, 2.0])
    def test_brownian_laws_mass(self, K):
        assert L.killed_bm_gk_law(K).mass() == pytest.approx(1.0, abs=1e-6)
        assert L.inv_bes3_gk_law(K).mass() == pytest.approx(1.0, abs=1e-6)


class TestCosh:
    def test_values(self):
        for (K, t), v in COSH.items():
            assert abs(L.cosh_gk_density(K, t) - v) < 1e-13

    def test_support_edge(self):
        # no mass while K e^{t/2} < 1
        assert L.cosh_gk_density(0.5, 1.0) == 0.0
        assert L.cosh_gk_density(0.5, 2 * math.log(2) - 1e-9) == 0.0
        assert L.cosh_gk_density(1.5, 400.0) >= 0.0

    def test_theta_at_one(self):
        # sigma^2 = M^2 - e^{-t} on the level M = 1
        assert 1.0 - math.exp(-1.0) == pytest.approx(0.6321205588285577, abs=1e-15)

    @pytest.mark.parametrize("K", [0.5, 1.5])
    def test_mass(self, K):
        law = L.cosh_gk_law(K)
        assert law.mass() == pytest.approx(1.0, abs=1e-6)

    def test_domain(self):
        with pytest.raises(L.DomainError):
            L.cosh_gk_density(1.5, 0.0)


class TestBessel:
    @pytest.mark.parametrize("nu,z", [(0.5, 2.3), (1.5, 0.01), (3.0, 40.0), (0.0, 1.0), (2.5, 120.0)])
    def test_iv_against_scipy(self, nu, z):
        assert L.bessel_iv(nu, z, scaled=True) == pytest.approx(special.ive(nu, z), rel=1e-12)

    def test_transition_density(self):
        assert L.bessel_transition_density(3, 0.5, 1.2, 0.7) == pytest.approx(0.661202028764862553760, rel=1e-12)
        assert L.bessel_transition_density(5, 0.5, 1.2, 0.7) == pytest.approx(0.432636118635108840951, rel=1e-12)

    def test_last_passage(self):
        assert L.bessel_last_passage_density(3, 0.0, 1.0, 1.0) == pytest.approx(0.24197072451914337, abs=1e-12)
        assert L.bessel_last_passage_density(5, 0.5, 1.2, 0.7) == pytest.approx(0.540795148293886071202, rel=1e-12)
        val, _ = sint.quad(lambda t: L.bessel_last_passage_density(3, 0.0, 1.0, t), 0, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-7)

    def test_dimension_four_is_exponential(self):
        for t in (0.3, 1.0, 4.0):
            val, _ = sint.quad(lambda s: L.bessel_last_passage_density(4, 0.0, 1.3, s), 0, t)
            assert val == pytest.approx(math.exp(-1.3**2 / (2 * t)), abs=1e-8)

    def test_recurrent_rejected(self):
        with pytest.raises(L.DomainError):
            L.bessel_last_passage_density(2, 0.0, 1.0, 1.0)


class TestTails:
    def test_examples(self):
        assert L.sup_tail_from_phi(lambda x: 0.5 * x, 1.0, 1.0) == 1.0
        assert L.sup_tail_from_phi(lambda x: 0.5 * x, 1.0, 2.0) == pytest.approx(0.25, abs=1e-9)
        assert L.sup_tail_from_phi(lambda x: 0.0, 1.0, 5.0) == pytest.approx(0.2, abs=1e-9)

    @given(st.sampled_from([0.0, 0.25, 0.5, 0.75]), st.floats(1.0, 50.0), st.floats(0.1, 5.0))
    def test_linear_phi_closed_form(self, alpha, ratio, a):
        got = L.sup_tail_from_phi(lambda x: alpha * x, a, a * ratio)
        assert abs(got - ratio ** (-1 / (1 - alpha))) < 1e-7

    def test_phi_must_stay_below(self):
        with pytest.raises(L.DomainError):
            L.sup_tail_from_phi(lambda x: x, 1.0, 2.0)
        with pytest.raises(L.DomainError):
            L.sup_tail_from_phi(lambda x: 0.0 if x < 1.5 else 2 * x, 1.0, 2.0)

    def test_ui_class(self):
        assert L.ui_class(lambda x: 0.0, 1.0) == pytest.approx(0.0, abs=1e-6)
        assert L.ui_class(lambda x: 0.5 * x, 1.0) == pytest.approx(1.0, abs=1e-6)
        assert L.ui_class(lambda x: 0.99 * x, 1.0) == pytest.approx(1.0, abs=1e-6)
        # phi(x) = x - 1 + 1/x... tails like a/b times a constant: 1 - c = e^{-1/2}... here
        # phi(x) = x - x/(1 + 1/x) gives x - phi = x^2/(x+1), int_1^b = log b - 1/b + 1
        c = L.ui_class(lambda x: x - x * x / (x + 1.0), 1.0)
        assert c == pytest.approx(1.0 - math.exp(-1.0), abs=1e-4)


LAWS = [
    ("uniform", lambda: L.uniform_law(-1.0, 2.0)),
    ("exponential", lambda: L.exponential_law(2.0)),
    ("gamma", lambda: L.gamma_law(0.5)),
    ("reciprocal gamma", lambda: L.reciprocal_gamma_law(0.25)),
    ("four nsq", L.four_nsq_law),
    ("first passage", lambda: L.first_passage_law(1.0, 0.5)),
    ("first passage driftless", lambda: L.first_passage_law(1.0)),
    ("last passage", lambda: L.last_passage_law(1.0, 0.7)),
    ("last passage with atom", lambda: L.last_passage_law(-0.5, 1.0)),
]


@pytest.mark.parametrize("name,make", LAWS, ids=[n for n, _ in LAWS])
class TestScalarLawInvariants:
    def test_cdf_monotone_with_limits(self, name, make):
        law = make()
        lo, hi = law.support
        xs = np.concatenate([np.linspace(max(lo, -5), min(hi, 5), 60), np.geomspace(5, 1e5, 40)])
        xs = np.sort(xs[(xs >= lo) & (xs <= hi)])
        vals = np.array([float(law.cdf(x)) for x in xs])
        assert np.all(np.diff(vals) >= -1e-12)
        assert float(law.cdf(lo)) <= 1e-8 + float(name == "last passage with atom")
        # tails as heavy as t^{-1/4} still hold 1e-3 at t = 1e12
        top = hi if math.isfinite(hi) else 1e60
        assert float(law.cdf(top)) == pytest.approx(1.0, abs=1e-8)

    def test_density_unit_mass(self, name, make):
        law = make()
        lo, hi = law.support
        val, _ = sint.quad(lambda x: float(law.density(x)), lo, hi, limit=400)
        if name == "last passage with atom":
            val += float(L.last_passage_atom(-0.5, 1.0))
        tail = 1e-6 if name == "reciprocal gamma" else 0.0  # heavy t^{-5/4} tail converges slowly
        assert val == pytest.approx(1.0, abs=1e-6 + tail)

    def test_sampler_ks(self, name, make, rng):
        law = make()
        x = law.sample(rng, 100_000)
        d = ks_distance(x, lambda v: np.asarray(law.cdf(v), dtype=float),
                        cdf_left=(lambda v: np.where(np.asarray(v) <= 0, 0.0, np.asarray(law.cdf(v), float)))
                        if name == "last passage with atom" else None)
        assert d < 1.63 / math.sqrt(x.size)
