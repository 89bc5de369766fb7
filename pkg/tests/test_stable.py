import cmath
import math

import numpy as np
import pytest
from scipy import special, stats

from rdslimit.driving import derive_seed
from rdslimit.stable import (SampleSet, StableLaw, cms_sampler, empirical_cf, iid_oracle,
                             ks_critical, ks_two_sample, stable_cf)
from rdslimit.tailmodel import TailModel, phi_star
from rdslimit.transfer import sample_from_density


def closed_form_cf(alpha, p, t):
    """exp(alpha Gamma(-alpha) |t|^alpha (cos(pi a/2) - i beta sgn t sin(pi a/2))); the shift
    a_alpha exactly cancels the compensator for alpha != 1."""
    beta = 2 * p - 1
    z = alpha * special.gamma(-alpha) * abs(t) ** alpha * complex(
        math.cos(math.pi * alpha / 2), -beta * math.copysign(1, t) * math.sin(math.pi * alpha / 2))
    return cmath.exp(z)


def test_law_fields():
    law = StableLaw(0.75, 1.0)
    assert law.beta_skew == 1.0
    assert law.a_alpha == 3.0
    assert StableLaw(1.5, 0.25).a_alpha == pytest.approx(-0.5 * 1.5 / -0.5)
    assert StableLaw(1.0, 0.8).a_alpha == 0.0
    for bad in (0.0, 2.0, 2.5):
        with pytest.raises(ValueError):
            StableLaw(bad)


def test_cf_trivial():
    law = StableLaw(0.75, 0.8)
    assert stable_cf(law, 0.0) == 1.0
    t = np.linspace(-10, 10, 200)
    cf = stable_cf(law, t)
    assert np.all(np.abs(cf) <= 1.0 + 1e-12)
    assert np.allclose(stable_cf(law, -t), np.conj(cf), atol=1e-12)


@pytest.mark.parametrize("alpha,p", [(0.5, 1.0), (0.75, 1.0), (0.3, 0.2), (1.5, 1.0),
                                     (1.9, 0.6), (1.2, 0.0)])
def test_cf_closed_form(alpha, p):
    law = StableLaw(alpha, p)
    for t in (-7.0, -1.3, 0.01, 0.4, 2.0, 15.0):
        assert abs(stable_cf(law, t) - closed_form_cf(alpha, p, t)) <= 1e-10


def test_cf_alpha_one_modulus():
    law = StableLaw(1.0, 1.0)
    for t in (0.2, 1.0, 3.0):
        assert abs(stable_cf(law, t)) == pytest.approx(math.exp(-math.pi * t / 2), rel=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 0.75, 1.5])
def test_cf_scaling(alpha):
    t = np.linspace(0.1, 5, 40)
    y = np.log(np.abs(stable_cf(StableLaw(alpha, 1.0), t)))
    r = np.corrcoef(t**alpha, y)[0, 1]
    assert r**2 >= 0.999


def test_empirical_cf():
    x = np.random.default_rng(0).standard_cauchy(1000)
    assert empirical_cf(x, [0.0])[0] == 1.0
    assert np.allclose(empirical_cf([0.3], [1.0, 2.0]), np.exp(1j * np.array([0.3, 0.6])))
    assert np.all(np.abs(empirical_cf(x, np.linspace(-5, 5, 50))) <= 1 + 1e-12)
    with pytest.raises(ValueError):
        empirical_cf([], [1.0])


def test_ks_trivial():
    a = np.random.default_rng(1).random(500)
    assert ks_two_sample(a, a) == 0.0
    assert ks_two_sample(a, a + 2.0) == 1.0
    with pytest.raises(ValueError):
        ks_two_sample([], a)


def test_ks_matches_scipy_and_symmetric():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a, b = rng.normal(size=300), rng.normal(0.2, 1.0, size=450)
        d = ks_two_sample(a, b)
        assert d == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-15)
        assert d == ks_two_sample(b, a)


def test_ks_same_law():
    rng = np.random.default_rng(3)
    a, b = rng.standard_cauchy(5000), rng.standard_cauchy(5000)
    assert ks_critical(5000, 5000) == pytest.approx(1.36 * 0.02, abs=1e-12)
    assert ks_two_sample(a, b) <= 0.0384


def test_ks_triangle():
    rng = np.random.default_rng(4)
    a, b, c = rng.normal(size=200), rng.normal(0.3, size=300), rng.normal(-0.2, size=250)
    assert ks_two_sample(a, c) <= ks_two_sample(a, b) + ks_two_sample(b, c) + 1e-15


def test_sample_set_drops_non_finite():
    s = SampleSet.from_raw([1.0, np.nan, np.inf, 2.0], "dynamical", 1)
    assert s.values.tolist() == [1.0, 2.0] and s.excluded == 2 and len(s) == 2


def test_oracle_single_term():
    h = np.linspace(0.5, 1.5, 64)
    h /= h.mean()
    tail = TailModel(0.75, 0.4, 1.0)
    s = iid_oracle(tail, h, 1, 20, 99)
    assert s.meta["b_n"] == 1.0 and s.meta["c"] == 0.0
    for i, v in enumerate(s.values):
        rng = np.random.Generator(np.random.Philox(key=derive_seed(99, i)))
        u = rng.random((2, 1))
        assert v == phi_star(sample_from_density(h, u[0], u[1]), tail)[0]


def test_oracle_seeds_close():
    h = np.ones(256)
    tail = TailModel(0.75, 0.4, 2.0)
    a = iid_oracle(tail, h, 100, 5000, 1)
    b = iid_oracle(tail, h, 100, 5000, 2)
    assert not np.array_equal(a.values, b.values)
    assert ks_two_sample(a, b) <= 0.03


def test_oracle_tail_trend():
    tail = TailModel(0.75, 0.4, 2.0)
    s = iid_oracle(tail, np.ones(256), 50, 20000, 5).values
    # the lambda^-alpha regime of a finite sum starts near lambda = 30
    lam = np.geomspace(30, 1000, 8)
    frac = np.array([np.mean(s > v) for v in lam])
    slope = np.polyfit(np.log(lam), np.log(frac), 1)[0]
    assert slope == pytest.approx(-0.75, abs=0.1)


@pytest.mark.parametrize("alpha", [0.75, 1.5])
def test_oracle_n_stability(alpha):
    tail = TailModel(alpha, 0.4, 2.0)
    h = np.ones(256)
    a = iid_oracle(tail, h, 200, 4000, 7)
    b = iid_oracle(tail, h, 400, 4000, 8)
    assert ks_two_sample(a, b) <= 2 * ks_critical(4000, 4000)


def test_cms_domain():
    with pytest.raises(ValueError):
        cms_sampler(StableLaw(2.0), 10, 0)
    with pytest.raises(NotImplementedError):
        cms_sampler(StableLaw(1.0), 10, 0)


@pytest.mark.parametrize("alpha", [0.75, 1.5])
def test_cms_calibrated(alpha):
    s = cms_sampler(StableLaw(alpha, 1.0), 10**6, 11)
    assert s.meta["cf_gap"] <= 0.02 and not s.meta["flagged"]
    if alpha < 1:
        assert np.mean(s.values <= 0) <= 1e-3


def test_cms_matches_oracle():
    # iid sums of a Pareto-type observable land near the calibrated CMS law
    tail = TailModel(0.75, 0.5, 2.0)
    o = iid_oracle(tail, np.ones(1024), 2000, 3000, 3)
    c = cms_sampler(StableLaw(0.75, 1.0), 3000, 4)
    assert ks_two_sample(o, c) <= 2 * ks_critical(3000, 3000)
