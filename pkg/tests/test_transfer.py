import math

import numpy as np
import pytest
from scipy import optimize

from rdslimit.driving import OmegaPath, WindowTooShortError, sample_omega
from rdslimit.maps import MapFamily, beta_map, eval_map, lsv
from rdslimit.tailmodel import TailModel, local_density_constant, scaling_bn
from rdslimit.transfer import (DensityVector, NonConvergenceError, annealed_operator,
                               comparability_constant, cone_check, decay_estimate,
                               family_operators, fiber_measure_sum, fit_decay, measure_of,
                               pullback_batch, pullback_density, pullback_depth,
                               sample_from_density, stationary_density, ulam_matrix)

BETA = MapFamily((beta_map(2.1), beta_map(3.3)))
LSV = MapFamily((lsv(0.2), lsv(0.25)))


def test_doubling_k2():
    assert np.allclose(ulam_matrix(beta_map(2.0), 2).dense(), [[0.5, 0.5], [0.5, 0.5]])


def test_lsv_k2_exact():
    # left branch maps [0, 1/2] onto [0, 1]; the preimage of 1/2 solves x(1 + 2^g x^g) = 1/2
    g = 0.5
    x = optimize.brentq(lambda t: t * (1 + 2**g * t**g) - 0.5, 0.0, 0.5, xtol=1e-15)
    P = ulam_matrix(lsv(g), 2).dense()
    assert P[0, 0] == pytest.approx(2 * x, abs=1e-13)
    assert P[1].tolist() == pytest.approx([0.5, 0.5], abs=1e-15)


@pytest.mark.parametrize("spec", [beta_map(2.0), beta_map(2.1), beta_map(3.3), beta_map(2.5),
                                  lsv(0.2), lsv(0.5), lsv(0.9)])
@pytest.mark.parametrize("k", [7, 256, 1000])
def test_row_stochastic(spec, k):
    P = ulam_matrix(spec, k)
    assert np.max(np.abs(P.row_sums() - 1.0)) <= 1e-10
    assert P.matrix.data.min() >= 0.0


def test_ulam_against_sampling():
    spec, k = beta_map(2.1), 64
    P = ulam_matrix(spec, k).dense()
    x = (np.arange(k)[:, None] + (np.arange(4000)[None, :] + 0.5) / 4000) / k
    cols = np.minimum((eval_map(spec, x) * k).astype(int), k - 1)
    emp = np.stack([np.bincount(c, minlength=k) / c.size for c in cols])
    assert np.max(np.abs(emp - P)) < 2e-3


def test_lsv_column_spike():
    P = ulam_matrix(lsv(0.5), 512)
    col = np.asarray(P.matrix.sum(axis=0)).ravel()
    assert col[0] > 1.0
    assert col[0] > col[256]


def test_annealed_operator():
    k = 128
    single = annealed_operator(MapFamily((beta_map(2.1),)), (1.0,), k)
    assert np.array_equal(single.dense(), ulam_matrix(beta_map(2.1), k).dense())
    mix = annealed_operator(BETA, (0.5, 0.5), k).dense()
    ref = 0.5 * (ulam_matrix(beta_map(2.1), k).dense() + ulam_matrix(beta_map(3.3), k).dense())
    assert np.allclose(mix, ref, atol=1e-15)


def test_product_row_stochastic_and_mass():
    ops = family_operators(BETA, 256)
    prod = ops[0].dense() @ ops[1].dense() @ ops[0].dense()
    assert np.max(np.abs(prod.sum(axis=1) - 1.0)) <= 1e-10
    v = np.random.default_rng(0).random(256)
    for op in ops:
        assert op.push(v).sum() == pytest.approx(v.sum(), rel=1e-10)


def test_doubling_stationary():
    h = stationary_density(ulam_matrix(beta_map(2.0), 4096))
    assert np.max(np.abs(h.values - 1.0)) <= 1e-8
    assert h.mass == pytest.approx(1.0, abs=1e-10)


def test_beta_stationary_bounds():
    h = stationary_density(annealed_operator(BETA, (0.5, 0.5), 4096))
    assert h.residual <= 1e-12
    assert 0.5 < h.values.min() <= 1.0 <= h.values.max() < 2.0


def test_lsv_stationary_slope():
    # cells 2..64 must sit in the x -> 0 regime; at k = 4096 they do not (slope -0.186)
    k = 65536
    h = stationary_density(ulam_matrix(lsv(0.25), k)).values
    cells = np.arange(2, 65)
    slope = np.polyfit(np.log((cells + 0.5) / k), np.log(h[cells]), 1)[0]
    assert slope == pytest.approx(-0.25, abs=0.05)


def test_stationary_nonconvergence():
    with pytest.raises(NonConvergenceError):
        stationary_density(ulam_matrix(lsv(0.9), 512), tol=1e-16, max_iter=200)


def test_duality():
    k, spec = 256, lsv(0.3)
    P = ulam_matrix(spec, k)
    rng = np.random.default_rng(5)
    s = (np.arange(k)[:, None] + (np.arange(64)[None, :] + 0.5) / 64) / k
    cell_of = lambda y: np.minimum((y * k).astype(int), k - 1)
    for _ in range(20):
        f, g = rng.random(k), rng.random(k)
        lhs = np.mean(P.push(f) * g)
        rhs = np.mean(f[:, None] * g[cell_of(eval_map(spec, s))])
        assert abs(lhs - rhs) <= 5 / k


def test_pullback_trivial():
    om = sample_omega((0.5, 0.5), 1, -10, 1)
    assert np.array_equal(pullback_density(BETA, om, 0, 64).values, np.ones(64))
    with pytest.raises(WindowTooShortError):
        pullback_density(BETA, om, 11, 64)


def test_pullback_single_map_is_power():
    fam = MapFamily((lsv(0.3),))
    om = sample_omega((1.0,), 0, -6, 1)
    P = ulam_matrix(lsv(0.3), 64).dense()
    ref = np.ones(64) @ np.linalg.matrix_power(P, 6)
    assert np.allclose(pullback_density(fam, om, 6, 64).values, ref, atol=1e-12)


def test_pullback_order():
    # P_{w_-1} ... P_{w_-n} 1: w_-n acts first
    om = OmegaPath((0.5, 0.5), 0, -2, 1, window=np.array([0, 1, 0]))
    ops = family_operators(BETA, 64)
    ref = ops[1].push(ops[0].push(np.ones(64)))
    assert np.array_equal(pullback_density(BETA, om, 2, 64, ops).values, ref)


def test_pullback_batch_matches_single():
    ops = family_operators(LSV, 128)
    syms = np.random.default_rng(1).integers(0, 2, (5, 30))
    batch = pullback_batch(ops, syms)
    for row, s in zip(batch, syms):
        om = OmegaPath((0.5, 0.5), 0, -30, 1, window=np.append(s, 0))
        assert np.array_equal(row, pullback_density(LSV, om, 30, 128, ops).values)


def test_pullback_depth():
    assert pullback_depth(BETA, 10**6) == 50
    assert pullback_depth(LSV, 100) == 10
    assert pullback_depth(LSV, 10**6) == 400


def _cauchy(fam, k, n_max, lag, seed):
    ops = family_operators(fam, k)
    om = sample_omega((0.5, 0.5), seed, -(n_max + lag + 1), 1)
    syms = om.symbols(-(n_max + lag), 0)
    dens = []
    for n in range(n_max + lag + 1):
        v = np.ones(k)
        for s in syms[len(syms) - n:] if n else ():
            v = ops[s].push(v)
        dens.append(v)
    return np.array([np.mean(np.abs(dens[n] - dens[n + lag])) for n in range(n_max + 1)])


def test_beta_pullback_geometric():
    d = _cauchy(BETA, 1024, 40, 5, 3)
    rate, r2, _ = fit_decay(np.arange(d.size), d, "exp")
    assert rate < 1.0 and r2 >= 0.98


@pytest.mark.parametrize("fam", [BETA, LSV])
def test_pullback_cauchy_non_increasing(fam):
    d = _cauchy(fam, 1024, 30, 3, 8)
    live = d[d > 1e-13]
    assert np.all(live[1:] <= 1.1 * live[:-1])


def test_cone_trivial():
    ok, rep = cone_check(np.ones(256), 0.25, 2.0)
    assert ok
    x = (np.arange(256) + 0.5) / 256
    ok, rep = cone_check(x, 0.25, 2.0)
    assert not ok and rep["non_increasing"] > 0


def test_cone_lsv_pullbacks():
    k = 2048
    ops = family_operators(LSV, k)
    om = sample_omega((0.5, 0.5), 17, -61, 1)
    for n in range(1, 61):
        f = pullback_density(LSV, om, n, k, ops)
        ok, rep = cone_check(f.values, 0.25, 2.0)
        assert ok, (n, rep)
    assert comparability_constant(f.values) < 3.0


def test_sample_from_density():
    u = np.linspace(0, 1, 10, endpoint=False)
    assert np.allclose(sample_from_density(np.ones(10), u, np.full(10, 0.5)), u + 0.05)
    h = np.array([0.0, 2.0])
    x = sample_from_density(h, np.random.default_rng(0).random(1000), np.full(1000, 0.5))
    assert np.all(x == 0.75)
    rows = np.stack([np.ones(10), np.arange(10.0)])
    uc, up = np.array([0.33, 0.33]), np.array([0.1, 0.1])
    assert np.array_equal(sample_from_density(rows, uc, up),
                          [sample_from_density(r, uc[:1], up[:1])[0] for r in rows])


def test_measure_of():
    assert measure_of(np.ones(8), [(0.1, 0.35)]) == pytest.approx(0.25)
    assert measure_of(np.arange(4.0), [(0.5, 1.0)]) == pytest.approx(1.25)


def test_decay_constants_zero():
    fit = decay_estimate(BETA, (0.5, 0.5), 256, lambda x: np.ones_like(x), lambda x: 2 * np.ones_like(x), 10)
    assert np.max(fit.correlations) < 1e-12


def test_decay_beta_geometric():
    fit = decay_estimate(BETA, (0.5, 0.5), 1024, lambda x: (x <= 0.5).astype(float), lambda x: x, 30)
    assert fit.kind == "exp" and fit.rate < 1.0


def test_decay_lsv_slope():
    fit = decay_estimate(MapFamily((lsv(0.25),)), (1.0,), 4096, lambda x: (x <= 0.5).astype(float),
                         lambda x: x, 200, floor=1e-11)
    assert fit.kind == "poly" and fit.rate <= -2.0


def test_fit_decay_recovers():
    n = np.arange(1, 30)
    assert fit_decay(n, 3 * 0.6**n, "exp")[0] == pytest.approx(0.6)
    assert fit_decay(n, 2 * n**-3.0, "poly")[0] == pytest.approx(-3.0)


def test_fiber_sum_trivial():
    om = sample_omega((0.5, 0.5), 0, -60, 200)
    assert fiber_measure_sum(BETA, om, [], 0.0, 1.0, 100, 64) == 0.0
    fam = MapFamily((beta_map(2.0),))
    om1 = sample_omega((1.0,), 0, -60, 200)
    assert fiber_measure_sum(fam, om1, [(0.2, 0.45)], 0.1, 0.7, 100, 256) == pytest.approx(60 * 0.25)


def test_fiber_sum_levy_mass():
    h = stationary_density(annealed_operator(BETA, (0.5, 0.5), 4096)).values
    x0, n = 1 / math.sqrt(2), 2000
    m = TailModel(0.75, x0, local_density_constant(h, x0))
    r = scaling_bn(n, m) ** -0.75
    om = sample_omega((0.5, 0.5), 21, -60, n + 1)
    total = fiber_measure_sum(BETA, om, [(x0 - r, x0 + r)], 0.0, 1.0, n, 4096, depth=50)
    assert total == pytest.approx(1.0, abs=0.1)


def test_density_vector():
    d = DensityVector(np.array([1.0, 3.0]))
    assert d.mass == 2.0 and d.normalized().mass == 1.0 and d.k == 2
