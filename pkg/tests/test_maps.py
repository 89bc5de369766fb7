import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdslimit.driving import OmegaPath, WindowTooShortError, sample_omega, shift
from rdslimit.maps import (MapFamily, beta_map, branch_image, branch_inverse, branch_partition,
                           cocycle_orbit, compose_word, eval_derivative, eval_map, lsv, parse_map)


def test_lsv_values():
    assert eval_map(lsv(0.5), 0.5) == 1.0
    for g in (0.1, 0.25, 0.9):
        assert eval_map(lsv(g), 0.0) == 0.0
    # 0.25 * (1 + sqrt(2) * 0.5)
    assert eval_map(lsv(0.5), 0.25) == pytest.approx(0.42677669529663687, abs=1e-15)
    assert eval_map(lsv(0.5), 0.75) == 0.5


def test_beta_values():
    assert eval_map(beta_map(3.0), 0.5) == 0.5
    assert eval_map(beta_map(2.5), 0.5) == 0.25
    assert eval_map(beta_map(2.5), 1.0) == 0.5
    assert eval_map(beta_map(2.0), 1.0) == 0.0


def test_derivatives():
    assert eval_derivative(lsv(0.75), 0.0) == 1.0
    for g in (0.2, 0.5):
        assert eval_derivative(lsv(g), 0.75) == 2.0
    x = np.linspace(0.01, 0.99, 17)
    assert np.all(eval_derivative(beta_map(2.5), x) == 2.5)
    # left LSV branch: 1 + 2^g (1+g) x^g
    assert eval_derivative(lsv(0.5), 0.25) == pytest.approx(1 + math.sqrt(2) * 1.5 * 0.5)


def test_branch_points():
    assert lsv(0.5).branch_points == (0.0, 0.5, 1.0)
    assert beta_map(2.0).branch_points == (0.0, 0.5, 1.0)
    assert np.allclose(beta_map(2.5).branch_points, (0.0, 0.4, 0.8, 1.0))
    assert beta_map(3.3).branch_count == 4
    assert branch_partition(lsv(0.5)) == [(0.0, 0.5), (0.5, 1.0)]


def test_branch_partition_covers():
    for spec in (lsv(0.3), beta_map(2.1), beta_map(3.3), beta_map(4.0)):
        parts = branch_partition(spec)
        assert parts[0][0] == 0.0 and parts[-1][1] == 1.0
        assert all(a[1] == b[0] for a, b in zip(parts, parts[1:]))


def test_branch_inverse_roundtrip():
    for spec in (lsv(0.2), lsv(0.9), beta_map(2.1), beta_map(3.3)):
        for b in range(spec.branch_count):
            lo, hi = branch_image(spec, b)
            y = np.linspace(lo, hi, 33)[1:-1]
            x = branch_inverse(spec, b, y)
            assert np.allclose(eval_map(spec, x), y, atol=1e-13)


def test_parse_map():
    assert parse_map("beta:2.1") == beta_map(2.1)
    assert parse_map("lsv:0.25") == lsv(0.25)
    with pytest.raises(ValueError):
        parse_map("tent:2")
    with pytest.raises(ValueError):
        lsv(1.2)
    with pytest.raises(ValueError):
        beta_map(0.9)


def test_maps_stay_in_unit_interval():
    x = np.random.default_rng(1).random(10_000)
    for spec in (lsv(0.2), lsv(0.99), beta_map(2.1), beta_map(3.3), beta_map(2.0)):
        y = eval_map(spec, x)
        assert np.all((y >= 0.0) & (y <= 1.0))


def test_derivative_expansion():
    x = np.random.default_rng(2).random(1000) * 0.999 + 0.0005
    for g in (0.2, 0.6):
        assert np.all(eval_derivative(lsv(g), x) > 1.0)
    assert np.all(eval_derivative(beta_map(2.1), x) > 1.0)


def test_cocycle_orbit_trivial():
    fam = MapFamily((beta_map(2.0),))
    om = sample_omega((1.0,), 0, -1, 3)
    assert cocycle_orbit(fam, om, 0.3, 0).tolist() == [0.3]
    assert np.allclose(cocycle_orbit(fam, om, 1 / 3, 2), [1 / 3, 2 / 3, 1 / 3])


def test_cocycle_orbit_direct_composition():
    fam = MapFamily((beta_map(2.1), lsv(0.3)))
    om = OmegaPath((0.5, 0.5), 0, -1, 2, window=np.array([0, 0, 1]))
    x = 0.37
    orbit = cocycle_orbit(fam, om, x, 2)
    assert orbit[2] == eval_map(lsv(0.3), eval_map(beta_map(2.1), x))
    assert compose_word(fam, (0, 1), x) == orbit[2]


def test_cocycle_window_too_short():
    fam = MapFamily((beta_map(2.0), beta_map(3.0)))
    om = sample_omega((0.5, 0.5), 4, -1, 5)
    with pytest.raises(WindowTooShortError):
        cocycle_orbit(fam, om, 0.1, 10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 20), st.integers(0, 20), st.integers(0, 2**32))
def test_cocycle_composition_exact(x, n, m, seed):
    fam = MapFamily((beta_map(2.1), beta_map(3.3)))
    om = sample_omega((0.5, 0.5), seed, -1, n + m + 1)
    full = cocycle_orbit(fam, om, x, n + m)[n + m]
    mid = cocycle_orbit(fam, om, x, n)[n]
    shifted = shift(om, n)
    assert cocycle_orbit(fam, shifted, mid, m)[m] == full


def test_family_apply_matches_specs():
    fam = MapFamily((lsv(0.2), beta_map(2.5)))
    x = np.linspace(0, 1, 11)
    sym = np.array([0, 1] * 5 + [0])
    out = fam.apply(sym, x)
    assert np.array_equal(out[sym == 0], eval_map(lsv(0.2), x[sym == 0]))
    assert np.array_equal(out[sym == 1], eval_map(beta_map(2.5), x[sym == 1]))
    assert np.array_equal(fam.apply(1, x), eval_map(beta_map(2.5), x))


def test_discontinuity_probe():
    fam = MapFamily((beta_map(2.0), beta_map(3.0)))
    probe = fam.discontinuity_set_probe(max_len=2)
    # branch points 0, 1/3, 1/2, 2/3, 1 and their preimages under both maps
    for v in (0.0, 1 / 3, 0.5, 2 / 3, 1.0, 0.25, 1 / 6, 1 / 9, 0.75):
        assert np.min(np.abs(probe - v)) < 1e-15
    assert fam.distance_to_discontinuities(1 / math.sqrt(2), 4) > 1e-4
