import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lppquilt import profiles as pr
from lppquilt.env import build_grid, sample_field, zero_field
from lppquilt.scaled import ScaledPoint as P, n13, n23, weight


def test_validate_examples():
    ok, _ = pr.validate_initial_condition(pr.flat())
    assert ok
    assert pr.validate_initial_condition(pr.narrow_wedge(0.0))[0]
    x = np.linspace(-4, 4, 81)
    f = pr.InitialCondition(x, 2 * np.abs(x), np.ones(81, bool))
    ok, rep = pr.validate_initial_condition(f)
    assert not ok
    assert all(abs(v[0]) >= 1 for v in rep["growth_violations"])
    with pytest.raises(ValueError):
        pr.validate_initial_condition(pr.InitialCondition([], [], []))


def test_minus_infinity_sentinel():
    f = pr.InitialCondition.from_samples([(-1, pr.MINUS_INFINITY), (0, 0.0), (1, pr.MINUS_INFINITY)])
    assert f.sample(0) is pr.MINUS_INFINITY
    assert f.support == (0.0, 0.0)
    assert pr.MINUS_INFINITY is pr._MinusInfinity()


def test_initial_condition_csv_roundtrip(tmp_path):
    f = pr.InitialCondition.from_samples([(-0.5, pr.MINUS_INFINITY), (0.0, 0.25), (0.5, 1.5)])
    f.to_csv(tmp_path / "f.csv")
    g = pr.load_initial_condition(tmp_path / "f.csv")
    assert g.samples() == f.samples()


def test_nonuniform_samples_rejected():
    with pytest.raises(ValueError):
        pr.InitialCondition([0.0, 0.1, 0.3], [0, 0, 0], [True] * 3)


def test_narrow_wedge_zero_field():
    n = 8
    f = zero_field(build_grid(n, 2.0, 1.0))
    y = np.linspace(-1, 1, 9)
    got = pr.narrow_wedge_profile(f, n, -0.25, y).values
    want = (-2 * n - 2 * n23(n) * (y + 0.25)) / (math.sqrt(2) * n13(n))
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_narrow_wedge_pointwise(seed):
    n = 27
    f = sample_field(build_grid(n, 2.0, 2.0), seed)
    rng = np.random.default_rng(seed)
    y = np.sort(rng.uniform(-1, 1, 20))
    y = np.unique(y)
    prof = pr.narrow_wedge_profile(f, n, -0.2, y)
    for yv, v in zip(y, prof.values):
        assert v == pytest.approx(weight(f, n, P(-0.2, 0.0), P(yv, 1.0)), abs=1e-9)
    single = pr.narrow_wedge_profile(f, n, -0.2, [y[0]]).values[0]
    assert single == pytest.approx(prof.values[0], abs=1e-12)


def test_f_rewarded_narrow_wedge_is_narrow_wedge():
    n = 27
    f = sample_field(build_grid(n, 2.0, 2.0), 1)
    y = pr.default_y_grid(41)
    a = pr.f_rewarded_profile(f, n, pr.narrow_wedge(0.0), y).values
    b = pr.narrow_wedge_profile(f, n, 0.0, y).values
    np.testing.assert_allclose(a, b, atol=1e-9)
    x0 = 0.3
    one = pr.InitialCondition.from_samples([(x0 - 0.1, pr.MINUS_INFINITY), (x0, 0.0),
                                            (x0 + 0.1, pr.MINUS_INFINITY)])
    np.testing.assert_allclose(pr.f_rewarded_profile(f, n, one, y).values,
                               pr.narrow_wedge_profile(f, n, x0, y).values, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_f_rewarded_five_points(seed):
    n = 27
    f = sample_field(build_grid(n, 2.0, 2.0), seed)
    y = pr.default_y_grid(41)
    xs = np.linspace(-0.8, 0.8, 9)
    rewards = np.random.default_rng(seed).normal(size=9)
    fin = np.arange(9) % 2 == 0
    ic = pr.InitialCondition(xs, rewards, fin)
    got = pr.f_rewarded_profile(f, n, ic, y).values
    want = np.max([pr.narrow_wedge_profile(f, n, xs[i], y).values + rewards[i]
                   for i in np.flatnonzero(fin)], axis=0)
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_f_rewarded_dominates():
    n = 27
    f = sample_field(build_grid(n, 2.0, 2.0), 2)
    y = pr.default_y_grid(41)
    ic = pr.random_brownian(1.0, 3, L=1.0, num=21)
    prof = pr.f_rewarded_profile(f, n, ic, y).values
    for x, v in zip(ic.x, ic.values):
        assert np.all(prof >= pr.narrow_wedge_profile(f, n, x, y).values + v - 1e-9)


def test_no_admissible_start():
    f = sample_field(build_grid(8, 1.0, 1.0), 0)
    ic = pr.InitialCondition.from_samples([(5.0, 0.0), (5.1, 0.0)])
    with pytest.raises(pr.NoAdmissibleStartError):
        pr.f_rewarded_profile(f, 8, ic)


def test_untrusted_flag_near_edge():
    f = sample_field(build_grid(8, 1.0, 2.0), 0)
    ic = pr.slope(20.0, L=4.0)  # support beyond the window; roots pile up at the right edge
    assert pr.f_rewarded_profile(f, 8, ic, pr.default_y_grid(11)).untrusted


def test_profile_csv(tmp_path):
    f = sample_field(build_grid(8, 1.0, 2.0), 0)
    p = pr.narrow_wedge_profile(f, 8, 0.0, pr.default_y_grid(5))
    p.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "y,value,kind,n,seed" and len(lines) == 6


def test_continuity_proxy():
    n = 8
    g = build_grid(n, 1.5, 25.0)
    jumps = []
    for num in (51, 101, 201):
        y = pr.default_y_grid(num)
        jumps.append(np.mean([np.max(np.abs(np.diff(pr.narrow_wedge_profile(sample_field(g, s), n, 0.0, y).values)))
                              for s in range(10)]))
    assert jumps[0] > jumps[1] > jumps[2]


# ---------------------------------------------------------------- bridge projection

def test_bridge_affine_and_bridge():
    y = np.linspace(0, 1, 11)
    np.testing.assert_allclose(pr.bridge_project(3 * y + 1, y), 0, atol=1e-12)
    b = np.sin(np.pi * y)
    b[0] = b[-1] = 0
    np.testing.assert_array_equal(pr.bridge_project(b, y), b)
    with pytest.raises(ValueError):
        pr.bridge_project([1.0], [0.0])
    with pytest.raises(ValueError):
        pr.bridge_project([1.0, 2.0], [1.0, 1.0])


arrays = st.lists(st.floats(-100, 100), min_size=2, max_size=30)


@given(arrays, arrays, st.floats(-5, 5))
def test_bridge_properties(u, v, c):
    m = min(len(u), len(v))
    u, v = np.array(u[:m]), np.array(v[:m])
    y = np.linspace(-1, 1, m)
    pu = pr.bridge_project(u, y)
    assert abs(pu[0]) <= 1e-12 and abs(pu[-1]) <= 1e-12
    np.testing.assert_allclose(pr.bridge_project(pu, y), pu, atol=1e-12)
    np.testing.assert_allclose(pr.bridge_project(u + c * v, y), pu + c * pr.bridge_project(v, y), atol=1e-9)
