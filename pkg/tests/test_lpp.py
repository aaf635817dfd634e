import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lppquilt import lpp
from lppquilt.env import GridSpec, build_grid, field_from_values, sample_field, zero_field

TOY = [[0, 1, -1, 2], [0, -2, 3, 1], [0, 0.5, 0.5, -1]]


def toy_field():
    return field_from_values(GridSpec(0.0, 1.0, 4, 3), TOY)


def small_field(seed, lines=4, points=7):
    return sample_field(GridSpec(0.0, 1.0, points, lines), seed)


def reverse_energy(field, s):
    # independent re-summation, top line first
    z = s.points
    tot = 0.0
    for r in reversed(range(len(s.lines))):
        k = s.lines[r]
        tot += field.value(k, z[r + 1]) - field.value(k, z[r])
    return tot


# ---------------------------------------------------------------- staircases

def test_staircase_invariants():
    s = lpp.Staircase((1, 0), (5, 3), [2, 2, 4])
    assert list(s.points) == [1, 2, 2, 4, 5]
    assert s.segment(1) == (2, 2)
    with pytest.raises(ValueError):
        lpp.Staircase((1, 0), (5, 3), [3, 2, 4])
    with pytest.raises(ValueError):
        lpp.Staircase((1, 0), (5, 3), [0, 2, 4])
    assert lpp.Staircase.from_json(s.to_json()) == s


def test_energy_zero_field(small_grid):
    f = zero_field(small_grid)
    for jumps in lpp.enumerate_staircases((0, 0), (6, 3)):
        assert lpp.staircase_energy(f, lpp.Staircase((0, 0), (6, 3), jumps)) == 0


def test_energy_single_line():
    f = small_field(3)
    s = lpp.Staircase((1, 2), (5, 2), [])
    assert lpp.staircase_energy(f, s) == f.value(2, 5) - f.value(2, 1)


def test_energy_matches_reverse_sum():
    f = small_field(4, lines=3)
    for jumps in ([0, 6], [2, 3], [4, 4]):
        s = lpp.Staircase((0, 0), (6, 2), jumps)
        assert abs(lpp.staircase_energy(f, s) - reverse_energy(f, s)) <= 1e-12


# ---------------------------------------------------------------- profiles

def test_toy_value_frozen():
    assert lpp.last_passage_value(toy_field(), (0, 0), (3, 2)) == pytest.approx(4.5, abs=1e-12)
    assert list(lpp.geodesic(toy_field(), (0, 0), (3, 2)).jumps) == [1, 2]


def test_profile_single_line():
    f = small_field(1)
    v = lpp.last_passage_profile(f, (2, 1), 1).values
    np.testing.assert_allclose(v[2:], f.line(1)[2:] - f.value(1, 2), atol=1e-15)
    assert np.all(np.isneginf(v[:2]))


def test_profile_degenerate_endpoint():
    f = small_field(2)
    assert lpp.last_passage_profile(f, (3, 0), 3).values[3] == 0.0


def test_profile_errors():
    f = small_field(0)
    with pytest.raises(ValueError):
        lpp.last_passage_profile(f, (9, 0), 2)
    with pytest.raises(ValueError):
        lpp.last_passage_profile(f, (1, 2), 1)
    with pytest.raises(lpp.NoStaircaseError):
        lpp.geodesic(f, (4, 0), (2, 3))


@pytest.mark.parametrize("seed", range(10))
def test_profile_matches_brute_force(seed):
    f = small_field(seed)
    for x in range(7):
        prof = lpp.last_passage_profile(f, (x, 0), 3).values
        for y in range(x, 7):
            v, _ = lpp.brute_force_last_passage(f, (x, 0), (y, 3))
            assert abs(v - prof[y]) <= 1e-12


def test_low_memory_mode_agrees():
    g = build_grid(32, 1.0, 2.0)
    f = sample_field(g, 8)
    a = lpp.geodesic(f, (40, 0), (100, 32))
    b = lpp.geodesic(f, (40, 0), (100, 32), low_memory=True, checkpoint=5)
    assert a == b
    np.testing.assert_array_equal(lpp.last_passage_profile(f, (40, 0), 32).values,
                                  lpp.last_passage_profile(f, (40, 0), 32, low_memory=True).values)


# ---------------------------------------------------------------- geodesics

def test_geodesic_single_line():
    f = small_field(5)
    s = lpp.geodesic(f, (1, 2), (4, 2))
    assert len(s.jumps) == 0
    assert lpp.staircase_energy(f, s) == f.value(2, 4) - f.value(2, 1)


def test_geodesic_zero_field_is_leftmost(small_grid):
    s = lpp.geodesic(zero_field(small_grid), (2, 0), (6, 3))
    assert list(s.jumps) == [2, 2, 2]


@pytest.mark.parametrize("seed", range(8))
def test_geodesic_is_brute_force_maximizer(seed):
    f = small_field(seed)
    s = lpp.geodesic(f, (1, 0), (6, 3))
    v, winners = lpp.brute_force_last_passage(f, (1, 0), (6, 3))
    assert s in winners
    assert lpp.staircase_energy(f, s) == pytest.approx(v, abs=1e-12)


# ---------------------------------------------------------------- brute force

def test_brute_force_single_line():
    f = small_field(6)
    v, w = lpp.brute_force_last_passage(f, (0, 1), (5, 1))
    assert len(w) == 1 and v == f.value(1, 5) - f.value(1, 0)


def test_staircase_count_two_lines():
    assert len(lpp.enumerate_staircases((2, 0), (6, 1))) == 5


def test_brute_force_refusal():
    f = sample_field(GridSpec(0.0, 1.0, 60, 12), 0)
    with pytest.raises(lpp.RefusalError):
        lpp.brute_force_last_passage(f, (0, 0), (59, 11), limit=1000)


def test_unique_maximizer_almost_always():
    unique = sum(len(lpp.brute_force_last_passage(small_field(s, 3, 5), (0, 0), (4, 2))[1]) == 1
                 for s in range(1000))
    assert unique >= 990


# ---------------------------------------------------------------- disjoint polymers

def test_disjoint_singletons():
    f = small_field(1)
    assert lpp.max_disjoint_polymers_indices(f, [2], [4], 0, 3)[0] == 1
    assert lpp.max_disjoint_polymers_indices(f, [0], [6], 0, 3)[0] == 1


def test_brute_disjoint_trivial():
    f = small_field(2)
    assert lpp.brute_force_max_disjoint(f, [0, 1, 2], [4, 5, 6], 0, 3, l_max=1) == 1
    assert lpp.brute_force_max_disjoint(f, [3, 3], [3, 3], 0, 3) == 1
    with pytest.raises(lpp.RefusalError):
        lpp.brute_force_max_disjoint(f, [0], [6], 0, 3, l_max=5)


@pytest.mark.parametrize("seed", range(15))
def test_disjoint_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    lines = int(rng.integers(1, 5))
    f = small_field(seed, lines)
    S = rng.choice(7, 4, replace=False)
    E = rng.choice(7, 4, replace=False)
    if E.max() < S.min():
        return
    c, fam = lpp.max_disjoint_polymers_indices(f, S, E, 0, lines - 1)
    assert min(c, 4) == lpp.brute_force_max_disjoint(f, S, E, 0, lines - 1, 4)
    for a, b in itertools.combinations(fam.members, 2):
        assert lpp.horizontally_separate(a, b)


def test_disjoint_family_is_optimal_geodesics():
    f = small_field(11)
    c, fam = lpp.max_disjoint_polymers_indices(f, range(7), range(7), 0, 3)
    for s in fam.members:
        v, winners = lpp.brute_force_last_passage(f, s.start, s.end)
        assert s in winners


# ---------------------------------------------------------------- properties

endpoints = st.tuples(st.integers(0, 40), st.integers(0, 40)).map(sorted)


@given(st.integers(0, 10**6), endpoints, endpoints, st.floats(0, 1), st.floats(0, 1))
def test_sandwich(seed, xs, ys, u, v):
    f = sample_field(GridSpec(0.0, 0.25, 41, 9), seed)
    (x1, x2), (y1, y2) = xs, ys
    if y1 < x1 or y2 < x2:
        return
    x = x1 + int(round(u * (x2 - x1)))
    y = max(x, y1 + int(round(v * (y2 - y1))))
    if y > y2:
        return
    g1 = lpp.geodesic(f, (x1, 0), (y1, 8)).points
    g = lpp.geodesic(f, (x, 0), (y, 8)).points
    g2 = lpp.geodesic(f, (x2, 0), (y2, 8)).points
    assert np.all(g1 <= g) and np.all(g <= g2)


@given(st.integers(0, 10**6), st.integers(0, 20), st.integers(0, 20), st.integers(1, 7), st.floats(0, 1))
def test_superadditive(seed, x, w, k, u):
    f = sample_field(GridSpec(0.0, 0.5, 41, 9), seed)
    y = x + w
    z = x + int(round(u * w))
    whole = lpp.last_passage_value(f, (x, 0), (y, 8))
    parts = lpp.last_passage_value(f, (x, 0), (z, k)) + lpp.last_passage_value(f, (z, k), (y, 8))
    assert whole >= parts - 1e-12


@given(st.integers(0, 10**6), st.lists(st.integers(0, 30), min_size=7, max_size=7))
def test_dp_dominates_any_staircase(seed, raw):
    f = sample_field(GridSpec(0.0, 0.5, 31, 6), seed)
    z = sorted(raw)
    s = lpp.Staircase((z[0], 0), (z[-1], 5), z[1:-1])
    best = lpp.last_passage_value(f, (z[0], 0), (z[-1], 5))
    assert best >= lpp.staircase_energy(f, s) - 1e-12


@given(st.integers(0, 10**6))
def test_geodesic_deterministic(seed):
    f = sample_field(GridSpec(0.0, 0.5, 31, 6), seed)
    assert lpp.geodesic(f, (3, 0), (25, 5)) == lpp.geodesic(f, (3, 0), (25, 5))
