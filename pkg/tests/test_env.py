import numpy as np
import pytest
from hypothesis import given, strategies as st

from lppquilt.env import (GridSpec, OutOfBandError, build_grid, dump_field, field_from_values,
                          load_field, sample_field, zero_field)


def test_grid_unit():
    g = build_grid(1, 1, 1)
    assert g.spacing == 1 and g.num_points == 6
    assert g.positions[0] == -2 and g.positions[-1] == 3


def test_grid_n8():
    g = build_grid(8, 1, 2)
    assert g.spacing == 0.5 and g.num_points == 49
    assert g.positions[0] == -8 and g.positions[-1] == 16


def test_grid_n100_window():
    # window arithmetic recomputed by hand: 4 * 100^{2/3} = 86.177...
    g = build_grid(100, 2, 10)
    reach = 4 * 100 ** (2 / 3)
    assert g.positions[0] <= -reach < g.positions[0] + 0.1
    assert g.positions[-1] - 0.1 < 100 + reach <= g.positions[-1]
    assert g.num_points == 2725  # ceil(10 (100 + reach)) + ceil(10 reach) + 1
    assert g.num_lines == 101


@pytest.mark.parametrize("args", [(0, 1, 1), (4, 0, 1), (4, 1, 0), (4, -1, 2)])
def test_grid_rejects_nonpositive(args):
    with pytest.raises(ValueError):
        build_grid(*args)


def test_gridspec_invariants():
    with pytest.raises(ValueError):
        GridSpec(0.0, 0.0, 5, 2)
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0, 1, 2)


def test_band_covers_line():
    g = build_grid(27, 1.0, 2.0, banded=True)
    w = g.band_half_width
    assert w >= 4 * 27 ** (2 / 3) * 1.0 - 1e-9
    for k in range(g.num_lines):
        lo, hi = g.band(k)
        assert g.positions[lo] <= max(k - w, g.positions[0]) + 1e-9
        assert g.positions[hi - 1] >= min(k + w, g.positions[-1]) - 1e-9


@given(st.integers(0, 2**32), st.integers(1, 12))
def test_anchored_and_deterministic(seed, n):
    g = build_grid(n, 0.5, 2.0)
    a, b = sample_field(g, seed), sample_field(g, seed)
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[:, 0] == 0)
    assert np.all(np.isfinite(a.values))


def test_different_seeds_differ():
    g = build_grid(4, 1, 2)
    assert not np.array_equal(sample_field(g, 1).values, sample_field(g, 2).values)


def test_increment_variance_matches_spacing():
    g = build_grid(64, 4.0, 4.0)
    d = np.diff(sample_field(g, 3).values, axis=1)
    assert abs(d.var() / g.spacing - 1) < 0.03
    assert abs(d.mean()) < 0.01


def test_banded_agrees_with_full_inside_band():
    full = sample_field(build_grid(27, 1.0, 2.0), 5)
    band = sample_field(build_grid(27, 1.0, 2.0, banded=True), 5)
    for k in (0, 13, 27):
        lo, hi = band.grid.band(k)
        seg = band.line(k)[lo:hi]
        assert seg[0] == 0
        ref = full.line(k)[lo:hi]
        np.testing.assert_allclose(seg - seg[0], ref - ref[0], atol=1e-12)


def test_out_of_band_value_raises():
    f = sample_field(build_grid(27, 1.0, 2.0, banded=True), 0)
    lo, hi = f.grid.band(27)
    if lo > 0:
        with pytest.raises(OutOfBandError):
            f.value(27, 0)


def test_dump_roundtrip(tmp_path):
    for banded in (False, True):
        f = sample_field(build_grid(8, 1.0, 2.0, banded=banded), 9)
        dump_field(f, tmp_path / "f.bin")
        g = load_field(tmp_path / "f.bin")
        assert g == f
        assert (tmp_path / "f.bin").read_bytes() == (dump_field(g, tmp_path / "g.bin") or
                                                      (tmp_path / "g.bin").read_bytes())


def test_zero_and_explicit_fields(small_grid):
    z = zero_field(small_grid)
    assert np.all(z.dense() == 0)
    v = np.arange(28.0).reshape(4, 7)
    f = field_from_values(small_grid, v)
    assert f.value(2, 3) == 17.0
    with pytest.raises(ValueError):
        field_from_values(small_grid, np.zeros((3, 7)))
