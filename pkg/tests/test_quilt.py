import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lppquilt import forest as fst, profiles as pr, quilt as ql
from lppquilt.env import build_grid, sample_field

Y = pr.default_y_grid(21)


def test_no_stitches_is_first_fabric():
    f1 = np.sin(Y)
    q = ql.sew_quilt([f1, np.cos(Y)], [], Y)
    np.testing.assert_array_equal(q.sewn(), f1)


def test_constant_fabrics():
    q = ql.sew_quilt([np.zeros(21), np.full(21, 5.0)], [Y[10]], Y)
    np.testing.assert_array_equal(q.sewn(), 0.0)
    assert list(q.shifts) == [0.0, -5.0]


def test_sew_errors():
    with pytest.raises(ValueError):
        ql.sew_quilt([np.zeros(21), np.zeros(21)], [0.013], Y)
    with pytest.raises(ValueError):
        ql.sew_quilt([np.zeros(21)], [Y[5]], Y)
    with pytest.raises(ValueError):
        ql.sew_quilt([np.zeros(21)] * 3, [Y[8], Y[4]], Y)


@given(st.integers(0, 10**6), st.lists(st.integers(1, 20), min_size=1, max_size=6, unique=True))
def test_sew_properties(seed, cuts):
    rng = np.random.default_rng(seed)
    cuts = sorted(cuts)
    fabrics = [rng.normal(size=21).cumsum() for _ in range(len(cuts) + 2)]  # one extra, ignored
    q = ql.sew_quilt(fabrics, [Y[c] for c in cuts], Y)
    sewn = q.sewn()
    for i, (a, b) in enumerate(q.patches()):
        d = sewn[a:b] - fabrics[i][a:b]
        assert np.ptp(d) <= 1e-12
    # at every stitch the left fabric, shifted, agrees with the quilt
    for i, c in enumerate(cuts):
        assert abs(fabrics[i][c] + q.shifts[i] - sewn[c]) <= 1e-12
    assert q.shifts[0] == 0


def test_verify_self_and_perturbed():
    rng = np.random.default_rng(1)
    fabrics = [rng.normal(size=21) for _ in range(3)]
    q = ql.sew_quilt(fabrics, [Y[7], Y[14]], Y)
    rep = ql.verify_reconstruction(q.sewn(), q, tol=1e-12)
    assert rep.passed and np.all(rep.deviations == 0) and np.all(rep.deviations >= 0)
    bumped = [fabrics[0], fabrics[1].copy(), fabrics[2]]
    bumped[1][10] += 1.0
    rep = ql.verify_reconstruction(q.sewn(), ql.sew_quilt(bumped, [Y[7], Y[14]], Y), tol=1e-12)
    assert rep.deviations[1] >= 1.0 - 1e-12
    assert not rep.passed
    with pytest.raises(ValueError):
        ql.verify_reconstruction(np.zeros(5), q)


def test_narrow_wedge_single_patch():
    n = 32
    f = sample_field(build_grid(n, 4.0, 4.0), 3)
    q, rep, _ = ql.decompose_profile(f, n, pr.narrow_wedge(0.0))
    assert not rep.error_flag and q.num_patches == 1
    assert rep.deviations[0] <= 1e-9 and rep.passed


def test_error_flag_contract():
    n = 32
    f = sample_field(build_grid(n, 4.0, 4.0), 3)
    q, rep, dec = ql.decompose_profile(f, n, pr.flat(4.0), j_max=0)
    assert q is None and rep.error_flag and rep.passed is None
    json.loads(rep.to_json())


@pytest.mark.parametrize("seed", range(6))
def test_accepted_trials_reconstruct(seed):
    n = 64
    f = sample_field(build_grid(n, 4.0, 4.0), seed)
    fo = fst.Forest(f, n, pr.flat(4.0))
    q, rep, dec = ql.decompose_profile(f, n, pr.flat(4.0), forest=fo)
    if rep.error_flag:
        return
    assert rep.passed
    assert np.all(rep.fidelity <= rep.tol)
    # up to the first stitch between distinct fabrics the sewn quilt is the profile minus one constant
    pieces = dec.split_pieces
    first_change = next((i for i in range(1, len(pieces)) if pieces[i].mesh_index != pieces[i - 1].mesh_index),
                        len(pieces))
    a, b = 0, q.patches()[first_change - 1][1]
    assert np.ptp(fo.profile_values[a:b] - q.sewn()[a:b]) <= rep.tol
    assert rep.stitch_count == len(pieces) - 1


def test_report_csv(tmp_path):
    n = 32
    f = sample_field(build_grid(n, 4.0, 4.0), 3)
    _, rep, _ = ql.decompose_profile(f, n, pr.narrow_wedge(0.0))
    rep.to_csv(tmp_path / "r.csv")
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == "patch,left,right,rni,deviation,fidelity"
