import itertools

import numpy as np
import pytest

from slaglab.planes import NotTransverseError, plane_from_angles
from slaglab.snf import integer_inverse, saturate_rows, smith_normal_form, snf_diagonal
from slaglab.torus import (
    CYTorusStructure,
    RankDeficientError,
    deformation_chi,
    find_angle_criterion_pairs,
    im_omega_form,
    intersection_count,
    intersection_points,
    make_flat_slag,
    morgan_check,
    pair_check,
    pairing,
    re_omega_form,
)

X_ROWS = [[1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0]]
ARCTAN_ROWS = [[1, 0, 0, 1, 0, 0], [0, 1, 0, 0, 2, 0], [0, 0, 1, 0, 0, 3]]


@pytest.fixture
def T3():
    return CYTorusStructure.standard(3)


# --- Smith normal form -----------------------------------------------------


def _check_snf(a):
    d, u, v = smith_normal_form(a)
    a = np.asarray(a, dtype=object)
    assert (np.asarray(u, dtype=object).dot(a).dot(np.asarray(v, dtype=object)) == np.asarray(d, dtype=object)).all()
    assert abs(round(np.linalg.det(np.asarray(u, float)))) == 1
    assert abs(round(np.linalg.det(np.asarray(v, float)))) == 1
    diag = snf_diagonal(a)
    assert all(x >= 0 for x in diag)
    nz = [x for x in diag if x]
    assert all(b % a_ == 0 for a_, b in zip(nz, nz[1:]))
    off = np.asarray(d, dtype=np.int64).copy()
    np.fill_diagonal(off, 0)
    assert not off.any()
    return diag


def test_snf_known_matrix():
    assert _check_snf([[2, 4, 4], [-6, 6, 12], [10, -4, -16]]) == [2, 6, 12]


def test_snf_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(40):
        m, n = rng.integers(1, 6, size=2)
        a = rng.integers(-9, 10, size=(m, n))
        diag = _check_snf(a)
        if m == n:
            assert np.prod(diag) == abs(round(np.linalg.det(a)))


def test_integer_inverse():
    rng = np.random.default_rng(1)
    for _ in range(10):
        _, u, _ = smith_normal_form(rng.integers(-5, 6, size=(4, 4)))
        ui = integer_inverse(u)
        assert (np.asarray(ui, dtype=np.int64) @ np.asarray(u, dtype=np.int64) == np.eye(4, dtype=np.int64)).all()


def test_saturate_rows():
    sat = saturate_rows([[2, 0, 0], [0, 3, 3]])
    assert abs(round(np.linalg.det(np.asarray(sat, float)[:, [0, 1]]))) == 1


# --- flat tori -------------------------------------------------------------


def test_x_torus(T3):
    M = make_flat_slag(T3, X_ROWS)
    assert M.volume == pytest.approx(1.0)
    assert not M.flipped


def test_arctan_torus_flipped(T3):
    M = make_flat_slag(T3, ARCTAN_ROWS)
    assert M.flipped
    assert M.plane.equals(-plane_from_angles(np.arctan([1.0, 2.0, 3.0])))


def test_rank_deficient(T3):
    with pytest.raises(RankDeficientError):
        make_flat_slag(T3, [X_ROWS[0], X_ROWS[0], X_ROWS[1]])


def test_json_round_trip(T3):
    M = make_flat_slag(T3, ARCTAN_ROWS, basepoint=np.full(6, 0.25))
    from slaglab.torus import FlatSLagTorus

    back = FlatSLagTorus.from_json(M.to_json())
    assert back.plane.equals(M.plane) and np.allclose(back.basepoint, M.basepoint)


# --- intersections ---------------------------------------------------------


def _coset_points(rows1, rows2):
    """Intersection points through the origin, enumerated by brute force.

    A point is s A1 mod 1 with (s, -t) B = m for integer m; scaling by
    |det B| keeps all arithmetic in the integers.
    """
    a1 = np.asarray(rows1, dtype=np.int64)
    b = np.vstack([rows1, rows2]).astype(np.int64)
    det = int(round(np.linalg.det(b)))
    adj = np.rint(np.linalg.inv(b) * det).astype(np.int64)
    n = a1.shape[0]
    found = set()
    mod = abs(det)
    for m in itertools.product(range(mod), repeat=b.shape[0]):
        s = (np.asarray(m) @ adj)[:n]
        found.add(tuple(((s @ a1) % mod).tolist()))
    return mod, found


def test_arctan_pair_six_points(T3):
    M1, M2 = make_flat_slag(T3, X_ROWS), make_flat_slag(T3, ARCTAN_ROWS)
    det, oracle = _coset_points(X_ROWS, ARCTAN_ROWS)
    pts = intersection_points(M1, M2)
    assert len(pts) == len(oracle) == intersection_count(M1, M2) == 6
    got = {tuple(np.rint(p.coords * det).astype(int) % det) for p in pts}
    assert got == oracle


def test_general_pair_matches_oracle():
    T = CYTorusStructure.standard(2)
    r1 = [[1, 0, 0, 0], [0, 1, 0, 0]]
    # graph of a trace-free symmetric S, special Lagrangian with |det S| = 5 points
    r2 = [[1, 0, 1, 2], [0, 1, 2, -1]]
    M1, M2 = make_flat_slag(T, r1), make_flat_slag(T, r2)
    det, oracle = _coset_points(r1, r2)
    pts = intersection_points(M1, M2)
    assert len(pts) == len(oracle) == 5
    assert {tuple(np.rint(p.coords * det).astype(int) % det) for p in pts} == oracle


def test_self_intersection_not_transverse(T3):
    M = make_flat_slag(T3, X_ROWS)
    with pytest.raises(NotTransverseError):
        intersection_points(M, M)
    assert not pair_check(M, M).transverse


def test_translated_copy_disjoint(T3):
    M = make_flat_slag(T3, X_ROWS)
    N = M.translated([0, 0, 0, 0.5, 0.5, 0.5])
    assert intersection_points(M, N) == []
    rep = pair_check(M, N)
    assert rep.transverse and rep.count == 0 and not rep.qualified


def test_pair_report(T3):
    rep = pair_check(make_flat_slag(T3, X_ROWS), make_flat_slag(T3, ARCTAN_ROWS))
    assert rep.transverse and rep.count == 6
    assert rep.angle_criterion_at_each == [True] * 6
    assert rep.sign_case == "positive"


def test_n4_pair_fails_criterion():
    T = CYTorusStructure.standard(4)
    x = np.hstack([np.eye(4), np.zeros((4, 4))]).astype(int)
    # graph of S = diag(-1, -1, 1, 1): the plane P(-pi/4, -pi/4, pi/4, pi/4)
    g = np.hstack([np.eye(4), np.diag([-1, -1, 1, 1])]).astype(int)
    rep = pair_check(make_flat_slag(T, x), make_flat_slag(T, g))
    assert rep.transverse and rep.count == 1
    assert rep.angle_criterion_at_each == [False]


# --- search ----------------------------------------------------------------


def test_search_bound_zero(T3):
    assert find_angle_criterion_pairs(T3, 0) == []


def test_search_finds_qualified_pairs(T3):
    pairs = find_angle_criterion_pairs(T3, 1, seed=0)
    assert pairs
    assert all(rep.qualified for *_, rep in pairs)
    again = find_angle_criterion_pairs(T3, 1, seed=0)
    assert [(a.sublattice.tolist(), b.sublattice.tolist()) for a, b, _ in pairs] == \
        [(a.sublattice.tolist(), b.sublattice.tolist()) for a, b, _ in again]


# --- deformation forms ------------------------------------------------------


def test_chi_n1_is_dx():
    chi = deformation_chi(1)
    assert chi(plane_from_angles([0.0])) == pytest.approx(1.0)
    assert chi(plane_from_angles([np.pi / 2])) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_chi_on_x_plane(n):
    assert deformation_chi(n)(plane_from_angles(np.zeros(n))) == pytest.approx(n)


def test_chi_below_n_on_other_slag_planes():
    rng = np.random.default_rng(2)
    for _ in range(200):
        phi = rng.uniform(-np.pi, np.pi, 3)
        phi[-1] = -phi[:-1].sum()
        p = plane_from_angles(phi)
        assert re_omega_form(3)(p) == pytest.approx(1.0)
        assert abs(im_omega_form(3)(p)) < 1e-12
        if np.abs(np.angle(np.exp(1j * phi))).max() > 1e-3:
            assert deformation_chi(3)(p) < 3


def test_pairing_values(T3):
    X, A = make_flat_slag(T3, X_ROWS), make_flat_slag(T3, ARCTAN_ROWS)
    chi = deformation_chi(3)
    assert pairing(X, X, chi) == 0.0
    # on the flipped plane -P(phi) with sum(phi) = pi, Im chi = sum cos(2 phi_j)
    phi = np.arctan([1.0, 2.0, 3.0])
    assert pairing(X, A, chi) == pytest.approx(3 - np.cos(2 * phi).sum(), abs=1e-12)
    assert pairing(X, A, chi) > 0


def test_morgan_check():
    assert morgan_check(2, 24)
    assert morgan_check(3, 30)
    assert morgan_check(3, 1)
