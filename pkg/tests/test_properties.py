import numpy as np
import pytest

hyp = pytest.importorskip("hypothesis")
from hypothesis import given, settings  # noqa: E402
from hypothesis import strategies as st  # noqa: E402

from slaglab.lawlor import angles_from_lambda  # noqa: E402
from slaglab.planes import (  # noqa: E402
    angle_criterion,
    canonical_slag_angles,
    lawlor_nance_minimizing,
    plane_from_angles,
    random_slag_plane,
    slag_phase,
)
from slaglab.snf import smith_normal_form  # noqa: E402

angle = st.floats(-np.pi, np.pi, allow_nan=False)
lam_entry = st.floats(0.05, 20.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(angle, min_size=1, max_size=6))
def test_phase_of_angle_plane(phi):
    got = slag_phase(plane_from_angles(phi))
    assert abs(np.angle(np.exp(1j * (got - np.sum(phi))))) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.lists(lam_entry, min_size=2, max_size=5), st.floats(0.1, 10.0))
def test_lawlor_angles_sum_and_scale(lam, c):
    th = angles_from_lambda(lam)
    assert np.all((th > 0) & (th < np.pi))
    assert abs(th.sum() - np.pi) < 1e-9
    assert np.allclose(angles_from_lambda(np.asarray(lam) * c), th, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_canonical_angles_structure(n, seed):
    rng = np.random.default_rng(seed)
    eta, xi = random_slag_plane(n, rng), random_slag_plane(n, rng)
    phi = np.asarray(canonical_slag_angles(eta, xi).signed)
    big = np.abs(phi) > np.pi / 2 + 1e-9
    assert big.sum() <= 1
    if big.any():
        assert np.abs(phi[big]) <= np.pi - np.abs(phi[~big]).max() + 1e-9
    assert lawlor_nance_minimizing(eta, xi)
    if n <= 3:
        assert angle_criterion(eta, xi)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_snf_invariants(m, n, seed):
    a = np.random.default_rng(seed).integers(-20, 21, size=(m, n))
    d, u, v = smith_normal_form(a)
    obj = lambda x: np.asarray(x, dtype=object)  # noqa: E731
    assert (obj(u).dot(obj(a)).dot(obj(v)) == obj(d)).all()
    diag = [int(d[i, i]) for i in range(min(m, n))]
    nz = [x for x in diag if x]
    assert all(x > 0 for x in nz)
    assert all(b % a_ == 0 for a_, b in zip(nz, nz[1:]))
    assert diag[len(nz):] == [0] * (len(diag) - len(nz))
