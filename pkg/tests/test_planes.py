import numpy as np
import pytest

from slaglab.planes import (
    NotSpecialLagrangianError,
    NotTransverseError,
    OrientedPlane,
    StandardCY,
    angle_criterion,
    canonical_frame,
    canonical_slag_angles,
    characterizing_angles,
    is_lagrangian,
    is_special_lagrangian,
    lawlor_nance_minimizing,
    plane_from_angles,
    plane_from_unitary,
    random_slag_plane,
    random_special_unitary,
    reconstruct_from_characterizing,
    slag_phase,
    unitary_to_real,
    x_plane,
)

ARCTANS = np.arctan([1.0, 2.0, 3.0])


def test_zero_angles_give_x_plane():
    p = plane_from_angles([0, 0, 0])
    assert np.allclose(p.basis, np.vstack([np.eye(3), np.zeros((3, 3))]))


def test_two_pi_shifts_keep_orientation():
    assert plane_from_angles([np.pi, np.pi]).equals(x_plane(2))


def test_single_pi_shift_reverses_orientation():
    p = plane_from_angles([np.pi, 0.0])
    assert p.same_span(x_plane(2)) and not p.equals(x_plane(2))


def test_lagrangian_examples():
    assert is_lagrangian(x_plane(3))
    e = np.eye(6)
    assert not is_lagrangian(OrientedPlane(e[:, [0, 3, 1]]))
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert is_lagrangian(plane_from_angles(rng.uniform(-np.pi, np.pi, 4)))


def test_phase_is_angle_sum():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        phi = rng.uniform(-np.pi, np.pi, 3)
        expect = np.angle(np.exp(1j * phi.sum()))
        got = slag_phase(plane_from_angles(phi))
        assert abs(np.angle(np.exp(1j * (got - expect)))) < 1e-12


def test_arctan_plane_is_slag_after_flip():
    assert abs(ARCTANS.sum() - np.pi) < 1e-15
    assert abs(slag_phase(-plane_from_angles(ARCTANS))) < 1e-12


def test_normalization_identity():
    for n in (2, 3, 4):
        lhs, rhs = StandardCY(n).normalization_sides()
        assert abs(lhs - rhs) < 1e-12 * abs(rhs)


def test_characterizing_identity_and_orthogonal():
    ang, _ = characterizing_angles(x_plane(3), x_plane(3))
    assert np.allclose(ang.angles, 0)
    y = OrientedPlane(np.vstack([np.zeros((2, 2)), np.eye(2)]))
    ang, _ = characterizing_angles(x_plane(2), y)
    assert np.allclose(ang.sorted, [np.pi / 2, np.pi / 2])


def test_characterizing_reconstruction():
    phi = [0.3, 0.5, 0.9]
    xi = plane_from_angles(phi)
    ang, basis = characterizing_angles(x_plane(3), xi)
    assert np.allclose(ang.sorted, phi, atol=1e-12)
    assert np.allclose(basis.T @ basis, np.eye(6), atol=1e-12)
    e, f = reconstruct_from_characterizing(ang, basis)
    assert OrientedPlane(e).equals(x_plane(3))
    assert OrientedPlane(f).equals(xi)


def test_canonical_symmetric_case():
    ang = canonical_slag_angles(x_plane(3), -plane_from_angles([np.pi / 3] * 3))
    assert np.allclose(ang.sorted, [np.pi / 3] * 3, atol=1e-10)
    assert ang.sign_case == "positive"


def test_canonical_arctan_case():
    ang = canonical_slag_angles(x_plane(3), -plane_from_angles(ARCTANS))
    assert np.allclose(ang.sorted, ARCTANS, atol=1e-10)
    assert ang.sign_case == "positive"


def test_canonical_negative_case():
    ang = canonical_slag_angles(x_plane(3), -plane_from_angles(-ARCTANS))
    assert ang.sign_case == "negative"


def test_identical_planes_not_transverse():
    with pytest.raises(NotTransverseError):
        canonical_slag_angles(x_plane(3), x_plane(3))
    with pytest.raises(NotTransverseError):
        lawlor_nance_minimizing(x_plane(3), -(-x_plane(3)))


def test_non_slag_input_rejected():
    with pytest.raises(NotSpecialLagrangianError):
        angle_criterion(x_plane(2), plane_from_angles([0.2, 0.3]))


def test_canonical_frame_realises_angles():
    rng = np.random.default_rng(3)
    for _ in range(50):
        eta, xi = random_slag_plane(3, rng), random_slag_plane(3, rng)
        ang, u = canonical_frame(eta, xi)
        assert np.allclose(u.conj().T @ u, np.eye(3), atol=1e-10)
        assert plane_from_unitary(u).equals(eta)
        assert plane_from_angles(ang.signed).transformed(unitary_to_real(u)).equals(-xi)


def test_canonical_angles_su_invariant():
    rng = np.random.default_rng(4)
    eta, xi = random_slag_plane(3, rng), random_slag_plane(3, rng)
    g = unitary_to_real(random_special_unitary(3, rng))
    a = canonical_slag_angles(eta, xi).sorted
    b = canonical_slag_angles(eta.transformed(g), xi.transformed(g)).sorted
    assert np.allclose(a, b, atol=1e-9)


def test_random_n3_pairs_satisfy_criterion():
    rng = np.random.default_rng(5)
    for _ in range(200):
        eta, xi = random_slag_plane(3, rng), random_slag_plane(3, rng)
        assert angle_criterion(eta, xi)
        assert abs(np.abs(canonical_slag_angles(eta, xi).sorted).sum() - np.pi) < 1e-8


def test_n4_quarter_pi_pair_meets_criterion():
    assert angle_criterion(x_plane(4), -plane_from_angles([np.pi / 4] * 4))


def test_n4_pair_violating_criterion():
    xi = plane_from_angles([-np.pi / 4, -np.pi / 4, np.pi / 4, np.pi / 4])
    assert is_special_lagrangian(xi)
    assert not angle_criterion(x_plane(4), xi)
    ang = canonical_slag_angles(x_plane(4), xi)
    assert abs(np.abs(ang.sorted).sum() - 3 * np.pi / 2) < 1e-9
    # characterizing angles of (eta, -xi) exceed pi, so the pair is still minimizing
    assert lawlor_nance_minimizing(x_plane(4), xi)


def test_json_round_trip():
    p = plane_from_angles([0.1, -0.4, 0.7])
    assert OrientedPlane.from_json(p.to_json()).equals(p)
