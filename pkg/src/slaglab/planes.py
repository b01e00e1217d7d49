"""Linear algebra of Lagrangian and special Lagrangian planes in C^n = R^{2n}.

Coordinates on R^{2n} are ordered ``(x1, ..., xn, y1, ..., yn)`` and a real
vector ``v`` corresponds to the complex vector ``v[:n] + 1j * v[n:]``.  The
standard structure is ``J(x_j) = y_j``, ``omega = sum dx^j ^ dy^j`` and
``Omega = dz^1 ^ ... ^ dz^n``.

An oriented n-plane is stored as a ``2n x n`` matrix with orthonormal columns;
the orientation is the order of the columns.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

ORTHO_TOL = 1e-12
TRANSVERSE_TOL = 1e-9
CRITERION_TOL = 1e-8
SLAG_TOL = 1e-9

# generic mixing weight used to diagonalise Re and Im of a symmetric unitary together
_MIX = (0.5772156649015329, 1.4142135623730951, 0.3183098861837907)


class NotLagrangianError(ValueError):
    pass


class NotSpecialLagrangianError(ValueError):
    pass


class NotTransverseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OrientedPlane:
    """Oriented n-plane in R^{2n} given by an orthonormal, ordered basis."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != 2 * b.shape[1]:
            raise ValueError(f"basis must have shape (2n, n), got {b.shape}")
        gram = b.T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-10, rtol=0):
            raise ValueError("basis columns are not orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def from_vectors(cls, vectors: np.ndarray) -> "OrientedPlane":
        """Orthonormalise the columns of ``vectors`` keeping span and orientation."""
        v = np.asarray(vectors, dtype=float)
        q, r = np.linalg.qr(v)
        d = np.sign(np.diag(r))
        if np.any(np.abs(np.diag(r)) < 1e-14 * max(1.0, np.abs(r).max())):
            raise ValueError("vectors are linearly dependent")
        return cls(q * d)

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def complex_basis(self) -> np.ndarray:
        n = self.n
        return self.basis[:n] + 1j * self.basis[n:]

    def __neg__(self) -> "OrientedPlane":
        b = self.basis.copy()
        if self.n == 1:
            b = -b
        else:
            b[:, [0, 1]] = b[:, [1, 0]]
        return OrientedPlane(b)

    def same_span(self, other: "OrientedPlane", tol: float = 1e-10) -> bool:
        if other.n != self.n:
            return False
        proj = self.basis @ self.basis.T
        return bool(np.abs(proj @ other.basis - other.basis).max() <= tol)

    def equals(self, other: "OrientedPlane", tol: float = 1e-10) -> bool:
        if not self.same_span(other, tol):
            return False
        return bool(np.linalg.det(self.basis.T @ other.basis) > 0)

    def __eq__(self, other):
        if not isinstance(other, OrientedPlane):
            return NotImplemented
        return self.equals(other)

    __hash__ = None

    def transformed(self, real_matrix: np.ndarray) -> "OrientedPlane":
        return OrientedPlane.from_vectors(real_matrix @ self.basis)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "basis": self.basis.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "OrientedPlane":
        data = json.loads(text)
        b = np.asarray(data["basis"], dtype=float)
        if b.shape != (2 * data["n"], data["n"]):
            raise ValueError("basis shape does not match n")
        return cls(b)


@dataclass(frozen=True)
class StandardCY:
    """The flat Calabi-Yau structure (J0, omega0, Omega0) on C^n."""

    n: int

    @property
    def J(self) -> np.ndarray:
        n = self.n
        j = np.zeros((2 * n, 2 * n))
        j[n:, :n] = np.eye(n)
        j[:n, n:] = -np.eye(n)
        return j

    @property
    def omega_matrix(self) -> np.ndarray:
        """Matrix W with omega0(u, v) = u^T W v."""
        n = self.n
        w = np.zeros((2 * n, 2 * n))
        w[:n, n:] = np.eye(n)
        w[n:, :n] = -np.eye(n)
        return w

    def omega(self, u, v) -> float:
        return float(np.asarray(u) @ self.omega_matrix @ np.asarray(v))

    def Omega(self, vectors: np.ndarray) -> complex:
        """Evaluate dz^1 ^ ... ^ dz^n on the columns of a 2n x n matrix."""
        v = np.asarray(vectors, dtype=float)
        return complex(np.linalg.det(v[: self.n] + 1j * v[self.n:]))

    def normalization_sides(self) -> tuple[float, float]:
        """Both sides of omega^n/n! = (-1)^{n(n-1)/2} (i/2)^n Omega ^ conj(Omega)
        evaluated on the standard volume e_x1 ^ ... ^ e_xn ^ e_y1 ^ ... ^ e_yn."""
        n = self.n
        e = np.eye(2 * n)
        lhs = _wedge_power_omega(n) / math.factorial(n)
        # (Omega ^ conj Omega)(e_1..e_2n) as a 2n-form: sum over shuffles
        rhs = complex(0.0)
        from itertools import combinations

        for idx in combinations(range(2 * n), n):
            rest = [k for k in range(2 * n) if k not in idx]
            sign = _perm_sign(list(idx) + rest)
            a = self.Omega(e[:, list(idx)])
            b = np.conj(self.Omega(e[:, rest]))
            rhs += sign * a * b
        rhs *= (-1) ** (n * (n - 1) // 2) * (0.5j) ** n
        return lhs, float(rhs.real)


def _perm_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _wedge_power_omega(n: int) -> float:
    # omega^n on (x1..xn, y1..yn): n! * sign of the permutation pairing x_j with y_j
    order = []
    for j in range(n):
        order += [j, n + j]
    return float(math.factorial(n) * _perm_sign(order))


def x_plane(n: int) -> OrientedPlane:
    return plane_from_angles(np.zeros(n))


def plane_from_angles(phi: Sequence[float]) -> OrientedPlane:
    """P(phi_1, ..., phi_n): span of cos(phi_j) d/dx^j + sin(phi_j) d/dy^j in that order."""
    phi = np.asarray(phi, dtype=float)
    n = phi.size
    b = np.zeros((2 * n, n))
    b[np.arange(n), np.arange(n)] = np.cos(phi)
    b[n + np.arange(n), np.arange(n)] = np.sin(phi)
    return OrientedPlane(b)


def plane_from_unitary(u: np.ndarray) -> OrientedPlane:
    """The oriented plane U . R^n for a unitary n x n matrix."""
    u = np.asarray(u)
    return OrientedPlane(np.vstack([u.real, u.imag]))


def unitary_to_real(u: np.ndarray) -> np.ndarray:
    a, b = u.real, u.imag
    return np.block([[a, -b], [b, a]])


def random_special_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    u = unitary_group.rvs(n, random_state=rng) if n > 1 else np.exp(1j * rng.uniform(0, 2 * np.pi, (1, 1)))
    u = np.array(u, dtype=complex)
    u[:, 0] /= np.linalg.det(u)
    return u


def random_slag_plane(n: int, rng: np.random.Generator) -> OrientedPlane:
    return plane_from_unitary(random_special_unitary(n, rng))


def omega_restricted(p: OrientedPlane) -> np.ndarray:
    n = p.n
    x, y = p.basis[:n], p.basis[n:]
    return x.T @ y - y.T @ x


def is_lagrangian(p: OrientedPlane, tol: float = 1e-10) -> bool:
    return bool(np.abs(omega_restricted(p)).max() <= tol)


def slag_phase(p: OrientedPlane, tol: float = 1e-8) -> float:
    """Phase theta in (-pi, pi] with Omega0|_p = e^{i theta} vol_p."""
    if not is_lagrangian(p, tol):
        raise NotLagrangianError("plane is not Lagrangian")
    z = np.linalg.det(p.complex_basis)
    th = float(np.angle(z))
    if th <= -np.pi + 1e-15:
        th = np.pi
    return th


def is_special_lagrangian(p: OrientedPlane, tol: float = SLAG_TOL) -> bool:
    return is_lagrangian(p, tol) and abs(slag_phase(p)) <= tol


@dataclass(frozen=True)
class AngleList:
    angles: tuple
    kind: str
    sign_case: str = "not-applicable"
    signed: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("characterizing", "canonical-slag"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.sign_case not in ("positive", "negative", "not-applicable"):
            raise ValueError(f"unknown sign_case {self.sign_case!r}")

    @property
    def sorted(self) -> np.ndarray:
        return np.sort(np.asarray(self.angles, dtype=float))

    def total(self) -> float:
        return float(np.sum(self.angles))

    def to_json(self) -> str:
        return json.dumps(
            {"angles": self.sorted.tolist(), "kind": self.kind, "sign_case": self.sign_case}
        )


def characterizing_angles(eta: OrientedPlane, xi: OrientedPlane) -> tuple[AngleList, np.ndarray]:
    """Characterizing angles of an ordered pair of oriented n-planes.

    Returns the angles (ascending in the first n-1 entries, last entry
    between theta_{n-1} and pi - theta_{n-1}) together with an orthonormal
    basis ``E`` (columns e_1..e_2n) such that eta = e_1 ^ ... ^ e_n and
    xi = wedge_j (cos theta_j e_j + sin theta_j e_{n+j}).
    """
    a, b = eta.basis, xi.basis
    n = eta.n
    u, _, vt = np.linalg.svd(a.T @ b)
    v = vt.T
    if np.linalg.det(u) < 0:
        u[:, 0] *= -1
        v[:, 0] *= -1
    e = a @ u
    f = b @ v
    if np.linalg.det(v) < 0:
        f[:, -1] *= -1
    cosines = np.einsum("ij,ij->j", e, f)
    w = f - e * cosines
    sines = np.linalg.norm(w, axis=0)
    theta = np.arctan2(sines, cosines)

    big = sines > 1e-12
    comp = np.zeros((2 * n, n))
    comp[:, big] = w[:, big] / sines[big]
    if not big.all():
        # complete with unit vectors orthogonal to everything fixed so far
        known = np.hstack([e, comp[:, big]])
        q, _ = np.linalg.qr(np.hstack([known, np.eye(2 * n)]))
        extra = q[:, known.shape[1]: known.shape[1] + (~big).sum()]
        comp[:, ~big] = extra
    basis = np.hstack([e, comp])
    return AngleList(tuple(theta.tolist()), "characterizing"), basis


def reconstruct_from_characterizing(angles: AngleList, basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The bases e_1..e_n and (cos e_j + sin e_{n+j}) implied by a characterizing pair."""
    th = np.asarray(angles.angles)
    n = th.size
    e = basis[:, :n]
    f = e * np.cos(th) + basis[:, n:] * np.sin(th)
    return e, f


def _simultaneous_real_diagonalizer(s: np.ndarray) -> np.ndarray:
    """Real orthogonal Q with Q^T S Q diagonal for a complex symmetric unitary S."""
    a, b = s.real, s.imag
    scale = max(1.0, np.abs(s).max())
    best, best_err = None, np.inf
    for c in _MIX:
        _, q = np.linalg.eigh(a + c * b)
        d = q.T @ s @ q
        err = np.abs(d - np.diag(np.diag(d))).max() / scale
        if err < best_err:
            best, best_err = q, err
        if err < 1e-10:
            break
    if best_err > 1e-7:
        raise np.linalg.LinAlgError(f"could not diagonalise W W^T (off-diagonal {best_err:.2e})")
    return best


def _check_slag_pair(eta: OrientedPlane, xi: OrientedPlane, tol: float) -> None:
    for name, p in (("eta", eta), ("xi", xi)):
        if not is_lagrangian(p, tol):
            raise NotSpecialLagrangianError(f"{name} is not Lagrangian")
        if abs(slag_phase(p)) > tol:
            raise NotSpecialLagrangianError(f"{name} has phase {slag_phase(p):.3e}, not special Lagrangian")


def _check_transverse(eta: OrientedPlane, xi: OrientedPlane) -> AngleList:
    ang, _ = characterizing_angles(eta, -xi)
    th = np.asarray(ang.angles)
    if np.any(th < TRANSVERSE_TOL) or np.any(th > np.pi - TRANSVERSE_TOL):
        raise NotTransverseError("planes are not transverse")
    return ang


def canonical_slag_angles(eta: OrientedPlane, xi: OrientedPlane, tol: float = CRITERION_TOL) -> AngleList:
    """Canonical angles phi with -xi = P(phi) in SU(n) coordinates where eta = P(0).

    At most one |phi_j| exceeds pi/2, and that one is bounded by pi - |phi_k|.
    The sign case records whether sum(phi) is +pi or -pi when sum|phi| = pi.
    """
    return canonical_frame(eta, xi, tol)[0]


def canonical_frame(eta: OrientedPlane, xi: OrientedPlane, tol: float = CRITERION_TOL) -> tuple[AngleList, np.ndarray]:
    """Canonical angles together with the unitary U realising them.

    U maps P(0) onto eta and P(phi) onto -xi as oriented planes, with phi in
    the order of ``AngleList.signed``.
    """
    _check_slag_pair(eta, xi, SLAG_TOL)
    _check_transverse(eta, xi)
    n = eta.n
    w = eta.complex_basis.conj().T @ (-xi).complex_basis
    q = _simultaneous_real_diagonalizer(w @ w.T)
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    d2 = np.diag(q.T @ w @ w.T @ q)
    phi = np.angle(d2) / 2.0
    phi = np.where(phi <= -np.pi / 2 + 1e-15, phi + np.pi, phi)
    o = np.exp(-1j * phi)[:, None] * (q.T @ w)
    if np.abs(o.imag).max() > 1e-6:
        raise np.linalg.LinAlgError("normal form reduction failed")
    if np.linalg.det(o.real) < 0:
        order = np.argsort(phi, kind="stable")
        mags = np.abs(phi[order])
        cand = np.nonzero(mags >= mags.max() - 1e-12)[0]
        j0 = order[cand[-1]]
        phi[j0] = phi[j0] - np.pi if phi[j0] > 0 else phi[j0] + np.pi
    total_abs = np.abs(phi).sum()
    sign_case = "not-applicable"
    if abs(total_abs - np.pi) <= tol:
        sign_case = "positive" if phi.sum() > 0 else "negative"
    ang = AngleList(tuple(np.sort(phi).tolist()), "canonical-slag", sign_case, tuple(phi.tolist()))
    return ang, eta.complex_basis @ q


def angle_criterion(eta: OrientedPlane, xi: OrientedPlane, tol: float = CRITERION_TOL) -> bool:
    """True iff the characterizing angles between eta and -xi sum to pi."""
    _check_slag_pair(eta, xi, SLAG_TOL)
    ang = _check_transverse(eta, xi)
    return bool(abs(ang.total() - np.pi) <= tol)


def lawlor_nance_minimizing(eta: OrientedPlane, xi: OrientedPlane, tol: float = CRITERION_TOL) -> bool:
    """Angle criterion: the characterizing angles of (eta, -xi) sum to at least pi."""
    _check_slag_pair(eta, xi, SLAG_TOL)
    ang = _check_transverse(eta, xi)
    return bool(ang.total() >= np.pi - tol)
