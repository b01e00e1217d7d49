"""Flat special Lagrangian subtori of Calabi-Yau tori C^n / Gamma.

Points of the torus are handled in Gamma-coordinates, i.e. coefficients with
respect to the lattice generators, so rational subtori become integer data and
intersection counts reduce to Smith normal form.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .planes import (
    NotLagrangianError,
    NotSpecialLagrangianError,
    NotTransverseError,
    OrientedPlane,
    angle_criterion,
    canonical_slag_angles,
    is_lagrangian,
    plane_from_angles,
    slag_phase,
    x_plane,
)
from .snf import integer_inverse, saturate_rows, smith_normal_form

IN_PLANE_TOL = 1e-10
PHASE_TOL = 1e-9


class RankDeficientError(ValueError):
    pass


class IrrationalSublatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Lattice:
    """Rank 2n lattice in R^{2n}; columns of ``generators`` form a basis."""

    generators: np.ndarray

    def __post_init__(self):
        g = np.array(self.generators, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] % 2:
            raise ValueError("generators must be a square 2n x 2n matrix")
        if abs(np.linalg.det(g)) <= 1e-12:
            raise ValueError("lattice generators are degenerate")
        g.setflags(write=False)
        object.__setattr__(self, "generators", g)

    @classmethod
    def standard(cls, n: int) -> "Lattice":
        return cls(np.eye(2 * n))

    @property
    def n(self) -> int:
        return self.generators.shape[0] // 2

    def to_ambient(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.generators.T

    def to_coords(self, points) -> np.ndarray:
        return np.linalg.solve(self.generators, np.asarray(points, dtype=float).T).T

    def to_dict(self) -> dict:
        return {"generators": self.generators.tolist()}


@dataclass(frozen=True)
class CYTorusStructure:
    """C^n / Gamma with the standard structure descended to the quotient."""

    lattice: Lattice

    @classmethod
    def standard(cls, n: int) -> "CYTorusStructure":
        return cls(Lattice.standard(n))

    @property
    def n(self) -> int:
        return self.lattice.n

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "lattice": self.lattice.to_dict()})

    @classmethod
    def from_json(cls, text: str) -> "CYTorusStructure":
        data = json.loads(text)
        return cls(Lattice(np.array(data["lattice"]["generators"])))


@dataclass(frozen=True)
class FlatSLagTorus:
    """Flat SLag n-torus: an oriented plane through ``basepoint`` closed up by
    the integer ``sublattice`` (rows in Gamma-coordinates)."""

    torus: CYTorusStructure
    plane: OrientedPlane
    sublattice: np.ndarray
    basepoint: np.ndarray
    volume: float
    flipped: bool = False

    @property
    def n(self) -> int:
        return self.torus.n

    def translated(self, shift) -> "FlatSLagTorus":
        """Same torus moved by an ambient vector ``shift``."""
        return FlatSLagTorus(self.torus, self.plane, self.sublattice,
                             self.basepoint + np.asarray(shift, dtype=float), self.volume, self.flipped)

    def to_dict(self) -> dict:
        return {
            "lattice": self.torus.lattice.to_dict(),
            "plane": self.plane.basis.tolist(),
            "sublattice": np.asarray(self.sublattice, dtype=int).tolist(),
            "basepoint": self.basepoint.tolist(),
            "volume": self.volume,
            "flipped": self.flipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FlatSLagTorus":
        d = json.loads(text)
        t = CYTorusStructure(Lattice(np.array(d["lattice"]["generators"])))
        return make_flat_slag(t, d["sublattice"], d["basepoint"])


def _integer_matrix(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == object:
        arr = arr.astype(float)
    r = np.rint(arr)
    if np.any(np.abs(arr - r) > 1e-9):
        raise IrrationalSublatticeError("sublattice entries must be integers in Gamma-coordinates")
    return r.astype(np.int64)


def make_flat_slag(T: CYTorusStructure, sublattice, basepoint=None) -> FlatSLagTorus:
    """Flat SLag torus spanned by integer lattice vectors.

    The orientation is flipped when the span has phase pi.

    Raises
    ------
    RankDeficientError
        Rows of ``sublattice`` are dependent.
    NotLagrangianError
        The span is not Lagrangian.
    NotSpecialLagrangianError
        Lagrangian, but the phase is neither 0 nor pi.
    """
    n = T.n
    a = _integer_matrix(sublattice)
    if a.shape != (n, 2 * n):
        raise ValueError(f"sublattice must be {n} x {2 * n}")
    vecs = T.lattice.generators @ a.T
    if np.linalg.matrix_rank(vecs, tol=1e-9) < n:
        raise RankDeficientError("sublattice rows are linearly dependent")
    plane = OrientedPlane.from_vectors(vecs)
    if not is_lagrangian(plane):
        raise NotLagrangianError("span of the sublattice is not Lagrangian")
    phase = slag_phase(plane)
    flipped = False
    if abs(phase) <= PHASE_TOL:
        pass
    elif abs(abs(phase) - np.pi) <= PHASE_TOL:
        plane, flipped = -plane, True
    else:
        raise NotSpecialLagrangianError(f"phase {phase:.6g} is neither 0 nor pi")
    volume = float(np.sqrt(np.linalg.det(vecs.T @ vecs)))
    bp = np.zeros(2 * n) if basepoint is None else np.asarray(basepoint, dtype=float).copy()
    return FlatSLagTorus(T, plane, a, bp, volume, flipped)


# --- intersections ----------------------------------------------------------


@dataclass(frozen=True)
class IntersectionPoint:
    coords: np.ndarray  # Gamma-coordinates in [0, 1)^{2n}
    point: np.ndarray  # ambient representative
    tangent1: OrientedPlane
    tangent2: OrientedPlane


def _exact_solve_row(rhs, b) -> list[Fraction]:
    """Solve x @ b = rhs exactly for rational rhs and integer b."""
    m = len(b)
    # transpose system: b.T x = rhs
    aug = [[Fraction(int(b[j][i])) for j in range(m)] + [rhs[i]] for i in range(m)]
    for c in range(m):
        piv = next(r for r in range(c, m) if aug[r][c] != 0)
        aug[c], aug[piv] = aug[piv], aug[c]
        pv = aug[c][c]
        aug[c] = [x / pv for x in aug[c]]
        for r in range(m):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
    return [aug[i][m] for i in range(m)]


def intersection_points(M1: FlatSLagTorus, M2: FlatSLagTorus) -> list[IntersectionPoint]:
    """All intersection points of two rational flat subtori.

    Writing B for the 2n x 2n integer matrix with rows the two sublattices,
    the points correspond to Z^{2n} / Z^{2n} B, enumerated through the Smith
    form U B V = D as the representatives y V^{-1}, 0 <= y_i < d_i.

    Raises
    ------
    NotTransverseError
        The planes are not transverse and the subtori meet, so the
        intersection is not a finite set.  Parallel disjoint subtori return
        an empty list.
    """
    if not np.allclose(M1.torus.lattice.generators, M2.torus.lattice.generators):
        raise ValueError("subtori live in different tori")
    lat = M1.torus.lattice
    n2 = 2 * M1.n
    b = np.vstack([M1.sublattice, M2.sublattice])
    d, _, v = smith_normal_form(b)
    diag = [int(d[i, i]) for i in range(n2)]
    shift = lat.to_coords(M2.basepoint - M1.basepoint)
    if 0 in diag:
        # parallel directions: empty iff the shift misses span + Z^{2n}
        r = sum(1 for x in diag if x)
        proj = shift @ v.astype(float)
        off = proj[r:]
        if np.all(np.abs(off - np.rint(off)) < 1e-9):
            raise NotTransverseError("subtori are not transverse and intersect in a positive-dimensional set")
        return []
    vinv = integer_inverse(v)
    # rational shift, so the points can be produced exactly when it is rational
    shift_q = [Fraction(float(x)).limit_denominator(10**9) for x in shift]
    bl = b.tolist()
    pts = []
    base1 = lat.to_coords(M1.basepoint)
    for y in itertools.product(*[range(x) for x in diag]):
        m = [sum(y[k] * int(vinv[k, j]) for k in range(n2)) for j in range(n2)]
        sol = _exact_solve_row([shift_q[j] + m[j] for j in range(n2)], bl)
        s = np.array([float(x) for x in sol[: M1.n]])
        c = (base1 + s @ M1.sublattice) % 1.0
        c[np.isclose(c, 1.0, atol=1e-12)] = 0.0
        pts.append(IntersectionPoint(c, lat.to_ambient(c), M1.plane, M2.plane))
    return pts


def intersection_count(M1: FlatSLagTorus, M2: FlatSLagTorus) -> int:
    """|det| of the stacked sublattices; 0 for non-transverse pairs."""
    b = np.vstack([M1.sublattice, M2.sublattice])
    d, _, _ = smith_normal_form(b)
    out = 1
    for i in range(b.shape[0]):
        out *= int(d[i, i])
    return out


@dataclass(frozen=True)
class PairReport:
    transverse: bool
    count: int
    angle_criterion_at_each: list = field(default_factory=list)
    angles: list = field(default_factory=list)
    sign_case: str = ""
    reason: str = ""

    @property
    def qualified(self) -> bool:
        return self.transverse and self.count > 0 and all(self.angle_criterion_at_each)

    def to_dict(self) -> dict:
        return {
            "transverse": self.transverse,
            "count": self.count,
            "angle_criterion_at_each": list(self.angle_criterion_at_each),
            "angles": list(self.angles),
            "sign_case": self.sign_case,
            "reason": self.reason,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def pair_check(M1: FlatSLagTorus, M2: FlatSLagTorus) -> PairReport:
    """Transversality, point count and angle criterion for a pair of subtori.

    Only the Smith index is computed; the points themselves are not listed.
    """
    count = intersection_count(M1, M2)
    if count == 0:
        try:
            intersection_points(M1, M2)
        except NotTransverseError as exc:
            return PairReport(False, 0, [], [], "", str(exc))
        return PairReport(True, 0, [], [], "", "disjoint")
    try:
        ok = angle_criterion(M1.plane, M2.plane)
    except NotTransverseError as exc:
        return PairReport(False, count, [], [], "", str(exc))
    canon = canonical_slag_angles(M1.plane, M2.plane)
    return PairReport(True, count, [ok] * count, [float(x) for x in canon.sorted], canon.sign_case)


# --- search -----------------------------------------------------------------


def graph_sublattices(T: CYTorusStructure, bound: int, chunk: int = 100_000) -> list[np.ndarray]:
    """Sublattices with rows (e_j, S_j), S integer symmetric, |S_ij| <= bound,
    whose span is special Lagrangian for the given lattice."""
    n = T.n
    iu = np.triu_indices(n)
    vals = range(-bound, bound + 1)
    stream = itertools.product(vals, repeat=len(iu[0]))
    out = []
    while True:
        combos = np.array(list(itertools.islice(stream, chunk)), dtype=np.int64)
        if combos.size == 0:
            return out
        s = np.zeros((len(combos), n, n), dtype=np.int64)
        s[:, iu[0], iu[1]] = combos
        s[:, iu[1], iu[0]] = combos
        a = np.concatenate([np.broadcast_to(np.eye(n, dtype=np.int64), s.shape), s], axis=2)
        vecs = np.einsum("ij,bkj->bik", T.lattice.generators, a)  # (batch, 2n, n)
        x, y = vecs[:, :n], vecs[:, n:]
        om = np.einsum("bji,bjk->bik", x, y) - np.einsum("bji,bjk->bik", y, x)
        lag = np.abs(om).max(axis=(1, 2)) < 1e-9
        # the phase of the span is the phase of det(x + iy)
        det = np.linalg.det(x + 1j * y)
        slag = lag & (np.abs(det.imag) <= 1e-9 * np.maximum(1.0, np.abs(det)))
        out.extend(a[i] for i in np.flatnonzero(slag))


def find_angle_criterion_pairs(
    T: CYTorusStructure,
    bound: int,
    seed: int = 0,
    max_pairs: int = 5000,
    jobs: int = 1,
) -> list[tuple[FlatSLagTorus, FlatSLagTorus, PairReport]]:
    """Qualified pairs among graph-type rational subtori through the origin.

    Every pair containing the first candidate (the x-torus when it is SLag) is
    checked; the remaining pairs are checked exhaustively when there are at
    most ``max_pairs`` of them, otherwise a ``seed``-determined sample is.
    Results are sorted by intersection count, then total volume, then the
    integer data.
    """
    cands = [make_flat_slag(T, a) for a in graph_sublattices(T, bound)]
    if len(cands) < 2:
        return []
    m = len(cands)
    anchored = [(0, j) for j in range(1, m)]
    rest_total = m * (m - 1) // 2 - len(anchored)
    if rest_total <= max_pairs:
        rest = [(i, j) for i in range(1, m) for j in range(i + 1, m)]
    else:
        rng = np.random.default_rng(seed)
        chosen = set()
        while len(chosen) < max_pairs:
            i, j = sorted(rng.choice(np.arange(1, m), size=2, replace=False).tolist())
            chosen.add((i, j))
        rest = sorted(chosen)
    index_pairs = anchored + rest

    def check(ij):
        return pair_check(cands[ij[0]], cands[ij[1]])

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            reports = list(ex.map(check, index_pairs))
    else:
        reports = [check(ij) for ij in index_pairs]

    out = []
    for (i, j), rep in zip(index_pairs, reports):
        if rep.qualified:
            out.append((cands[i], cands[j], rep))
    out.sort(key=lambda t: (t[2].count, t[0].volume + t[1].volume,
                            t[0].sublattice.tolist(), t[1].sublattice.tolist()))
    return out


def write_catalog(pairs, path, bound: int) -> None:
    """CSV catalog with one row per qualified pair."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bound", "count", "angles", "volume1", "volume2", "sublattice1", "sublattice2"])
        for m1, m2, rep in pairs:
            w.writerow([
                bound,
                rep.count,
                ";".join(f"{a:.12g}" for a in rep.angles),
                f"{m1.volume:.12g}",
                f"{m2.volume:.12g}",
                json.dumps(m1.sublattice.tolist()),
                json.dumps(m2.sublattice.tolist()),
            ])


# --- deformation forms ------------------------------------------------------


@dataclass(frozen=True)
class DeformationForm:
    """Constant real n-form on R^{2n}, sum of c_I dv^{i_1} ^ ... ^ dv^{i_n}
    over increasing index tuples I (indices 0..n-1 are x, n..2n-1 are y)."""

    n: int
    coefficients: dict
    tag: str = "custom"

    def __post_init__(self):
        if self.tag not in ("im_omega", "re_omega", "im_chi", "re_chi_term", "custom"):
            raise ValueError(f"unknown tag {self.tag!r}")
        clean = {}
        for key, c in self.coefficients.items():
            key = tuple(int(k) for k in key)
            if len(key) != self.n or list(key) != sorted(set(key)):
                raise ValueError("coefficient keys must be strictly increasing n-tuples")
            if abs(c) > 1e-15:
                clean[key] = float(c)
        object.__setattr__(self, "coefficients", clean)

    @classmethod
    def from_complex_wedge(cls, rows: list[tuple[complex, np.ndarray]], tag: str = "custom") -> "DeformationForm":
        """Real part of sum_t c_t alpha_t^1 ^ ... ^ alpha_t^n.

        Each term is (c_t, A_t) with A_t an n x 2n complex matrix whose rows
        are covectors on R^{2n}.
        """
        n = rows[0][1].shape[0]
        coeffs = {}
        for key in itertools.combinations(range(2 * n), n):
            total = sum(c * np.linalg.det(a[:, key]) for c, a in rows)
            coeffs[key] = float(np.real(total))
        return cls(n, coeffs, tag)

    def evaluate(self, vectors) -> np.ndarray:
        """Value on the n-vector(s) given as (..., 2n, n) column bases."""
        v = np.asarray(vectors, dtype=float)
        out = np.zeros(v.shape[:-2])
        for key, c in self.coefficients.items():
            out = out + c * np.linalg.det(v[..., list(key), :])
        return out

    def __call__(self, plane: OrientedPlane) -> float:
        return float(self.evaluate(plane.basis))

    def to_dict(self) -> dict:
        return {"n": self.n, "tag": self.tag,
                "coefficients": [[list(k), c] for k, c in sorted(self.coefficients.items())]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DeformationForm":
        d = json.loads(text)
        return cls(d["n"], {tuple(k): c for k, c in d["coefficients"]}, d["tag"])


def _dz(n: int, conj_at: int | None = None) -> np.ndarray:
    a = np.zeros((n, 2 * n), dtype=complex)
    for k in range(n):
        a[k, k] = 1.0
        a[k, n + k] = -1j if k == conj_at else 1j
    return a


def re_omega_form(n: int) -> DeformationForm:
    return DeformationForm.from_complex_wedge([(1.0, _dz(n))], "re_omega")


def im_omega_form(n: int) -> DeformationForm:
    return DeformationForm.from_complex_wedge([(-1j, _dz(n))], "im_omega")


def chi_term(n: int, j: int) -> DeformationForm:
    """Re(dz^1 ^ ... ^ conj(dz^j) ^ ... ^ dz^n)."""
    return DeformationForm.from_complex_wedge([(1.0, _dz(n, j))], "re_chi_term")


def deformation_chi(n: int) -> DeformationForm:
    """Im chi = sum_j Re(dz^1 ^ ... ^ conj(dz^j) ^ ... ^ dz^n)."""
    if n < 1:
        raise ValueError("n must be positive")
    return DeformationForm.from_complex_wedge([(1.0, _dz(n, j)) for j in range(n)], "im_chi")


def pairing(M1: FlatSLagTorus, M2: FlatSLagTorus, form: DeformationForm) -> float:
    """Volume-normalised integral over M1 minus that over M2."""
    return form(M1.plane) - form(M2.plane)


def morgan_check(n: int, resolution: int, tol: float = 1e-9, chunk: int = 200_000) -> bool:
    """Grid search over P(theta), theta in [0, 2 pi)^n, for planes calibrated
    by Re Omega and by every Re(dz^1 ^ .. conj(dz^j) .. ^ dz^n) at once.

    True when every such grid plane is the oriented x-plane.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    forms = [re_omega_form(n)] + [chi_term(n, j) for j in range(n)]
    ticks = 2 * np.pi * np.arange(resolution) / resolution
    grid = np.array(np.meshgrid(*([ticks] * n), indexing="ij")).reshape(n, -1).T
    xp = x_plane(n)
    found_x = False
    for start in range(0, len(grid), chunk):
        th = grid[start:start + chunk]
        c, s = np.cos(th), np.sin(th)
        v = np.zeros((len(th), 2 * n, n))
        idx = np.arange(n)
        v[:, idx, idx] = c
        v[:, n + idx, idx] = s
        ok = np.ones(len(th), dtype=bool)
        for f in forms:
            ok &= f.evaluate(v) >= 1.0 - tol
            if not ok.any():
                break
        for t in th[ok]:
            if not plane_from_angles(t).equals(xp, tol=1e-8):
                return False
            found_x = True
    return found_x
