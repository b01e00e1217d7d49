"""Lawlor necks: explicit special Lagrangian cylinders S^{n-1} x R in C^n.

For lambda_1, ..., lambda_n > 0 set

    P(s) = (prod_j (1 + lambda_j s^2) - 1) / s^2,
    psi_k(s) = lambda_k * int_{-inf}^{s} dt / ((1 + lambda_k t^2) sqrt(P(t))),

and z_k(s, x) = x_k sqrt(1/lambda_k + s^2) exp(i * branch * psi_k(s)) for x on
the unit sphere.  The neck is asymptotic to P(0,...,0) as s -> -inf and to
the plane -P(branch * theta) as s -> +inf, where theta_k = psi_k(+inf).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .planes import plane_from_angles

ANGLE_SUM_TOL = 1e-8
DEFAULT_RESOLUTION = 6


class QuadratureError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    pass


def elementary_symmetric(lam) -> np.ndarray:
    """e_1, ..., e_n of the entries of lam."""
    coeffs = np.array([1.0])
    for v in np.asarray(lam, dtype=float):
        coeffs = np.convolve(coeffs, [1.0, v])
    return coeffs[1:]


def p_of_s(s, lam) -> np.ndarray:
    """(prod(1 + lam s^2) - 1)/s^2 evaluated without cancellation."""
    e = elementary_symmetric(lam)
    s2 = np.asarray(s, dtype=float) ** 2
    out = np.zeros_like(s2)
    for c in e[::-1]:
        out = out * s2 + c
    return out


def angle_integrand(s, k: int, lam) -> np.ndarray:
    """psi_k'(s)."""
    lam = np.asarray(lam, dtype=float)
    s = np.asarray(s, dtype=float)
    return lam[k] / ((1.0 + lam[k] * s * s) * np.sqrt(p_of_s(s, lam)))


def _tail_integrand(t, k: int, lam) -> np.ndarray:
    # psi_k' at s = -1/t, times ds/dt = 1/t^2; smooth at t = 0
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(t, dtype=float)
    e = elementary_symmetric(lam)
    n = lam.size
    t2 = t * t
    # t^{2(n-1)} P(1/t) = sum_k e_k t^{2(n-k)}
    q = np.zeros_like(t)
    for c in e:
        q = q * t2 + c
    return lam[k] * t ** (n - 1) / ((t2 + lam[k]) * np.sqrt(q))


def _check_lambda(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise ValueError("lambda must be a vector of length n >= 2")
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("all lambda_k must be positive")
    return lam


def angles_from_lambda(lam, epsabs: float = 1e-10) -> np.ndarray:
    """Asymptotic angles theta_k = psi_k(+inf).

    The integrand is even in s, so theta_k is twice the integral over
    s <= 0, split into [-1, 0] and the tail t = -1/s in (0, 1], where it is
    smooth.  A composite Gauss-Legendre rule is evaluated at two panel
    counts; when they disagree by more than ``epsabs`` the integral is
    redone by adaptive quadrature on the compactified half line.
    """
    lam = _check_lambda(lam)
    coarse, fine = _angles_fixed(lam, 32), _angles_fixed(lam, 64)
    if np.abs(fine - coarse).max() <= 0.1 * epsabs:
        return fine
    theta = np.empty(lam.size)
    for k in range(lam.size):

        def f(u, k=k):
            s = u / np.sqrt(1.0 - u * u)
            return angle_integrand(s, k, lam) * (1.0 - u * u) ** -1.5

        val, err = quad(f, 0.0, 1.0, epsabs=epsabs / 4, epsrel=1e-13, limit=200)
        if not np.isfinite(val) or err > epsabs:
            raise QuadratureError(f"angle integral {k} did not converge (error estimate {err:.2e})")
        theta[k] = 2.0 * val
    return theta


def normalize_lambda(lam) -> np.ndarray:
    """Scale representative with prod(lambda) = 1 (theta is scale invariant)."""
    lam = _check_lambda(lam)
    return lam / np.exp(np.mean(np.log(lam)))


def lambda_from_angles(theta, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Invert angles_from_lambda by damped Newton; returns lambda with prod = 1."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    if n < 2:
        raise ValueError("need at least two angles")
    if np.any(theta <= 0) or np.any(theta >= np.pi):
        raise ValueError("angles must lie in the open interval (0, pi)")
    if abs(theta.sum() - np.pi) > ANGLE_SUM_TOL:
        raise ValueError(f"angles must sum to pi, got {theta.sum():.12f}")

    # log lambda = basis @ mu keeps prod(lambda) = 1
    basis = np.linalg.qr(np.vstack([np.ones(n), np.eye(n)[:-1]]).T)[0][:, 1:]
    guess = 2.0 * np.log(n * theta / np.pi)
    mu = basis.T @ guess

    # Newton on the fixed-rule angles, then polish against adaptive quadrature
    def resid(m):
        return _angles_fixed(np.exp(basis @ m))[:-1] - theta[:-1]

    def jacobian(m, h=1e-6):
        jac = np.empty((n - 1, n - 1))
        for j in range(n - 1):
            step = np.zeros(n - 1)
            step[j] = h
            jac[:, j] = (resid(m + step) - resid(m - step)) / (2 * h)
        return jac

    r = resid(mu)
    for _ in range(max_iter):
        if np.abs(r).max() < 0.1 * tol:
            break
        delta = np.linalg.solve(jacobian(mu), -r)
        t = 1.0
        while True:
            trial = mu + t * delta
            rt = resid(trial)
            if np.linalg.norm(rt) < np.linalg.norm(r) or t < 1e-4:
                break
            t *= 0.5
        mu, r = trial, rt
    jac = jacobian(mu)
    for _ in range(4):
        r = angles_from_lambda(np.exp(basis @ mu), epsabs=1e-12)[:-1] - theta[:-1]
        if np.abs(r).max() < tol:
            return np.exp(basis @ mu)
        mu = mu - np.linalg.solve(jac, r)
    if np.abs(r).max() < 1e3 * tol:
        return np.exp(basis @ mu)
    raise NewtonError(f"Newton did not converge, residual {np.abs(r).max():.2e}")


@lru_cache(maxsize=8)
def _composite_rule(panels: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    e = np.linspace(0.0, 1.0, panels + 1)
    lo, hi = e[:-1, None], e[1:, None]
    return (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel(), (0.5 * (hi - lo) * w).ravel()


def _angles_fixed(lam, panels: int = 32, nodes: int = 24) -> np.ndarray:
    # composite Gauss-Legendre on s in [-1, 0] and the tail t = -1/s in (0, 1]
    t, wt = _composite_rule(panels, nodes)
    return np.array([2.0 * (wt @ angle_integrand(-t, k, lam) + wt @ _tail_integrand(t, k, lam))
                     for k in range(len(lam))])


@dataclass(frozen=True)
class NeckParameters:
    lam: np.ndarray
    theta: np.ndarray
    scale: float = 1.0
    branch: int = -1
    resolution: int = DEFAULT_RESOLUTION
    _nodes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = _check_lambda(self.lam)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")
        if abs(self.theta.sum() - np.pi) > ANGLE_SUM_TOL:
            raise ValueError("theta must sum to pi")
        object.__setattr__(self, "_nodes", np.polynomial.legendre.leggauss(self.resolution))

    @classmethod
    def from_lambda(cls, lam, scale=1.0, branch=-1, resolution=DEFAULT_RESOLUTION):
        lam = normalize_lambda(lam)
        return cls(lam, angles_from_lambda(lam), scale, branch, resolution)

    @classmethod
    def from_angles(cls, theta, scale=1.0, branch=-1, resolution=DEFAULT_RESOLUTION):
        lam = lambda_from_angles(theta)
        return cls(lam, angles_from_lambda(lam), scale, branch, resolution)

    @property
    def n(self) -> int:
        return self.lam.size

    def with_scale(self, scale: float) -> "NeckParameters":
        return NeckParameters(self.lam, self.theta, scale, self.branch, self.resolution)

    def with_resolution(self, resolution: int) -> "NeckParameters":
        return NeckParameters(self.lam, self.theta, self.scale, self.branch, resolution)

    def far_plane(self):
        """Oriented plane approached as s -> +inf: -P(branch * theta)."""
        return -plane_from_angles(self.branch * self.theta)

    def near_plane(self):
        return plane_from_angles(np.zeros(self.n))

    # --- incomplete angle integrals --------------------------------------

    def _gl(self, a, b, fn, panels=4):
        x, w = self._nodes
        a = np.asarray(a, dtype=float)[..., None, None]
        b = np.asarray(b, dtype=float)[..., None, None]
        edges = np.linspace(0.0, 1.0, panels + 1)
        lo = a + (b - a) * edges[:-1][:, None]
        hi = a + (b - a) * edges[1:][:, None]
        pts = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        return (fn(pts) * w * 0.5 * (hi - lo)).sum(axis=(-2, -1))

    def psi_lower(self, s) -> np.ndarray:
        """int_{-inf}^{s} psi' for s <= 0, shape (len(s), n)."""
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape + (self.n,))
        far = s <= -1.0
        for k in range(self.n):
            tail = self._gl(0.0, 1.0, lambda t: _tail_integrand(t, k, self.lam))
            col = np.empty(s.shape)
            if far.any():
                col[far] = self._gl(0.0, -1.0 / s[far], lambda t: _tail_integrand(t, k, self.lam))
            if (~far).any():
                col[~far] = tail + self._gl(-1.0, s[~far], lambda t: angle_integrand(t, k, self.lam))
            out[..., k] = col
        return out

    def psi(self, s) -> np.ndarray:
        """psi_k(s) for all k (unsigned, increasing from 0 to theta_k)."""
        s = np.asarray(s, dtype=float)
        half = self.psi_lower(np.zeros(1))[0]
        neg = self.psi_lower(-np.abs(s))
        return np.where((s > 0)[..., None], 2.0 * half - neg, neg)

    def psi_tail(self, s) -> np.ndarray:
        """Distance of psi to its limit on the limb of s: psi(s) for s<=0, theta-psi(s) for s>0."""
        return self.psi_lower(-np.abs(np.asarray(s, dtype=float)))

    def dpsi(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([angle_integrand(s, k, self.lam) for k in range(self.n)], axis=-1)

    def d2psi(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        lam = self.lam
        p = p_of_s(s, lam)
        e = elementary_symmetric(lam)
        dp = np.zeros_like(s)
        s2 = s * s
        for j in range(2, self.n + 1):
            dp += e[j - 1] * 2 * (j - 1) * s ** (2 * j - 3)
        cols = []
        for k in range(self.n):
            a = 1.0 + lam[k] * s2
            f = lam[k] / (a * np.sqrt(p))
            cols.append(f * (-2 * lam[k] * s / a - 0.5 * dp / p))
        return np.stack(cols, axis=-1)

    def radii(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)[..., None]
        return np.sqrt(1.0 / self.lam + s * s)

    def immersion(self, s, x) -> np.ndarray:
        """Points z(s, x) of the scaled neck, complex array (..., n)."""
        phase = np.exp(1j * self.branch * self.psi(s))
        return self.scale * np.asarray(x) * self.radii(s) * phase


@dataclass(frozen=True)
class NeckSample:
    point: np.ndarray
    s: float
    x: np.ndarray
    tangent_frame: np.ndarray


@dataclass
class NeckSamples:
    """Batch of neck samples; frames are (N, 2n, n) with orthonormal columns."""

    s: np.ndarray
    x: np.ndarray
    sphere_index: np.ndarray
    points: np.ndarray
    frames: np.ndarray

    def __len__(self):
        return self.s.size

    def __iter__(self):
        for i in range(len(self)):
            yield NeckSample(self.points[i], float(self.s[i]), self.x[i], self.frames[i])

    def to_csv(self, path) -> None:
        n = self.points.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "sphere_index"] + [f"re_z{k + 1}" for k in range(n)] + [f"im_z{k + 1}" for k in range(n)])
            for i in range(len(self)):
                w.writerow(
                    [repr(float(self.s[i])), int(self.sphere_index[i])]
                    + [repr(float(v)) for v in self.points[i].real]
                    + [repr(float(v)) for v in self.points[i].imag]
                )

    def to_json(self) -> str:
        return json.dumps(
            {
                "s": self.s.tolist(),
                "sphere_index": self.sphere_index.tolist(),
                "points_re": self.points.real.tolist(),
                "points_im": self.points.imag.tolist(),
                "frames": self.frames.tolist(),
            }
        )


def sphere_frames(x: np.ndarray) -> np.ndarray:
    """Orthonormal (x, t_1, ..., t_{n-1}) with positive determinant, shape (N, n, n)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = x - e1
    nv = np.linalg.norm(v, axis=1)
    h = np.broadcast_to(np.eye(n), (x.shape[0], n, n)).copy()
    ok = nv > 1e-12
    vv = v[ok] / nv[ok, None]
    h[ok] -= 2.0 * vv[:, :, None] * vv[:, None, :]
    # Householder frames have det -1 (identity frame already has +1)
    h[ok, :, -1] *= -1
    return h


def sphere_grid(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic, roughly uniform points on S^{n-1}."""
    if count < 1:
        raise ValueError("count must be positive")
    if n == 2:
        a = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z * z)
        a = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([r * np.cos(a), r * np.sin(a), z], axis=1)
    g = np.random.default_rng(seed).standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _complex_to_real(vectors: np.ndarray) -> np.ndarray:
    # (..., n, m) complex -> (..., 2n, m) real
    return np.concatenate([vectors.real, vectors.imag], axis=-2)


def sample_neck(params: NeckParameters, s_grid, sphere_points) -> NeckSamples:
    s_grid = np.asarray(s_grid, dtype=float).ravel()
    xs = np.atleast_2d(np.asarray(sphere_points, dtype=float))
    if s_grid.size == 0 or xs.shape[0] == 0:
        raise ValueError("empty sampling grid")
    n = params.n
    if xs.shape[1] != n:
        raise ValueError("sphere points have the wrong dimension")
    ss = np.repeat(s_grid, xs.shape[0])
    idx = np.tile(np.arange(xs.shape[0]), s_grid.size)
    frames_sphere = sphere_frames(xs)[idx]
    x = frames_sphere[:, :, 0]
    tangents = frames_sphere[:, :, 1:]

    b = params.branch
    psi = params.psi(s_grid)[np.repeat(np.arange(s_grid.size), xs.shape[0])]
    dpsi = params.dpsi(ss)
    r = params.radii(ss)
    rot = np.exp(1j * b * psi)
    points = params.scale * x * r * rot
    ds = x * rot * (ss[:, None] / r + 1j * b * r * dpsi)
    dt = tangents * (r * rot)[:, :, None]
    tangent = np.concatenate([ds[:, :, None], dt], axis=2)
    # orientation chosen so the neck has phase 0 (see _orientation_sign)
    if _orientation_sign(params) < 0:
        tangent[:, :, [0, 1]] = tangent[:, :, [1, 0]]
    real = _complex_to_real(tangent)
    q, rr = np.linalg.qr(real)
    sign = np.sign(np.einsum("nii->ni", rr))
    frames = q * sign[:, None, :]
    return NeckSamples(ss, x, idx, points, frames)


def _orientation_sign(params: NeckParameters) -> int:
    n = params.n
    x = np.zeros((1, n))
    x[0, 0] = 1.0
    fr = sphere_frames(x)[0]
    s = np.zeros(1)
    psi = params.psi(s)[0]
    dpsi = params.dpsi(s)[0]
    r = params.radii(s)[0]
    rot = np.exp(1j * params.branch * psi)
    ds = fr[:, 0] * rot * (0.0 + 1j * params.branch * r * dpsi)
    dt = fr[:, 1:] * (r * rot)[:, None]
    z = np.linalg.det(np.column_stack([ds, dt]))
    return 1 if z.real > 0 else -1


def slag_residual(samples) -> tuple[float, float, float]:
    """(sup |omega|, sup |Im Omega|, sup |phase|) over sample tangent frames."""
    frames = np.asarray(samples.frames)
    n = frames.shape[2]
    xr, yr = frames[:, :n, :], frames[:, n:, :]
    om = np.einsum("nki,nkj->nij", xr, yr) - np.einsum("nki,nkj->nij", yr, xr)
    det = np.linalg.det(xr + 1j * yr)
    return float(np.abs(om).max()), float(np.abs(det.imag).max()), float(np.abs(np.angle(det)).max())


def plane_distance(points: np.ndarray, phases) -> np.ndarray:
    """Euclidean distance from complex points to the unoriented plane P(phases)."""
    rot = np.asarray(points) * np.exp(-1j * np.asarray(phases))
    return np.linalg.norm(rot.imag, axis=-1)


def distance_to_asymptotic_planes(params: NeckParameters, points: np.ndarray) -> np.ndarray:
    d0 = plane_distance(points, np.zeros(params.n))
    d1 = plane_distance(points, params.branch * params.theta)
    return np.minimum(d0, d1)
