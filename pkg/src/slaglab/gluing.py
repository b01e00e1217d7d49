"""Approximate special Lagrangians M_alpha in the two-plane local model.

The two planes are put in canonical position, eta = P(0) and xi = -P(b theta),
a Lawlor neck of scale eps is inserted at the origin, and in the annulus
delta/2 <= |q| <= delta each half of the neck is cut off through its
Lagrangian potential:

    sheet 1:  q + i grad(chi u_eps)(q)                  over eta
    sheet 2:  D (q - i grad(chi u_eps)(q)),  D = diag(exp(i b theta))

with u_eps(q) = eps^2 u(q / eps).  Graphs of exact 1-forms are Lagrangian, so
the model is exactly Lagrangian; it is exactly the neck inside B_{delta/2} and
exactly the planes outside B_delta.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import gamma

from .lawlor import NeckParameters, _tail_integrand, sample_neck, sphere_frames, sphere_grid
from .planes import OrientedPlane, canonical_frame, plane_from_angles, unitary_to_real, x_plane

REGIONS = ("M1'", "T1", "N'", "T2", "M2'")
NECK_RESOLUTION = 24


class ScheduleError(ValueError):
    pass


class NonGraphicalError(ValueError):
    pass


class AngleMismatchError(ValueError):
    pass


# --- schedule ---------------------------------------------------------------


@dataclass(frozen=True)
class GluingSchedule:
    """delta = alpha / C_delta and eps = alpha^{1 + 1/n} / C_eps.

    ``ball`` is the radius of the fixed ball B outside which the weight is R.
    """

    alpha: float
    c_delta: float = 4.0
    c_eps: float = 32.0
    r0: float = 2.0
    R: float = 1.0
    n: int = 3
    beta: float = 0.1
    ball: float = 0.3

    def __post_init__(self):
        for name in ("alpha", "c_delta", "c_eps", "r0", "R", "ball"):
            if not getattr(self, name) > 0:
                raise ScheduleError(f"{name} must be positive")
        if self.n < 2:
            raise ScheduleError("n must be at least 2")
        if not 0 < self.beta < 1:
            raise ScheduleError("beta must lie in (0, 1)")
        if self.delta <= 2 * self.eps * self.r0:
            raise ScheduleError(
                f"alpha={self.alpha} too large: delta={self.delta:.3g} <= 2 eps r0={2 * self.eps * self.r0:.3g}"
            )
        if self.delta >= self.ball:
            raise ScheduleError(f"alpha={self.alpha} too large: delta must stay inside the ball B")

    @property
    def delta(self) -> float:
        return self.alpha / self.c_delta

    @property
    def eps(self) -> float:
        return self.alpha ** (1.0 + 1.0 / self.n) / self.c_eps

    @property
    def max_alpha(self) -> float:
        """Supremum of admissible alpha for these constants."""
        a1 = (self.c_eps / (2.0 * self.r0 * self.c_delta)) ** self.n
        return min(a1, self.ball * self.c_delta)

    def with_alpha(self, alpha: float) -> "GluingSchedule":
        return GluingSchedule(alpha, self.c_delta, self.c_eps, self.r0, self.R, self.n, self.beta, self.ball)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "c_delta": self.c_delta, "c_eps": self.c_eps, "r0": self.r0,
            "R": self.R, "n": self.n, "beta": self.beta, "ball": self.ball,
            "delta": self.delta, "eps": self.eps,
        }


def schedule(alpha, c_delta=4.0, c_eps=32.0, r0=2.0, R=1.0, n=3, beta=0.1, ball=0.3) -> GluingSchedule:
    return GluingSchedule(alpha, c_delta, c_eps, r0, R, n, beta, ball)


# --- neck potential ---------------------------------------------------------


class NeckPotential:
    """Lagrangian potential of the lower half (s <= -s_min) of a unit neck.

    Over the base plane P(0) the half neck is the graph of p(q) = grad u(q)
    with p_k = b q_k tan psi_k(s(q)), where s(q) solves

        F(q, s) = sum_k q_k^2 / ((1/lambda_k + s^2) cos^2 psi_k(s)) - 1 = 0.

    Integrating p along the curves of constant sphere coordinate x from
    s = -inf gives u(s, x) = sum_k x_k^2 G_k(s).  psi and G are tabulated in
    tau = -1/s on a uniform grid and evaluated by cubic Hermite splines with
    exact derivatives.  Requires n >= 3 (for n = 2 the potential grows like
    log |q| and the integral from infinity diverges).
    """

    def __init__(self, neck: NeckParameters, r0: float = 2.0, intervals: int = 4096):
        if neck.n < 3:
            raise ValueError("neck potentials need n >= 3")
        self.neck = neck.with_scale(1.0) if neck.scale != 1.0 else neck
        self.lam = self.neck.lam
        self.b = self.neck.branch
        self.n = self.neck.n
        gap = r0 * r0 - np.max(1.0 / self.lam)
        if gap <= 0:
            raise NonGraphicalError("r0 is too small: B_{r0} does not contain the neck core")
        self.s_min = float(np.sqrt(gap))
        self.tau_max = 2.0 / self.s_min
        self.intervals = intervals
        self._build()

    def _build(self):
        n, lam, neck = self.n, self.lam, self.neck
        tau = np.linspace(0.0, self.tau_max, self.intervals + 1)
        psi = np.zeros((tau.size, n))
        psi[1:] = neck.psi_lower(-1.0 / tau[1:])
        dpsi = np.stack([_tail_integrand(tau, k, lam) for k in range(n)], axis=1)
        self._psi = CubicHermiteSpline(tau, psi, dpsi, axis=0)

        # cumulative G by 8-point Gauss-Legendre on each interval
        x, w = np.polynomial.legendre.leggauss(8)
        lo, hi = tau[:-1, None], tau[1:, None]
        nodes = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        vals = self._g_tau(nodes.ravel(), neck.psi_lower(-1.0 / nodes.ravel()))
        vals = vals.reshape(nodes.shape + (n,))
        pieces = np.einsum("ijk,j->ik", vals, w) * 0.5 * (hi - lo)
        G = np.vstack([np.zeros((1, n)), np.cumsum(pieces, axis=0)])
        dG = np.zeros((tau.size, n))
        dG[1:] = self._g_tau(tau[1:], psi[1:])
        # finite limit at tau = 0 (zero for n > 3)
        dG[0] = self._g_tau(np.array([1e-6]), neck.psi_lower(np.array([-1e6])))[0]
        self._G = CubicHermiteSpline(tau, G, dG, axis=0)

    def _g_tau(self, tau, psi):
        # b (t sin psi cos psi - (1/lam + t^2) sin^2 psi psi'(t)) / tau^2 with t = -1/tau
        lam = self.lam
        t = -1.0 / tau[:, None]
        dpsi_t = np.stack([_tail_integrand(tau, k, lam) for k in range(self.n)], axis=1) * tau[:, None] ** 2
        sn, cs = np.sin(psi), np.cos(psi)
        g = t * sn * cs - (1.0 / lam + t * t) * sn * sn * dpsi_t
        return self.b * g / tau[:, None] ** 2

    # -- solve s(q) --
    def _F(self, q2, tau):
        s = -1.0 / tau
        psi = self._psi(tau)
        den = (1.0 / self.lam + (s * s)[:, None]) * np.cos(psi) ** 2
        return (q2 / den).sum(axis=1) - 1.0

    def solve(self, q) -> tuple[np.ndarray, np.ndarray]:
        """(s, valid) for base points q of shape (N, n)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        q2 = q * q
        r = np.linalg.norm(q, axis=1)
        valid = self._F(q2, np.full(len(q), self.tau_max)) > 0
        # F < 0 once |s| > |q| / min cos psi
        cmin = np.cos(self._psi(np.array([self.tau_max]))[0]).min()
        hi = np.full(len(q), self.tau_max)
        lo = np.minimum(0.999 * cmin / np.maximum(r, 1e-300), hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = self._F(q2, np.maximum(mid, 1e-300))
            neg = fm < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1e-300)):
                break
        tau = 0.5 * (lo + hi)
        return -1.0 / tau, valid

    def evaluate(self, q):
        """u, grad u and Hess u at base points q (N, n), unit scale.

        Raises NonGraphicalError if a point lies over the neck core.
        """
        q = np.atleast_2d(np.asarray(q, dtype=float))
        s, valid = self.solve(q)
        if not valid.all():
            raise NonGraphicalError("base point lies over the non-graphical core of the neck")
        tau = -1.0 / s
        lam, b = self.lam, self.b
        psi = self._psi(tau)
        dpsi = self._psi(tau, 1) * tau[:, None] ** 2  # d psi / ds
        rho2 = 1.0 / lam + (s * s)[:, None]
        cs, tn = np.cos(psi), np.tan(psi)
        x2 = q * q / (rho2 * cs * cs)
        u = (x2 * self._G(tau)).sum(axis=1)
        p = b * q * tn
        fq = 2.0 * q / (rho2 * cs * cs)
        fs = -(q * q * 2.0 * (s[:, None] - rho2 * tn * dpsi) / (rho2 * rho2 * cs * cs)).sum(axis=1)
        ds_dq = -fq / fs[:, None]
        hess = b * (np.einsum("ij,jk->ijk", tn, np.eye(self.n))
                    + (q / (cs * cs) * dpsi)[:, :, None] * ds_dq[:, None, :])
        hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
        return u, p, hess


def neck_potential(neck: NeckParameters, q, base: str = "lower", r0: float = 2.0, potential: NeckPotential | None = None):
    """Potential u of the scaled neck over one asymptotic plane.

    ``q`` are base-plane coordinates (canonical coordinates of P(0) for the
    lower half, of D^{-1} xi for the upper half).  Returns (u, grad u, Hess u)
    with u_eps(q) = eps^2 u(q / eps); the upper half is the graph of -grad u.
    """
    if base not in ("lower", "upper"):
        raise ValueError("base must be 'lower' or 'upper'")
    pot = potential if potential is not None else NeckPotential(neck, r0)
    eps = neck.scale
    u, p, h = pot.evaluate(np.atleast_2d(q) / eps)
    sign = 1.0 if base == "lower" else -1.0
    return sign * eps * eps * u, sign * eps * p, sign * h


def potential_residual(neck: NeckParameters, q, r0: float = 2.0, h_rel: float = 1e-3, potential=None) -> float:
    """sup |grad_FD u - p| where p is the neck's own graph function.

    A fourth-order central difference of the tabulated potential is compared
    with the exact graph of the half neck at the same base points.
    """
    pot = potential if potential is not None else NeckPotential(neck, r0)
    q = np.atleast_2d(np.asarray(q, dtype=float)) / neck.scale
    _, p, _ = pot.evaluate(q)
    h = h_rel * np.linalg.norm(q, axis=1)
    grad = np.empty_like(q)
    for j in range(q.shape[1]):
        e = np.zeros(q.shape[1])
        e[j] = 1.0
        f = [pot.evaluate(q + c * h[:, None] * e)[0] for c in (-2, -1, 1, 2)]
        grad[:, j] = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
    return float(np.abs(grad - p).max() * neck.scale)


# --- cutoff -----------------------------------------------------------------


CUTOFF_ORDER = 4


def smoothstep(order: int) -> np.polynomial.Polynomial:
    """Polynomial step of degree 2*order+1 with derivatives up to ``order``
    vanishing at t = 0 and t = 1."""
    from math import comb

    k = order
    coef = np.zeros(2 * k + 2)
    for j in range(k + 1):
        coef[k + 1 + j] = comb(k + j, j) * comb(2 * k + 1, k - j) * (-1) ** j
    return np.polynomial.Polynomial(coef)


def cutoff(r, delta: float, order: int = CUTOFF_ORDER):
    """chi, chi', chi'' for the polynomial step: 1 on [0, delta/2], 0 beyond delta.

    ``order`` = 2 gives the quintic step; the default order 4 (degree 9) keeps
    the third and fourth derivatives continuous so grad H stays bounded.
    """
    r = np.asarray(r, dtype=float)
    a = 0.5 * delta
    t = np.clip((r - a) / a, 0.0, 1.0)
    inside = (r > a) & (r < delta)
    step = smoothstep(order)
    chi = 1.0 - step(t)
    d1 = np.where(inside, -step.deriv(1)(t) / a, 0.0)
    d2 = np.where(inside, -step.deriv(2)(t) / (a * a), 0.0)
    return chi, d1, d2


# --- model ------------------------------------------------------------------


@dataclass
class ModelSamples:
    region: np.ndarray  # tag strings
    sheet: np.ndarray  # 0 for N', 1 or 2 for the graph sheets
    base: np.ndarray  # base-plane coordinates, NaN on N'
    points: np.ndarray  # complex (N, n), ambient coordinates
    frames: np.ndarray  # (N, 2n, n) orthonormal oriented tangent frames
    theta: np.ndarray
    H: np.ndarray  # |H| = |grad theta|
    grad_H: np.ndarray  # Frobenius norm of the FD Hessian of theta (proxy)
    weight: np.ndarray  # volume weights
    rho: np.ndarray = field(default=None)

    def __len__(self):
        return self.theta.size

    @property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(np.concatenate([self.points.real, self.points.imag], axis=1), axis=1)

    def subset(self, mask) -> "ModelSamples":
        return ModelSamples(*(getattr(self, f)[mask] for f in
                              ("region", "sheet", "base", "points", "frames", "theta", "H", "grad_H", "weight", "rho")))


@dataclass
class GluedLagrangianModel:
    schedule: GluingSchedule
    eta: OrientedPlane
    xi: OrientedPlane
    angles: np.ndarray  # canonical angles, coordinate order
    neck: NeckParameters
    frame: np.ndarray  # unitary U: canonical -> ambient coordinates
    samples: ModelSamples
    extent: float
    geometry: "GlueGeometry | None" = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.schedule.n

    def region_mask(self, tag: str) -> np.ndarray:
        return self.samples.region == tag

    def to_dict(self) -> dict:
        sm = self.samples
        return {
            "schedule": self.schedule.to_dict(),
            "angles": self.angles.tolist(),
            "neck": {"lambda": self.neck.lam.tolist(), "theta": self.neck.theta.tolist(),
                     "scale": self.neck.scale, "branch": self.neck.branch},
            "samples": {
                "region": sm.region.tolist(),
                "points_re": sm.points.real.tolist(),
                "points_im": sm.points.imag.tolist(),
                "theta": sm.theta.tolist(),
                "H": sm.H.tolist(),
                "rho": sm.rho.tolist(),
                "weight": sm.weight.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _match_neck(neck: NeckParameters, theta: np.ndarray, branch: int, eps: float) -> NeckParameters:
    if neck.branch != branch:
        raise AngleMismatchError("neck branch does not match the sign case of the pair")
    i_n, i_t = np.argsort(neck.theta), np.argsort(theta)
    if np.abs(neck.theta[i_n] - theta[i_t]).max() > 1e-8:
        raise AngleMismatchError("neck angles differ from the canonical angles of the pair")
    perm = np.empty_like(i_t)
    perm[i_t] = i_n
    return NeckParameters(neck.lam[perm], theta, eps, branch, max(neck.resolution, NECK_RESOLUTION))


def _real_frames(tangent: np.ndarray) -> np.ndarray:
    real = np.concatenate([tangent.real, tangent.imag], axis=1)
    q, r = np.linalg.qr(real)
    return q * np.sign(np.einsum("nii->ni", r))[:, None, :]


def _graph_angle(hess: np.ndarray) -> np.ndarray:
    return np.arctan(np.linalg.eigvalsh(hess)).sum(axis=1)


class _Sheet:
    """Cut-off potential v = sign * chi * u_eps over one base plane."""

    def __init__(self, pot: NeckPotential, sched: GluingSchedule, sign: float, order: int):
        self.pot, self.sched, self.sign, self.order = pot, sched, sign, order

    def fields(self, q):
        eps, delta = self.sched.eps, self.sched.delta
        q = np.atleast_2d(q)
        r = np.linalg.norm(q, axis=1)
        n = q.shape[1]
        grad = np.zeros_like(q)
        hess = np.zeros((len(q), n, n))
        act = r < delta
        if act.any():
            qa, ra = q[act], r[act]
            u, p, h = self.pot.evaluate(qa / eps)
            u, p = eps * eps * u, eps * p
            chi, d1, d2 = cutoff(ra, delta, self.order)
            qh = qa / ra[:, None]
            grad[act] = chi[:, None] * p + (d1 * u)[:, None] * qh
            outer = np.einsum("ij,ik->ijk", qh, qh)
            sym = np.einsum("ij,ik->ijk", qh, p)
            hess[act] = (chi[:, None, None] * h + d1[:, None, None] * (sym + np.swapaxes(sym, 1, 2))
                         + (u * d2)[:, None, None] * outer
                         + (u * d1 / ra)[:, None, None] * (np.eye(n) - outer))
        return self.sign * grad, self.sign * hess

    def theta(self, q):
        # sheet 2 is rotated by D and reoriented; the two phase shifts cancel
        return _graph_angle(self.fields(q)[1])


def _fd_derivatives(fn, q, h):
    """Fourth-order gradient and second-order Hessian of a scalar field."""
    n = q.shape[1]
    eye = np.eye(n)
    f0 = fn(q)
    grad = np.empty_like(q)
    hess = np.empty((len(q), n, n))
    fp = {}
    for j in range(n):
        vals = [fn(q + c * h[:, None] * eye[j]) for c in (-2, -1, 1, 2)]
        grad[:, j] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
        hess[:, j, j] = (vals[2] - 2 * f0 + vals[1]) / (h * h)
        fp[j] = vals
    for j in range(n):
        for k in range(j + 1, n):
            pp = fn(q + h[:, None] * (eye[j] + eye[k]))
            mm = fn(q - h[:, None] * (eye[j] + eye[k]))
            hjk = (pp - fp[j][2] - fp[k][2] + 2 * f0 - fp[j][1] - fp[k][1] + mm) / (2 * h * h)
            hess[:, j, k] = hess[:, k, j] = hjk
    return grad, hess


class GlueGeometry:
    """Sheets and neck of M_alpha for one pair, in ambient coordinates.

    Sheet 1 is a graph over ``eta``, sheet 2 a graph over ``xi``. Base points
    are given in the orthonormal coordinates of the respective base plane
    (the columns of ``base_frame(sheet)``).
    """

    def __init__(self, pair, sched: GluingSchedule, neck: NeckParameters | None = None,
                 cutoff_order: int = CUTOFF_ORDER):
        eta, xi = pair
        if sched.n != eta.n:
            raise ValueError("schedule dimension differs from the planes")
        ang, U = canonical_frame(eta, xi)
        phi = np.asarray(ang.signed)
        if abs(np.abs(phi).sum() - np.pi) > 1e-8:
            raise AngleMismatchError("pair does not satisfy the angle criterion")
        self.branch = 1 if phi.sum() > 0 else -1
        theta = self.branch * phi
        if neck is None:
            neck = NeckParameters.from_angles(theta, sched.eps, self.branch, NECK_RESOLUTION)
        else:
            neck = _match_neck(neck, theta, self.branch, sched.eps)
        self.eta, self.xi, self.sched, self.phi = eta, xi, sched, phi
        self.neck, self.U = neck, U
        self.unit = neck.with_scale(1.0)
        self.pot = NeckPotential(self.unit, sched.r0)
        self.rot = np.exp(1j * self.branch * theta)
        self.sheets = {1: _Sheet(self.pot, sched, 1.0, cutoff_order),
                       2: _Sheet(self.pot, sched, -1.0, cutoff_order)}

    @property
    def n(self) -> int:
        return self.sched.n

    def base_frame(self, sheet: int) -> np.ndarray:
        """Complex n x n matrix whose columns span the base plane in C^n."""
        if sheet == 1:
            return self.U.copy()
        b = self.U * self.rot[None, :]
        b[:, 0] *= -1
        return b

    def to_base(self, sheet: int, z) -> np.ndarray:
        """Base coordinates of ambient points lying on the base plane."""
        w = np.linalg.solve(self.base_frame(sheet), np.atleast_2d(z).T).T
        return w.real

    def core_radius(self) -> float:
        """Smallest base radius at which the graph description is used."""
        psi = self.pot._psi(np.array([self.pot.tau_max]))[0]
        return self.sched.eps * self.sched.r0 * np.cos(psi).min()

    def sheet_fields(self, sheet: int, q, derivatives: bool = True) -> dict:
        """Ambient points, frames, theta, |H| and the grad-H proxy on a sheet.

        ``q`` are base coordinates; on sheet 2 the first coordinate is
        reversed, matching the orientation of ``xi``.
        """
        q = np.atleast_2d(np.asarray(q, dtype=float))
        n, delta = self.n, self.sched.delta
        qc = q.copy()
        if sheet == 2:
            qc[:, 0] *= -1
        sh = self.sheets[sheet]
        rq = np.linalg.norm(qc, axis=1)
        grad, hess = sh.fields(qc)
        tangent = np.eye(n)[None] + 1j * hess
        pts = qc + 1j * grad
        if sheet == 2:
            pts = pts * self.rot
            tangent = tangent * self.rot[None, :, None]
            tangent[:, :, 0] *= -1
        frames = unitary_to_real(self.U)[None] @ _real_frames(tangent)
        g = np.eye(n)[None] + hess @ hess
        act = rq < delta
        theta = np.where(act, _graph_angle(hess), 0.0)
        H = np.zeros(len(q))
        gH = np.zeros(len(q))
        if derivatives and act.any():
            qa = qc[act]
            h = 5e-3 * np.linalg.norm(qa, axis=1)
            dth, d2th = _fd_derivatives(sh.theta, qa, h)
            gin = np.linalg.inv(g[act])
            H[act] = np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", dth, gin, dth), 0.0))
            gH[act] = np.linalg.norm(d2th, axis=(1, 2))
        return {"points": pts @ self.U.T, "frames": frames, "theta": theta, "H": H,
                "grad_H": gH, "area": np.sqrt(np.linalg.det(g)), "base_radius": rq}

    def graph_valid(self, sheet: int, q) -> np.ndarray:
        """Base points whose graph point lies outside the exact core B_{eps r0}."""
        eps, r0, delta = self.sched.eps, self.sched.r0, self.sched.delta
        q = np.atleast_2d(q)
        rq = np.linalg.norm(q, axis=1)
        _, ok = self.pot.solve(q / eps)
        rad = np.full(len(q), np.inf)
        if ok.any():
            _, p, _ = self.pot.evaluate(q[ok] / eps)
            rad[ok] = np.sqrt(rq[ok] ** 2 + (eps * np.linalg.norm(p, axis=1)) ** 2)
        return (rq >= delta) | (ok & (rad >= eps * r0))

    def neck_fields(self, s, dirs) -> dict:
        """Points and frames of the scaled neck at parameters s and sphere points."""
        ns = sample_neck(self.unit, np.asarray(s, dtype=float), np.atleast_2d(dirs))
        eps = self.sched.eps
        frames = ns.frames
        det = np.linalg.det(frames[:, :self.n] + 1j * frames[:, self.n:])
        return {"points": (eps * ns.points) @ self.U.T,
                "frames": unitary_to_real(self.U)[None] @ frames,
                "theta": np.angle(det), "s": ns.s, "sphere_index": ns.sphere_index,
                "jacobian": eps ** self.n * _neck_jacobian(self.unit, ns.s, np.atleast_2d(dirs)[ns.sphere_index]),
                "unit_points": ns.points}


def interpolate(
    pair: tuple[OrientedPlane, OrientedPlane],
    neck: NeckParameters | None = None,
    sched: GluingSchedule | None = None,
    n_dir: int = 64,
    per_octave: int = 8,
    annulus: int = 32,
    n_s: int = 48,
    extent: float = 0.5,
    cutoff_order: int = CUTOFF_ORDER,
) -> GluedLagrangianModel:
    """Build M_alpha for a pair of SLag planes meeting the angle criterion.

    Parameters
    ----------
    pair : (eta, xi)
        Special Lagrangian planes through the origin.
    neck : NeckParameters, optional
        Neck whose angles match the canonical angles of the pair; built from
        them when omitted.
    sched : GluingSchedule
        Provides alpha, delta, eps and the region radii.
    n_dir, per_octave, annulus, n_s
        Sampling: directions on S^{n-1}, radial samples per octave, extra
        radial samples across the annulus, and s-samples across the core.
    extent : float
        Radius of the sampled part of each plane.
    cutoff_order : int
        Smoothness of the polynomial cutoff (see ``cutoff``).
    """
    eta, xi = pair
    if sched is None:
        sched = schedule(0.1, n=eta.n)
    if extent <= sched.ball:
        raise ValueError("extent must exceed the ball radius")
    geo = GlueGeometry(pair, sched, neck, cutoff_order)
    eps, delta, r0, n = sched.eps, sched.delta, sched.r0, eta.n
    dirs = sphere_grid(n, n_dir)
    area = 2 * np.pi ** (n / 2) / gamma(n / 2) / n_dir

    # radial grid shared by both sheets
    r_start = geo.core_radius() * 0.99
    octaves = np.log2(extent / r_start)
    radii = np.unique(np.concatenate([
        np.geomspace(r_start, extent, int(np.ceil(octaves * per_octave)) + 1),
        np.linspace(0.5 * delta, delta, annulus),
    ]))
    dr = np.gradient(radii)

    parts = []
    for sheet_id in (1, 2):
        q = (radii[:, None, None] * dirs[None]).reshape(-1, n)
        wr = np.repeat(radii ** (n - 1) * dr, len(dirs)) * area
        keep = geo.graph_valid(sheet_id, q)
        q, wr = q[keep], wr[keep]
        f = geo.sheet_fields(sheet_id, q)
        rq = f["base_radius"]
        tag = np.where(rq < delta, f"T{sheet_id}", f"M{sheet_id}'")
        parts.append((tag, np.full(len(q), sheet_id), q, f["points"], f["frames"], f["theta"],
                      f["H"], f["grad_H"], wr * f["area"]))

    # exact neck core N' = M_alpha inside B_{eps r0}
    s_c = np.sqrt(max(r0 * r0 - np.min(1.0 / geo.unit.lam), 1e-12))
    s_grid = np.linspace(-s_c, s_c, n_s)
    nf = geo.neck_fields(s_grid, dirs)
    inside = np.linalg.norm(nf["unit_points"], axis=1) < r0
    w_core = nf["jacobian"] * (s_grid[1] - s_grid[0]) * area
    m = int(inside.sum())
    parts.append((np.full(m, "N'"), np.zeros(m, dtype=int), np.full((m, n), np.nan),
                  nf["points"][inside], nf["frames"][inside], nf["theta"][inside],
                  # theta is constant on the exact neck, so its gradient vanishes
                  np.zeros(m), np.zeros(m), w_core[inside]))

    cols = [np.concatenate([p[i] for p in parts]) for i in range(9)]
    region, sheet, base, pts, frames, th, Hn, gH, wts = cols
    samples = ModelSamples(region.astype(object), sheet, base, pts, frames, th, Hn, gH, wts)
    model = GluedLagrangianModel(sched, eta, xi, geo.phi, geo.neck, geo.U, samples, extent, geo)
    samples.rho = weight_function(model)
    return model


def _neck_jacobian(neck: NeckParameters, s, x) -> np.ndarray:
    """Area element of the unit neck in the (s, sphere) parametrisation."""
    fr = sphere_frames(x)
    xs, tangents = fr[:, :, 0], fr[:, :, 1:]
    b = neck.branch
    psi, dpsi, r = neck.psi(s), neck.dpsi(s), neck.radii(s)
    ph = np.exp(1j * b * psi)
    ds = xs * ph * (s[:, None] / r + 1j * b * r * dpsi)
    dt = tangents * (r * ph)[:, :, None]
    d = np.concatenate([ds[:, :, None], dt], axis=2)
    real = np.concatenate([d.real, d.imag], axis=1)
    return np.sqrt(np.linalg.det(np.swapaxes(real, 1, 2) @ real))


def lagrangian_angle_field(model: GluedLagrangianModel) -> np.ndarray:
    return model.samples.theta


def weight_function(model: GluedLagrangianModel) -> np.ndarray:
    """rho = eps R on B_{eps r0}, R outside B, linear in |x| in between."""
    sc = model.schedule
    lo, hi = sc.eps * sc.r0, sc.ball
    r = model.samples.radius
    t = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
    return sc.eps * sc.R + (sc.R - sc.eps * sc.R) * t


# --- norms ------------------------------------------------------------------


def holder_proxies(fields: dict, positions, rho, beta: float, groups=None, chunk: int = 256) -> dict:
    """max |f(a) - f(b)| / |a - b|^beta over pairs with 0.1 rho(a) <= |a - b| <= rho(a).

    Pairs are taken inside each group (region); vector-valued fields use the
    Euclidean norm of the difference.  All fields share one distance pass.
    """
    x = np.asarray(positions, dtype=float)
    rho = np.asarray(rho, dtype=float)
    vals = {k: np.asarray(v, dtype=float).reshape(len(x), -1) for k, v in fields.items()}
    groups = np.zeros(len(x), dtype=int) if groups is None else np.asarray(groups)
    best = dict.fromkeys(fields, 0.0)
    for g in np.unique(groups):
        idx = np.flatnonzero(groups == g)
        live = [k for k, v in vals.items() if np.ptp(v[idx], axis=0).max() > 0.0]
        if not live:
            continue
        xg, rg = x[idx], rho[idx]
        for a in range(0, len(idx), chunk):
            d = np.linalg.norm(xg[a:a + chunk, None] - xg[None], axis=2)
            r = rg[a:a + chunk, None]
            win = (d >= 0.1 * r) & (d <= r)
            if not win.any():
                continue
            dq = np.where(win, d, 1.0) ** beta
            for k in live:
                vg = vals[k][idx]
                diff = np.linalg.norm(vg[a:a + chunk, None] - vg[None], axis=2)
                best[k] = max(best[k], float(np.where(win, diff / dq, 0.0).max()))
    return best


def holder_proxy(values, positions, rho, beta: float, groups=None) -> float:
    """Single-field version of ``holder_proxies``."""
    return holder_proxies({"f": values}, positions, rho, beta, groups)["f"]


@dataclass(frozen=True)
class WeightedNormReport:
    k: int
    beta: float
    sup: float
    grad: float = 0.0
    hess: float = 0.0
    holder: float = 0.0

    @property
    def composite(self) -> float:
        return self.sup + self.grad + self.hess + self.holder

    def to_dict(self) -> dict:
        return {"k": self.k, "beta": self.beta, "sup": self.sup, "grad": self.grad,
                "hess": self.hess, "holder": self.holder, "composite": self.composite}


def weighted_norm(values, rho, k: int = 0, beta: float = 0.1, positions=None, grad=None, hess=None, groups=None) -> WeightedNormReport:
    """Discrete rho-weighted C^{k,beta} norm.

    k = 0: |u|_0 + [rho^beta u]_beta.
    k = 2: |u|_0 + |rho grad u|_0 + |rho^2 grad^2 u|_0 + [rho^{2+beta} grad^2 u]_beta.
    The Holder term is the difference-quotient proxy of ``holder_proxy`` and
    is omitted when no positions are given.
    """
    if k not in (0, 2):
        raise ValueError("k must be 0 or 2")
    u = np.asarray(values, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sup = float(np.abs(u).max()) if u.size else 0.0
    if k == 0:
        hol = 0.0 if positions is None else holder_proxy(rho**beta * u, positions, rho, beta, groups)
        return WeightedNormReport(0, beta, sup, holder=hol)
    if grad is None or hess is None:
        raise ValueError("k = 2 needs grad and hess samples")
    g = np.asarray(grad, dtype=float).reshape(len(u), -1)
    h = np.asarray(hess, dtype=float).reshape(len(u), -1)
    gterm = float((rho * np.linalg.norm(g, axis=1)).max())
    hterm = float((rho**2 * np.linalg.norm(h, axis=1)).max())
    hol = 0.0
    if positions is not None:
        hol = holder_proxy(rho[:, None] ** (2 + beta) * h, positions, rho, beta, groups)
    return WeightedNormReport(2, beta, sup, gterm, hterm, hol)


def _real_points(model) -> np.ndarray:
    p = model.samples.points
    return np.concatenate([p.real, p.imag], axis=1)


def residual_report(model: GluedLagrangianModel, holder: bool = True) -> dict:
    """Sup norms, gradient bounds and Holder proxies of sin, 1 - cos and |H|."""
    sm = model.samples
    th, H = sm.theta, sm.H
    beta = model.schedule.beta
    pos = _real_points(model)
    groups = sm.region.astype(str)
    sin, omc = np.sin(th), 1.0 - np.cos(th)
    rho2sin = sm.rho**2 * sin
    rep = {
        "sup_sin": float(np.abs(sin).max()),
        "sup_grad_sin": float((np.abs(np.cos(th)) * H).max()),
        "sup_1mcos": float(omc.max()),
        "sup_grad_cos": float((np.abs(sin) * H).max()),
        "sup_H": float(H.max()),
        "sup_grad_H": float(sm.grad_H.max()),
        "sup_rho2_sin": float(np.abs(rho2sin).max()),
        # the cut ball is measured in base radius, as is the cutoff
        "sup_sin_outside": float(np.abs(sin[np.nan_to_num(np.linalg.norm(sm.base, axis=1)) >= model.schedule.delta]).max(initial=0.0)),
    }
    if holder:
        rho = sm.rho
        hol = holder_proxies({"sin": sin, "cos": omc, "H": H, "w": rho**beta * rho2sin}, pos, rho, beta, groups)
        rep["holder_sin"], rep["holder_cos"], rep["holder_H"] = hol["sin"], hol["cos"], hol["H"]
        rep["weighted_rho2_sin"] = rep["sup_rho2_sin"] + hol["w"]
    return rep


def lagrangian_defect(model: GluedLagrangianModel) -> float:
    """sup |omega_0| restricted to the sample tangent frames."""
    f = model.samples.frames
    n = model.n
    x, y = f[:, :n], f[:, n:]
    om = np.einsum("nki,nkj->nij", x, y) - np.einsum("nki,nkj->nij", y, x)
    return float(np.abs(om).max())


def distance_to_planes(model: GluedLagrangianModel) -> float:
    """sup over samples of the distance to eta union xi (Hausdorff proxy)."""
    pts = model.samples.points
    d = []
    for p in (model.eta, model.xi):
        basis = p.complex_basis
        # orthogonal projection onto the real span of the columns
        real = np.concatenate([basis.real, basis.imag], axis=0)
        v = np.concatenate([pts.real, pts.imag], axis=1)
        d.append(np.linalg.norm(v - (v @ real) @ real.T, axis=1))
    return float(np.minimum(*d).max())


def rho_inverse_l2(model: GluedLagrangianModel) -> float:
    """Discrete ||rho^{-1}||_{L^2}."""
    sm = model.samples
    return float(np.sqrt((sm.weight / sm.rho**2).sum()))


def rho_lipschitz(model: GluedLagrangianModel) -> float:
    """max |rho(a) - rho(b)| / |a - b| over nearest sample pairs."""
    from scipy.spatial import cKDTree

    pos = _real_points(model)
    rho = model.samples.rho
    d, j = cKDTree(pos).query(pos, k=2)
    ok = d[:, 1] > 0
    return float((np.abs(rho[ok] - rho[j[ok, 1]]) / d[ok, 1]).max())


# --- sweeps -----------------------------------------------------------------


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    if len(set(np.asarray(x, float).tolist())) < 2:
        raise ValueError("a slope needs at least two distinct abscissae")
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def default_pair(n: int = 3) -> tuple[OrientedPlane, OrientedPlane]:
    """x-plane and -P(-pi/n, ..., -pi/n): a symmetric pair with equal-lambda neck."""
    return x_plane(n), -plane_from_angles(np.full(n, -np.pi / n))


SWEEP_COLUMNS = ("alpha", "delta", "eps", "sup_sin", "sup_1mcos", "sup_rho2_sin", "weighted_rho2_sin",
                 "sup_H", "sup_grad_H", "holder_sin", "holder_cos", "holder_H", "rho_inv_l2", "distance")


def glue_sweep(alphas, pair=None, base: GluingSchedule | None = None, holder: bool = True, **sampling) -> tuple[list[dict], dict]:
    """Residuals of M_alpha across ``alphas`` and their fitted log-log slopes."""
    pair = default_pair(3 if base is None else base.n) if pair is None else pair
    base = schedule(alphas[0], n=pair[0].n) if base is None else base
    rows = []
    neck = None
    for a in alphas:
        sc = base.with_alpha(a)
        model = interpolate(pair, neck, sc, **sampling)
        neck = model.neck
        rep = residual_report(model, holder=holder)
        rows.append({"alpha": a, "delta": sc.delta, "eps": sc.eps, **rep,
                     "rho_inv_l2": rho_inverse_l2(model), "distance": distance_to_planes(model)})
    slopes = {key: loglog_slope([r["alpha"] for r in rows], [r[key] for r in rows])
              for key in ("sup_sin", "sup_1mcos", "sup_rho2_sin", "weighted_rho2_sin")
              if len(rows) > 1 and all(r.get(key, 0) > 0 for r in rows)}
    return rows, slopes


def write_sweep_csv(rows: list[dict], slopes: dict, path) -> None:
    cols = [c for c in SWEEP_COLUMNS if c in rows[0]]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols + [f"slope_{k}" for k in slopes])
        for r in rows:
            w.writerow([repr(float(r[c])) for c in cols] + [repr(v) for v in slopes.values()])
