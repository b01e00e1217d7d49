"""Discrete Laplacian on the glued manifold and the linearized operator.

The glued manifold M_alpha is carried by a graph with lumped masses and
edge conductances.  Each flat torus minus a ball around the intersection
point becomes a periodic Cartesian grid; the ball itself is replaced by a
layered cylinder (layers x a triangulated sphere) that follows the graph
sheets of the gluing model and then the neck.  Layer radii and spacings are
measured on the embedded surface, so the neck's capacity comes from its
actual induced metric.

Only n = 3 is supported: the sphere layers use cotangent weights on a
triangulated S^2.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, eigsh, onenormest, splu
from scipy.spatial import ConvexHull, cKDTree

from .gluing import (GluedLagrangianModel, GluingSchedule, default_pair, interpolate, loglog_slope,
                     residual_report, schedule)
from .lawlor import sphere_grid
from .planes import unitary_to_real
from .torus import (CYTorusStructure, DeformationForm, FlatSLagTorus, Lattice, deformation_chi,
                    make_flat_slag, pair_check)

REGIONS = ("M1", "M2", "neck", "transition")
MIN_ANNULUS_LAYERS = 4


class DiscretizationError(ValueError):
    pass


class EigenSolveError(RuntimeError):
    pass


class ConstantFieldError(ValueError):
    pass


# --- the carrier ------------------------------------------------------------


@dataclass
class DiscreteManifold:
    """Vertices with masses, symmetric edge conductances and model fields.

    ``positions`` are real ambient coordinates (R^{2n}) of a representative
    near the intersection point; ``radius`` is the distance to that point.
    ``sheet`` is 1 or 2 on the two tori (and their graph layers) and 0 on
    the neck layers.
    """

    positions: np.ndarray
    region: np.ndarray
    sheet: np.ndarray
    mass: np.ndarray
    edges: np.ndarray
    conductance: np.ndarray
    theta: np.ndarray
    H: np.ndarray
    rho: np.ndarray
    radius: np.ndarray
    frames: np.ndarray | None = None
    volumes: tuple = (np.nan, np.nan)
    schedule: GluingSchedule | None = None
    _K: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(self.mass <= 0) or np.any(self.conductance <= 0):
            raise DiscretizationError("masses and conductances must be positive")

    def __len__(self):
        return self.mass.size

    @property
    def volume(self) -> float:
        return float(self.mass.sum())

    @property
    def stiffness(self) -> sp.csr_matrix:
        """K with u^T K u = sum_edges c (u_i - u_j)^2."""
        if self._K is None:
            i, j = self.edges.T
            c = self.conductance
            N = len(self)
            rows = np.concatenate([i, j, i, j])
            cols = np.concatenate([j, i, i, j])
            vals = np.concatenate([-c, -c, c, c])
            self._K = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
        return self._K

    @property
    def laplacian(self) -> sp.csr_matrix:
        """Delta = -M^{-1} K (non-positive)."""
        return -sp.diags(1.0 / self.mass) @ self.stiffness

    def components(self) -> int:
        return connected_components(self.stiffness, directed=False)[0]

    def integrate(self, f) -> float:
        return float(self.mass @ f)

    def l2(self, f) -> float:
        return float(np.sqrt(self.mass @ (f * f)))

    def grad_sq(self, u) -> np.ndarray:
        """Vertexwise |grad u|^2 from edge differences."""
        i, j = self.edges.T
        e = self.conductance * (u[j] - u[i]) ** 2
        out = np.bincount(i, e, len(self)) + np.bincount(j, e, len(self))
        return out / (2 * self.mass)

    def region_mask(self, tag: str) -> np.ndarray:
        return self.region == tag

    def to_dict(self) -> dict:
        return {
            "vertices": len(self),
            "edges": int(self.edges.shape[0]),
            "volume": self.volume,
            "volumes": list(map(float, self.volumes)),
            "regions": {t: int((self.region == t).sum()) for t in REGIONS},
            "components": int(self.components()),
        }


# --- flat grids -------------------------------------------------------------


def _box_grid(lengths, res: int, hole: float = 0.0, sub: int = 4):
    """Periodic grid on a box torus, optionally minus a ball at the origin.

    Returns per-vertex wrapped coordinates y, kept mask, outside-volume masses,
    internal edges with conductances, and dangling links into the hole.
    """
    L = np.asarray(lengths, dtype=float)
    n = L.size
    N = np.maximum(3, np.rint(L * res).astype(int))
    h = L / N
    idx = np.indices(N).reshape(n, -1).T
    y = idx * h
    y = y - L * np.rint(y / L)
    r = np.linalg.norm(y, axis=1)
    cell = np.prod(h)
    frac = np.ones(len(y))
    if hole > 0:
        near = r < hole + np.linalg.norm(h)
        off = (np.stack(np.meshgrid(*[(np.arange(sub) + 0.5) / sub - 0.5] * n, indexing="ij"), -1)
               .reshape(-1, n) * h)
        pts = y[near][:, None, :] + off[None]
        frac[near] = (np.linalg.norm(pts, axis=2) >= hole).mean(axis=1)
    mass = cell * frac
    kept = r >= hole if hole > 0 else np.ones(len(y), bool)
    flat = np.ravel_multi_index(idx.T, N)
    edges, cond, dangling = [], [], []
    for k in range(n):
        face = cell / h[k]
        for step in (1, -1):
            nb = idx.copy()
            nb[:, k] = (nb[:, k] + step) % N[k]
            j = np.ravel_multi_index(nb.T, N)
            both = kept & kept[j]
            if step == 1:
                edges.append(np.stack([flat[both], j[both]], 1))
                cond.append(np.full(both.sum(), face / h[k]))
            out = kept & ~kept[j]
            if out.any():
                ghost = y[out].copy()
                ghost[:, k] += step * h[k]
                dangling.append((flat[out], ghost, np.full(out.sum(), face)))
    return {"y": y, "kept": kept, "mass": mass, "h": h,
            "edges": np.concatenate(edges) if edges else np.zeros((0, 2), int),
            "cond": np.concatenate(cond) if cond else np.zeros(0),
            "dangling": dangling}


def flat_torus_grid(lengths, resolution: int = 16) -> DiscreteManifold:
    """A flat box torus R^n / prod(L_k Z) as a DiscreteManifold."""
    g = _box_grid(lengths, resolution)
    N = len(g["mass"])
    z = np.zeros(N)
    L = np.asarray(lengths, dtype=float)
    pos = np.concatenate([g["y"], np.zeros_like(g["y"])], axis=1)
    return DiscreteManifold(pos, np.full(N, "M1", dtype=object), np.ones(N, int), g["mass"],
                            g["edges"], g["cond"], z, z.copy(), np.ones(N), np.linalg.norm(g["y"], axis=1),
                            volumes=(float(np.prod(L)), 0.0))


# --- sphere layers ----------------------------------------------------------


def sphere_mesh(count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Points, vertex areas, edges and cotangent weights on S^2."""
    pts = sphere_grid(3, count)
    tri = ConvexHull(pts).simplices
    area = np.zeros(count)
    w = {}
    for t in tri:
        p = pts[t]
        a = 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))
        area[t] += a / 3
        for k in range(3):
            i, j, o = t[(k + 1) % 3], t[(k + 2) % 3], t[k]
            u, v = pts[i] - pts[o], pts[j] - pts[o]
            cot = (u @ v) / np.linalg.norm(np.cross(u, v))
            key = (min(i, j), max(i, j))
            w[key] = w.get(key, 0.0) + 0.5 * cot
    area *= 4 * np.pi / area.sum()
    keys = np.array(sorted(w))
    wt = np.array([w[tuple(k)] for k in keys])
    if np.any(wt <= 0):
        raise DiscretizationError("sphere triangulation is not Delaunay")
    return pts, area, keys, wt


def _weight(r, sched: GluingSchedule) -> np.ndarray:
    lo, hi = sched.eps * sched.r0, sched.ball
    t = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
    return sched.eps * sched.R + (sched.R - sched.eps * sched.R) * t


def _torus_box(M: FlatSLagTorus, geo, sheet: int):
    """Orthonormal box description (lengths, axes) of a flat torus in base coordinates."""
    v = M.torus.lattice.generators @ np.asarray(M.sublattice, dtype=float).T
    z = (v[: M.n] + 1j * v[M.n:]).T
    q = geo.to_base(sheet, z)
    resid = np.abs(np.linalg.solve(geo.base_frame(sheet), z.T).imag).max()
    if resid > 1e-8:
        raise DiscretizationError("torus plane differs from the model's base plane")
    L = np.linalg.norm(q, axis=1)
    gram = (q / L[:, None]) @ (q / L[:, None]).T
    if np.abs(gram - np.eye(M.n)).max() > 1e-9:
        raise DiscretizationError("only rectangular torus lattices are supported")
    return L, q / L[:, None]


def discretize(M1: FlatSLagTorus, M2: FlatSLagTorus, model: GluedLagrangianModel,
               resolution: int = 16, n_sphere: int | None = None, per_octave: int | None = None,
               glue: bool = True) -> DiscreteManifold:
    """Graph carrier of M_alpha built from two flat tori and a gluing model.

    Parameters
    ----------
    M1, M2 : FlatSLagTorus
        Tori through the origin meeting once; their planes must be the
        model's ``eta`` and ``xi``.
    model : GluedLagrangianModel
        Supplies the schedule and the sheet and neck geometry.
    resolution : int
        Cartesian cells per unit length. Defaults ``n_sphere = resolution**2 // 2``
        and ``per_octave = resolution // 2`` follow from it.
    glue : bool
        False leaves the balls unfilled: two components, Neumann boundary.
    """
    geo = model.geometry
    sched = model.schedule
    n = sched.n
    if n != 3:
        raise DiscretizationError("the discretization is implemented for n = 3")
    if not np.allclose(M1.basepoint, 0) or not np.allclose(M2.basepoint, 0):
        raise DiscretizationError("tori must pass through the origin")
    rep = pair_check(M1, M2)
    if not rep.qualified or rep.count != 1:
        raise DiscretizationError("pair must be transverse, meet once and satisfy the angle criterion")
    n_sphere = n_sphere or max(32, resolution * resolution // 2)
    per_octave = per_octave or resolution // 2
    if per_octave < MIN_ANNULUS_LAYERS:
        raise DiscretizationError("fewer than 4 cells across the annulus")
    b = sched.ball
    if 2 * sched.delta >= b:
        raise DiscretizationError("ball radius must exceed 2 delta")
    boxes = [_torus_box(M, geo, s) for M, s in ((M1, 1), (M2, 2))]
    if 2 * b >= min(L.min() for L, _ in boxes) - 2.0 / resolution:
        raise DiscretizationError("ball does not fit inside the tori")

    parts = []  # (positions, region, sheet, mass, theta, H, radius, frames)
    edges, cond = [], []
    offset = 0

    def add(pos, region, sheet, mass, theta, H, radius, frames):
        nonlocal offset
        parts.append((pos, region, sheet, mass, theta, H, radius, frames))
        offset += len(mass)
        return offset - len(mass)

    grids = []
    for sheet, (L, axes) in ((1, boxes[0]), (2, boxes[1])):
        g = _box_grid(L, resolution, b)
        keep = g["kept"]
        ids = np.full(len(keep), -1)
        ids[keep] = np.arange(keep.sum())
        q = g["y"][keep] @ axes
        z = q @ geo.base_frame(sheet).T
        pos = np.concatenate([z.real, z.imag], axis=1)
        frame = unitary_to_real(geo.base_frame(sheet))[:, :n]
        cnt = int(keep.sum())
        start = add(pos, np.full(cnt, f"M{sheet}", dtype=object), np.full(cnt, sheet), g["mass"][keep],
                    np.zeros(cnt), np.zeros(cnt), np.linalg.norm(q, axis=1), np.repeat(frame[None], cnt, 0))
        edges.append(start + ids[g["edges"]])
        cond.append(g["cond"])
        grids.append((g, ids, start, axes))

    if glue:
        dirs, area, sph_edges, sph_w = sphere_mesh(n_sphere)
        layers = _cylinder_layers(geo, sched, dirs, per_octave)
        X = np.stack([l["points"] for l in layers])  # (layers, n_sphere, n) complex
        Xr = np.concatenate([X.real, X.imag], axis=2)
        B = np.linalg.norm(Xr, axis=2).mean(axis=1)
        ell = np.linalg.norm(Xr[1:] - Xr[:-1], axis=2).mean(axis=1)
        thick = np.zeros(len(layers))
        thick[:-1] += ell / 2
        thick[1:] += ell / 2
        nl, ns = X.shape[:2]
        cyl_start = offset
        vid = cyl_start + np.arange(nl * ns).reshape(nl, ns)
        for i, l in enumerate(layers):
            add(Xr[i], np.full(ns, l["region"], dtype=object), np.full(ns, l["sheet"]),
                B[i] ** 2 * area * thick[i], l["theta"], l["H"], np.linalg.norm(Xr[i], axis=1), l["frames"])
            edges.append(vid[i][sph_edges])
            cond.append(sph_w * thick[i])
        Bm = 0.5 * (B[1:] + B[:-1])
        for i in range(nl - 1):
            edges.append(np.stack([vid[i], vid[i + 1]], 1))
            cond.append(Bm[i] ** 2 * area / ell[i])

        # join the Cartesian grids to the outer cylinder layers
        tree = cKDTree(dirs)
        extra_mass = np.zeros(offset)
        for (g, ids, start, axes), outer, flip in zip(grids, (0, nl - 1), (False, True)):
            for src, ghost, face in g["dangling"]:
                yq = g["y"][src] @ axes
                gq = ghost @ axes
                d0, d1 = np.linalg.norm(yq, axis=1), np.linalg.norm(gq, axis=1)
                t = np.clip((d0 - b) / np.maximum(d0 - d1, 1e-300), 0.0, 1.0)
                hit = yq + t[:, None] * (gq - yq)
                j = tree.query(_unflip(hit, flip) / np.linalg.norm(hit, axis=1, keepdims=True))[1]
                dist = np.linalg.norm(yq - b * _unflip(dirs[j], flip), axis=1)
                edges.append(np.stack([start + ids[src], vid[outer, j]], 1))
                cond.append(face / dist)
            lost = ~g["kept"] & (g["mass"] > 0)
            if lost.any():
                yq = g["y"][lost] @ axes
                nrm = np.linalg.norm(yq, axis=1, keepdims=True)
                nrm[nrm == 0] = 1.0
                j = tree.query(_unflip(yq / nrm, flip))[1]
                np.add.at(extra_mass, vid[outer, j], g["mass"][lost])

    cols = [np.concatenate([p[i] for p in parts]) for i in range(8)]
    pos, region, sheet, mass, theta, H, radius, frames = cols
    if glue:
        mass = mass + extra_mass
    E = np.concatenate(edges).astype(int)
    C = np.concatenate(cond)
    m = DiscreteManifold(pos, region, sheet.astype(int), mass, E, C, theta, H, _weight(radius, sched),
                         radius, frames, (M1.volume, M2.volume), sched)
    return m


def _unflip(q, flip: bool):
    # sheet-2 base coordinates reverse the first canonical axis
    if not flip:
        return q
    q = np.array(q, dtype=float)
    q[..., 0] *= -1
    return q


def _cylinder_layers(geo, sched: GluingSchedule, dirs, per_octave: int) -> list[dict]:
    """Layers from the outer edge of sheet 1 through the neck to sheet 2."""
    eps, delta, b = sched.eps, sched.delta, sched.ball
    lam = geo.unit.lam
    # neck part: base radius up to delta / 2, where the cutoff is identically 1
    s_max = np.sqrt(max((0.5 * delta / eps) ** 2 - np.mean(1.0 / lam), 1.0))
    dtau = np.log(2.0) / per_octave
    k = max(2, int(np.ceil(np.arcsinh(s_max) / dtau)))
    s_grid = np.sinh(np.linspace(-np.arcsinh(s_max), np.arcsinh(s_max), 2 * k + 1))
    nf = geo.neck_fields(s_grid, dirs)
    ns = len(dirs)
    r1 = eps * np.linalg.norm(nf["unit_points"].reshape(len(s_grid), ns, -1)[0], axis=1).mean()
    octaves = np.log2(b / r1)
    radii = np.geomspace(r1, b, int(np.ceil(octaves * per_octave)) + 1)[1:]
    if ((radii >= 0.5 * delta) & (radii < delta)).sum() < MIN_ANNULUS_LAYERS:
        raise DiscretizationError("fewer than 4 cells across the annulus")

    def graph_layer(sheet, r):
        q = _unflip(r * dirs, sheet == 2)
        f = geo.sheet_fields(sheet, q)
        region = "transition" if r < delta else f"M{sheet}"
        return {"points": f["points"], "frames": f["frames"], "theta": f["theta"], "H": f["H"],
                "region": region, "sheet": sheet}

    layers = [graph_layer(1, r) for r in radii[::-1]]
    pts = nf["points"].reshape(len(s_grid), ns, -1)
    frames = nf["frames"].reshape(len(s_grid), ns, *nf["frames"].shape[1:])
    theta = nf["theta"].reshape(len(s_grid), ns)
    for i in range(len(s_grid)):
        layers.append({"points": pts[i], "frames": frames[i], "theta": theta[i], "H": np.zeros(ns),
                       "region": "neck", "sheet": 0})
    layers += [graph_layer(2, r) for r in radii]
    return layers


# --- eigenvalues ------------------------------------------------------------


def eigensolve(m: DiscreteManifold, k: int = 2, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Lowest k nonzero eigenpairs of K v = lambda M v.

    Shift-invert Lanczos with a small negative shift; the zero modes (one
    per connected component) are removed.  Eigenvalues are returned as
    Rayleigh quotients of the mass-normalised eigenvectors.
    """
    comps = m.components()
    K = m.stiffness
    M = sp.diags(m.mass)
    scale = float(np.median(K.diagonal() / m.mass))
    sigma = -1e-6 * scale
    try:
        vals, vecs = eigsh(K, k=k + comps, M=M, sigma=sigma, which="LM", tol=tol * 1e-2)
    except Exception as exc:  # ARPACK errors carry partial results we do not use
        raise EigenSolveError(str(exc)) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    if np.any(np.abs(vals[:comps]) > 1e-6 * max(abs(vals[comps]), 1e-300) + 1e-10 * scale):
        raise EigenSolveError("expected zero modes were not found")
    vals, vecs = vals[comps:], vecs[:, comps:]
    out = np.empty(k)
    for i in range(k):
        v = vecs[:, i]
        if comps == 1:
            v = v - m.integrate(v) / m.volume
        v = v / m.l2(v)
        vecs[:, i] = v
        out[i] = v @ (K @ v)
    res = np.linalg.norm(K @ vecs - (M @ vecs) * out, axis=0) / np.linalg.norm(K @ vecs, axis=0)
    if np.any(res > 1e-5):
        raise EigenSolveError(f"eigen residuals too large: {res}")
    return out, vecs


def rayleigh_bound(m: DiscreteManifold, f) -> float:
    """int |grad f|^2 / (int f^2 - (int f)^2 / vol)."""
    f = np.asarray(f, dtype=float)
    den = m.integrate(f * f) - m.integrate(f) ** 2 / m.volume
    if den <= 1e-12 * max(m.integrate(f * f), 1e-300) or den <= 0:
        raise ConstantFieldError("test function is (numerically) constant")
    return float(f @ (m.stiffness @ f)) / den


def radial_cutoff(m: DiscreteManifold, delta: float) -> np.ndarray:
    """0 on B_delta, 1 outside B_{2 delta}, linear in |x| in between."""
    return np.clip((m.radius - delta) / delta, 0.0, 1.0)


def _side_volumes(m: DiscreteManifold, delta: float) -> tuple[float, float]:
    out = m.radius >= 2 * delta
    return tuple(float(m.mass[(m.sheet == s) & out].sum()) for s in (1, 2))


def firsteval_testfunction(m: DiscreteManifold, delta: float) -> np.ndarray:
    """phi (X_1 / vol(M1 - B_{2 delta}) - X_2 / vol(M2 - B_{2 delta}))."""
    v1, v2 = _side_volumes(m, delta)
    phi = radial_cutoff(m, delta)
    return phi * np.where(m.sheet == 1, 1.0 / v1, np.where(m.sheet == 2, -1.0 / v2, 0.0))


@dataclass
class SpectralReport:
    lambda1: float
    lambda2: float
    S: np.ndarray = field(repr=False)
    a1: float
    a2: float
    s_error: float  # ||S - phi Sbar||
    sbar_error: float  # ||Sbar - phi Sbar||

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "a1": self.a1, "a2": self.a2,
                "s_error": self.s_error, "sbar_error": self.sbar_error}


def sbar_coefficients(v1: float, v2: float) -> tuple[float, float]:
    c = np.sqrt(v1 * v2 / (v1 + v2))
    return c / v1, -c / v2


def sbar_report(m: DiscreteManifold, S, delta: float, lambdas=(np.nan, np.nan)) -> SpectralReport:
    """Compare S with phi Sbar, Sbar = a1 X_{M1} + a2 X_{M2}; fixes the sign of S."""
    v1, v2 = m.volumes
    a1, a2 = sbar_coefficients(v1, v2)
    sbar = np.where(m.sheet == 1, a1, np.where(m.sheet == 2, a2, 0.0))
    phi = radial_cutoff(m, delta)
    S = np.asarray(S, dtype=float)
    if m.integrate(S * sbar) < 0:
        S = -S
    return SpectralReport(float(lambdas[0]), float(lambdas[1]), S, a1, a2,
                          m.l2(S - phi * sbar), m.l2(sbar - phi * sbar))


# --- linearization ----------------------------------------------------------


def psi_field(m: DiscreteManifold, chi: DeformationForm, correct_phase: bool = True) -> np.ndarray:
    """Im(c Omega + chi) on the unit tangent n-vector of each vertex.

    The constant c = i kappa is fixed by the mean-zero condition; with
    ``correct_phase=False`` the raw values of Im chi are returned.
    """
    if m.frames is None:
        raise ValueError("manifold carries no tangent frames")
    n = m.frames.shape[2]
    raw = chi.evaluate(m.frames)
    if not correct_phase:
        return raw
    re_omega = np.linalg.det(m.frames[:, :n] + 1j * m.frames[:, n:]).real
    kappa = -m.integrate(raw) / m.integrate(re_omega)
    psi = kappa * re_omega + raw
    return psi - m.integrate(psi) / m.volume


def gradient_coupling(m: DiscreteManifold, theta) -> sp.csr_matrix:
    """Matrix of u -> <grad theta, grad u> built from edge differences."""
    i, j = m.edges.T
    c = m.conductance
    dth = theta[j] - theta[i]
    N = len(m)
    wi = c * dth / (2 * m.mass[i])
    wj = c * dth / (2 * m.mass[j])
    rows = np.concatenate([i, i, j, j])
    cols = np.concatenate([j, i, i, j])
    # (G u)_i = w_i (u_j - u_i) and (G u)_j = w_j (u_j - u_i); both use dth = theta_j - theta_i
    vals = np.concatenate([wi, -wi, -wj, wj])
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


@dataclass
class LinearizedOperator:
    """(u, a) -> Pi(Delta u + P u + a psi) with Pi the mean-zero projection.

    P u = (cos theta - 1) Delta u - sin theta <H, J grad u>, where H = J grad theta
    so that <H, J grad u> = <grad theta, grad u>.
    """

    manifold: DiscreteManifold
    delta_op: sp.csr_matrix
    P: sp.csr_matrix
    psi: np.ndarray
    S: np.ndarray | None = None

    def project(self, f) -> np.ndarray:
        m = self.manifold
        return f - m.integrate(f) / m.volume

    def apply(self, u, a: float = 0.0) -> np.ndarray:
        return self.project(self.delta_op @ u + self.P @ u + a * self.psi)

    def constrain(self, u) -> np.ndarray:
        """Project u onto {int u = int u S = 0} (mass inner product)."""
        m = self.manifold
        u = u - m.integrate(u) / m.volume
        if self.S is not None:
            u = u - m.integrate(u * self.S) * self.S / m.integrate(self.S * self.S)
        return u


def assemble_linearization(m: DiscreteManifold, theta=None, H=None, psi=None, S=None) -> LinearizedOperator:
    """Discrete Delta + P + a psi.  ``H`` is accepted for reference only: the
    coupling term uses theta differences along edges, which carry both |H|
    and its direction."""
    theta = m.theta if theta is None else np.asarray(theta, dtype=float)
    psi = np.zeros(len(m)) if psi is None else np.asarray(psi, dtype=float)
    D = m.laplacian
    if np.any(theta != 0):
        P = sp.diags(np.cos(theta) - 1.0) @ D - sp.diags(np.sin(theta)) @ gradient_coupling(m, theta)
    else:
        P = sp.csr_matrix(D.shape)
    return LinearizedOperator(m, D.tocsr(), sp.csr_matrix(P), psi, S)


def weighted_c2_proxy(m: DiscreteManifold, u, rho=None) -> float:
    """|u|_0 + |rho grad u|_0 + |rho^2 Delta u|_0 (sup-norm proxy of the C^{2,beta}_rho norm)."""
    rho = m.rho if rho is None else rho
    return float(np.abs(u).max() + (rho * np.sqrt(m.grad_sq(u))).max()
                 + (rho * rho * np.abs(m.laplacian @ u)).max())


def weighted_c0_dual(m: DiscreteManifold, f, rho=None) -> float:
    """|rho^2 f|_0 (sup-norm proxy of the B' norm)."""
    rho = m.rho if rho is None else rho
    return float(np.abs(rho * rho * f).max())


def operator_norm_P(L: LinearizedOperator, n_centers: int = 96, scales=(0.25, 0.5), seed: int = 0) -> float:
    """Largest ||P u||' / ||u|| over bump functions centred where theta != 0.

    Bumps (1 - (d/r)^2)^3 with r = scale * rho(center) probe P at the local
    weighted scale; centres are the vertices where the pointwise symbol
    |1 - cos theta| + rho |sin theta| |H| is largest plus a seeded sample.
    """
    m = L.manifold
    act = np.flatnonzero(m.theta != 0)
    if act.size == 0:
        return 0.0
    sym = np.abs(1 - np.cos(m.theta[act])) + m.rho[act] * np.abs(np.sin(m.theta[act])) * m.H[act]
    top = act[np.argsort(sym)[::-1][: n_centers // 2]]
    rng = np.random.default_rng(seed)
    rest = rng.choice(act, size=min(n_centers - top.size, act.size), replace=False)
    centers = np.unique(np.concatenate([top, rest]))
    tree = cKDTree(m.positions)
    best = 0.0
    for c in centers:
        for sc in scales:
            r = sc * m.rho[c]
            idx = np.asarray(tree.query_ball_point(m.positions[c], r), dtype=int)
            if idx.size < 8:
                continue
            u = np.zeros(len(m))
            d = np.linalg.norm(m.positions[idx] - m.positions[c], axis=1) / r
            u[idx] = (1 - d * d) ** 3
            den = weighted_c2_proxy(m, u)
            best = max(best, weighted_c0_dual(m, L.P @ u) / den)
    return best


# --- injectivity ------------------------------------------------------------


def _bordered(L: LinearizedOperator, ablate: bool):
    m = L.manifold
    A = (L.delta_op + L.P).tocsr()
    N = len(m)
    one = np.ones((N, 1))
    if ablate:
        top = sp.hstack([A, -one])
        bottom = sp.hstack([sp.csr_matrix(m.mass[None]), sp.csr_matrix((1, 1))])
        return sp.vstack([top, bottom]).tocsc(), 0
    if L.S is None:
        raise ValueError("operator carries no near-kernel function S")
    top = sp.hstack([A, L.psi[:, None], -one])
    bottom = sp.hstack([sp.csr_matrix(np.vstack([m.mass, m.mass * L.S])), sp.csr_matrix((2, 2))])
    return sp.vstack([top, bottom]).tocsc(), 1


def injectivity_probe(L: LinearizedOperator, rho=None, nu: float = 0.1, ablate_psi: bool = False) -> dict:
    """Estimate C_I = sup (|u|_0 + |a|) / |rho^2 f|_0 for L(u, a) = f.

    The inverse is applied through a sparse LU of the bordered system
    [A psi -1; m^T 0 0; (m S)^T 0 0], where the last unknown absorbs the mean
    of the right-hand side.  The sup-norm of the u-block is estimated with
    ``onenormest`` on its transpose; the a-row is computed exactly.  With
    ``ablate_psi`` the parameter a and the S-constraint are dropped, leaving
    Delta + P on mean-zero functions.
    """
    m = L.manifold
    rho = m.rho if rho is None else np.asarray(rho, dtype=float)
    N = len(m)
    A, has_a = _bordered(L, ablate_psi)
    lu = splu(A)
    w = 1.0 / (rho * rho)
    extra = A.shape[0] - N

    def solve(rhs, trans="N"):
        return lu.solve(rhs, trans=trans)

    def tu(g):  # g -> u
        rhs = np.zeros(A.shape[0])
        rhs[:N] = w * np.ravel(g)
        return solve(rhs)[:N]

    def tu_t(x):  # transpose of tu
        rhs = np.zeros(A.shape[0])
        rhs[:N] = np.ravel(x)
        return w * solve(rhs, "T")[:N]

    op = LinearOperator((N, N), matvec=tu_t, rmatvec=tu, dtype=float)
    norm_u = float(onenormest(op, t=4))
    norm_a = 0.0
    if has_a:
        e = np.zeros(A.shape[0])
        e[N] = 1.0
        norm_a = float(np.abs(w * solve(e, "T")[:N]).sum())
    C = norm_u + norm_a
    sc = m.schedule
    return {"C_I": C, "norm_u": norm_u, "norm_a": norm_a, "nu": nu, "ablated": ablate_psi,
            "eps_power": None if sc is None else sc.eps ** (-nu), "extra_unknowns": extra}


def ift_feasibility(alpha: float, sched: GluingSchedule, C_I: float, residual: float, nu: float = 0.1) -> dict:
    """r = 1/(2 C_I C_N) with C_N = eps^-2; feasible iff residual < r / (2 C_I)."""
    if C_I <= 0 or residual < 0 or nu <= 0:
        raise ValueError("inputs must be positive")
    s = sched.with_alpha(alpha)
    eps = s.eps
    C_N = eps ** -2
    r = 1.0 / (2 * C_I * C_N)
    thr = r / (2 * C_I)
    lhs = (1 + 1 / s.n) * (2 + 2 * nu)
    return {"alpha": alpha, "eps": eps, "C_I": C_I, "C_N": C_N, "r": r, "threshold": thr,
            "residual": residual, "feasible": bool(residual < thr), "exponent": lhs,
            "exponent_ok": bool(lhs < 3)}


# --- the standard test configuration -----------------------------------------


def reference_pair(n: int = 3) -> tuple[FlatSLagTorus, FlatSLagTorus]:
    """Two unit-cube SLag tori meeting once at the origin.

    The lattice is spanned by the x-axes and the unit vectors of the plane
    P(-pi/n, ..., -pi/n); M1 is the x-torus and M2 the torus over that plane
    (orientation reversed so it is special Lagrangian).
    """
    a = -np.pi / n
    G = np.zeros((2 * n, 2 * n))
    G[:n, :n] = np.eye(n)
    G[:n, n:] = np.cos(a) * np.eye(n)
    G[n:, n:] = np.sin(a) * np.eye(n)
    T = CYTorusStructure(Lattice(G))
    I = np.eye(2 * n, dtype=int)
    return make_flat_slag(T, I[:n]), make_flat_slag(T, I[n:])


# --- sweep ------------------------------------------------------------------


SPECTRUM_COLUMNS = ("alpha", "delta", "eps", "vertices", "lambda1", "lambda2", "rayleigh", "s_error",
                    "sbar_error", "psi_S", "P_norm", "C_I", "C_I_ablated", "residual", "threshold",
                    "feasible")


def spectrum_point(alpha: float, base: GluingSchedule | None = None, resolution: int = 16,
                   nu: float = 0.1, pair=None, probe: bool = True) -> tuple[dict, dict]:
    """All spectral quantities at one alpha; returns (csv row, details)."""
    base = base or schedule(0.1)
    sched = base.with_alpha(alpha)
    M1, M2 = pair or reference_pair(sched.n)
    model = interpolate((M1.plane, M2.plane), sched=sched)
    m = discretize(M1, M2, model, resolution)
    lam, vecs = eigensolve(m, 2)
    rep = sbar_report(m, vecs[:, 0], sched.delta, lam)
    f = firsteval_testfunction(m, sched.delta)
    psi = psi_field(m, deformation_chi(sched.n))
    L = assemble_linearization(m, psi=psi, S=rep.S)
    row = {"alpha": alpha, "delta": sched.delta, "eps": sched.eps, "vertices": len(m),
           "lambda1": lam[0], "lambda2": lam[1], "rayleigh": rayleigh_bound(m, f),
           "s_error": rep.s_error, "sbar_error": rep.sbar_error, "psi_S": m.integrate(psi * rep.S)}
    details = {"manifold": m.to_dict(), "spectral": rep.to_dict()}
    if probe:
        row["P_norm"] = operator_norm_P(L)
        ci = injectivity_probe(L, nu=nu)
        ab = injectivity_probe(L, nu=nu, ablate_psi=True)
        res = residual_report(model)["weighted_rho2_sin"]
        feas = ift_feasibility(alpha, sched, ci["C_I"], res, nu)
        row.update(C_I=ci["C_I"], C_I_ablated=ab["C_I"], residual=res, threshold=feas["threshold"],
                   feasible=feas["feasible"])
        details.update(injectivity=ci, ablation=ab, feasibility=feas)
    return row, details


def spectrum_sweep(alphas, base: GluingSchedule | None = None, resolution: int = 16, nu: float = 0.1,
                   jobs: int = 1, probe: bool = True) -> tuple[list[dict], dict]:
    """Run ``spectrum_point`` over alphas; returns rows and log-log slopes vs delta."""
    alphas = [float(a) for a in alphas]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            out = list(ex.map(spectrum_point, alphas, [base] * len(alphas), [resolution] * len(alphas),
                              [nu] * len(alphas), [None] * len(alphas), [probe] * len(alphas)))
    else:
        out = [spectrum_point(a, base, resolution, nu, probe=probe) for a in alphas]
    rows = [r for r, _ in out]
    if len(rows) < 2:
        return rows, {}
    d = [r["delta"] for r in rows]
    slopes = {k: loglog_slope(d, [r[k] for r in rows]) for k in ("lambda1", "rayleigh", "s_error", "sbar_error")}
    if probe:
        slopes["P_norm_vs_alpha"] = loglog_slope(alphas, [r["P_norm"] for r in rows])
        slopes["C_I_vs_eps"] = loglog_slope([r["eps"] for r in rows], [r["C_I"] for r in rows])
    return rows, slopes


def write_spectrum_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=[c for c in SPECTRUM_COLUMNS if c in rows[0]], extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()
                        if k in w.fieldnames})


def dump_json(obj, path) -> None:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(type(o))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=conv)
